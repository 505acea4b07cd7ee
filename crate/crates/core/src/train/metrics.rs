use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{GraphSample, Standardization};
use crate::gnn::{MessageGraph, Model};

use super::loss::euclidean;
use super::TrainError;

/// Anything that maps a sample to a row-major `[nodes, 3]` displacement.
pub trait Predictor {
    fn predict(&self, sample: &GraphSample) -> Result<Vec<f64>, TrainError>;
}

/// Predicts no displacement anywhere.
pub struct ZeroPredictor;

impl Predictor for ZeroPredictor {
    fn predict(&self, sample: &GraphSample) -> Result<Vec<f64>, TrainError> {
        Ok(vec![0.0; sample.labels.len()])
    }
}

/// Returns the sample's own labels.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, sample: &GraphSample) -> Result<Vec<f64>, TrainError> {
        Ok(sample.labels.clone())
    }
}

pub struct ModelPredictor<'a> {
    pub model: &'a Model,
    pub graph: &'a MessageGraph,
    pub standardization: Option<&'a Standardization>,
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, sample: &GraphSample) -> Result<Vec<f64>, TrainError> {
        let x = prepare_features(sample, self.standardization);
        Ok(self.model.predict(&x, self.graph)?)
    }
}

/// The sample's features, standardized when statistics are given.
pub fn prepare_features(sample: &GraphSample, standardization: Option<&Standardization>) -> Vec<f64> {
    let mut x = sample.features.clone();
    if let Some(s) = standardization {
        s.apply(&mut x);
    }
    x
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Euclidean and absolute-position errors at or below this count as hits.
    pub threshold_mm: f64,
    /// Nodes left out of every statistic (for example the fixed boundary).
    pub exclude: BTreeSet<usize>,
}

impl EvalOptions {
    pub fn all_nodes(threshold_mm: f64) -> Self {
        Self {
            threshold_mm,
            exclude: BTreeSet::new(),
        }
    }

    pub fn free_nodes(threshold_mm: f64, fixed: &BTreeSet<usize>) -> Self {
        Self {
            threshold_mm,
            exclude: fixed.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub nodes_per_sample: usize,
    pub threshold_mm: f64,
    pub mae_axis: [f64; 3],
    pub euclidean_mean: f64,
    pub euclidean_std: f64,
    pub euclidean_within_pct: f64,
    pub abs_position_mean: f64,
    pub abs_position_std: f64,
    pub abs_position_within_pct: f64,
    pub max_euclidean_mean: f64,
    pub max_euclidean_std: f64,
    /// Largest `abs_position - euclidean` seen at any node; non-positive up to rounding.
    pub max_triangle_gap: f64,
    /// Mean over samples of the per-sample training loss on the evaluated nodes.
    pub loss: f64,
}

#[derive(Default)]
struct Partial {
    nodes: usize,
    abs_axis: [f64; 3],
    e_sum: f64,
    e_sq: f64,
    e_hits: usize,
    a_sum: f64,
    a_sq: f64,
    a_hits: usize,
    e_max: f64,
    gap: f64,
}

fn sample_partial(pred: &[f64], labels: &[f64], opts: &EvalOptions) -> Partial {
    let mut p = Partial {
        gap: f64::NEG_INFINITY,
        ..Partial::default()
    };
    for (v, (z, y)) in pred.chunks_exact(3).zip(labels.chunks_exact(3)).enumerate() {
        if opts.exclude.contains(&v) {
            continue;
        }
        let e = euclidean(z, y);
        let a = (euclidean(y, &[0.0; 3]) - euclidean(z, &[0.0; 3])).abs();
        for c in 0..3 {
            p.abs_axis[c] += (y[c] - z[c]).abs();
        }
        p.nodes += 1;
        p.e_sum += e;
        p.e_sq += e * e;
        p.a_sum += a;
        p.a_sq += a * a;
        p.e_hits += usize::from(e <= opts.threshold_mm);
        p.a_hits += usize::from(a <= opts.threshold_mm);
        p.e_max = p.e_max.max(e);
        p.gap = p.gap.max(a - e);
    }
    p
}

fn population_std(sum: f64, sq: f64, n: f64) -> f64 {
    let mean = sum / n;
    (sq / n - mean * mean).max(0.0).sqrt()
}

/// Runs `predictor` over `samples` in parallel and reduces the statistics in
/// sample order, so the report does not depend on the thread count.
pub fn evaluate<P: Predictor + Sync>(
    predictor: &P,
    samples: &[&GraphSample],
    opts: &EvalOptions,
) -> Result<MetricsReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let partials = samples
        .par_iter()
        .map(|s| {
            let pred = predictor.predict(s)?;
            if pred.len() != s.labels.len() {
                return Err(TrainError::ShapeMismatch {
                    pred: vec![pred.len()],
                    labels: vec![s.labels.len()],
                });
            }
            Ok(sample_partial(&pred, &s.labels, opts))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;

    let nodes: usize = partials.iter().map(|p| p.nodes).sum();
    if nodes == 0 {
        return Err(TrainError::EmptySplit("evaluated nodes"));
    }
    let n = nodes as f64;
    let mut abs_axis = [0.0; 3];
    let (mut e_sum, mut e_sq, mut a_sum, mut a_sq) = (0.0, 0.0, 0.0, 0.0);
    let (mut e_hits, mut a_hits) = (0usize, 0usize);
    let (mut max_sum, mut max_sq, mut loss, mut gap) = (0.0, 0.0, 0.0, f64::NEG_INFINITY);
    for p in &partials {
        for c in 0..3 {
            abs_axis[c] += p.abs_axis[c];
        }
        e_sum += p.e_sum;
        e_sq += p.e_sq;
        a_sum += p.a_sum;
        a_sq += p.a_sq;
        e_hits += p.e_hits;
        a_hits += p.a_hits;
        max_sum += p.e_max;
        max_sq += p.e_max * p.e_max;
        loss += p.e_sum / p.nodes.max(1) as f64;
        gap = gap.max(p.gap);
    }
    let m = partials.len() as f64;
    Ok(MetricsReport {
        samples: partials.len(),
        nodes_per_sample: partials[0].nodes,
        threshold_mm: opts.threshold_mm,
        mae_axis: abs_axis.map(|s| s / n),
        euclidean_mean: e_sum / n,
        euclidean_std: population_std(e_sum, e_sq, n),
        euclidean_within_pct: 100.0 * e_hits as f64 / n,
        abs_position_mean: a_sum / n,
        abs_position_std: population_std(a_sum, a_sq, n),
        abs_position_within_pct: 100.0 * a_hits as f64 / n,
        max_euclidean_mean: max_sum / m,
        max_euclidean_std: population_std(max_sum, max_sq, m),
        max_triangle_gap: gap,
        loss: loss / m,
    })
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let t = self.threshold_mm;
        let mut s = String::new();
        let _ = writeln!(s, "samples                      {}", self.samples);
        let _ = writeln!(s, "nodes per sample             {}", self.nodes_per_sample);
        let _ = writeln!(
            s,
            "MAE x / y / z (mm)           {:.4} / {:.4} / {:.4}",
            self.mae_axis[0], self.mae_axis[1], self.mae_axis[2]
        );
        let _ = writeln!(
            s,
            "Euclidean error (mm)         {:.4} ± {:.4}",
            self.euclidean_mean, self.euclidean_std
        );
        let _ = writeln!(s, "Euclidean error <= {t} mm (%)  {:.2}", self.euclidean_within_pct);
        let _ = writeln!(
            s,
            "abs. position error (mm)     {:.4} ± {:.4}",
            self.abs_position_mean, self.abs_position_std
        );
        let _ = writeln!(s, "abs. position <= {t} mm (%)    {:.2}", self.abs_position_within_pct);
        let _ = writeln!(
            s,
            "max Euclidean error (mm)     {:.4} ± {:.4}",
            self.max_euclidean_mean, self.max_euclidean_std
        );
        let _ = writeln!(s, "loss (mm)                    {:.6}", self.loss);
        s
    }
}

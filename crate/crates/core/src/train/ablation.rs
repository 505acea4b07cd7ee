use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datagen::{GraphSample, Standardization};
use crate::gnn::{Aggregator, LayerKind, MessageGraph, Model, ModelConfig};

use super::{evaluate, train_model, EvalOptions, MetricsReport, ModelPredictor, TrainConfig, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Baseline,
    /// The first `k` max-aggregating layers switched to sum.
    MaxToSum,
    /// The first `k` GraphSAGE layers switched to GraphConv.
    SageToConv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub axis: AblationAxis,
    pub swaps: usize,
    pub config: ModelConfig,
}

/// The baseline plus both cumulative swap sweeps.
pub fn ablation_variants(base: &ModelConfig) -> Vec<AblationVariant> {
    let mut out = vec![AblationVariant {
        name: "baseline".into(),
        axis: AblationAxis::Baseline,
        swaps: 0,
        config: base.clone(),
    }];
    let max_layers: Vec<usize> = (0..base.depth())
        .filter(|&k| base.layers[k].aggregator == Aggregator::Max)
        .collect();
    for k in 1..=max_layers.len() {
        let mut config = base.clone();
        for &l in &max_layers[..k] {
            config.layers[l].aggregator = Aggregator::Sum;
        }
        out.push(AblationVariant {
            name: format!("max->sum x{k}"),
            axis: AblationAxis::MaxToSum,
            swaps: k,
            config,
        });
    }
    let sage_layers: Vec<usize> = (0..base.depth())
        .filter(|&k| base.layers[k].kind == LayerKind::GraphSage)
        .collect();
    for k in 1..=sage_layers.len() {
        let mut config = base.clone();
        for &l in &sage_layers[..k] {
            config.layers[l].kind = LayerKind::GraphConv;
        }
        out.push(AblationVariant {
            name: format!("sage->conv x{k}"),
            axis: AblationAxis::SageToConv,
            swaps: k,
            config,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub epochs: usize,
    pub best_val_loss: f64,
    pub test: MetricsReport,
}

pub struct AblationData<'a> {
    pub graph: &'a MessageGraph,
    pub train: &'a [&'a GraphSample],
    pub val: &'a [&'a GraphSample],
    pub test: &'a [&'a GraphSample],
    pub standardization: Option<&'a Standardization>,
}

/// Trains every variant from the same seed and evaluates it on the test split.
pub fn run_ablation(
    variants: &[AblationVariant],
    data: &AblationData<'_>,
    train_config: &TrainConfig,
    model_seed: u64,
    eval: &EvalOptions,
) -> Result<Vec<AblationRow>, TrainError> {
    variants
        .iter()
        .map(|v| {
            let model = Model::new(v.config.clone(), model_seed)?;
            let outcome = train_model(model, data.graph, data.train, data.val, data.standardization, train_config, |_| {})?;
            let predictor = ModelPredictor {
                model: &outcome.model,
                graph: data.graph,
                standardization: data.standardization,
            };
            Ok(AblationRow {
                variant: v.clone(),
                epochs: outcome.history.len(),
                best_val_loss: outcome.best_val_loss,
                test: evaluate(&predictor, data.test, eval)?,
            })
        })
        .collect()
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>6} {:>12} {:>20} {:>10} {:>12}",
        "variant", "epochs", "val loss", "test euclid (mm)", "<= thr %", "max euclid"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:>12.6} {:>9.4} ± {:<8.4} {:>10.2} {:>12.4}",
            r.variant.name,
            r.epochs,
            r.best_val_loss,
            r.test.euclidean_mean,
            r.test.euclidean_std,
            r.test.euclidean_within_pct,
            r.test.max_euclidean_mean
        );
    }
    s
}

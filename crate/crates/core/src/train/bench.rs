use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::gnn::{MessageGraph, Model};

use super::TrainError;

pub const MIN_REPEATS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub node_count: usize,
    pub warmup: usize,
    pub timings_s: Vec<f64>,
    pub mean_s: f64,
    pub std_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

/// Wall-clock latency of single-sample inference, after `warmup` untimed runs.
pub fn benchmark_inference(
    model: &Model,
    graph: &MessageGraph,
    features: &[f64],
    repeats: usize,
    warmup: usize,
) -> Result<LatencyReport, TrainError> {
    if repeats < MIN_REPEATS {
        return Err(TrainError::TooFewRepeats(repeats));
    }
    for _ in 0..warmup {
        std::hint::black_box(model.predict(features, graph)?);
    }
    let mut timings_s = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        std::hint::black_box(model.predict(features, graph)?);
        timings_s.push(start.elapsed().as_secs_f64());
    }
    let n = repeats as f64;
    let mean_s = timings_s.iter().sum::<f64>() / n;
    let std_s = (timings_s.iter().map(|t| (t - mean_s).powi(2)).sum::<f64>() / n).sqrt();
    Ok(LatencyReport {
        node_count: graph.node_count(),
        warmup,
        min_s: timings_s.iter().copied().fold(f64::INFINITY, f64::min),
        max_s: timings_s.iter().copied().fold(0.0, f64::max),
        timings_s,
        mean_s,
        std_s,
    })
}

impl LatencyReport {
    pub fn summary(&self) -> String {
        format!(
            "{} nodes, {} runs: {:.6} ± {:.6} s (min {:.6}, max {:.6})",
            self.node_count,
            self.timings_s.len(),
            self.mean_s,
            self.std_s,
            self.min_s,
            self.max_s
        )
    }
}

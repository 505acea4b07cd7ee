//! Message-passing surrogate: GraphSAGE and edge-weighted GraphConv layers,
//! a jumping-knowledge readout scored by an LSTM, and a small MLP head that
//! maps node embeddings to 3D displacements.
//!
//! Each layer with declared width `w` emits `2w` columns, the concatenation
//! of its self branch and its neighbour branch.

mod checkpoint;
mod jk;
mod layers;
mod model;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::datagen::FEATURE_COUNT;
use crate::mesh::MeshGraph;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use jk::{jk_lstm_attention, JkVars};
pub use layers::{aggregate, graphconv_layer, graphsage_layer, layer_pre_activation, LayerVars};
pub use model::{forward_vars, Forward, Mode, Model};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} input columns, found {found}")]
    FeatureWidth { expected: usize, found: usize },
    #[error("features have {found} rows but the graph has {expected} nodes")]
    NodeCount { expected: usize, found: usize },
    #[error("graphconv layers need edge weights")]
    MissingEdgeWeights,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("jumping-knowledge readout needs at least one layer output")]
    EmptyReadout,
    #[error("expected {expected} parameter tensors, found {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("parameter {name} has shape {found:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    GraphSage,
    GraphConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Sum,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub kind: LayerKind,
    pub aggregator: Aggregator,
    pub in_width: usize,
    pub out_width: usize,
}

impl LayerConfig {
    pub fn output_width(&self) -> usize {
        2 * self.out_width
    }

    pub fn param_count(&self) -> usize {
        2 * self.out_width * self.in_width + self.out_width
    }
}

/// A layer described by its per-branch width only; input widths are chained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub aggregator: Aggregator,
    pub width: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JkMode {
    #[default]
    LstmAttention,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_width: usize,
    pub layers: Vec<LayerConfig>,
    pub jk: JkMode,
    pub jk_hidden: usize,
    pub head_width: usize,
    pub dropout_p: f64,
}

pub const DEFAULT_WIDTH: usize = 32;

impl Default for ModelConfig {
    /// Three max-aggregating GraphConv layers followed by three GraphSAGE ones.
    fn default() -> Self {
        let mut specs = vec![
            LayerSpec {
                kind: LayerKind::GraphConv,
                aggregator: Aggregator::Max,
                width: DEFAULT_WIDTH,
            };
            3
        ];
        specs.extend(
            [LayerSpec {
                kind: LayerKind::GraphSage,
                aggregator: Aggregator::Max,
                width: DEFAULT_WIDTH,
            }; 3],
        );
        Self::from_specs(FEATURE_COUNT, &specs, JkMode::LstmAttention, DEFAULT_WIDTH, 2 * DEFAULT_WIDTH, 0.1)
    }
}

impl ModelConfig {
    pub fn from_specs(
        input_width: usize,
        specs: &[LayerSpec],
        jk: JkMode,
        jk_hidden: usize,
        head_width: usize,
        dropout_p: f64,
    ) -> Self {
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = input_width;
        for s in specs {
            layers.push(LayerConfig {
                kind: s.kind,
                aggregator: s.aggregator,
                in_width: width,
                out_width: s.width,
            });
            width = 2 * s.width;
        }
        Self {
            input_width,
            layers,
            jk,
            jk_hidden,
            head_width,
            dropout_p,
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec {
                kind: l.kind,
                aggregator: l.aggregator,
                width: l.out_width,
            })
            .collect()
    }

    /// Number of message-passing layers.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Width of the embedding handed to the head.
    pub fn readout_width(&self) -> usize {
        self.layers.last().map_or(self.input_width, LayerConfig::output_width)
    }

    /// Whether layer `t` needs a projection to the readout width.
    pub fn needs_projection(&self, t: usize) -> bool {
        self.jk == JkMode::LstmAttention && self.layers[t].output_width() != self.readout_width()
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: String| Err(GnnError::InvalidConfig(m));
        if self.layers.is_empty() {
            return bad("at least one layer is required".into());
        }
        if self.input_width == 0 || self.head_width == 0 {
            return bad("widths must be at least 1".into());
        }
        if self.jk == JkMode::LstmAttention && self.jk_hidden == 0 {
            return bad("jk_hidden must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        let mut width = self.input_width;
        for (k, l) in self.layers.iter().enumerate() {
            if l.in_width == 0 || l.out_width == 0 {
                return bad(format!("layer {k} has a zero width"));
            }
            if l.in_width != width {
                return bad(format!("layer {k} expects {} inputs but receives {width}", l.in_width));
            }
            width = l.output_width();
        }
        Ok(())
    }
}

/// Directed message arcs plus optional per-arc weights, grouped by destination.
#[derive(Clone, Debug)]
pub struct MessageGraph {
    node_count: usize,
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    weight: Option<Arc<[f64]>>,
}

impl MessageGraph {
    pub fn from_mesh_graph(graph: &MeshGraph) -> Self {
        let arcs = graph.arcs();
        Self {
            node_count: graph.node_count(),
            src: arcs.src,
            dst: arcs.dst,
            weight: Some(arcs.weight),
        }
    }

    /// Builds arcs in both directions from undirected edges. Self loops and
    /// repeated edges are rejected.
    pub fn from_edges(node_count: usize, edges: &[[usize; 2]], weights: Option<&[f64]>) -> Result<Self, GnnError> {
        if let Some(w) = weights {
            if w.len() != edges.len() {
                return Err(GnnError::InvalidGraph(format!("{} weights for {} edges", w.len(), edges.len())));
            }
        }
        let mut arcs: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * edges.len());
        for (e, &[u, v]) in edges.iter().enumerate() {
            if u >= node_count || v >= node_count {
                return Err(GnnError::InvalidGraph(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(GnnError::InvalidGraph(format!("self loop at {u}")));
            }
            let w = weights.map_or(1.0, |w| w[e]);
            arcs.push((v, u, w));
            arcs.push((u, v, w));
        }
        arcs.sort_by_key(|&(dst, src, _)| (dst, src));
        if arcs.windows(2).any(|p| p[0].0 == p[1].0 && p[0].1 == p[1].1) {
            return Err(GnnError::InvalidGraph("repeated edge".into()));
        }
        Ok(Self {
            node_count,
            src: arcs.iter().map(|a| a.1).collect(),
            dst: arcs.iter().map(|a| a.0).collect(),
            weight: weights.map(|_| arcs.iter().map(|a| a.2).collect()),
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn arc_count(&self) -> usize {
        self.src.len()
    }

    pub fn src(&self) -> &Arc<[usize]> {
        &self.src
    }

    pub fn dst(&self) -> &Arc<[usize]> {
        &self.dst
    }

    pub fn weight(&self) -> Option<&Arc<[f64]>> {
        self.weight.as_ref()
    }

    /// Same topology with every weight set to one.
    pub fn with_unit_weights(&self) -> Self {
        Self {
            weight: Some(vec![1.0; self.arc_count()].into()),
            ..self.clone()
        }
    }
}

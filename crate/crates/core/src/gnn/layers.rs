use std::sync::Arc;

use crate::autodiff::{Tape, Var};

use super::{Aggregator, GnnError, LayerKind, MessageGraph};

/// Tape handles for one layer's parameters: `w_self` and `w_neigh` are
/// `[in, out]`, `bias` is `[out]` and only enters the neighbour branch.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub w_self: Var,
    pub w_neigh: Var,
    pub bias: Var,
}

/// Reduces message rows into `count` node rows. Nodes without messages get zeros.
pub fn aggregate(
    tape: &mut Tape,
    messages: Var,
    segments: &Arc<[usize]>,
    count: usize,
    mode: Aggregator,
) -> Result<Var, GnnError> {
    Ok(match mode {
        Aggregator::Sum => tape.segment_sum(messages, segments, count)?,
        Aggregator::Max => tape.segment_max(messages, segments, count)?,
    })
}

/// `concat(h·W_self, AGG(m)·W_neigh + b)` before the activation, where `m`
/// holds `h_v` for every arc `v → u` (scaled by the arc weight for GraphConv).
pub fn layer_pre_activation(
    tape: &mut Tape,
    h: Var,
    graph: &MessageGraph,
    kind: LayerKind,
    mode: Aggregator,
    vars: LayerVars,
) -> Result<Var, GnnError> {
    let expected = tape.shape(vars.w_self)[0];
    let (rows, cols) = match *tape.shape(h) {
        [r, c] => (r, c),
        _ => (tape.value(h).rows(), 0),
    };
    if cols != expected {
        return Err(GnnError::FeatureWidth { expected, found: cols });
    }
    if rows != graph.node_count() {
        return Err(GnnError::NodeCount {
            expected: graph.node_count(),
            found: rows,
        });
    }
    let self_branch = tape.matmul(h, vars.w_self)?;
    let mut messages = tape.gather_rows(h, graph.src())?;
    if kind == LayerKind::GraphConv {
        let weights = graph.weight().ok_or(GnnError::MissingEdgeWeights)?;
        messages = tape.scale_rows(messages, weights)?;
    }
    let pooled = aggregate(tape, messages, graph.dst(), rows, mode)?;
    let neigh = tape.matmul(pooled, vars.w_neigh)?;
    let neigh = tape.add_row(neigh, vars.bias)?;
    Ok(tape.concat(&[self_branch, neigh])?)
}

pub fn graphsage_layer(
    tape: &mut Tape,
    h: Var,
    graph: &MessageGraph,
    vars: LayerVars,
    mode: Aggregator,
) -> Result<Var, GnnError> {
    let pre = layer_pre_activation(tape, h, graph, LayerKind::GraphSage, mode, vars)?;
    Ok(tape.relu(pre))
}

pub fn graphconv_layer(
    tape: &mut Tape,
    h: Var,
    graph: &MessageGraph,
    vars: LayerVars,
    mode: Aggregator,
) -> Result<Var, GnnError> {
    let pre = layer_pre_activation(tape, h, graph, LayerKind::GraphConv, mode, vars)?;
    Ok(tape.relu(pre))
}

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};

use super::{jk_lstm_attention, GnnError, JkMode, JkVars, LayerKind, LayerVars, MessageGraph, ModelConfig};

pub enum Mode<'a> {
    Eval,
    /// Dropout is active and draws from the given generator.
    Train(&'a mut dyn RngCore),
}

pub struct Forward {
    /// `[nodes, 3]` displacement prediction.
    pub prediction: Var,
    pub layer_outputs: Vec<Var>,
    /// `[nodes, T]` readout weights, absent without a JK readout.
    pub attention: Option<Var>,
}

/// Named shapes of every parameter tensor, in storage order.
pub(super) fn param_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (k, l) in config.layers.iter().enumerate() {
        out.push((format!("layer{k}.w_self"), vec![l.in_width, l.out_width]));
        out.push((format!("layer{k}.w_neigh"), vec![l.in_width, l.out_width]));
        out.push((format!("layer{k}.bias"), vec![l.out_width]));
    }
    let width = config.readout_width();
    if config.jk == JkMode::LstmAttention {
        for (t, l) in config.layers.iter().enumerate() {
            if config.needs_projection(t) {
                out.push((format!("jk.proj{t}"), vec![l.output_width(), width]));
            }
        }
        let h = config.jk_hidden;
        out.push(("jk.lstm.w_x".into(), vec![width, 4 * h]));
        out.push(("jk.lstm.w_h".into(), vec![h, 4 * h]));
        out.push(("jk.lstm.bias".into(), vec![4 * h]));
        out.push(("jk.score".into(), vec![h, 1]));
    }
    out.push(("head.w1".into(), vec![width, config.head_width]));
    out.push(("head.b1".into(), vec![config.head_width]));
    out.push(("head.w2".into(), vec![config.head_width, 3]));
    out.push(("head.b2".into(), vec![3]));
    out
}

/// Runs the network on tape handles. `params` follows the storage order of
/// [`Model::params`].
pub fn forward_vars(
    config: &ModelConfig,
    tape: &mut Tape,
    params: &[Var],
    features: Var,
    graph: &MessageGraph,
    mode: Mode<'_>,
) -> Result<Forward, GnnError> {
    let layout = param_layout(config);
    if params.len() != layout.len() {
        return Err(GnnError::ParamCount {
            expected: layout.len(),
            found: params.len(),
        });
    }
    let found = tape.value(features).cols();
    if tape.shape(features).len() != 2 || found != config.input_width {
        return Err(GnnError::FeatureWidth {
            expected: config.input_width,
            found,
        });
    }
    let mut next = params.iter().copied();
    let mut take = || next.next().expect("length checked");

    let mut h = features;
    let mut outputs = Vec::with_capacity(config.layers.len());
    for l in &config.layers {
        let vars = LayerVars {
            w_self: take(),
            w_neigh: take(),
            bias: take(),
        };
        h = match l.kind {
            LayerKind::GraphSage => super::graphsage_layer(tape, h, graph, vars, l.aggregator)?,
            LayerKind::GraphConv => super::graphconv_layer(tape, h, graph, vars, l.aggregator)?,
        };
        outputs.push(h);
    }

    let (embedding, attention) = match config.jk {
        JkMode::LstmAttention => {
            let projections = (0..config.layers.len())
                .map(|t| config.needs_projection(t).then(&mut take))
                .collect();
            let vars = JkVars {
                projections,
                w_x: take(),
                w_h: take(),
                bias: take(),
                score: take(),
            };
            let (e, a) = jk_lstm_attention(tape, &outputs, &vars)?;
            (e, Some(a))
        }
        JkMode::None => (h, None),
    };

    let (w1, b1, w2, b2) = (take(), take(), take(), take());
    let hidden = tape.matmul(embedding, w1)?;
    let hidden = tape.add_row(hidden, b1)?;
    let mut hidden = tape.relu(hidden);
    if let Mode::Train(rng) = mode {
        hidden = tape.dropout(hidden, config.dropout_p, true, rng)?;
    }
    let out = tape.matmul(hidden, w2)?;
    let prediction = tape.add_row(out, b2)?;
    Ok(Forward {
        prediction,
        layer_outputs: outputs,
        attention,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
}

impl Model {
    /// Glorot-uniform weights and zero biases drawn from a seeded ChaCha8 stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, GnnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = param_layout(&config);
        let mut names = Vec::with_capacity(layout.len());
        let mut params = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let tensor = if shape.len() == 2 {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let data = (0..shape[0] * shape[1]).map(|_| rng.random_range(-limit..limit)).collect();
                Tensor::new(&shape, data)?
            } else {
                Tensor::zeros(&shape)
            };
            names.push(name);
            params.push(tensor);
        }
        Ok(Self { config, names, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<Tensor>) -> Result<Self, GnnError> {
        config.validate()?;
        let layout = param_layout(&config);
        if layout.len() != params.len() {
            return Err(GnnError::ParamCount {
                expected: layout.len(),
                found: params.len(),
            });
        }
        for ((name, shape), p) in layout.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(GnnError::ParamShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: p.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            config,
            names: layout.into_iter().map(|(n, _)| n).collect(),
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Records the parameters on `tape`, as leaves when `track` is set.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if track { tape.leaf(p.clone()) } else { tape.constant(p.clone()) })
            .collect()
    }

    /// `features` is row-major `[nodes, input_width]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        features: &[f64],
        graph: &MessageGraph,
        mode: Mode<'_>,
    ) -> Result<Forward, GnnError> {
        let n = graph.node_count();
        if features.len() != n * self.config.input_width {
            return Err(GnnError::FeatureWidth {
                expected: n * self.config.input_width,
                found: features.len(),
            });
        }
        let x = tape.constant(Tensor::matrix(n, self.config.input_width, features.to_vec())?);
        forward_vars(&self.config, tape, params, x, graph, mode)
    }

    /// Inference-mode prediction, row-major `[nodes, 3]`.
    pub fn predict(&self, features: &[f64], graph: &MessageGraph) -> Result<Vec<f64>, GnnError> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let out = self.forward(&mut tape, &params, features, graph, Mode::Eval)?;
        Ok(tape.value(out.prediction).data().to_vec())
    }
}

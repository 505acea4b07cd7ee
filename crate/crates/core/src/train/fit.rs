use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::datagen::{GraphSample, Provenance, Standardization};
use crate::gnn::{MessageGraph, Mode, Model};

use super::{
    loss_mean_euclidean, prepare_features, AdamConfig, EarlyStopping, OptimizerKind, OptimizerState,
    PlateauScheduler, StopDecision, TrainError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub early_stop_patience: usize,
    pub improvement_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            optimizer: OptimizerKind::AdamW,
            lr: adam.lr,
            weight_decay: adam.weight_decay,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 1,
            max_epochs: 500,
            plateau_patience: 5,
            plateau_factor: 0.1,
            min_lr: 1e-8,
            early_stop_patience: 15,
            improvement_threshold: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be at least 1");
        }
        if !(self.min_lr > 0.0) || !(0.0 < self.plateau_factor && self.plateau_factor < 1.0) {
            return bad("min_lr must be positive and plateau_factor in (0, 1)");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation loss.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

struct Prepared {
    features: Vec<f64>,
    labels: Tensor,
    provenance: Provenance,
}

fn prepare(samples: &[&GraphSample], standardization: Option<&Standardization>) -> Result<Vec<Prepared>, TrainError> {
    samples
        .iter()
        .map(|s| {
            Ok(Prepared {
                features: prepare_features(s, standardization),
                labels: Tensor::matrix(s.node_count(), 3, s.labels.clone())?,
                provenance: s.provenance,
            })
        })
        .collect()
}

/// Loss of one sample plus parameter gradients when `rng` is given.
fn sample_loss(
    model: &Model,
    graph: &MessageGraph,
    sample: &Prepared,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Option<Vec<Tensor>>), TrainError> {
    let mut tape = Tape::new();
    let track = rng.is_some();
    let params = model.bind(&mut tape, track);
    let mode = match rng {
        Some(r) => Mode::Train(r),
        None => Mode::Eval,
    };
    let out = model.forward(&mut tape, &params, &sample.features, graph, mode)?;
    let labels = tape.constant(sample.labels.clone());
    let loss = loss_mean_euclidean(&mut tape, out.prediction, labels)?;
    let value = tape.value(loss).data()[0];
    if !track || !value.is_finite() {
        return Ok((value, None));
    }
    let grads = tape.backward(loss)?;
    Ok((value, Some(params.iter().map(|p| grads.get_or_zeros(*p)).collect())))
}

/// Mean eval-mode loss over `samples`.
pub fn mean_loss(
    model: &Model,
    graph: &MessageGraph,
    samples: &[&GraphSample],
    standardization: Option<&Standardization>,
) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptySplit("loss"));
    }
    let prepared = prepare(samples, standardization)?;
    let mut total = 0.0;
    for p in &prepared {
        total += sample_loss(model, graph, p, None)?.0;
    }
    Ok(total / prepared.len() as f64)
}

/// Full training recipe: seeded shuffling, mini-batches of whole graphs whose
/// gradients are averaged, plateau schedule, early stopping and restoration
/// of the best parameters. `on_epoch` sees every history record as it is
/// produced. An empty validation set falls back to the training loss.
pub fn train_model(
    mut model: Model,
    graph: &MessageGraph,
    train: &[&GraphSample],
    val: &[&GraphSample],
    standardization: Option<&Standardization>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    let train_data = prepare(train, standardization)?;
    let val_data = prepare(val, standardization)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = OptimizerState::new(config.optimizer, config.adam(), model.params())?;
    let mut plateau = PlateauScheduler::new(
        config.lr,
        config.plateau_factor,
        config.plateau_patience,
        config.min_lr,
        config.improvement_threshold,
    );
    let mut stopper = EarlyStopping::new(config.early_stop_patience, config.improvement_threshold);
    let mut best_params = model.params().to_vec();
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc: Option<Vec<Tensor>> = None;
            for &i in batch {
                let (loss, grads) = sample_loss(&model, graph, &train_data[i], Some(&mut rng))?;
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        split: "train",
                        provenance: train_data[i].provenance,
                    });
                }
                train_total += loss;
                let grads = grads.expect("tracked pass");
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(a) => {
                        for (x, g) in a.iter_mut().zip(&grads) {
                            x.data_mut().iter_mut().zip(g.data()).for_each(|(p, q)| *p += q);
                        }
                    }
                }
            }
            let mut grads = acc.expect("non-empty batch");
            if batch.len() > 1 {
                let inv = 1.0 / batch.len() as f64;
                grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|x| *x *= inv));
            }
            let names = model.names().to_vec();
            optimizer.step(model.params_mut(), &names, &grads)?;
        }
        let train_loss = train_total / train_data.len() as f64;

        let val_loss = if val_data.is_empty() {
            train_loss
        } else {
            let mut total = 0.0;
            for p in &val_data {
                let (loss, _) = sample_loss(&model, graph, p, None)?;
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        split: "validation",
                        provenance: p.provenance,
                    });
                }
                total += loss;
            }
            total / val_data.len() as f64
        };

        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: optimizer.lr(),
        };
        on_epoch(&record);
        history.push(record);

        let decision = stopper.step(val_loss);
        if decision == StopDecision::Improved {
            best_params = model.params().to_vec();
        }
        optimizer.set_lr(plateau.step(val_loss));
        if decision == StopDecision::Stop {
            stopped_early = true;
            break;
        }
    }

    model.params_mut().clone_from_slice(&best_params);
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: stopper.best_epoch().unwrap_or(0),
        best_val_loss: stopper.best(),
        stopped_early,
    })
}

use serde::{Deserialize, Serialize};

/// Reduces the learning rate when the validation loss stops improving.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
    best: f64,
    stagnant: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64, threshold: f64) -> Self {
        Self {
            lr: lr.max(min_lr),
            factor,
            patience,
            min_lr,
            threshold,
            best: f64::INFINITY,
            stagnant: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn stagnant_epochs(&self) -> usize {
        self.stagnant
    }

    /// Feeds one epoch's validation loss and returns the learning rate for
    /// the next epoch. The stagnation counter restarts after each reduction.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.threshold {
            self.best = val_loss;
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
            if self.stagnant >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.stagnant = 0;
            }
        }
        self.lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub threshold: f64,
    best: f64,
    best_epoch: Option<usize>,
    stagnant: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, threshold: f64) -> Self {
        Self {
            patience,
            threshold,
            best: f64::INFINITY,
            best_epoch: None,
            stagnant: 0,
            epoch: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// 1-based epoch of the best loss so far.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn step(&mut self, val_loss: f64) -> StopDecision {
        self.epoch += 1;
        if val_loss < self.best - self.threshold {
            self.best = val_loss;
            self.best_epoch = Some(self.epoch);
            self.stagnant = 0;
            return StopDecision::Improved;
        }
        self.stagnant += 1;
        if self.stagnant >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

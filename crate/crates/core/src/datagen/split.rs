use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatagenError, Provenance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Shuffle all samples together.
    #[default]
    Shuffle,
    /// Keep every sample of a load-node selection in the same split.
    NodeHoldout,
}

/// `(train, validation, test)` sizes: 20 % and 10 % rounded down, the rest train.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let val = n * 2 / 10;
    let test = n / 10;
    (n - val - test, val, test)
}

/// Split assignment per sample, deterministic in `seed`.
pub fn split_dataset(provenance: &[Provenance], seed: u64, mode: SplitMode) -> Result<Vec<Split>, DatagenError> {
    let n = provenance.len();
    if n < super::MIN_SPLIT_SAMPLES {
        return Err(DatagenError::TooFewSamples(n));
    }
    let (_, n_val, n_test) = split_counts(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Split::Train; n];
    match mode {
        SplitMode::Shuffle => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for &i in &order[..n_val] {
                out[i] = Split::Validation;
            }
            for &i in &order[n_val..n_val + n_test] {
                out[i] = Split::Test;
            }
        }
        SplitMode::NodeHoldout => {
            let groups = provenance.iter().map(|p| p.selection).max().unwrap_or(0) + 1;
            if groups < 3 {
                return Err(DatagenError::TooFewGroups(groups));
            }
            let mut sizes = vec![0usize; groups];
            for p in provenance {
                sizes[p.selection] += 1;
            }
            let mut order: Vec<usize> = (0..groups).collect();
            order.shuffle(&mut rng);
            let mut assign = vec![Split::Train; groups];
            let (mut test, mut val) = (0, 0);
            // Keep at least one group for training.
            for &g in &order[..groups - 1] {
                if test < n_test.max(1) {
                    assign[g] = Split::Test;
                    test += sizes[g];
                } else if val < n_val.max(1) {
                    assign[g] = Split::Validation;
                    val += sizes[g];
                }
            }
            for (i, p) in provenance.iter().enumerate() {
                out[i] = assign[p.selection];
            }
        }
    }
    Ok(out)
}

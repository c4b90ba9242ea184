use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Keep only this many training records (after shuffling).
    pub subset_size: Option<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 42, subset_size: None }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(HarnessError::Validation(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Shuffles with ChaCha8 seeded by `spec.seed` (Fisher-Yates via
/// `SliceRandom::shuffle`), then takes the first `round(fraction * n)` as
/// training data.
pub fn split<T: Clone>(records: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>), HarnessError> {
    spec.validate()?;
    let mut shuffled = records.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = (spec.train_fraction * records.len() as f64).round() as usize;
    let test = shuffled.split_off(n_train);
    let mut train = shuffled;
    if let Some(k) = spec.subset_size {
        if k > train.len() {
            return Err(HarnessError::Validation(format!(
                "subset_size {k} exceeds the {} training records",
                train.len()
            )));
        }
        train.truncate(k);
    }
    Ok((train, test))
}

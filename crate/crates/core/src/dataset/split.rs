use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SampleTensor;
use crate::error::{Error, Result};

pub const TRAIN_FRACTION: f64 = 0.65;
pub const VALIDATION_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

/// Disjoint sample index sets. Samples sharing a parent run always land in
/// the same partition.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn indices(&self, part: Partition) -> &[usize] {
        match part {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffles parent runs with `seed` and assigns whole groups 65/15/20.
pub fn split(samples: &[SampleTensor], seed: u64) -> Result<DatasetSplit> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.parent).or_default().push(i);
    }
    let n = groups.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 parent runs to split, got {n}"
        )));
    }
    let mut parents: Vec<usize> = groups.keys().copied().collect();
    parents.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_train = ((n as f64 * TRAIN_FRACTION).round() as usize).clamp(1, n - 2);
    let n_val = ((n as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, n - n_train - 1);
    let mut out = DatasetSplit::default();
    for (rank, p) in parents.iter().enumerate() {
        let bucket = if rank < n_train {
            &mut out.train
        } else if rank < n_train + n_val {
            &mut out.validation
        } else {
            &mut out.test
        };
        bucket.extend_from_slice(&groups[p]);
    }
    for v in [&mut out.train, &mut out.validation, &mut out.test] {
        v.sort_unstable();
    }
    Ok(out)
}

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Utterance};

/// Train/dev/test id sets plus a k-way partition of the training ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: BTreeSet<String>,
    pub dev: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub folds: Vec<Vec<String>>,
}

impl CorpusSplit {
    /// Index of the fold holding `id`, if it is a training utterance.
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|x| x == id))
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn with_held_out(mut self, dev: BTreeSet<String>, test: BTreeSet<String>) -> Self {
        self.dev = dev;
        self.test = test;
        self
    }

    /// Checks the split invariants: disjoint sets, folds exactly cover train, k >= 2.
    pub fn is_consistent(&self) -> bool {
        let disjoint = self.train.is_disjoint(&self.dev)
            && self.train.is_disjoint(&self.test)
            && self.dev.is_disjoint(&self.test);
        let mut covered = BTreeSet::new();
        let mut total = 0;
        for fold in &self.folds {
            total += fold.len();
            covered.extend(fold.iter().cloned());
        }
        disjoint && self.folds.len() >= 2 && total == covered.len() && covered == self.train
    }
}

/// Seeded shuffle, then round-robin assignment so fold sizes differ by at most one.
pub fn make_folds(train: &[Utterance], k: usize, seed: u64) -> Result<CorpusSplit, CorpusError> {
    if k < 2 || train.len() < k {
        return Err(CorpusError::FoldsOutOfRange { k, n: train.len() });
    }
    let mut ids: Vec<String> = train.iter().map(|u| u.id.clone()).collect();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.iter().enumerate() {
        folds[i % k].push(id.clone());
    }
    for fold in &mut folds {
        fold.sort();
    }
    Ok(CorpusSplit {
        train: ids.into_iter().collect(),
        dev: BTreeSet::new(),
        test: BTreeSet::new(),
        folds,
    })
}

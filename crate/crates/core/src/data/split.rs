use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::Sample;
use crate::error::{Error, Result};
use crate::nn::train::mix;

/// Identities per split, indexed by label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: [Vec<String>; 2],
    pub val: [Vec<String>; 2],
    pub test: [Vec<String>; 2],
}

#[derive(Debug, Clone, Default)]
pub struct SplitSamples {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Shuffles each class's identities with a seeded RNG and cuts them at the
/// rounded cumulative fractions; the test split takes the remainder.
pub fn split_by_identity(samples: &[Sample], fractions: [f64; 3], seed: u64) -> Result<SplitSpec> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let parts = fractions.iter().filter(|&&f| f > 0.0).count();
    let mut spec = SplitSpec::default();
    for label in 0..2 {
        let ids: BTreeSet<&str> = samples.iter().filter(|s| s.label == label).map(|s| s.identity.as_str()).collect();
        if ids.is_empty() {
            continue;
        }
        if ids.len() < parts {
            return Err(Error::Corpus(format!("{} identities for label {label} cannot fill {parts} splits", ids.len())));
        }
        let mut ids: Vec<String> = ids.into_iter().map(String::from).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, label as u64)));
        let n = ids.len();
        let n_train = ((n as f64 * fractions[0]).round() as usize).min(n);
        let n_val = ((n as f64 * fractions[1]).round() as usize).min(n - n_train);
        spec.test[label] = ids.split_off(n_train + n_val);
        spec.val[label] = ids.split_off(n_train);
        spec.train[label] = ids;
    }
    Ok(spec)
}

impl SplitSpec {
    /// Distributes samples by identity; samples of unknown identities are
    /// dropped.
    pub fn assign(&self, samples: &[Sample]) -> SplitSamples {
        let mut out = SplitSamples::default();
        for s in samples {
            let has = |lists: &[Vec<String>; 2]| lists[s.label.min(1)].iter().any(|i| *i == s.identity);
            if has(&self.train) {
                out.train.push(s.clone());
            } else if has(&self.val) {
                out.val.push(s.clone());
            } else if has(&self.test) {
                out.test.push(s.clone());
            }
        }
        out
    }
}

//! Query protocol shared by live surveys and synthetic benchmarks: a run of
//! actively chosen queries followed by randomly generated hold-out queries.
//!
//! Every random draw is keyed by `(seed, purpose, step)`, so a session can be
//! replayed exactly from its seed and its answers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::choice::{ChoiceScales, OptionSet};
use crate::learning::{next_query, sample_posterior, ChainConfig, LearningError, Posterior, Prior, QueryGenerator, ResponseRecord};
use crate::scalar::Scalar;

/// SplitMix64 finalizer over a combination of the inputs.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    let mut z = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const POOL: u64 = 1;
const HOLDOUT: u64 = 2;
const CHAIN: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Protocol<T> {
    pub active_queries: usize,
    pub holdout_queries: usize,
    pub pool_size: usize,
    pub generator: QueryGenerator,
    pub chain: ChainConfig,
    pub prior: Prior,
    pub scales: ChoiceScales<T>,
}

impl<T: Scalar> Default for Protocol<T> {
    fn default() -> Self {
        Self {
            active_queries: 10,
            holdout_queries: 6,
            pool_size: 1000,
            generator: QueryGenerator::default(),
            chain: ChainConfig::default(),
            prior: Prior::default(),
            scales: ChoiceScales::default(),
        }
    }
}

impl<T: Scalar> Protocol<T> {
    pub fn total_queries(&self) -> usize {
        self.active_queries + self.holdout_queries
    }

    /// Posterior after `dataset`, sampled with the chain seed for that
    /// dataset size.
    pub fn posterior(&self, dataset: &[ResponseRecord<T>], seed: u64) -> Result<Posterior<T>, LearningError> {
        sample_posterior(dataset, &self.prior, &self.chain, &self.scales, derive_seed(seed, CHAIN, dataset.len() as u64))
    }

    /// Most informative query from a fresh candidate pool for active step `step`.
    pub fn active_query(&self, posterior: &Posterior<T>, seed: u64, step: usize) -> Result<OptionSet<T>, LearningError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, POOL, step as u64));
        let pool = self.generator.pool(self.pool_size, &mut rng);
        let (i, _) = next_query(&pool, &posterior.samples, &self.scales)?;
        Ok(pool.into_iter().nth(i).expect("index from pool"))
    }

    /// Random query for hold-out step `step`, independent of any answers.
    pub fn holdout_query(&self, seed: u64, step: usize) -> OptionSet<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, HOLDOUT, step as u64));
        self.generator.random_query(&mut rng)
    }

    /// Random query used in place of an active one (the baseline policy).
    pub fn random_training_query(&self, seed: u64, step: usize) -> OptionSet<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, POOL, step as u64));
        self.generator.random_query(&mut rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        let all: std::collections::HashSet<u64> =
            (0..4).flat_map(|s| (0..4).flat_map(move |p| (0..4).map(move |i| derive_seed(s, p, i)))).collect();
        assert_eq!(all.len(), 64);
    }

    #[test]
    fn holdout_queries_ignore_posterior() {
        let p = Protocol::<f64>::default();
        assert_eq!(p.holdout_query(5, 2), p.holdout_query(5, 2));
        assert_ne!(p.holdout_query(5, 2), p.holdout_query(5, 3));
        assert_eq!(p.holdout_query(5, 0).len(), 6);
    }
}

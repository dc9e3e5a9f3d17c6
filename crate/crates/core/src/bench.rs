//! Synthetic-user benchmark of active versus random query selection.
//!
//! Each synthetic user has a preference vector drawn from the prior and
//! answers by sampling the logit model. Both policies face the same user and
//! the same hold-out queries with the same answers, so accuracies are paired.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::choice::PreferenceVector;
use crate::learning::{simulate_user, validation_accuracy, LearningError, ResponseRecord};
use crate::protocol::{derive_seed, Protocol};
use crate::scalar::Scalar;

const USER: u64 = 10;
const ANSWERS: u64 = 11;
const ACTIVE_RUN: u64 = 12;
const RANDOM_RUN: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryPolicy {
    Active,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub user: usize,
    pub w_true: [f64; 7],
    /// Hold-out accuracy per policy; `None` when there is no hold-out set.
    pub active_accuracy: Option<f64>,
    pub random_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub seed: u64,
    pub users: Vec<UserOutcome>,
    pub mean_active: Option<f64>,
    pub mean_random: Option<f64>,
}

/// Trains one user's posterior under `policy` and scores it on `holdout`.
pub fn run_user<T: Scalar>(
    protocol: &Protocol<T>,
    w_true: &PreferenceVector<T>,
    policy: QueryPolicy,
    holdout: &[ResponseRecord<T>],
    seed: u64,
) -> Result<Option<f64>, LearningError> {
    let mut answers = ChaCha8Rng::seed_from_u64(derive_seed(seed, ANSWERS, 0));
    let mut dataset = Vec::with_capacity(protocol.active_queries);
    for step in 0..protocol.active_queries {
        let query = match policy {
            QueryPolicy::Active => {
                let posterior = protocol.posterior(&dataset, seed)?;
                protocol.active_query(&posterior, seed, step)?
            }
            QueryPolicy::Random => protocol.random_training_query(seed, step),
        };
        let chosen = simulate_user(w_true, &query, &protocol.scales, &mut answers)?;
        dataset.push(ResponseRecord::new(query, chosen)?);
    }
    let posterior = protocol.posterior(&dataset, seed)?;
    validation_accuracy(&posterior, holdout, &protocol.scales)
}

/// Runs `n_users` synthetic users through both policies.
pub fn run_benchmark<T: Scalar>(protocol: &Protocol<T>, n_users: usize, seed: u64) -> Result<BenchSummary, LearningError> {
    use rayon::prelude::*;
    let users = (0..n_users)
        .into_par_iter()
        .map(|u| {
            let user_seed = derive_seed(seed, USER, u as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(user_seed);
            let w_true: PreferenceVector<T> = protocol.prior.sample(&mut rng);
            let mut holdout = Vec::with_capacity(protocol.holdout_queries);
            for step in 0..protocol.holdout_queries {
                let q = protocol.holdout_query(user_seed, step);
                let c = simulate_user(&w_true, &q, &protocol.scales, &mut rng)?;
                holdout.push(ResponseRecord::new(q, c)?);
            }
            let active = run_user(protocol, &w_true, QueryPolicy::Active, &holdout, derive_seed(user_seed, ACTIVE_RUN, 0))?;
            let random = run_user(protocol, &w_true, QueryPolicy::Random, &holdout, derive_seed(user_seed, RANDOM_RUN, 0))?;
            Ok(UserOutcome {
                user: u,
                w_true: w_true.0.map(|x| x.to_f64_lossy()),
                active_accuracy: active,
                random_accuracy: random,
            })
        })
        .collect::<Result<Vec<_>, LearningError>>()?;
    let mean = |f: fn(&UserOutcome) -> Option<f64>| {
        let v: Vec<f64> = users.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(BenchSummary { seed, mean_active: mean(|u| u.active_accuracy), mean_random: mean(|u| u.random_accuracy), users })
}

/// Reference-scale divisor of the benchmark preset. Under the default scales
/// a unit-ball user chooses almost uniformly, which leaves nothing to learn.
pub const BENCH_SCALE_FACTOR: f64 = 20.0;

/// Default protocol with attribute scales sharpened by [`BENCH_SCALE_FACTOR`].
pub fn benchmark_protocol<T: Scalar>() -> Protocol<T> {
    let base = Protocol::<T>::default();
    Protocol { scales: base.scales.sharpened(T::lit(BENCH_SCALE_FACTOR)), ..base }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatedBench {
    pub seed: u64,
    pub replicates: Vec<BenchSummary>,
    /// Mean over every user of every replicate.
    pub mean_active: Option<f64>,
    pub mean_random: Option<f64>,
    /// Paired one-sided test of active over random on replicate means.
    pub t_statistic: Option<f64>,
    pub p_value: Option<f64>,
}

const REPLICATE: u64 = 14;

/// `replicates` independent benchmarks of `n_users` each.
pub fn run_replicates<T: Scalar>(protocol: &Protocol<T>, n_users: usize, replicates: usize, seed: u64) -> Result<ReplicatedBench, LearningError> {
    let runs = (0..replicates)
        .map(|r| run_benchmark(protocol, n_users, derive_seed(seed, REPLICATE, r as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let pooled = |f: fn(&UserOutcome) -> Option<f64>| {
        let v: Vec<f64> = runs.iter().flat_map(|b| b.users.iter().filter_map(f)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let (a, b): (Vec<f64>, Vec<f64>) = runs.iter().filter_map(|r| Some((r.mean_active?, r.mean_random?))).unzip();
    let test = paired_t_test(&a, &b);
    Ok(ReplicatedBench {
        seed,
        mean_active: pooled(|u| u.active_accuracy),
        mean_random: pooled(|u| u.random_accuracy),
        t_statistic: test.map(|t| t.0),
        p_value: test.map(|t| t.1),
        replicates: runs,
    })
}

/// One-sided paired t-test of `mean(a - b) > 0`. Returns `(t, p)`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Some(if mean > 0.0 { (f64::INFINITY, 0.0) } else { (0.0, 1.0) });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?;
    Some((t, 1.0 - dist.cdf(t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::ChainConfig;

    fn small() -> Protocol<f64> {
        Protocol {
            active_queries: 2,
            holdout_queries: 3,
            pool_size: 20,
            chain: ChainConfig { steps: 600, burn_in: 100, samples: 25, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = run_benchmark(&small(), 3, 42).unwrap();
        let b = run_benchmark(&small(), 3, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.users.len(), 3);
    }

    #[test]
    fn empty_holdout_reports_absent_accuracy() {
        let p = Protocol { holdout_queries: 0, ..small() };
        let s = run_benchmark(&p, 2, 1).unwrap();
        assert_eq!(s.mean_active, None);
        assert!(s.users.iter().all(|u| u.random_accuracy.is_none()));
    }

    #[test]
    fn t_test_direction() {
        let a = [0.6, 0.7, 0.65, 0.8, 0.75];
        let b = [0.5, 0.6, 0.6, 0.7, 0.7];
        let (t, p) = paired_t_test(&a, &b).unwrap();
        assert!(t > 0.0 && p < 0.01);
        let (_, p) = paired_t_test(&b, &a).unwrap();
        assert!(p > 0.99);
        assert_eq!(paired_t_test(&[1.0], &[0.0]), None);
    }
}

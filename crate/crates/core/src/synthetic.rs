//! Synthetic stand-in populations for the case-study network.
//!
//! Seventeen users, the first ten owning a car. Each user's posterior is a
//! cloud of samples around a per-user preference vector; the "pre" condition
//! weighs latency heavily and risk lightly, "post" the other way round.
//! These are not learned from people.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::choice::{ChoiceScales, PreferenceVector};
use crate::equilibrium::{Population, UserEntry};
use crate::learning::Posterior;
use crate::protocol::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Pre,
    Post,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::Pre => "pre",
            Condition::Post => "post",
        }
    }

    /// Population-level preference centre: latency, cost, risk, then the
    /// car, taxi, rail and walk biases.
    fn centre(self) -> [f64; 7] {
        match self {
            Condition::Pre => [-0.55, -0.45, -0.15, 0.25, 0.05, 0.10, -0.35],
            Condition::Post => [-0.35, -0.45, -0.55, 0.25, 0.05, -0.10, -0.25],
        }
    }
}

pub const SYNTHETIC_USERS: usize = 17;
pub const SYNTHETIC_CAR_OWNERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub car_owners: usize,
    pub samples_per_user: usize,
    /// Spread of user centres around the condition centre.
    pub between_user_sd: f64,
    /// Posterior spread around each user's centre.
    pub within_user_sd: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { users: SYNTHETIC_USERS, car_owners: SYNTHETIC_CAR_OWNERS, samples_per_user: 100, between_user_sd: 0.08, within_user_sd: 0.05 }
    }
}

fn jitter<R: Rng>(centre: &[f64; 7], sd: f64, rng: &mut R) -> [f64; 7] {
    let mut w = *centre;
    for x in &mut w {
        let z: f64 = rng.sample(StandardNormal);
        *x += sd * z;
    }
    w
}

fn norm(w: &[f64; 7]) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn synthetic_population(condition: Condition, spec: &SyntheticSpec, seed: u64) -> Population<f64> {
    let users = (0..spec.users)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100, k as u64));
            let mut centre = jitter(&condition.centre(), spec.between_user_sd, &mut rng);
            let n = norm(&centre);
            if n > 0.95 {
                centre.iter_mut().for_each(|x| *x *= 0.95 / n);
            }
            let mut samples = Vec::with_capacity(spec.samples_per_user);
            while samples.len() < spec.samples_per_user {
                let w = jitter(&centre, spec.within_user_sd, &mut rng);
                if norm(&w) <= 1.0 {
                    samples.push(PreferenceVector(w));
                }
            }
            UserEntry {
                id: format!("synthetic-{:02}", k + 1),
                car_owner: k < spec.car_owners,
                condition: Some(condition.label().to_string()),
                posterior: Posterior::from_samples(samples),
            }
        })
        .collect();
    Population {
        v: 1,
        label: Some(format!("synthetic {} population (seed {seed})", condition.label())),
        scales: ChoiceScales::default(),
        users,
    }
}

//! Bayesian preference learning from observed choices.
//!
//! Each user's preference vector gets a uniform prior over the 7-dimensional
//! unit ball. Observed choices update it through the logit likelihood, and the
//! posterior is represented by Metropolis-Hastings samples. Queries are picked
//! from a random candidate pool by maximizing the sampled mutual information
//! between the preference vector and the user's answer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::choice::{ChoiceError, ChoiceScales, OptionSet, PreferenceVector, PreparedSet, TransportOption};
use crate::scalar::{ExtReal, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("choice index {index} out of range for a query with {len} options")]
    ChoiceOutOfRange { index: usize, len: usize },
    #[error("option {0} is dominated and cannot be chosen")]
    DominatedChoice(usize),
    #[error("invalid chain configuration: {0}")]
    BadChain(String),
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("no posterior samples")]
    NoSamples,
    #[error(transparent)]
    Choice(#[from] ChoiceError),
}

/// One observed decision: the options offered and the index picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ResponseRecord<T> {
    pub query: OptionSet<T>,
    pub chosen: usize,
}

impl<T: Scalar> ResponseRecord<T> {
    pub fn new(query: OptionSet<T>, chosen: usize) -> Result<Self, LearningError> {
        if chosen >= query.len() {
            return Err(LearningError::ChoiceOutOfRange { index: chosen, len: query.len() });
        }
        if crate::choice::dominated_set(&query)[chosen] {
            return Err(LearningError::DominatedChoice(chosen));
        }
        Ok(Self { query, chosen })
    }
}

/// Uniform prior over the unit ball, optionally restricted to non-positive
/// latency, cost and risk weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prior {
    #[serde(default)]
    pub sign_constrained: bool,
}

impl Prior {
    pub fn contains<T: Scalar>(&self, w: &PreferenceVector<T>) -> bool {
        w.0.iter().all(|x| x.is_finite())
            && w.norm() <= T::one()
            && (!self.sign_constrained || w.0[..3].iter().all(|x| *x <= T::zero()))
    }

    /// Unnormalized log density: 0 on the support, `-inf` elsewhere.
    pub fn log_density<T: Scalar>(&self, w: &PreferenceVector<T>) -> ExtReal<T> {
        if self.contains(w) {
            ExtReal::Finite(T::zero())
        } else {
            ExtReal::NegInfinity
        }
    }

    /// Exact draw by rejection from the enclosing cube.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> PreferenceVector<T> {
        loop {
            let mut w = [T::zero(); 7];
            for x in &mut w {
                *x = T::lit(rng.gen_range(-1.0..=1.0));
            }
            if self.sign_constrained {
                for x in &mut w[..3] {
                    *x = -x.abs();
                }
            }
            let w = PreferenceVector(w);
            if self.contains(&w) {
                return w;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Standard deviation of the isotropic Gaussian random-walk proposal.
    pub proposal_sd: f64,
    /// Total chain length including burn-in.
    pub steps: usize,
    pub burn_in: usize,
    /// Samples retained after thinning.
    pub samples: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { proposal_sd: 0.05, steps: 10_000, burn_in: 2_000, samples: 100 }
    }
}

impl ChainConfig {
    pub fn thin(&self) -> usize {
        (self.steps - self.burn_in) / self.samples
    }

    fn validate(&self) -> Result<(), LearningError> {
        if !(self.proposal_sd > 0.0 && self.proposal_sd.is_finite()) {
            return Err(LearningError::BadChain("proposal_sd must be positive".into()));
        }
        if self.samples == 0 || self.burn_in >= self.steps || self.steps - self.burn_in < self.samples {
            return Err(LearningError::BadChain(format!(
                "need steps > burn_in and at least {} post-burn-in steps",
                self.samples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub acceptance_rate: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Acceptance rate under which a chain is flagged as pathological.
pub const MIN_ACCEPTANCE: f64 = 0.01;

/// Sample-based representation of one user's preference distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Posterior<T> {
    pub samples: Vec<PreferenceVector<T>>,
    /// Optional non-negative importance weights, one per sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainMeta>,
}

impl<T: Scalar> Posterior<T> {
    pub fn from_samples(samples: Vec<PreferenceVector<T>>) -> Self {
        Self { samples, weights: None, chain: None }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples paired with their weight (1 when unweighted).
    pub fn weighted(&self) -> impl Iterator<Item = (&PreferenceVector<T>, T)> + '_ {
        self.samples.iter().enumerate().map(move |(i, w)| (w, self.weights.as_ref().map_or(T::one(), |ws| ws[i])))
    }

    pub fn mean(&self) -> PreferenceVector<T> {
        let mut m = [T::zero(); 7];
        let mut total = T::zero();
        for (w, k) in self.weighted() {
            for (a, b) in m.iter_mut().zip(&w.0) {
                *a += k * *b;
            }
            total += k;
        }
        for a in &mut m {
            *a /= total;
        }
        PreferenceVector(m)
    }

    /// Posterior-mean choice probabilities for a query.
    pub fn predictive(&self, query: &OptionSet<T>, scales: &ChoiceScales<T>) -> Result<Vec<T>, LearningError> {
        if self.is_empty() {
            return Err(LearningError::NoSamples);
        }
        let prepared = PreparedSet::new(query, scales);
        if prepared.n_active() == 0 {
            return Err(ChoiceError::AllDominated.into());
        }
        let mut acc = vec![T::zero(); query.len()];
        let mut p = vec![T::zero(); query.len()];
        let mut total = T::zero();
        for (w, k) in self.weighted() {
            prepared.probabilities_into(w, &mut p);
            for (a, b) in acc.iter_mut().zip(&p) {
                *a += k * *b;
            }
            total += k;
        }
        for a in &mut acc {
            *a /= total;
        }
        Ok(acc)
    }
}

/// Log prior plus the log-likelihood of every recorded choice.
pub fn log_unnormalized_posterior<T: Scalar>(w: &PreferenceVector<T>, dataset: &[ResponseRecord<T>], prior: &Prior, scales: &ChoiceScales<T>) -> ExtReal<T> {
    let prepared: Vec<_> = dataset.iter().map(|r| (PreparedSet::new(&r.query, scales), r.chosen)).collect();
    log_posterior_prepared(w, &prepared, prior)
}

fn log_posterior_prepared<T: Scalar>(w: &PreferenceVector<T>, data: &[(PreparedSet<T>, usize)], prior: &Prior) -> ExtReal<T> {
    let mut lp = prior.log_density(w);
    for (set, chosen) in data {
        if lp.is_neg_infinity() {
            break;
        }
        lp = lp.add(set.log_probability(w, *chosen));
    }
    lp
}

/// Random-walk Metropolis-Hastings over the posterior, started at the origin.
pub fn sample_posterior<T: Scalar>(
    dataset: &[ResponseRecord<T>],
    prior: &Prior,
    chain: &ChainConfig,
    scales: &ChoiceScales<T>,
    seed: u64,
) -> Result<Posterior<T>, LearningError> {
    chain.validate()?;
    let data: Vec<_> = dataset.iter().map(|r| (PreparedSet::new(&r.query, scales), r.chosen)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = T::lit(chain.proposal_sd);
    let thin = chain.thin();

    let mut current = PreferenceVector::<T>::zeros();
    let mut current_lp = log_posterior_prepared(&current, &data, prior);
    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(chain.samples);
    for step in 0..chain.steps {
        let mut proposal = current;
        for x in &mut proposal.0 {
            let z: f64 = rng.sample(StandardNormal);
            *x += sd * T::lit(z);
        }
        let u: f64 = rng.gen();
        let proposal_lp = log_posterior_prepared(&proposal, &data, prior);
        if let ExtReal::Finite(new) = proposal_lp {
            let accept = match current_lp {
                ExtReal::Finite(old) => T::lit(u.ln()) < new - old,
                ExtReal::NegInfinity => true,
            };
            if accept {
                current = proposal;
                current_lp = proposal_lp;
                accepted += 1;
            }
        }
        if step >= chain.burn_in && (step - chain.burn_in + 1).is_multiple_of(thin) && samples.len() < chain.samples {
            samples.push(current);
        }
    }

    let acceptance_rate = accepted as f64 / chain.steps as f64;
    let mut warnings = Vec::new();
    if acceptance_rate < MIN_ACCEPTANCE {
        let msg = format!("acceptance rate {acceptance_rate:.4} below {MIN_ACCEPTANCE}; posterior samples are unreliable");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Posterior {
        samples,
        weights: None,
        chain: Some(ChainMeta { steps: chain.steps, burn_in: chain.burn_in, thin, acceptance_rate, seed, warnings }),
    })
}

/// Sampled mutual information (nats) between the preference vector and the
/// answer to `query`:
/// `(1/M) Σ_o Σ_ω P_ω(o) ln(M P_ω(o) / Σ_ω' P_ω'(o))`.
pub fn info_gain_score<T: Scalar>(query: &OptionSet<T>, samples: &[PreferenceVector<T>], scales: &ChoiceScales<T>) -> Result<T, LearningError> {
    if samples.is_empty() {
        return Err(LearningError::NoSamples);
    }
    let prepared = PreparedSet::new(query, scales);
    if prepared.n_active() == 0 {
        return Err(ChoiceError::AllDominated.into());
    }
    Ok(info_gain_prepared(&prepared, samples))
}

fn info_gain_prepared<T: Scalar>(prepared: &PreparedSet<T>, samples: &[PreferenceVector<T>]) -> T {
    let n = prepared.len();
    let m = T::from_usize(samples.len()).unwrap();
    let mut probs = vec![T::zero(); n * samples.len()];
    let mut totals = vec![T::zero(); n];
    for (s, w) in samples.iter().enumerate() {
        let row = &mut probs[s * n..(s + 1) * n];
        prepared.probabilities_into(w, row);
        for (t, p) in totals.iter_mut().zip(row.iter()) {
            *t += *p;
        }
    }
    let mut score = T::zero();
    for row in probs.chunks(n) {
        for (p, t) in row.iter().zip(&totals) {
            if *p > T::zero() {
                score += *p * (m * *p / *t).ln();
            }
        }
    }
    // Rounding can leave a tiny negative value for uninformative queries.
    (score / m).max(T::zero())
}

/// Index and score of the most informative candidate; ties go to the lowest
/// index.
pub fn next_query<T: Scalar>(pool: &[OptionSet<T>], samples: &[PreferenceVector<T>], scales: &ChoiceScales<T>) -> Result<(usize, T), LearningError> {
    if pool.is_empty() {
        return Err(LearningError::EmptyPool);
    }
    if samples.is_empty() {
        return Err(LearningError::NoSamples);
    }
    let scores: Vec<T> = pool
        .par_iter()
        .map(|q| {
            let prepared = PreparedSet::new(q, scales);
            if prepared.n_active() == 0 {
                T::zero()
            } else {
                info_gain_prepared(&prepared, samples)
            }
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok((best, scores[best]))
}

/// Draws a choice from the logit model of a user with preferences `w_true`.
pub fn simulate_user<T: Scalar, R: Rng + ?Sized>(w_true: &PreferenceVector<T>, query: &OptionSet<T>, scales: &ChoiceScales<T>, rng: &mut R) -> Result<usize, LearningError> {
    let prepared = PreparedSet::new(query, scales);
    if prepared.n_active() == 0 {
        return Err(ChoiceError::AllDominated.into());
    }
    let mut p = vec![T::zero(); query.len()];
    prepared.probabilities_into(w_true, &mut p);
    let u = T::lit(rng.gen::<f64>());
    let mut acc = T::zero();
    let mut last = 0;
    for (j, pj) in p.iter().enumerate() {
        if *pj > T::zero() {
            acc += *pj;
            last = j;
            if u < acc {
                return Ok(j);
            }
        }
    }
    Ok(last)
}

/// Fraction of held-out records whose choice matches the argmax of the
/// posterior predictive. `None` for an empty hold-out set.
pub fn validation_accuracy<T: Scalar>(posterior: &Posterior<T>, held_out: &[ResponseRecord<T>], scales: &ChoiceScales<T>) -> Result<Option<f64>, LearningError> {
    if held_out.is_empty() {
        return Ok(None);
    }
    let mut hits = 0usize;
    for r in held_out {
        let p = posterior.predictive(&r.query, scales)?;
        let mut best = 0;
        for (j, pj) in p.iter().enumerate() {
            if *pj > p[best] {
                best = j;
            }
        }
        hits += usize::from(best == r.chosen);
    }
    Ok(Some(hits as f64 / held_out.len() as f64))
}

/// Attribute ranges random queries are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryGenerator {
    pub roads: usize,
    pub latency: (f64, f64),
    pub cost: (f64, f64),
    /// Risk of a full train; rail risk is this times a uniform occupancy.
    pub rail_full_risk: f64,
    pub taxi_risk_rate: f64,
    pub walk_risk_rate: f64,
    pub include_rail: bool,
    pub include_walk: bool,
}

impl Default for QueryGenerator {
    fn default() -> Self {
        Self {
            roads: 2,
            latency: (10.0, 120.0),
            cost: (0.0, 30.0),
            rail_full_risk: 350.0,
            taxi_risk_rate: 1.0,
            walk_risk_rate: 1.0,
            include_rail: true,
            include_walk: true,
        }
    }
}

impl QueryGenerator {
    /// One random query in canonical order: cars, taxis, rail, walk. Cars and
    /// taxis on the same road share its latency.
    pub fn random_query<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> OptionSet<T> {
        let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let latencies: Vec<f64> = (0..self.roads).map(|_| draw(self.latency)).collect();
        let car_costs: Vec<f64> = (0..self.roads).map(|_| draw(self.cost)).collect();
        let taxi_costs: Vec<f64> = (0..self.roads).map(|_| draw(self.cost)).collect();
        let mut options = Vec::with_capacity(2 * self.roads + 2);
        for (i, (l, x)) in latencies.iter().zip(&car_costs).enumerate() {
            options.push(TransportOption::car(i, T::lit(*l), T::lit(*x)));
        }
        for (i, (l, x)) in latencies.iter().zip(&taxi_costs).enumerate() {
            options.push(TransportOption::taxi(i, T::lit(*l), T::lit(*x), T::lit(self.taxi_risk_rate * l)));
        }
        if self.include_rail {
            let l = draw(self.latency);
            let x = draw(self.cost);
            let occupancy = draw((0.0, 1.0));
            options.push(TransportOption::rail(T::lit(l), T::lit(x), T::lit(occupancy * self.rail_full_risk)));
        }
        if self.include_walk {
            let l = draw(self.latency);
            options.push(TransportOption::walk(T::lit(l), T::lit(self.walk_risk_rate * l)));
        }
        OptionSet::new(options).expect("generated options are valid")
    }

    pub fn pool<T: Scalar, R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<OptionSet<T>> {
        (0..size).map(|_| self.random_query(rng)).collect()
    }
}

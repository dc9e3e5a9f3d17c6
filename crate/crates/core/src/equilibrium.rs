//! Flow equilibrium induced by taxi fares and a population's preferences.
//!
//! Flows determine road latencies and rail occupancy. Those set the attributes
//! every user sees, and the users' logit choices in turn determine the flows.
//! The equilibrium is a fixed point of `f -> F * h(attributes(f))`, found by
//! damped iteration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::choice::{dominated_set, population_shares, population_shares_with_dominated, ChoiceError, ChoiceScales, Mode, OptionLayout, OptionSet, TransportOption};
use crate::learning::Posterior;
use crate::network::{bpr, rail_trip_risk, taxi_trip_risk, walk_trip_risk, FlowState, NetworkConfig};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("fare vector has {got} entries, network has {expected} roads")]
    FareCount { expected: usize, got: usize },
    #[error("fare {fare} on road {road} is below the minimum {min}")]
    FareBelowMinimum { road: usize, fare: f64, min: f64 },
    #[error("damping must be in (0, 1], got {0}")]
    BadDamping(f64),
    #[error("equilibrium did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("no equilibrium: none of {regimes} domination regimes has a self-consistent fixed point")]
    NoConsistentRegime { regimes: usize },
    #[error("population has no users")]
    EmptyPopulation,
    #[error("network has no transport options")]
    NoOptions,
    #[error(transparent)]
    Choice(#[from] ChoiceError),
}

/// Taxi fare per road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct FareVector<T>(pub Vec<T>);

impl<T: Scalar> FareVector<T> {
    pub fn minimum(config: &NetworkConfig<T>) -> Self {
        Self(config.roads.iter().map(|r| r.min_taxi_fare).collect())
    }

    pub fn check(&self, config: &NetworkConfig<T>) -> Result<(), EquilibriumError> {
        if self.0.len() != config.n_roads() {
            return Err(EquilibriumError::FareCount { expected: config.n_roads(), got: self.0.len() });
        }
        for (road, (x, spec)) in self.0.iter().zip(&config.roads).enumerate() {
            if !(x.is_finite() && *x >= spec.min_taxi_fare) {
                return Err(EquilibriumError::FareBelowMinimum {
                    road,
                    fare: x.to_f64_lossy(),
                    min: spec.min_taxi_fare.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct UserEntry<T> {
    #[serde(default)]
    pub id: String,
    /// Car owners may drive; everyone else chooses among taxis, rail and walking.
    pub car_owner: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub posterior: Posterior<T>,
}

/// Users whose preference samples drive the network's demand split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Population<T> {
    #[serde(default = "schema_version")]
    pub v: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Attribute scales the posteriors were learned under.
    #[serde(default)]
    pub scales: ChoiceScales<T>,
    pub users: Vec<UserEntry<T>>,
}

fn schema_version() -> u32 {
    1
}

impl<T: Scalar> Population<T> {
    pub fn new(users: Vec<UserEntry<T>>, scales: ChoiceScales<T>) -> Self {
        Self { v: 1, label: None, scales, users }
    }

    /// Every structural problem, each prefixed with its location.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut issues = Vec::new();
        if self.v != 1 {
            issues.push(format!("v: unsupported schema version {}", self.v));
        }
        for (name, x) in [("latency", self.scales.latency), ("cost", self.scales.cost), ("risk", self.scales.risk)] {
            if !(x.is_finite() && x > T::zero()) {
                issues.push(format!("scales.{name}: must be positive and finite"));
            }
        }
        if self.users.is_empty() {
            issues.push("users: population has no users".into());
        }
        for (k, u) in self.users.iter().enumerate() {
            let post = &u.posterior;
            if post.is_empty() {
                issues.push(format!("users[{k}].posterior.samples: empty"));
            }
            if let Some(i) = post.samples.iter().position(|w| !w.0.iter().all(|x| x.is_finite())) {
                issues.push(format!("users[{k}].posterior.samples[{i}]: non-finite weight"));
            }
            if let Some(ws) = &post.weights {
                if ws.len() != post.len() {
                    issues.push(format!("users[{k}].posterior.weights: {} weights for {} samples", ws.len(), post.len()));
                } else if !ws.iter().all(|w| w.is_finite() && *w >= T::zero()) || !(ws.iter().copied().sum::<T>() > T::zero()) {
                    issues.push(format!("users[{k}].posterior.weights: must be non-negative with a positive sum"));
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    /// Concatenates the users of several populations learned under the same
    /// scales. Returns `None` when the scales differ or `parts` is empty.
    pub fn merge(parts: Vec<Population<T>>) -> Option<Self> {
        let mut it = parts.into_iter();
        let mut out = it.next()?;
        for p in it {
            if p.scales != out.scales {
                return None;
            }
            out.users.extend(p.users);
            out.label = None;
        }
        Some(out)
    }
}

/// Latency, cost and risk of every option in canonical order
/// `[car 1..n, taxi 1..n, rail, walk]` at the given flows.
pub fn build_option_attributes<T: Scalar>(config: &NetworkConfig<T>, fares: &FareVector<T>, flows: &FlowState<T>) -> Vec<TransportOption<T>> {
    let latencies: Vec<T> = (0..config.n_roads())
        .map(|i| bpr(&config.roads[i], config.alpha, config.beta, flows.vehicle_flow(i).max(T::zero())))
        .collect();
    let mut out = Vec::with_capacity(config.n_options());
    for (i, (road, l)) in config.roads.iter().zip(&latencies).enumerate() {
        out.push(TransportOption::car(i, *l, road.car_cost));
    }
    for (i, l) in latencies.iter().enumerate() {
        out.push(TransportOption::taxi(i, *l, fares.0[i], taxi_trip_risk(config.taxi_risk_rate, *l)));
    }
    if let Some(rail) = &config.rail {
        out.push(TransportOption::rail(rail.latency, rail.fare, rail_trip_risk(rail, flows.rail_flow.max(T::zero()))));
    }
    if let Some(walk) = &config.walk {
        out.push(TransportOption::walk(walk.latency, walk_trip_risk(walk)));
    }
    out
}

pub fn layout<T: Scalar>(config: &NetworkConfig<T>) -> OptionLayout {
    OptionLayout { roads: config.n_roads(), rail: config.rail.is_some(), walk: config.walk.is_some() }
}

/// One application of `f -> F * h(attributes(f))`.
pub fn flow_map<T: Scalar>(config: &NetworkConfig<T>, fares: &FareVector<T>, population: &Population<T>, flows: &FlowState<T>) -> Result<FlowState<T>, EquilibriumError> {
    flow_map_impl(config, fares, population, flows, None)
}

/// Dominated flag of every layout slot at the given flows.
pub fn regime_at<T: Scalar>(config: &NetworkConfig<T>, fares: &FareVector<T>, flows: &FlowState<T>) -> Result<Vec<bool>, EquilibriumError> {
    Ok(dominated_set(&OptionSet::new(build_option_attributes(config, fares, flows))?))
}

/// [`flow_map`] with the dominated options held fixed at `regime` (one flag
/// per layout slot). Continuous in the flows, unlike [`flow_map`].
pub fn flow_map_in_regime<T: Scalar>(
    config: &NetworkConfig<T>,
    fares: &FareVector<T>,
    population: &Population<T>,
    flows: &FlowState<T>,
    regime: &[bool],
) -> Result<FlowState<T>, EquilibriumError> {
    flow_map_impl(config, fares, population, flows, Some(regime))
}

fn flow_map_impl<T: Scalar>(
    config: &NetworkConfig<T>,
    fares: &FareVector<T>,
    population: &Population<T>,
    flows: &FlowState<T>,
    regime: Option<&[bool]>,
) -> Result<FlowState<T>, EquilibriumError> {
    if population.users.is_empty() {
        return Err(EquilibriumError::EmptyPopulation);
    }
    let attrs = build_option_attributes(config, fares, flows);
    let everyone = OptionSet::new(attrs.clone())?;
    let without_cars: Vec<_> = attrs.into_iter().filter(|o| !matches!(o.mode, Mode::Car)).collect();
    let no_car = if without_cars.is_empty() { None } else { Some(OptionSet::new(without_cars)?) };
    let users = population
        .users
        .iter()
        .map(|u| {
            let set = if u.car_owner { Some(&everyone) } else { no_car.as_ref() };
            set.map(|s| (&u.posterior, s)).ok_or(EquilibriumError::NoOptions)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lay = layout(config);
    let shares = match regime {
        Some(r) => population_shares_with_dominated(&users, &lay, &population.scales, r)?,
        None => population_shares(&users, &lay, &population.scales)?,
    };
    Ok(shares_to_flows(config, &lay, &shares))
}

fn shares_to_flows<T: Scalar>(config: &NetworkConfig<T>, lay: &OptionLayout, shares: &[T]) -> FlowState<T> {
    let n = config.n_roads();
    let f = config.demand;
    FlowState {
        car_flows: shares[..n].iter().map(|h| f * *h).collect(),
        taxi_flows: shares[n..2 * n].iter().map(|h| f * *h).collect(),
        rail_flow: lay.slot(Mode::Rail, None).map_or(T::zero(), |s| f * shares[s]),
        walk_flow: lay.slot(Mode::Walk, None).map_or(T::zero(), |s| f * shares[s]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSettings {
    pub damping: f64,
    /// Convergence threshold on the fixed-point residual, relative to demand.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EquilibriumSettings {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-6, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Equilibrium<T> {
    pub flows: FlowState<T>,
    pub iterations: usize,
    /// Final `max |flow_map(f) - f|`.
    pub residual: T,
}

/// Demand split evenly across every option the network offers.
pub fn uniform_flows<T: Scalar>(config: &NetworkConfig<T>) -> FlowState<T> {
    let lay = layout(config);
    let share = T::one() / T::from_usize(lay.len()).unwrap();
    shares_to_flows(config, &lay, &vec![share; lay.len()])
}

/// Damped fixed-point iteration `f <- (1 - λ) f + λ flow_map(f)`, from the
/// uniform split unless `initial` is given, until
/// `max |flow_map(f) - f| <= tol * F`. The returned flows are `flow_map(f)`
/// of the accepted iterate, so they always sum to the demand.
///
/// Domination makes `flow_map` jump where two same-mode options swap order.
/// When the iteration keeps crossing such a boundary it is abandoned and the
/// fixed point is sought with each domination regime frozen in turn; a
/// frozen fixed point is accepted only if its own attributes reproduce the
/// regime, so it is a fixed point of `flow_map` itself.
pub fn solve_equilibrium<T: Scalar>(
    config: &NetworkConfig<T>,
    fares: &FareVector<T>,
    population: &Population<T>,
    settings: &EquilibriumSettings,
    initial: Option<&FlowState<T>>,
) -> Result<Equilibrium<T>, EquilibriumError> {
    if !(settings.damping > 0.0 && settings.damping <= 1.0) {
        return Err(EquilibriumError::BadDamping(settings.damping));
    }
    fares.check(config)?;
    let start = initial.cloned().unwrap_or_else(|| uniform_flows(config));
    let threshold = T::lit(settings.tol) * config.demand;

    let mut switches = 0usize;
    let mut last_regime: Option<Vec<bool>> = None;
    let plain = iterate(settings, threshold, start.clone(), settings.max_iter, |f| {
        let regime = regime_at(config, fares, f)?;
        if last_regime.as_ref().is_some_and(|r| *r != regime) {
            switches += 1;
        }
        last_regime = Some(regime);
        if switches > REGIME_SWITCH_LIMIT {
            return Ok(None);
        }
        flow_map(config, fares, population, f).map(Some)
    })?;
    let (iterations, residual) = match plain {
        Outcome::Converged(eq) => return Ok(eq),
        Outcome::Failed { iterations, residual } => (iterations, residual),
    };
    if switches <= REGIME_SWITCH_LIMIT {
        return Err(EquilibriumError::NotConverged { iterations, residual: residual.to_f64_lossy() });
    }

    let mut total = iterations;
    let candidates = candidate_regimes(config, fares);
    for regime in &candidates {
        let frozen = iterate(settings, threshold, start.clone(), settings.max_iter, |f| {
            flow_map_in_regime(config, fares, population, f, regime).map(Some)
        })?;
        let Outcome::Converged(eq) = frozen else { continue };
        total += eq.iterations;
        if regime_at(config, fares, &eq.flows)? != *regime {
            continue;
        }
        let check = flow_map(config, fares, population, &eq.flows)?;
        let residual = check.max_abs_diff(&eq.flows);
        if residual <= threshold {
            return Ok(Equilibrium { flows: check, iterations: total, residual });
        }
    }
    Err(EquilibriumError::NoConsistentRegime { regimes: candidates.len() })
}

/// Domination-boundary crossings tolerated before the plain iteration is
/// abandoned.
const REGIME_SWITCH_LIMIT: usize = 8;

/// Regimes are enumerated exhaustively up to this many roads.
const MAX_ENUMERATED_ROADS: usize = 5;

/// Dominated patterns over the layout that the fixed costs allow, in a
/// fixed order. An option can only be dominated by a same-mode option that
/// costs no more, and at least one car and one taxi stay undominated. Rail
/// and walking are never dominated.
fn candidate_regimes<T: Scalar>(config: &NetworkConfig<T>, fares: &FareVector<T>) -> Vec<Vec<bool>> {
    let n = config.n_roads();
    let len = layout(config).len();
    if n == 0 || n > MAX_ENUMERATED_ROADS {
        return Vec::new();
    }
    let dominable = |costs: &[T]| -> Vec<usize> { (0..n).filter(|&j| (0..n).any(|k| k != j && costs[k] <= costs[j])).collect() };
    let car_costs: Vec<T> = config.roads.iter().map(|r| r.car_cost).collect();
    let groups = [(0, dominable(&car_costs)), (n, dominable(&fares.0))];
    let mut out = vec![vec![false; len]];
    for (offset, slots) in &groups {
        let mut next = Vec::new();
        for base in &out {
            for mask in 0u32..(1 << slots.len()) {
                if mask.count_ones() as usize == n {
                    continue;
                }
                let mut r = base.clone();
                for (b, j) in slots.iter().enumerate() {
                    r[offset + j] = mask >> b & 1 == 1;
                }
                next.push(r);
            }
        }
        out = next;
    }
    out
}

enum Outcome<T> {
    Converged(Equilibrium<T>),
    Failed { iterations: usize, residual: T },
}

/// Damped iteration of `map`; `map` returning `None` stops it early.
fn iterate<T: Scalar>(
    settings: &EquilibriumSettings,
    threshold: T,
    mut flows: FlowState<T>,
    max_iter: usize,
    mut map: impl FnMut(&FlowState<T>) -> Result<Option<FlowState<T>>, EquilibriumError>,
) -> Result<Outcome<T>, EquilibriumError> {
    let lambda = T::lit(settings.damping);
    let keep = T::one() - lambda;
    let mut residual = T::infinity();
    let mut previous: Option<FlowState<T>> = None;
    for it in 1..=max_iter {
        let Some(mapped) = map(&flows)? else {
            return Ok(Outcome::Failed { iterations: it, residual });
        };
        residual = mapped.max_abs_diff(&flows);
        if residual <= threshold {
            return Ok(Outcome::Converged(Equilibrium { flows: mapped, iterations: it, residual }));
        }
        // The map's output has stopped moving although the damped iterate
        // lags behind it: check the output itself as a fixed point.
        if previous.as_ref().is_some_and(|p| p.max_abs_diff(&mapped) <= threshold) {
            if let Some(probe) = map(&mapped)? {
                let probe_residual = probe.max_abs_diff(&mapped);
                if probe_residual <= threshold {
                    return Ok(Outcome::Converged(Equilibrium { flows: probe, iterations: it, residual: probe_residual }));
                }
            }
        }
        for (a, b) in flows.car_flows.iter_mut().zip(&mapped.car_flows) {
            *a = keep * *a + lambda * *b;
        }
        for (a, b) in flows.taxi_flows.iter_mut().zip(&mapped.taxi_flows) {
            *a = keep * *a + lambda * *b;
        }
        flows.rail_flow = keep * flows.rail_flow + lambda * mapped.rail_flow;
        flows.walk_flow = keep * flows.walk_flow + lambda * mapped.walk_flow;
        previous = Some(mapped);
    }
    Ok(Outcome::Failed { iterations: max_iter, residual })
}

pub const DEFAULT_PENALTY_WEIGHT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue<T> {
    pub value: T,
    pub latency: T,
    pub risk: T,
    /// `μ max(0, f_rail - c_rail)^2`.
    pub penalty: T,
}

/// `γ R + (1 - γ) L` plus the rail-capacity penalty.
pub fn evaluate_objective<T: Scalar>(config: &NetworkConfig<T>, flows: &FlowState<T>, gamma: T, penalty_weight: T) -> ObjectiveValue<T> {
    let latency = config.total_latency(flows).expect("flow shape matches network");
    let risk = config.total_risk(flows).expect("flow shape matches network");
    let penalty = config.rail.as_ref().map_or(T::zero(), |rail| {
        let excess = (flows.rail_flow - rail.capacity).max(T::zero());
        penalty_weight * excess * excess
    });
    ObjectiveValue { value: gamma * risk + (T::one() - gamma) * latency + penalty, latency, risk, penalty }
}

//! Multi-start fare optimization and the risk/latency Pareto sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::choice::TransportOption;
use crate::equilibrium::{
    build_option_attributes, evaluate_objective, solve_equilibrium, EquilibriumError, EquilibriumSettings, FareVector, Population,
    DEFAULT_PENALTY_WEIGHT,
};
use crate::neldermead::{minimize, NelderMeadConfig};
use crate::network::{FlowState, NetworkConfig};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("gamma must be in [0, 1], got {0}")]
    BadGamma(f64),
    #[error("at least one start is required")]
    NoStarts,
    #[error("fare upper bound {max} must exceed every minimum fare (largest {min})")]
    BadFareBound { max: f64, min: f64 },
    #[error("every start failed; first failure: {0}")]
    AllStartsFailed(String),
    #[error("empty gamma grid")]
    EmptyGrid,
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRequest {
    pub gamma: f64,
    pub n_starts: usize,
    pub fare_max: f64,
    pub seed: u64,
    #[serde(default)]
    pub equilibrium: EquilibriumSettings,
    #[serde(default = "default_penalty")]
    pub penalty_weight: f64,
    #[serde(default)]
    pub local: NelderMeadConfig,
}

fn default_penalty() -> f64 {
    DEFAULT_PENALTY_WEIGHT
}

impl Default for OptimizationRequest {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            n_starts: 100,
            fare_max: 50.0,
            seed: 0,
            equilibrium: EquilibriumSettings::default(),
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
            local: NelderMeadConfig::default(),
        }
    }
}

impl OptimizationRequest {
    fn validate<T: Scalar>(&self, config: &NetworkConfig<T>) -> Result<(), OptimizeError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(OptimizeError::BadGamma(self.gamma));
        }
        if self.n_starts == 0 {
            return Err(OptimizeError::NoStarts);
        }
        let min = config.roads.iter().map(|r| r.min_taxi_fare.to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max);
        if !(self.fare_max > min) {
            return Err(OptimizeError::BadFareBound { max: self.fare_max, min });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct StartRecord<T> {
    pub index: usize,
    pub initial: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fares: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<T>,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Diagnostics<T> {
    pub seed: u64,
    pub best_start: usize,
    pub equilibrium_iterations: usize,
    pub equilibrium_residual: T,
    pub starts: Vec<StartRecord<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SolutionReport<T> {
    pub gamma: f64,
    pub fares: FareVector<T>,
    pub flows: FlowState<T>,
    pub objective: T,
    pub latency: T,
    pub risk: T,
    pub penalty: T,
    /// Attributes of every option at the equilibrium, canonical order.
    pub options: Vec<TransportOption<T>>,
    pub diagnostics: Diagnostics<T>,
}

/// Initial point of start `index`: start 0 is the minimum-fare corner, the
/// rest are uniform in the box from an independent stream of `seed`.
pub fn start_point<T: Scalar>(lower: &[T], upper: &[T], seed: u64, index: usize) -> Vec<T> {
    if index == 0 {
        return lower.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| *lo + (*hi - *lo) * T::lit(rng.gen::<f64>()))
        .collect()
}

/// Equilibrium objective at a fare vector, or the equilibrium failure.
pub fn objective_at<T: Scalar>(
    config: &NetworkConfig<T>,
    population: &Population<T>,
    request: &OptimizationRequest,
    fares: &[T],
) -> Result<(T, crate::equilibrium::Equilibrium<T>), EquilibriumError> {
    let eq = solve_equilibrium(config, &FareVector(fares.to_vec()), population, &request.equilibrium, None)?;
    let obj = evaluate_objective(config, &eq.flows, T::lit(request.gamma), T::lit(request.penalty_weight));
    Ok((obj.value, eq))
}

fn run_start<T: Scalar>(config: &NetworkConfig<T>, population: &Population<T>, request: &OptimizationRequest, lower: &[T], upper: &[T], index: usize) -> StartRecord<T> {
    let initial = start_point(lower, upper, request.seed, index);
    let mut failed = 0usize;
    let mut first_error = None;
    let m = minimize(
        |x| match objective_at(config, population, request, x) {
            Ok((v, _)) => Some(v),
            Err(e) => {
                failed += 1;
                first_error.get_or_insert_with(|| e.to_string());
                None
            }
        },
        &initial,
        lower,
        upper,
        &request.local,
    );
    let ok = m.value.is_finite();
    StartRecord {
        index,
        initial,
        fares: ok.then(|| m.x.clone()),
        objective: ok.then_some(m.value),
        evaluations: m.evals,
        failed_evaluations: failed,
        converged: m.converged,
        error: if ok { None } else { first_error.or_else(|| Some("no finite objective".into())) },
    }
}

/// Multi-start local minimization of the equilibrium objective over the fare
/// box `[min_fare_i, fare_max]`.
pub fn optimize_fares<T: Scalar>(request: &OptimizationRequest, config: &NetworkConfig<T>, population: &Population<T>) -> Result<SolutionReport<T>, OptimizeError> {
    request.validate(config)?;
    let lower: Vec<T> = config.roads.iter().map(|r| r.min_taxi_fare).collect();
    let upper: Vec<T> = vec![T::lit(request.fare_max); config.n_roads()];

    let starts: Vec<StartRecord<T>> = (0..request.n_starts)
        .into_par_iter()
        .map(|i| run_start(config, population, request, &lower, &upper, i))
        .collect();

    let sum = |x: &[T]| x.iter().copied().sum::<T>();
    let mut best: Option<&StartRecord<T>> = None;
    for s in &starts {
        let (Some(v), Some(x)) = (s.objective, s.fares.as_ref()) else { continue };
        best = match best {
            None => Some(s),
            Some(b) => {
                let bv = b.objective.unwrap();
                let better = v < bv || (v == bv && sum(x) < sum(b.fares.as_ref().unwrap()));
                Some(if better { s } else { b })
            }
        };
    }
    let Some(best) = best else {
        let msg = starts.iter().find_map(|s| s.error.clone()).unwrap_or_default();
        return Err(OptimizeError::AllStartsFailed(msg));
    };

    let fares = FareVector(best.fares.clone().unwrap());
    let eq = solve_equilibrium(config, &fares, population, &request.equilibrium, None)?;
    let obj = evaluate_objective(config, &eq.flows, T::lit(request.gamma), T::lit(request.penalty_weight));
    let options = build_option_attributes(config, &fares, &eq.flows);
    let best_start = best.index;
    Ok(SolutionReport {
        gamma: request.gamma,
        fares,
        flows: eq.flows,
        objective: obj.value,
        latency: obj.latency,
        risk: obj.risk,
        penalty: obj.penalty,
        options,
        diagnostics: Diagnostics {
            seed: request.seed,
            best_start,
            equilibrium_iterations: eq.iterations,
            equilibrium_residual: eq.residual,
            starts,
        },
    })
}

/// One γ of a sweep with its optimization outcome.
pub type SweepPoint<T> = (f64, Result<SolutionReport<T>, OptimizeError>);

/// One fare optimization per γ; failures are kept in place.
pub fn pareto_sweep<T: Scalar>(
    gammas: &[f64],
    config: &NetworkConfig<T>,
    population: &Population<T>,
    request: &OptimizationRequest,
) -> Result<Vec<SweepPoint<T>>, OptimizeError> {
    if gammas.is_empty() {
        return Err(OptimizeError::EmptyGrid);
    }
    Ok(gammas
        .iter()
        .map(|g| {
            let req = OptimizationRequest { gamma: *g, ..*request };
            (*g, optimize_fares(&req, config, population))
        })
        .collect())
}

use fareopt_core::equilibrium::{FareVector, UserEntry};
use fareopt_core::learning::Posterior;
use fareopt_core::network::case_study_network;
use fareopt_core::optimize::{objective_at, optimize_fares, pareto_sweep, start_point};
use fareopt_core::choice::PreferenceVector;
use fareopt_core::{ChoiceScales, NetworkConfig, OptimizationRequest, OptimizeError, Population};

fn population(name: &str) -> Population {
    let path = format!("{}/../../data/population_{name}.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn quick(gamma: f64) -> OptimizationRequest {
    OptimizationRequest { gamma, n_starts: 3, seed: 5, ..Default::default() }
}

#[test]
fn request_validation() {
    let cfg = case_study_network();
    let pop = population("pre");
    let req = OptimizationRequest { n_starts: 0, ..quick(0.5) };
    assert_eq!(optimize_fares(&req, &cfg, &pop).unwrap_err(), OptimizeError::NoStarts);
    assert!(matches!(optimize_fares(&quick(1.5), &cfg, &pop), Err(OptimizeError::BadGamma(_))));
    let req = OptimizationRequest { fare_max: 8.0, ..quick(0.5) };
    assert!(matches!(optimize_fares(&req, &cfg, &pop), Err(OptimizeError::BadFareBound { .. })));
    assert_eq!(pareto_sweep(&[], &cfg, &pop, &quick(0.5)).unwrap_err(), OptimizeError::EmptyGrid);
}

#[test]
fn start_points_lie_in_the_box() {
    let lo = [15.0, 9.0];
    let hi = [50.0, 50.0];
    assert_eq!(start_point(&lo, &hi, 1, 0), lo.to_vec());
    for i in 1..50 {
        let p = start_point(&lo, &hi, 1, i);
        assert!(p.iter().zip(&lo).zip(&hi).all(|((x, l), h)| l <= x && x <= h));
        assert_eq!(p, start_point(&lo, &hi, 1, i));
    }
    assert_ne!(start_point(&lo, &hi, 1, 1), start_point(&lo, &hi, 2, 1));
}

#[test]
fn same_seed_same_report() {
    let cfg = case_study_network();
    let pop = population("post");
    let a = optimize_fares(&quick(0.5), &cfg, &pop).unwrap();
    let b = optimize_fares(&quick(0.5), &cfg, &pop).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn optimum_is_no_worse_than_minimum_fares() {
    let cfg = case_study_network();
    let pop = population("pre");
    for gamma in [0.0, 1.0] {
        let req = quick(gamma);
        let report = optimize_fares(&req, &cfg, &pop).unwrap();
        let (at_min, _) = objective_at(&cfg, &pop, &req, &FareVector::minimum(&cfg).0).unwrap();
        assert!(report.objective <= at_min, "gamma {gamma}: {} > {at_min}", report.objective);
        assert!(report.fares.0.iter().zip(&cfg.roads).all(|(x, r)| *x >= r.min_taxi_fare && *x <= req.fare_max));
        assert!((report.flows.total() - cfg.demand).abs() <= 1e-3);
        assert_eq!(report.diagnostics.starts.len(), req.n_starts);
    }
}

/// With a single road nothing can be dominated, and users that weigh only
/// mode biases make flows independent of fares.
#[test]
fn flat_landscape_returns_minimum_fares() {
    let mut cfg: NetworkConfig = case_study_network();
    cfg.roads.truncate(1);
    let w = PreferenceVector([0.0, 0.0, 0.0, 0.2, 0.1, 0.3, -0.2]);
    let user = UserEntry { id: "flat".into(), car_owner: true, condition: None, posterior: Posterior::from_samples(vec![w]) };
    let pop = Population::new(vec![user], ChoiceScales::default());
    let report = optimize_fares(&quick(0.5), &cfg, &pop).unwrap();
    assert_eq!(report.fares.0, vec![cfg.roads[0].min_taxi_fare]);
    assert_eq!(report.diagnostics.best_start, 0);
}

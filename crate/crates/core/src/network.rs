//! Parallel-road network: roads shared by private cars and taxis, an optional
//! railway and an optional walking path, all joining a single O-D pair.
//!
//! Latency on roads follows the BPR volume-delay curve. Risk of infection is
//! zero for private cars, proportional to trip duration for taxis and walkers,
//! and proportional to occupancy for the railway.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const DEFAULT_BPR_ALPHA: f64 = 0.15;
pub const DEFAULT_BPR_BETA: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("flow must be non-negative, got {0}")]
    NegativeFlow(f64),
    #[error("flow state has {got} roads, network has {expected}")]
    RoadCountMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec<T> {
    /// Minutes to traverse the empty road.
    pub free_flow_latency: T,
    /// Vehicles per minute.
    pub capacity: T,
    pub car_cost: T,
    pub min_taxi_fare: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RailSpec<T> {
    pub latency: T,
    /// Passengers per minute.
    pub capacity: T,
    pub fare: T,
    /// Risk per minute for one passenger on a train running at capacity.
    pub full_capacity_risk_rate: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec<T> {
    pub latency: T,
    pub risk_rate: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig<T> {
    pub roads: Vec<RoadSpec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rail: Option<RailSpec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<WalkSpec<T>>,
    pub alpha: T,
    pub beta: T,
    pub taxi_risk_rate: T,
    /// Persons per minute travelling between the origin and the destination.
    pub demand: T,
}

/// Persons per minute on every transport option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState<T> {
    pub car_flows: Vec<T>,
    pub taxi_flows: Vec<T>,
    pub rail_flow: T,
    pub walk_flow: T,
}

/// BPR latency `a * (1 + alpha * (f / c)^beta)`.
pub fn road_latency<T: Scalar>(road: &RoadSpec<T>, alpha: T, beta: T, vehicle_flow: T) -> Result<T, NetworkError> {
    if !(vehicle_flow >= T::zero()) {
        return Err(NetworkError::NegativeFlow(vehicle_flow.to_f64_lossy()));
    }
    Ok(bpr(road, alpha, beta, vehicle_flow))
}

#[inline]
pub(crate) fn bpr<T: Scalar>(road: &RoadSpec<T>, alpha: T, beta: T, vehicle_flow: T) -> T {
    let ratio = vehicle_flow / road.capacity;
    let load = if beta == T::lit(4.0) {
        let sq = ratio * ratio;
        sq * sq
    } else {
        ratio.powf(beta)
    };
    road.free_flow_latency * (T::one() + alpha * load)
}

/// Risk one taxi passenger accumulates over a trip of the given duration.
pub fn taxi_trip_risk<T: Scalar>(taxi_risk_rate: T, latency: T) -> T {
    taxi_risk_rate * latency
}

/// Per-passenger risk of one railway trip at the given rail flow.
pub fn rail_trip_risk<T: Scalar>(rail: &RailSpec<T>, rail_flow: T) -> T {
    rail.latency * rail.full_capacity_risk_rate * rail_flow / rail.capacity
}

pub fn walk_trip_risk<T: Scalar>(walk: &WalkSpec<T>) -> T {
    walk.latency * walk.risk_rate
}

impl<T: Scalar> NetworkConfig<T> {
    pub fn n_roads(&self) -> usize {
        self.roads.len()
    }

    /// Latency of road `i` given the flows on it.
    pub fn road_latency(&self, i: usize, flows: &FlowState<T>) -> T {
        bpr(&self.roads[i], self.alpha, self.beta, flows.vehicle_flow(i))
    }

    pub fn road_latencies(&self, flows: &FlowState<T>) -> Vec<T> {
        (0..self.n_roads()).map(|i| self.road_latency(i, flows)).collect()
    }

    fn check_shape(&self, flows: &FlowState<T>) -> Result<(), NetworkError> {
        let n = self.n_roads();
        if flows.car_flows.len() != n || flows.taxi_flows.len() != n {
            return Err(NetworkError::RoadCountMismatch {
                expected: n,
                got: flows.car_flows.len().max(flows.taxi_flows.len()),
            });
        }
        Ok(())
    }

    /// Aggregate person-minutes per minute over all modes.
    pub fn total_latency(&self, flows: &FlowState<T>) -> Result<T, NetworkError> {
        self.check_shape(flows)?;
        let mut total = T::zero();
        for i in 0..self.n_roads() {
            let fv = flows.vehicle_flow(i);
            if fv > T::zero() {
                total += fv * self.road_latency(i, flows);
            }
        }
        if let Some(rail) = &self.rail {
            total += flows.rail_flow * rail.latency;
        }
        if let Some(walk) = &self.walk {
            total += flows.walk_flow * walk.latency;
        }
        Ok(total)
    }

    /// Aggregate infection risk per minute. Private cars contribute nothing.
    pub fn total_risk(&self, flows: &FlowState<T>) -> Result<T, NetworkError> {
        self.check_shape(flows)?;
        let mut total = T::zero();
        for i in 0..self.n_roads() {
            let ft = flows.taxi_flows[i];
            if ft > T::zero() {
                total += ft * taxi_trip_risk(self.taxi_risk_rate, self.road_latency(i, flows));
            }
        }
        if let Some(rail) = &self.rail {
            total += flows.rail_flow * rail_trip_risk(rail, flows.rail_flow);
        }
        if let Some(walk) = &self.walk {
            total += flows.walk_flow * walk_trip_risk(walk);
        }
        Ok(total)
    }

    /// Number of transport options: a car and a taxi option per road, plus
    /// railway and walking when present.
    pub fn n_options(&self) -> usize {
        2 * self.n_roads() + usize::from(self.rail.is_some()) + usize::from(self.walk.is_some())
    }

    pub fn zero_flows(&self) -> FlowState<T> {
        FlowState::zeros(self.n_roads())
    }
}

impl<T: Scalar> FlowState<T> {
    pub fn zeros(n_roads: usize) -> Self {
        Self {
            car_flows: vec![T::zero(); n_roads],
            taxi_flows: vec![T::zero(); n_roads],
            rail_flow: T::zero(),
            walk_flow: T::zero(),
        }
    }

    pub fn vehicle_flow(&self, road: usize) -> T {
        self.car_flows[road] + self.taxi_flows[road]
    }

    pub fn total(&self) -> T {
        self.car_flows.iter().copied().sum::<T>() + self.taxi_flows.iter().copied().sum::<T>() + self.rail_flow + self.walk_flow
    }

    pub fn is_non_negative(&self) -> bool {
        self.car_flows.iter().chain(self.taxi_flows.iter()).all(|f| *f >= T::zero())
            && self.rail_flow >= T::zero()
            && self.walk_flow >= T::zero()
    }

    /// Largest absolute per-option difference.
    pub fn max_abs_diff(&self, other: &FlowState<T>) -> T {
        let roads = self
            .car_flows
            .iter()
            .zip(&other.car_flows)
            .chain(self.taxi_flows.iter().zip(&other.taxi_flows))
            .map(|(a, b)| (*a - *b).abs());
        roads
            .chain([(self.rail_flow - other.rail_flow).abs(), (self.walk_flow - other.walk_flow).abs()])
            .fold(T::zero(), T::max)
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            car_flows: self.car_flows.iter().map(|f| *f * k).collect(),
            taxi_flows: self.taxi_flows.iter().map(|f| *f * k).collect(),
            rail_flow: self.rail_flow * k,
            walk_flow: self.walk_flow * k,
        }
    }

    /// Flows in the canonical option order `[car 1..n, taxi 1..n, rail, walk]`.
    pub fn to_vec(&self) -> Vec<T> {
        let mut v = self.car_flows.clone();
        v.extend_from_slice(&self.taxi_flows);
        v.push(self.rail_flow);
        v.push(self.walk_flow);
        v
    }
}

/// The network used throughout the case study: a freeway and a street, a
/// railway and a walking path.
pub fn case_study_network<T: Scalar>() -> NetworkConfig<T> {
    let road = |a: f64, c: f64, car: f64, taxi: f64| RoadSpec {
        free_flow_latency: T::lit(a),
        capacity: T::lit(c),
        car_cost: T::lit(car),
        min_taxi_fare: T::lit(taxi),
    };
    NetworkConfig {
        roads: vec![road(30.0, 900.0, 15.0, 9.0), road(45.0, 600.0, 9.0, 5.0)],
        rail: Some(RailSpec {
            latency: T::lit(35.0),
            capacity: T::lit(1500.0),
            fare: T::lit(3.0),
            full_capacity_risk_rate: T::lit(10.0),
        }),
        walk: Some(WalkSpec { latency: T::lit(120.0), risk_rate: T::lit(1.0) }),
        alpha: T::lit(DEFAULT_BPR_ALPHA),
        beta: T::lit(DEFAULT_BPR_BETA),
        taxi_risk_rate: T::lit(1.0),
        demand: T::lit(3000.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn road(a: f64, c: f64) -> RoadSpec<f64> {
        RoadSpec { free_flow_latency: a, capacity: c, car_cost: 0.0, min_taxi_fare: 0.0 }
    }

    #[test]
    fn bpr_hand_values() {
        assert_eq!(road_latency(&road(30.0, 900.0), 0.15, 4.0, 0.0).unwrap(), 30.0);
        assert!((road_latency(&road(30.0, 900.0), 0.15, 4.0, 900.0).unwrap() - 34.5).abs() <= 1e-12);
        assert!((road_latency(&road(45.0, 600.0), 0.15, 4.0, 1200.0).unwrap() - 153.0).abs() <= 1e-12);
        // non-integer exponent takes the powf path
        assert!((road_latency(&road(30.0, 900.0), 0.15, 4.5, 900.0).unwrap() - 34.5).abs() <= 1e-12);
    }

    #[test]
    fn negative_flow_is_rejected() {
        assert_eq!(road_latency(&road(30.0, 900.0), 0.15, 4.0, -1.0), Err(NetworkError::NegativeFlow(-1.0)));
        assert!(road_latency(&road(30.0, 900.0), 0.15, 4.0, f64::NAN).is_err());
    }

    #[test]
    fn trip_risks() {
        assert_eq!(taxi_trip_risk(1.0, 34.5), 34.5);
        assert_eq!(taxi_trip_risk(0.0, 100.0), 0.0);
        assert_eq!(taxi_trip_risk(1.0, 30.0), 30.0);
        let net = case_study_network::<f64>();
        let rail = net.rail.as_ref().unwrap();
        assert!((rail_trip_risk(rail, 1500.0) - 350.0).abs() < 1e-12);
        assert_eq!(rail_trip_risk(rail, 0.0), 0.0);
        assert!((rail_trip_risk(rail, 750.0) - 175.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_hand_values() {
        let net = case_study_network::<f64>();
        let mut flows = net.zero_flows();
        assert_eq!(net.total_latency(&flows).unwrap(), 0.0);
        assert_eq!(net.total_risk(&flows).unwrap(), 0.0);

        flows.walk_flow = 100.0;
        assert_eq!(net.total_latency(&flows).unwrap(), 12000.0);

        let mut flows = net.zero_flows();
        flows.car_flows[0] = 900.0;
        assert!((net.total_latency(&flows).unwrap() - 31050.0).abs() < 1e-9);
        assert_eq!(net.total_risk(&flows).unwrap(), 0.0);

        let mut flows = net.zero_flows();
        flows.rail_flow = 1500.0;
        assert!((net.total_risk(&flows).unwrap() - 525_000.0).abs() < 1e-9);
    }

    #[test]
    fn absent_modes_are_skipped() {
        let mut net = case_study_network::<f64>();
        net.rail = None;
        net.walk = None;
        let mut flows = net.zero_flows();
        flows.rail_flow = 10.0;
        flows.walk_flow = 10.0;
        assert_eq!(net.total_latency(&flows).unwrap(), 0.0);
        assert_eq!(net.n_options(), 4);
    }

    #[test]
    fn shape_mismatch() {
        let net = case_study_network::<f64>();
        assert!(net.total_latency(&FlowState::zeros(3)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let net = case_study_network::<f32>();
        let mut flows = net.zero_flows();
        flows.car_flows[0] = 900.0;
        assert!((net.total_latency(&flows).unwrap() - 31050.0).abs() < 0.05);
    }

    fn arb_flows() -> impl Strategy<Value = FlowState<f64>> {
        (prop::collection::vec(0.0..2000.0f64, 4), 0.0..3000.0f64, 0.0..3000.0f64).prop_map(|(v, r, p)| FlowState {
            car_flows: v[..2].to_vec(),
            taxi_flows: v[2..].to_vec(),
            rail_flow: r,
            walk_flow: p,
        })
    }

    proptest! {
        #[test]
        fn bpr_monotone(a in 1.0..100.0f64, c in 1.0..2000.0f64, f in 0.0..5000.0f64, df in 0.0..100.0f64) {
            let r = road(a, c);
            prop_assert!(road_latency(&r, 0.15, 4.0, f + df).unwrap() >= road_latency(&r, 0.15, 4.0, f).unwrap());
        }

        #[test]
        fn rail_risk_is_quadratic(f in 0.0..3000.0f64, k in 0.0..5.0f64) {
            let net = case_study_network::<f64>();
            let mut a = net.zero_flows();
            a.rail_flow = f;
            let mut b = net.zero_flows();
            b.rail_flow = k * f;
            let ra = net.total_risk(&a).unwrap();
            let rb = net.total_risk(&b).unwrap();
            prop_assert!((rb - k * k * ra).abs() <= 1e-9 * rb.abs().max(1.0));
        }

        #[test]
        fn zero_rates_zero_risk(flows in arb_flows()) {
            let mut net = case_study_network::<f64>();
            net.taxi_risk_rate = 0.0;
            net.rail.as_mut().unwrap().full_capacity_risk_rate = 0.0;
            net.walk.as_mut().unwrap().risk_rate = 0.0;
            prop_assert_eq!(net.total_risk(&flows).unwrap(), 0.0);
        }

        #[test]
        fn modes_are_additive(flows in arb_flows()) {
            // Disjoint assignment: roads in one state, rail and walk in the other.
            let net = case_study_network::<f64>();
            let mut roads = flows.clone();
            roads.rail_flow = 0.0;
            roads.walk_flow = 0.0;
            let mut rest = net.zero_flows();
            rest.rail_flow = flows.rail_flow;
            rest.walk_flow = flows.walk_flow;
            let l = net.total_latency(&flows).unwrap();
            let r = net.total_risk(&flows).unwrap();
            prop_assert!((l - net.total_latency(&roads).unwrap() - net.total_latency(&rest).unwrap()).abs() <= 1e-9 * l.max(1.0));
            prop_assert!((r - net.total_risk(&roads).unwrap() - net.total_risk(&rest).unwrap()).abs() <= 1e-9 * r.max(1.0));
        }
    }
}

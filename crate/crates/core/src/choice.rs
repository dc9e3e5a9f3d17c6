//! Transport options, domination, the linear utility model and multinomial
//! logit choice probabilities.
//!
//! Utilities are computed on attributes divided by reference scales
//! ([`ChoiceScales`]) so that preference vectors drawn from the unit ball give
//! choice probabilities that are neither uniform nor degenerate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learning::Posterior;
use crate::scalar::{ExtReal, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChoiceError {
    #[error("option set is empty")]
    EmptyOptionSet,
    #[error("invalid option set: {0}")]
    InvalidOptionSet(String),
    #[error("every option in the set is dominated")]
    AllDominated,
    #[error("posterior has no samples")]
    EmptyPosterior,
    #[error("no users in population")]
    NoUsers,
    #[error("option {0:?} has no slot in the network layout")]
    OutsideLayout(Mode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Car,
    Taxi,
    Rail,
    Walk,
}

impl Mode {
    /// Position of this mode's bias term in a [`PreferenceVector`].
    pub fn bias_index(self) -> usize {
        match self {
            Mode::Car => 3,
            Mode::Taxi => 4,
            Mode::Rail => 5,
            Mode::Walk => 6,
        }
    }

    pub fn uses_road(self) -> bool {
        matches!(self, Mode::Car | Mode::Taxi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportOption<T> {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub road: Option<usize>,
    pub latency: T,
    pub cost: T,
    pub risk: T,
}

impl<T: Scalar> TransportOption<T> {
    pub fn car(road: usize, latency: T, cost: T) -> Self {
        Self { mode: Mode::Car, road: Some(road), latency, cost, risk: T::zero() }
    }

    pub fn taxi(road: usize, latency: T, cost: T, risk: T) -> Self {
        Self { mode: Mode::Taxi, road: Some(road), latency, cost, risk }
    }

    pub fn rail(latency: T, cost: T, risk: T) -> Self {
        Self { mode: Mode::Rail, road: None, latency, cost, risk }
    }

    pub fn walk(latency: T, risk: T) -> Self {
        Self { mode: Mode::Walk, road: None, latency, cost: T::zero(), risk }
    }

    /// True if `other` is at least as good on every attribute and strictly
    /// better on one, and both are the same mode.
    pub fn is_dominated_by(&self, other: &Self) -> bool {
        self.mode == other.mode
            && other.latency <= self.latency
            && other.cost <= self.cost
            && other.risk <= self.risk
            && (other.latency < self.latency || other.cost < self.cost || other.risk < self.risk)
    }
}

/// The options available to one user for one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TransportOption<T>>", into = "Vec<TransportOption<T>>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct OptionSet<T> {
    options: Vec<TransportOption<T>>,
}

impl<T: Scalar> OptionSet<T> {
    pub fn new(options: Vec<TransportOption<T>>) -> Result<Self, ChoiceError> {
        if options.is_empty() {
            return Err(ChoiceError::EmptyOptionSet);
        }
        let mut seen = std::collections::HashSet::new();
        for o in &options {
            if o.mode.uses_road() != o.road.is_some() {
                return Err(ChoiceError::InvalidOptionSet(format!("{:?} option with road {:?}", o.mode, o.road)));
            }
            for (name, v) in [("latency", o.latency), ("cost", o.cost), ("risk", o.risk)] {
                if !(v.is_finite() && v >= T::zero()) {
                    return Err(ChoiceError::InvalidOptionSet(format!("{name} must be finite and >= 0, got {v}")));
                }
            }
            if !seen.insert((o.mode, o.road)) {
                return Err(ChoiceError::InvalidOptionSet(format!("duplicate {:?} option on road {:?}", o.mode, o.road)));
            }
        }
        Ok(Self { options })
    }

    pub fn options(&self) -> &[TransportOption<T>] {
        &self.options
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }
}

impl<T: Scalar> TryFrom<Vec<TransportOption<T>>> for OptionSet<T> {
    type Error = ChoiceError;
    fn try_from(v: Vec<TransportOption<T>>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl<T> From<OptionSet<T>> for Vec<TransportOption<T>> {
    fn from(s: OptionSet<T>) -> Self {
        s.options
    }
}

/// Seven preference weights: latency, cost and risk sensitivities followed by
/// the car, taxi, rail and walk biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct PreferenceVector<T>(pub [T; 7]);

impl<T: Scalar> PreferenceVector<T> {
    pub const DIM: usize = 7;

    pub fn zeros() -> Self {
        Self([T::zero(); 7])
    }

    pub fn norm(&self) -> T {
        self.0.iter().map(|w| *w * *w).sum::<T>().sqrt()
    }

    pub fn latency_weight(&self) -> T {
        self.0[0]
    }

    pub fn cost_weight(&self) -> T {
        self.0[1]
    }

    pub fn risk_weight(&self) -> T {
        self.0[2]
    }
}

/// Reference magnitudes each attribute is divided by before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceScales<T> {
    pub latency: T,
    pub cost: T,
    pub risk: T,
}

impl<T: Scalar> Default for ChoiceScales<T> {
    fn default() -> Self {
        Self { latency: T::lit(60.0), cost: T::lit(20.0), risk: T::lit(60.0) }
    }
}

impl<T: Scalar> ChoiceScales<T> {
    /// Divides every scale by `factor`, making choices more deterministic.
    pub fn sharpened(self, factor: T) -> Self {
        Self { latency: self.latency / factor, cost: self.cost / factor, risk: self.risk / factor }
    }
}

/// Flags, per option, whether another option of the same mode dominates it.
/// Railway and walking are singletons and so never dominated.
pub fn dominated_set<T: Scalar>(set: &OptionSet<T>) -> Vec<bool> {
    let opts = set.options();
    opts.iter()
        .enumerate()
        .map(|(j, o)| opts.iter().enumerate().any(|(k, other)| k != j && o.is_dominated_by(other)))
        .collect()
}

pub fn utility<T: Scalar>(w: &PreferenceVector<T>, option: &TransportOption<T>, dominated: bool, scales: &ChoiceScales<T>) -> ExtReal<T> {
    if dominated {
        return ExtReal::NegInfinity;
    }
    let w = &w.0;
    ExtReal::Finite(
        w[0] * option.latency / scales.latency
            + w[1] * option.cost / scales.cost
            + w[2] * option.risk / scales.risk
            + w[option.mode.bias_index()],
    )
}

/// Softmax over a slice of extended utilities; `-inf` entries get exactly 0.
pub fn softmax<T: Scalar>(utilities: &[ExtReal<T>]) -> Result<Vec<T>, ChoiceError> {
    let max = utilities.iter().filter_map(|u| u.finite()).fold(None, |m: Option<T>, u| Some(m.map_or(u, |m| m.max(u))));
    let max = max.ok_or(ChoiceError::AllDominated)?;
    let mut out: Vec<T> = utilities.iter().map(|u| u.finite().map_or(T::zero(), |u| (u - max).exp())).collect();
    let z: T = out.iter().copied().sum();
    for p in &mut out {
        *p /= z;
    }
    Ok(out)
}

/// Multinomial logit probabilities of every option in `set`.
pub fn choice_probabilities<T: Scalar>(w: &PreferenceVector<T>, set: &OptionSet<T>, scales: &ChoiceScales<T>) -> Result<Vec<T>, ChoiceError> {
    let dominated = dominated_set(set);
    let utilities: Vec<_> = set.options().iter().zip(&dominated).map(|(o, d)| utility(w, o, *d, scales)).collect();
    softmax(&utilities)
}

/// An option set with normalized attributes and the domination mask
/// precomputed, for evaluating many preference vectors against it.
#[derive(Debug, Clone)]
pub struct PreparedSet<T> {
    features: Vec<[T; 3]>,
    bias: Vec<usize>,
    active: Vec<bool>,
    n_active: usize,
}

impl<T: Scalar> PreparedSet<T> {
    pub fn new(set: &OptionSet<T>, scales: &ChoiceScales<T>) -> Self {
        Self::with_dominated(set, scales, &dominated_set(set))
    }

    /// Like [`PreparedSet::new`] with the dominated flags supplied by the caller.
    pub fn with_dominated(set: &OptionSet<T>, scales: &ChoiceScales<T>, dominated: &[bool]) -> Self {
        assert_eq!(dominated.len(), set.len());
        let features = set
            .options()
            .iter()
            .map(|o| [o.latency / scales.latency, o.cost / scales.cost, o.risk / scales.risk])
            .collect();
        let bias = set.options().iter().map(|o| o.mode.bias_index()).collect();
        let active: Vec<bool> = dominated.iter().map(|d| !d).collect();
        let n_active = active.iter().filter(|a| **a).count();
        Self { features, bias, active, n_active }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.active[j]
    }

    /// Writes choice probabilities for `w` into `out` (same length as the set).
    pub fn probabilities_into(&self, w: &PreferenceVector<T>, out: &mut [T]) {
        debug_assert!(self.n_active > 0);
        let w = &w.0;
        let mut max = T::neg_infinity();
        for (j, f) in self.features.iter().enumerate() {
            if self.active[j] {
                let u = w[0] * f[0] + w[1] * f[1] + w[2] * f[2] + w[self.bias[j]];
                out[j] = u;
                max = max.max(u);
            }
        }
        let mut z = T::zero();
        for j in 0..self.features.len() {
            if self.active[j] {
                out[j] = (out[j] - max).exp();
                z += out[j];
            } else {
                out[j] = T::zero();
            }
        }
        for p in out.iter_mut() {
            *p /= z;
        }
    }

    /// Log-probability of choosing option `j`.
    pub fn log_probability(&self, w: &PreferenceVector<T>, j: usize) -> ExtReal<T> {
        if !self.active[j] {
            return ExtReal::NegInfinity;
        }
        let w = &w.0;
        let u = |k: usize| {
            let f = &self.features[k];
            w[0] * f[0] + w[1] * f[1] + w[2] * f[2] + w[self.bias[k]]
        };
        let mut max = T::neg_infinity();
        for k in 0..self.features.len() {
            if self.active[k] {
                max = max.max(u(k));
            }
        }
        let mut z = T::zero();
        for k in 0..self.features.len() {
            if self.active[k] {
                z += (u(k) - max).exp();
            }
        }
        ExtReal::Finite(u(j) - max - z.ln())
    }
}

/// Which transport options a network offers, in the canonical order
/// `[car 1..n, taxi 1..n, rail, walk]` (absent modes are omitted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionLayout {
    pub roads: usize,
    pub rail: bool,
    pub walk: bool,
}

impl OptionLayout {
    pub fn len(&self) -> usize {
        2 * self.roads + usize::from(self.rail) + usize::from(self.walk)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot(&self, mode: Mode, road: Option<usize>) -> Option<usize> {
        match (mode, road) {
            (Mode::Car, Some(i)) if i < self.roads => Some(i),
            (Mode::Taxi, Some(i)) if i < self.roads => Some(self.roads + i),
            (Mode::Rail, None) if self.rail => Some(2 * self.roads),
            (Mode::Walk, None) if self.walk => Some(2 * self.roads + usize::from(self.rail)),
            _ => None,
        }
    }

    /// Human-readable label of each slot, e.g. `taxi_2`.
    pub fn labels(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.roads).map(|i| format!("car_{i}")).collect();
        v.extend((1..=self.roads).map(|i| format!("taxi_{i}")));
        if self.rail {
            v.push("rail".into());
        }
        if self.walk {
            v.push("walk".into());
        }
        v
    }
}

/// Population share of every option: the average over users, and over each
/// user's posterior samples, of the logit choice probabilities. Options a
/// user does not have receive nothing from that user.
pub fn population_shares<T: Scalar>(users: &[(&Posterior<T>, &OptionSet<T>)], layout: &OptionLayout, scales: &ChoiceScales<T>) -> Result<Vec<T>, ChoiceError> {
    shares_impl(users, layout, scales, None)
}

/// [`population_shares`] with domination fixed per layout slot instead of
/// recomputed from each set's attributes.
pub fn population_shares_with_dominated<T: Scalar>(
    users: &[(&Posterior<T>, &OptionSet<T>)],
    layout: &OptionLayout,
    scales: &ChoiceScales<T>,
    dominated_slots: &[bool],
) -> Result<Vec<T>, ChoiceError> {
    assert_eq!(dominated_slots.len(), layout.len());
    shares_impl(users, layout, scales, Some(dominated_slots))
}

fn shares_impl<T: Scalar>(
    users: &[(&Posterior<T>, &OptionSet<T>)],
    layout: &OptionLayout,
    scales: &ChoiceScales<T>,
    dominated_slots: Option<&[bool]>,
) -> Result<Vec<T>, ChoiceError> {
    if users.is_empty() {
        return Err(ChoiceError::NoUsers);
    }
    let mut shares = vec![T::zero(); layout.len()];
    let mut probs = Vec::new();
    let mut acc = Vec::new();
    for (posterior, set) in users {
        if posterior.is_empty() {
            return Err(ChoiceError::EmptyPosterior);
        }
        let slots = set
            .options()
            .iter()
            .map(|o| layout.slot(o.mode, o.road).ok_or(ChoiceError::OutsideLayout(o.mode)))
            .collect::<Result<Vec<_>, _>>()?;
        let prepared = match dominated_slots {
            Some(d) => PreparedSet::with_dominated(set, scales, &slots.iter().map(|s| d[*s]).collect::<Vec<_>>()),
            None => PreparedSet::new(set, scales),
        };
        if prepared.n_active() == 0 {
            return Err(ChoiceError::AllDominated);
        }
        probs.resize(set.len(), T::zero());
        acc.clear();
        acc.resize(set.len(), T::zero());
        let mut total_weight = T::zero();
        for (w, weight) in posterior.weighted() {
            prepared.probabilities_into(w, &mut probs);
            for (a, p) in acc.iter_mut().zip(&probs) {
                *a += weight * *p;
            }
            total_weight += weight;
        }
        for (slot, a) in slots.iter().zip(&acc) {
            shares[*slot] += *a / total_weight;
        }
    }
    let n = T::from_usize(users.len()).unwrap();
    for s in &mut shares {
        *s /= n;
    }
    Ok(shares)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn taxi(road: usize, l: f64, x: f64, r: f64) -> TransportOption<f64> {
        TransportOption::taxi(road, l, x, r)
    }

    #[test]
    fn domination_examples() {
        let set = OptionSet::new(vec![taxi(0, 30.0, 9.0, 30.0), taxi(1, 45.0, 9.0, 45.0)]).unwrap();
        assert_eq!(dominated_set(&set), vec![false, true]);

        let set = OptionSet::new(vec![taxi(0, 30.0, 9.0, 30.0), TransportOption::car(0, 30.0, 5.0)]).unwrap();
        assert_eq!(dominated_set(&set), vec![false, false]);

        let set = OptionSet::new(vec![taxi(0, 30.0, 9.0, 30.0), taxi(1, 30.0, 9.0, 30.0)]).unwrap();
        assert_eq!(dominated_set(&set), vec![false, false]);
    }

    #[test]
    fn rail_and_walk_are_never_dominated() {
        let set = OptionSet::new(vec![
            TransportOption::rail(500.0, 50.0, 500.0),
            TransportOption::walk(500.0, 500.0),
            taxi(0, 1.0, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(dominated_set(&set), vec![false, false, false]);
    }

    #[test]
    fn utility_examples() {
        let s = ChoiceScales::default();
        let walk = TransportOption::walk(120.0, 120.0);
        assert_eq!(utility(&PreferenceVector::zeros(), &walk, false, &s), ExtReal::Finite(0.0));
        let w = PreferenceVector([0.3, -0.2, 0.1, 0.5, 0.5, 0.5, 0.5]);
        assert!(utility(&w, &taxi(0, 1.0, 1.0, 1.0), true, &s).is_neg_infinity());
        let w = PreferenceVector([-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(utility(&w, &walk, false, &s), ExtReal::Finite(-2.0));
    }

    #[test]
    fn probability_examples() {
        let s = ChoiceScales::default();
        let w = PreferenceVector::zeros();
        let set = OptionSet::new(vec![TransportOption::rail(35.0, 3.0, 10.0), TransportOption::walk(120.0, 120.0)]).unwrap();
        assert_eq!(choice_probabilities(&w, &set, &s).unwrap(), vec![0.5, 0.5]);

        let single = OptionSet::new(vec![TransportOption::walk(120.0, 120.0)]).unwrap();
        assert_eq!(choice_probabilities(&w, &single, &s).unwrap(), vec![1.0]);

        // Bias-only utilities 0 and ln 3.
        let w = PreferenceVector([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3f64.ln()]);
        let p = choice_probabilities(&w, &set, &s).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn dominated_options_get_exactly_zero() {
        let s = ChoiceScales::default();
        let set = OptionSet::new(vec![taxi(0, 30.0, 9.0, 30.0), taxi(1, 45.0, 9.0, 45.0), TransportOption::walk(120.0, 120.0)]).unwrap();
        let w = PreferenceVector([0.9, 0.9, 0.9, 0.0, 0.0, 0.0, 0.0]);
        let p = choice_probabilities(&w, &set, &s).unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_sets() {
        assert_eq!(OptionSet::<f64>::new(vec![]), Err(ChoiceError::EmptyOptionSet));
        assert!(OptionSet::new(vec![TransportOption::walk(1.0, 1.0), TransportOption::walk(2.0, 1.0)]).is_err());
        assert!(OptionSet::new(vec![TransportOption::<f64> { mode: Mode::Car, road: None, latency: 1.0, cost: 1.0, risk: 0.0 }]).is_err());
        assert!(OptionSet::new(vec![taxi(0, -1.0, 1.0, 1.0)]).is_err());
        assert!(serde_json::from_str::<OptionSet<f64>>("[]").is_err());
    }

    #[test]
    fn prepared_matches_direct() {
        let s = ChoiceScales::default();
        let set = OptionSet::new(vec![
            TransportOption::car(0, 40.0, 15.0),
            taxi(0, 40.0, 9.0, 40.0),
            taxi(1, 50.0, 12.0, 50.0),
            TransportOption::rail(35.0, 3.0, 200.0),
        ])
        .unwrap();
        let w = PreferenceVector([-0.4, -0.3, -0.5, 0.1, 0.2, -0.1, 0.0]);
        let direct = choice_probabilities(&w, &set, &s).unwrap();
        let prep = PreparedSet::new(&set, &s);
        let mut out = vec![0.0; 4];
        prep.probabilities_into(&w, &mut out);
        for j in 0..4 {
            assert!((out[j] - direct[j]).abs() < 1e-15);
            match prep.log_probability(&w, j) {
                ExtReal::Finite(lp) => assert!((lp.exp() - direct[j]).abs() < 1e-14),
                ExtReal::NegInfinity => assert_eq!(direct[j], 0.0),
            }
        }
    }

    #[test]
    fn layout_slots() {
        let layout = OptionLayout { roads: 2, rail: true, walk: true };
        assert_eq!(layout.slot(Mode::Car, Some(1)), Some(1));
        assert_eq!(layout.slot(Mode::Taxi, Some(0)), Some(2));
        assert_eq!(layout.slot(Mode::Rail, None), Some(4));
        assert_eq!(layout.slot(Mode::Walk, None), Some(5));
        assert_eq!(layout.slot(Mode::Car, Some(2)), None);
        let no_rail = OptionLayout { roads: 1, rail: false, walk: true };
        assert_eq!(no_rail.slot(Mode::Walk, None), Some(2));
        assert_eq!(no_rail.labels(), vec!["car_1", "taxi_1", "walk"]);
    }

    fn arb_option(road: usize) -> impl Strategy<Value = TransportOption<f64>> {
        (0.0..200.0f64, 0.0..40.0f64, 0.0..400.0f64, 0..4usize).prop_map(move |(l, x, r, m)| match m {
            0 => TransportOption::car(road, l, x),
            1 => TransportOption::taxi(road, l, x, r),
            2 => TransportOption::rail(l, x, r),
            _ => TransportOption::walk(l, r),
        })
    }

    fn arb_set() -> impl Strategy<Value = OptionSet<f64>> {
        prop::collection::vec((0..3usize).prop_flat_map(arb_option), 1..8).prop_map(|opts| {
            let mut seen = std::collections::HashSet::new();
            let opts: Vec<_> = opts.into_iter().filter(|o| seen.insert((o.mode, o.road))).collect();
            OptionSet::new(opts).unwrap()
        })
    }

    fn arb_w() -> impl Strategy<Value = PreferenceVector<f64>> {
        prop::array::uniform7(-1.0..1.0f64).prop_map(PreferenceVector)
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(set in arb_set(), w in arb_w()) {
            let p = choice_probabilities(&w, &set, &ChoiceScales::default()).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (pj, d) in p.iter().zip(dominated_set(&set)) {
                if d { prop_assert_eq!(*pj, 0.0); }
            }
        }

        #[test]
        fn bias_shift_invariance(set in arb_set(), w in arb_w(), c in -5.0..5.0f64) {
            let mut shifted = w;
            for b in 3..7 { shifted.0[b] += c; }
            let s = ChoiceScales::default();
            let p = choice_probabilities(&w, &set, &s).unwrap();
            let q = choice_probabilities(&shifted, &set, &s).unwrap();
            for (a, b) in p.iter().zip(&q) { prop_assert!((a - b).abs() <= 1e-12); }
        }

        #[test]
        fn removing_dominated_options_changes_nothing(set in arb_set(), w in arb_w()) {
            let s = ChoiceScales::default();
            let dom = dominated_set(&set);
            let p = choice_probabilities(&w, &set, &s).unwrap();
            let kept: Vec<_> = set.options().iter().zip(&dom).filter(|(_, d)| !**d).map(|(o, _)| o.clone()).collect();
            let q = choice_probabilities(&w, &OptionSet::new(kept).unwrap(), &s).unwrap();
            let p_kept: Vec<f64> = p.iter().zip(&dom).filter(|(_, d)| !**d).map(|(p, _)| *p).collect();
            for (a, b) in p_kept.iter().zip(&q) { prop_assert!((a - b).abs() <= 1e-12); }
        }

        #[test]
        fn permutation_equivariance(set in arb_set(), w in arb_w(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let s = ChoiceScales::default();
            let mut idx: Vec<usize> = (0..set.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted = OptionSet::new(idx.iter().map(|i| set.options()[*i].clone()).collect()).unwrap();
            let p = choice_probabilities(&w, &set, &s).unwrap();
            let q = choice_probabilities(&w, &permuted, &s).unwrap();
            for (k, i) in idx.iter().enumerate() { prop_assert!((q[k] - p[*i]).abs() <= 1e-12); }
        }
    }
}

//! Box-constrained Nelder-Mead. Trial points are projected onto the box.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Stop once every vertex is within this distance (sup norm) of the best.
    pub xtol: f64,
    /// ... and the objective spread is below this, relative to the best value.
    pub ftol: f64,
    /// Initial simplex edge as a fraction of the box width.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self { max_evals: 400, xtol: 1e-3, ftol: 1e-9, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` over `[lower, upper]` from `start`. `f` returning `None`
/// counts as `+inf`.
pub fn minimize<T: Scalar, F: FnMut(&[T]) -> Option<T>>(mut f: F, start: &[T], lower: &[T], upper: &[T], cfg: &NelderMeadConfig) -> Minimum<T> {
    let n = start.len();
    let project = |x: &mut Vec<T>| {
        for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
            *v = v.max(*lo).min(*hi);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        f(x).filter(|v| v.is_finite()).unwrap_or(T::infinity())
    };

    let mut x0 = start.to_vec();
    project(&mut x0);
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let v0 = eval(&x0, &mut evals);
    simplex.push((x0.clone(), v0));
    for i in 0..n {
        let width = upper[i] - lower[i];
        let step = T::lit(cfg.initial_step) * if width > T::zero() { width } else { T::one() };
        let mut x = x0.clone();
        x[i] = if x[i] + step <= upper[i] { x[i] + step } else { x[i] - step };
        project(&mut x);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let xtol = T::lit(cfg.xtol);
    let ftol = T::lit(cfg.ftol);
    let mut converged = false;
    while evals < cfg.max_evals {
        // Stable: equal values keep their order, so the start vertex stays best
        // on a flat landscape.
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), T::max);
        let spread = if best.is_finite() && worst.is_finite() { worst - best } else { T::infinity() };
        if diameter <= xtol && spread <= ftol * (best.abs() + T::one()) {
            converged = true;
            break;
        }
        if diameter <= xtol * T::lit(1e-3) {
            // Collapsed simplex; nothing further to learn.
            converged = true;
            break;
        }

        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += *v;
            }
        }
        let nn = T::from_usize(n).unwrap();
        for c in &mut centroid {
            *c /= nn;
        }
        let toward = |coef: T, from: &[T]| -> Vec<T> {
            let mut x: Vec<T> = centroid.iter().zip(from).map(|(c, w)| *c + coef * (*c - *w)).collect();
            project(&mut x);
            x
        };

        let xr = toward(alpha, &simplex[n].0);
        let fr = eval(&xr, &mut evals);
        if fr < best {
            let xe = toward(gamma, &simplex[n].0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = toward(rho, &simplex[n].0);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = toward(-rho, &simplex[n].0);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let head = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut x: Vec<T> = head.iter().zip(&vertex.0).map(|(b, v)| *b + sigma * (*v - *b)).collect();
            project(&mut x);
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_interior_minimum() {
        let cfg = NelderMeadConfig { max_evals: 5000, xtol: 1e-8, ftol: 1e-14, initial_step: 0.1 };
        let f = |x: &[f64]| Some((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let m = minimize(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &cfg);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn minimum_on_the_boundary() {
        let f = |x: &[f64]| Some((x[0] + 3.0).powi(2) + (x[1] - 0.5).powi(2));
        let m = minimize(f, &[4.0, 4.0], &[0.0, 0.0], &[5.0, 5.0], &NelderMeadConfig::default());
        assert!(m.x[0].abs() < 1e-3 && (m.x[1] - 0.5).abs() < 1e-2, "{:?}", m.x);
    }

    #[test]
    fn flat_landscape_stays_at_start() {
        let m = minimize(|_: &[f64]| Some(7.0), &[1.0, 2.0], &[0.0, 0.0], &[10.0, 10.0], &NelderMeadConfig::default());
        assert_eq!(m.x, vec![1.0, 2.0]);
        assert_eq!(m.value, 7.0);
    }

    #[test]
    fn failures_are_avoided() {
        let f = |x: &[f64]| if x[0] > 2.0 { None } else { Some((x[0] - 1.0).powi(2)) };
        let m = minimize(f, &[0.0], &[0.0], &[10.0], &NelderMeadConfig::default());
        assert!((m.x[0] - 1.0).abs() < 1e-3);
    }
}

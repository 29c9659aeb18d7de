//! Bound-constrained Levenberg–Marquardt on a residual vector.
//!
//! Marquardt scaling: the damped normal equations are
//! `(JᵀJ + λ diag(JᵀJ)) δ = -Jᵀr`. λ is divided by ten after an accepted
//! step and multiplied by ten after a rejected one. Steps are projected onto
//! the box bounds, and the Jacobian uses forward differences with a relative
//! step of 1e-6 (flipped to a backward difference at an upper bound).

use nalgebra::{DMatrix, DVector};

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-6;

const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy)]
pub struct LmSettings {
    pub max_iterations: usize,
    pub damping_init: f64,
    pub parameter_tolerance: f64,
    pub residual_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    /// Jacobian evaluations performed.
    pub iterations: usize,
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

fn project(p: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Magnitude used for relative steps and tolerances when a parameter sits
/// at or near zero.
fn scale(p: f64, (lo, hi): (f64, f64)) -> f64 {
    p.abs().max(1e-3 * (hi - lo)).max(f64::MIN_POSITIVE)
}

/// Minimizes `Σ r(p)²` starting from `p0`. `residuals` writes `n_res`
/// values into its output slice.
pub fn minimize<F>(
    residuals: F,
    n_res: usize,
    p0: &[f64],
    bounds: &[(f64, f64)],
    settings: &LmSettings,
) -> LmOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    let np = p0.len();
    let mut p = p0.to_vec();
    project(&mut p, bounds);
    let mut r = vec![0.0; n_res];
    residuals(&p, &mut r);
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    let mut lambda = settings.damping_init;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    let mut jac = vec![vec![0.0; n_res]; np];
    let mut trial = vec![0.0; n_res];

    while !converged && iterations < settings.max_iterations && cost.is_finite() {
        iterations += 1;

        for (k, col) in jac.iter_mut().enumerate() {
            let mut h = FD_STEP * scale(p[k], bounds[k]);
            if p[k] + h > bounds[k].1 {
                h = -h;
            }
            let mut q = p.clone();
            q[k] += h;
            residuals(&q, col);
            for (c, &base) in col.iter_mut().zip(&r) {
                *c = (*c - base) / h;
            }
        }
        let a = DMatrix::from_fn(np, np, |i, j| dot(&jac[i], &jac[j]));
        let g = DVector::from_fn(np, |i, _| dot(&jac[i], &r));
        let max_diag = (0..np).map(|i| a[(i, i)]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            // residuals do not depend on any parameter
            converged = true;
            break;
        }
        let floor = 1e-12 * max_diag;

        loop {
            let mut m = a.clone();
            for i in 0..np {
                m[(i, i)] += lambda * a[(i, i)].max(floor);
            }
            let step = match m.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    if lambda > LAMBDA_MAX {
                        converged = true;
                        break;
                    }
                    continue;
                }
            };
            let mut q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            project(&mut q, bounds);
            let rel_step = (0..np)
                .map(|k| (q[k] - p[k]).abs() / scale(p[k], bounds[k]))
                .fold(0.0, f64::max);
            if rel_step <= settings.parameter_tolerance {
                converged = true;
                break;
            }
            residuals(&q, &mut trial);
            let c_new = sum_sq(&trial);
            if c_new.is_finite() && c_new < cost {
                let decrease = cost - c_new;
                let old = cost;
                p = q;
                std::mem::swap(&mut r, &mut trial);
                cost = c_new;
                history.push(cost);
                lambda = (lambda / 10.0).max(LAMBDA_MIN);
                if cost == 0.0 || decrease <= settings.residual_tolerance * old {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                // no descent direction left at this point
                converged = true;
                break;
            }
        }
    }

    LmOutcome {
        params: p,
        cost,
        iterations,
        converged,
        cost_history: history,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> LmSettings {
        LmSettings {
            max_iterations: 200,
            damping_init: 1e-3,
            parameter_tolerance: 1e-12,
            residual_tolerance: 1e-15,
        }
    }

    #[test]
    fn rosenbrock_minimum() {
        let f = |p: &[f64], r: &mut [f64]| {
            r[0] = 10.0 * (p[1] - p[0] * p[0]);
            r[1] = 1.0 - p[0];
        };
        let bounds = [(-5.0, 5.0), (-5.0, 5.0)];
        let out = minimize(f, 2, &[-1.2, 1.0], &bounds, &settings());
        assert!(out.converged);
        assert!((out.params[0] - 1.0).abs() < 1e-6, "{:?}", out.params);
        assert!((out.params[1] - 1.0).abs() < 1e-6);
        for w in out.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn exponential_decay_fit() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-x / 1.7f64).exp()).collect();
        let f = |p: &[f64], r: &mut [f64]| {
            for ((r, x), y) in r.iter_mut().zip(&xs).zip(&ys) {
                *r = p[0] * (-x / p[1]).exp() - y;
            }
        };
        let out = minimize(f, 30, &[1.0, 0.5], &[(0.0, 10.0), (0.1, 10.0)], &settings());
        assert!((out.params[0] - 3.0).abs() < 1e-7);
        assert!((out.params[1] - 1.7).abs() < 1e-7);
        assert!(out.cost < 1e-12);
    }

    #[test]
    fn bound_is_respected() {
        // unconstrained minimum at 3, upper bound 2
        let f = |p: &[f64], r: &mut [f64]| r[0] = p[0] - 3.0;
        let out = minimize(f, 1, &[0.0], &[(0.0, 2.0)], &settings());
        assert_eq!(out.params[0], 2.0);
        assert!(out.converged);
    }

    #[test]
    fn zero_budget_keeps_start() {
        let f = |p: &[f64], r: &mut [f64]| r[0] = p[0] - 3.0;
        let s = LmSettings {
            max_iterations: 0,
            ..settings()
        };
        let out = minimize(f, 1, &[7.0], &[(-10.0, 10.0)], &s);
        assert_eq!(out.params, vec![7.0]);
        assert!(!out.converged);
        assert_eq!(out.iterations, 0);
    }
}

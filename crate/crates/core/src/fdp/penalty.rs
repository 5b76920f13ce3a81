//! Cross-check route for Fock-diagonal probes: augmented-Lagrangian penalty
//! continuation.
//!
//! Each outer step minimizes
//!
//! ```text
//! E(a) + mu h + rho/2 h^2 + 1/(2 rho) sum_n (max(0, lambda_n - rho g_n(a))^2 - lambda_n^2)
//! ```
//!
//! with `h = sum a - 1` and `g_n = G_n^T a`, using semismooth Newton steps on
//! the piecewise-quadratic function, then updates the multipliers. The penalty
//! grows tenfold whenever the constraint violation fails to shrink.

use nalgebra::{DMatrix, DVector};

use super::linalg::min_norm_solve;
use super::projected::Geometry;
use super::{FdpProblem, RouteResult, SolverOptions};
use crate::error::Result;

const MAX_OUTER: usize = 200;
const MAX_INNER: usize = 100;
const VIOLATION_TOL: f64 = 1e-14;

struct Lagrangian<'g, 'p> {
    geo: &'g Geometry<'p>,
    lambda: DVector<f64>,
    mu: f64,
    rho: f64,
}

impl Lagrangian<'_, '_> {
    fn shifted(&self, a: &DVector<f64>) -> DVector<f64> {
        let g = self.geo.normals.tr_mul(a);
        DVector::from_fn(g.len(), |n, _| (self.lambda[n] - self.rho * g[n]).max(0.0))
    }

    fn pattern(&self, a: &DVector<f64>) -> Vec<bool> {
        self.shifted(a).iter().map(|&v| v > 0.0).collect()
    }

    fn value(&self, a: &DVector<f64>) -> f64 {
        let h = a.sum() - 1.0;
        let s = self.shifted(a);
        self.geo.value(a) + self.mu * h + 0.5 * self.rho * h * h
            + (s.norm_squared() - self.lambda.norm_squared()) / (2.0 * self.rho)
    }

    fn gradient(&self, a: &DVector<f64>) -> DVector<f64> {
        let h = a.sum() - 1.0;
        let s = self.shifted(a);
        let mut grad = self.geo.gradient(a) - &self.geo.normals * s;
        grad.add_scalar_mut(self.mu + self.rho * h);
        grad
    }

    fn hessian(&self, a: &DVector<f64>) -> DMatrix<f64> {
        let m = a.len();
        let s = self.shifted(a);
        let mut hess = &self.geo.hessian * 2.0;
        hess.add_scalar_mut(self.rho);
        for n in 0..s.len() {
            if s[n] > 0.0 {
                let g = self.geo.normals.column(n);
                hess += (&g * g.transpose()) * self.rho;
            }
        }
        debug_assert_eq!(hess.nrows(), m);
        hess
    }

    /// Semismooth Newton with Armijo backtracking.
    fn minimize(&self, mut a: DVector<f64>, rank_tol: f64) -> (DVector<f64>, usize) {
        let mut iters = 0;
        for _ in 0..MAX_INNER {
            iters += 1;
            let grad = self.gradient(&a);
            let step = -min_norm_solve(&self.hessian(&a), &grad, rank_tol * 1e-2);
            if step.amax() <= 1e-16 * a.amax().max(1.0) {
                break;
            }
            let f0 = self.value(&a);
            let slope = grad.dot(&step);
            let mut t = 1.0;
            let mut next = &a + &step;
            while self.value(&next) > f0 + 1e-4 * t * slope + 1e-15 * f0.abs() && t > 1e-12 {
                t *= 0.5;
                next = &a + &step * t;
            }
            let unchanged = self.pattern(&next) == self.pattern(&a);
            a = next;
            // a full step inside one quadratic piece lands on its exact minimizer
            if t == 1.0 && unchanged {
                break;
            }
        }
        (a, iters)
    }
}

fn violation(geo: &Geometry<'_>, a: &DVector<f64>) -> f64 {
    let g = geo.normals.tr_mul(a);
    g.iter().fold((a.sum() - 1.0).abs(), |acc, v| acc.max(-v))
}

pub(crate) fn solve(problem: &FdpProblem, options: &SolverOptions) -> Result<RouteResult> {
    let geo = Geometry::new(problem);
    let m = problem.n_probes();
    let d = geo.normals.ncols();

    // unconstrained minimum-norm least squares as the starting point
    let mut a = min_norm_solve(&problem.probe_patterns.transpose(), &problem.target, options.rank_tol);
    let scale = (2.0 * geo.hessian.trace() / m as f64).max(1e-12);
    let mut lag = Lagrangian { geo: &geo, lambda: DVector::zeros(d), mu: 0.0, rho: 10.0 * scale };
    let mut last_violation = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..MAX_OUTER {
        let (next, inner) = lag.minimize(a.clone(), options.rank_tol);
        iterations += inner;
        let change = (&next - &a).amax();
        a = next;
        let g = geo.normals.tr_mul(&a);
        let h = a.sum() - 1.0;
        lag.lambda = DVector::from_fn(d, |n, _| (lag.lambda[n] - lag.rho * g[n]).max(0.0));
        lag.mu += lag.rho * h;
        let v = violation(&geo, &a);
        if v <= VIOLATION_TOL && change <= 1e-13 * a.amax().max(1.0) {
            converged = true;
            break;
        }
        if v > 0.25 * last_violation {
            lag.rho *= 10.0;
        }
        last_violation = v;
        if iterations >= options.max_iterations {
            break;
        }
    }
    Ok(RouteResult { coefficients: a, iterations, converged })
}

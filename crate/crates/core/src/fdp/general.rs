//! Solver routes for probe sets with coherences, where positivity is a
//! genuine semidefinite constraint on `L(a) = sum_xi a_xi sigma_xi`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::linalg::min_norm_solve;
use super::{objective, FdpProblem, RouteResult, SolverOptions};
use crate::error::{FdpError, Result};
use crate::fock::{CMatrix, C64};

struct Basis<'a> {
    problem: &'a FdpProblem,
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
}

impl<'a> Basis<'a> {
    fn new(problem: &'a FdpProblem) -> Self {
        let f = &problem.probe_patterns;
        Self { problem, hessian: f * f.transpose(), linear: f * &problem.target }
    }

    fn assemble(&self, a: &DVector<f64>) -> CMatrix {
        let d = self.problem.dim();
        let mut x = CMatrix::zeros(d, d);
        for (c, s) in a.iter().zip(&self.problem.probe_states) {
            x += s.elements().map(|v| v * *c);
        }
        hermitize(&x)
    }

    /// Adjoint map `Re Tr(sigma_xi Y)`.
    fn adjoint(&self, y: &CMatrix) -> DVector<f64> {
        DVector::from_iterator(
            self.problem.n_probes(),
            self.problem.probe_states.iter().map(|s| (s.elements() * y).trace().re),
        )
    }

    fn gradient(&self, a: &DVector<f64>) -> DVector<f64> {
        (&self.hessian * a - &self.linear) * 2.0
    }
}

fn hermitize(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()).map(|v: C64| v * 0.5)
}

/// Projection onto the PSD cone by eigenvalue clipping.
fn psd_part(x: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitize(x));
    let clipped = eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0));
    let v = &eig.eigenvectors;
    hermitize(&(v * CMatrix::from_diagonal(&clipped) * v.adjoint()))
}

fn min_eig(x: &CMatrix) -> f64 {
    SymmetricEigen::new(hermitize(x)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `-log det L(a)`, or `None` outside the open cone.
fn barrier(x: &CMatrix) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l_dirty();
    Some(-2.0 * (0..x.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// Gradient and Hessian of `-log det L(a)` at an interior point.
fn barrier_derivatives(basis: &Basis<'_>, x: &CMatrix) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let inv = Cholesky::new(x.clone())?.inverse();
    let m = basis.problem.n_probes();
    let p: Vec<CMatrix> = basis.problem.probe_states.iter().map(|s| &inv * s.elements()).collect();
    let grad = DVector::from_fn(m, |i, _| -p[i].trace().re);
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = p[i].component_mul(&p[j].transpose()).sum().re;
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Some((grad, hess))
}

/// Barrier path following with equality-constrained Newton steps. Every
/// iterate stays strictly inside the cone with `sum a = 1`, and the final
/// objective is within `D * mu` of the optimum.
pub(crate) fn solve_barrier(problem: &FdpProblem, options: &SolverOptions) -> Result<RouteResult> {
    let basis = Basis::new(problem);
    let m = problem.n_probes();
    let d = problem.dim() as f64;
    let mut a = DVector::from_element(m, 1.0 / m as f64);
    if barrier(&basis.assemble(&a)).is_none() {
        return Err(FdpError::Solver("equal-weight probe mixture is singular; no interior starting point".into()));
    }
    let gap_target = options.objective_tol.max(1e-300);
    let mut mu = (objective(problem, &a).max(gap_target) / d).max(gap_target / d);
    let mut iterations = 0;
    let mut converged = false;
    let merit = |a: &DVector<f64>, mu: f64| barrier(&basis.assemble(a)).map(|b| objective(problem, a) + mu * b);
    'outer: loop {
        for _ in 0..100 {
            if iterations >= options.max_iterations {
                break 'outer;
            }
            iterations += 1;
            let x = basis.assemble(&a);
            let Some((bg, bh)) = barrier_derivatives(&basis, &x) else { break 'outer };
            let grad = basis.gradient(&a) + bg * mu;
            let hess = &basis.hessian * 2.0 + bh * mu;
            let mut kkt = DMatrix::zeros(m + 1, m + 1);
            kkt.view_mut((0, 0), (m, m)).copy_from(&hess);
            for i in 0..m {
                kkt[(i, m)] = 1.0;
                kkt[(m, i)] = 1.0;
            }
            let mut rhs = DVector::zeros(m + 1);
            rhs.rows_mut(0, m).copy_from(&(-&grad));
            rhs[m] = 1.0 - a.sum();
            let sol = kkt.clone().lu().solve(&rhs).unwrap_or_else(|| min_norm_solve(&kkt, &rhs, 1e-15));
            let step = sol.rows(0, m).into_owned();
            let decrement = -step.dot(&grad);
            if decrement <= 1e-13 * mu * d {
                break;
            }
            let current = merit(&a, mu).unwrap_or(f64::INFINITY);
            let mut t = 1.0;
            loop {
                let cand = &a + &step * t;
                if let Some(v) = merit(&cand, mu) {
                    if v <= current - 0.25 * t * decrement {
                        a = cand;
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-12 {
                    break;
                }
            }
            if t < 1e-12 {
                break;
            }
        }
        if mu * d <= gap_target {
            converged = true;
            break;
        }
        mu = (mu * 0.1).max(gap_target / d * 0.5);
    }
    Ok(RouteResult { coefficients: a, iterations, converged })
}

/// Augmented Lagrangian with a matrix multiplier for the PSD constraint;
/// inner problems solved with BFGS.
pub(crate) fn solve_penalty(problem: &FdpProblem, options: &SolverOptions) -> Result<RouteResult> {
    let basis = Basis::new(problem);
    let m = problem.n_probes();
    let d = problem.dim();
    let mut a = DVector::from_element(m, 1.0 / m as f64);
    let mut lambda = CMatrix::zeros(d, d);
    let mut mu = 0.0;
    let mut rho = 10.0 * (2.0 * basis.hessian.trace() / m as f64).max(1e-12);
    let mut last_violation = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..200 {
        let value = |a: &DVector<f64>| {
            let h = a.sum() - 1.0;
            let s = psd_part(&(&lambda - basis.assemble(a) * C64::new(rho, 0.0)));
            objective(problem, a) + mu * h + 0.5 * rho * h * h + (s.norm_squared() - lambda.norm_squared()) / (2.0 * rho)
        };
        let gradient = |a: &DVector<f64>| {
            let h = a.sum() - 1.0;
            let s = psd_part(&(&lambda - basis.assemble(a) * C64::new(rho, 0.0)));
            let mut g = basis.gradient(a) - basis.adjoint(&s);
            g.add_scalar_mut(mu + rho * h);
            g
        };
        let (next, inner) = bfgs(&value, &gradient, a.clone(), 2_000);
        iterations += inner;
        let change = (&next - &a).amax();
        a = next;
        let x = basis.assemble(&a);
        let h = a.sum() - 1.0;
        lambda = psd_part(&(&lambda - &x * C64::new(rho, 0.0)));
        mu += rho * h;
        let v = h.abs().max(-min_eig(&x)).max(0.0);
        if v <= 1e-13 && change <= 1e-12 {
            converged = true;
            break;
        }
        if v > 0.25 * last_violation {
            rho *= 10.0;
        }
        last_violation = v;
        if iterations >= options.max_iterations {
            break;
        }
    }
    Ok(RouteResult { coefficients: a, iterations, converged })
}

fn bfgs<V, G>(value: &V, gradient: &G, mut x: DVector<f64>, max_iter: usize) -> (DVector<f64>, usize)
where
    V: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut inv_h = DMatrix::<f64>::identity(n, n);
    let mut g = gradient(&x);
    let mut f = value(&x);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        if g.amax() < 1e-15 {
            break;
        }
        let mut dir = -(&inv_h * &g);
        if dir.dot(&g) >= 0.0 {
            inv_h = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        let slope = dir.dot(&g);
        let mut t = 1.0;
        let mut next = &x + &dir;
        let mut f_next = value(&next);
        while f_next > f + 1e-4 * t * slope && t > 1e-14 {
            t *= 0.5;
            next = &x + &dir * t;
            f_next = value(&next);
        }
        let g_next = gradient(&next);
        let s = &next - &x;
        let yv = &g_next - &g;
        let sy = s.dot(&yv);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let ident = DMatrix::<f64>::identity(n, n);
            let left = &ident - (&s * yv.transpose()) * rho;
            let right = &ident - (&yv * s.transpose()) * rho;
            inv_h = &left * &inv_h * &right + (&s * s.transpose()) * rho;
        }
        let done = s.amax() <= 1e-16 * x.amax().max(1.0);
        x = next;
        g = g_next;
        f = f_next;
        if done {
            break;
        }
    }
    (x, it)
}

//! Primary route for Fock-diagonal probes.
//!
//! Accelerated projected gradient on `E(a)`, where each projection onto
//! `{sum a = 1} ∩ {G^T a >= 0}` is computed with Dykstra's alternating
//! projections over the hyperplane and the `D` half-spaces. The gradient
//! phase ends on a small objective change; a primal active-set pass then
//! starts from its constraint pattern and solves the equality-constrained
//! least-squares subproblems exactly until the KKT conditions hold.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use super::linalg::{complement_basis, min_norm_solve, rank, spectral_radius};
use super::{objective, FdpProblem, RouteResult, SolverOptions};
use crate::error::Result;

/// Activity threshold used to seed the working set from the gradient phase.
const ACTIVE_SEED_TOL: f64 = 1e-9;

pub(crate) struct Geometry<'a> {
    pub problem: &'a FdpProblem,
    /// `F F^T`.
    pub hessian: DMatrix<f64>,
    /// `F t`.
    pub linear: DVector<f64>,
    /// Columns are the half-space normals `g_n`, scaled to unit length.
    /// High photon numbers have tiny probe populations, and unscaled normals
    /// make the working-set matrices needlessly ill-conditioned.
    pub normals: DMatrix<f64>,
}

impl<'a> Geometry<'a> {
    pub fn new(problem: &'a FdpProblem) -> Self {
        let f = &problem.probe_patterns;
        Self {
            problem,
            hessian: f * f.transpose(),
            linear: f * &problem.target,
            normals: unit_columns(problem.diagonal_constraints()),
        }
    }

    pub fn gradient(&self, a: &DVector<f64>) -> DVector<f64> {
        (&self.hessian * a - &self.linear) * 2.0
    }

    pub fn value(&self, a: &DVector<f64>) -> f64 {
        objective(self.problem, a)
    }
}

fn unit_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    m
}

/// Dykstra projection onto `{sum a = 1} ∩ {G^T a >= 0}`.
pub(crate) fn dykstra(y: &DVector<f64>, normals: &DMatrix<f64>, sweeps: usize) -> DVector<f64> {
    let m = y.len();
    let d = normals.ncols();
    let norms2: Vec<f64> = (0..d).map(|n| normals.column(n).norm_squared()).collect();
    let mut x = y.clone();
    let mut incr = vec![DVector::<f64>::zeros(m); d + 1];
    for _ in 0..sweeps {
        let before = x.clone();
        // hyperplane
        let z = &x + &incr[d];
        let shift = (z.sum() - 1.0) / m as f64;
        let proj = z.map(|v| v - shift);
        incr[d] = &z - &proj;
        x = proj;
        for n in 0..d {
            if norms2[n] == 0.0 {
                continue;
            }
            let z = &x + &incr[n];
            let g = normals.column(n);
            let v = g.dot(&z);
            let proj = if v < 0.0 { &z - g * (v / norms2[n]) } else { z.clone() };
            incr[n] = &z - &proj;
            x = proj;
        }
        if (&x - &before).amax() <= 1e-15 * x.amax().max(1.0) {
            break;
        }
    }
    x
}

pub(crate) fn solve(problem: &FdpProblem, options: &SolverOptions) -> Result<RouteResult> {
    let geo = Geometry::new(problem);
    let m = problem.n_probes();

    let (start, pg_iters) = gradient_phase(&geo, options);
    let budget = options.max_iterations.saturating_sub(pg_iters).max(1);
    let (a, as_iters, converged) = active_set_phase(&geo, start, budget, options.rank_tol);
    debug_assert_eq!(a.len(), m);
    Ok(RouteResult { coefficients: a, iterations: pg_iters + as_iters, converged })
}

fn gradient_phase(geo: &Geometry<'_>, options: &SolverOptions) -> (DVector<f64>, usize) {
    let m = geo.problem.n_probes();
    let project = |v: &DVector<f64>| dykstra(v, &geo.normals, options.dykstra_sweeps);
    let mut a = project(&DVector::from_element(m, 1.0 / m as f64));
    let mut f_a = geo.value(&a);
    let lipschitz = 2.0 * spectral_radius(&geo.hessian);
    if lipschitz == 0.0 {
        return (a, 0);
    }
    let mut step = 1.0 / lipschitz;
    let mut y = a.clone();
    let mut momentum = 1.0f64;
    let cap = options.gradient_iterations.min(options.max_iterations);
    let mut it = 0;
    while it < cap {
        it += 1;
        let grad = geo.gradient(&y);
        let f_y = geo.value(&y);
        let mut cand;
        loop {
            cand = project(&(&y - &grad * step));
            let diff = &cand - &y;
            let bound = f_y + grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if geo.value(&cand) <= bound + 1e-15 * f_y.abs().max(1e-300) || step < 1e-30 {
                break;
            }
            step *= 0.5;
        }
        let f_c = geo.value(&cand);
        if f_c > f_a {
            // adaptive restart
            momentum = 1.0;
            y = a.clone();
            continue;
        }
        let next_m = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &cand + (&cand - &a) * ((momentum - 1.0) / next_m);
        momentum = next_m;
        let change = f_a - f_c;
        a = cand;
        f_a = f_c;
        if change < options.objective_tol {
            break;
        }
    }
    (a, it)
}

struct Working {
    members: Vec<usize>,
}

impl Working {
    /// Adds `n` when it is independent of the current members.
    fn try_add(&mut self, n: usize, normals: &DMatrix<f64>) -> bool {
        self.members.push(n);
        let c = self.matrix(normals);
        if rank(&c, 1e-10) < c.ncols() {
            self.members.pop();
            return false;
        }
        true
    }

    fn matrix(&self, normals: &DMatrix<f64>) -> DMatrix<f64> {
        let m = normals.nrows();
        let mut c = DMatrix::zeros(m, self.members.len() + 1);
        for (j, &n) in self.members.iter().enumerate() {
            c.set_column(j, &normals.column(n));
        }
        c.set_column(self.members.len(), &DVector::from_element(m, 1.0));
        c
    }
}

/// Minimizer of `E` on `{g_n^T a = 0, n in W} ∩ {sum a = 1}` with minimum norm.
fn equality_solve(geo: &Geometry<'_>, c: &DMatrix<f64>, rank_tol: f64) -> DVector<f64> {
    let w = c.ncols();
    let mut rhs = DVector::zeros(w);
    rhs[w - 1] = 1.0;
    let particular = min_norm_solve(&c.transpose(), &rhs, 1e-13);
    let z = complement_basis(c, 1e-13);
    if z.ncols() == 0 {
        return particular;
    }
    let f = &geo.problem.probe_patterns;
    let reduced = f.tr_mul(&z);
    let resid = &geo.problem.target - f.tr_mul(&particular);
    let y = min_norm_solve(&reduced, &resid, rank_tol);
    particular + z * y
}

fn active_set_phase(geo: &Geometry<'_>, start: DVector<f64>, budget: usize, rank_tol: f64) -> (DVector<f64>, usize, bool) {
    let normals = &geo.normals;
    let d = normals.ncols();
    let mut a = start;
    let mut value = geo.value(&a);

    // seed the working set with nearly active constraints, most violated first
    let mut candidates: Vec<(f64, usize)> =
        (0..d).map(|n| (normals.column(n).dot(&a), n)).filter(|(v, _)| *v <= ACTIVE_SEED_TOL).collect();
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut work = Working { members: Vec::new() };
    for (_, n) in candidates {
        work.try_add(n, normals);
    }

    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    let mut iterations = 0;
    while iterations < budget {
        iterations += 1;
        let c = work.matrix(normals);
        let target = equality_solve(geo, &c, rank_tol);
        let dir = &target - &a;
        let scale = a.amax().max(1.0);
        // A target that does not lower E means the subproblem is solved to
        // working precision at the current point.
        let stationary = dir.amax() <= 1e-13 * scale || geo.value(&target) >= value;
        if stationary {
            if dir.amax() <= 1e-13 * scale {
                a = target;
                value = geo.value(&a);
            }
            let grad = geo.gradient(&a);
            let mult = min_norm_solve(&c, &grad, 1e-13);
            let tol = 1e-9 * grad.amax().max(1e-12);
            let worst = (0..work.members.len()).min_by(|&i, &j| mult[i].total_cmp(&mult[j]));
            match worst {
                Some(i) if mult[i] < -tol => {
                    let mut key = work.members.clone();
                    key.sort_unstable();
                    if !visited.insert(key) {
                        // revisiting a working set: multipliers are below
                        // numerical resolution
                        return (a, iterations, false);
                    }
                    work.members.remove(i);
                }
                _ => return (a, iterations, true),
            }
            continue;
        }
        // ratio test over constraints outside the working set
        let mut step = 1.0;
        let mut blocking = None;
        for n in 0..d {
            if work.members.contains(&n) {
                continue;
            }
            let g = normals.column(n);
            let slope = g.dot(&dir);
            if slope < -1e-14 * dir.norm() {
                let room = g.dot(&a).max(0.0);
                let t = room / -slope;
                if t < step {
                    step = t;
                    blocking = Some(n);
                }
            }
        }
        let next = &a + &dir * step;
        let next_value = geo.value(&next);
        if next_value <= value {
            a = next;
            value = next_value;
        }
        match blocking {
            Some(n) => {
                if !work.try_add(n, normals) {
                    return (a, iterations, false);
                }
            }
            None if next_value > value => return (a, iterations, false),
            None => {}
        }
    }
    (a, iterations, false)
}

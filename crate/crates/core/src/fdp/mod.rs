//! Fitting of data patterns.
//!
//! An unknown state's outcome frequencies `t` are expressed as a linear
//! combination of probe-state frequencies `F` (one row per probe):
//!
//! ```text
//! minimize   E(a) = sum_n (t_n - sum_xi a_xi F_xi,n)^2
//! subject to sum_xi a_xi = 1,   sum_xi a_xi sigma_xi >= 0
//! ```
//!
//! and the estimate is `rho = sum_xi a_xi sigma_xi`. Coefficients may be
//! negative; only the combination has to be a state.
//!
//! Two solver routes are kept independent of each other:
//!
//! * [`projected`]: projected gradient with Dykstra projection onto the
//!   constraint set, followed by an exact active-set refinement.
//! * [`penalty`]: augmented-Lagrangian penalty continuation with
//!   semismooth Newton inner solves.
//!
//! When every probe is Fock-diagonal the positivity constraint is the set of
//! linear inequalities `sum_xi a_xi <n|sigma_xi|n> >= 0`; [`general`] handles
//! probes with coherences with a log-barrier Newton method, cross-checked by
//! an augmented Lagrangian with a matrix multiplier.

pub mod general;
pub mod linalg;
pub mod penalty;
pub mod projected;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FdpError, Result};
use crate::fock::{CMatrix, DensityMatrix, C64};
use crate::homodyne::DataPattern;

pub const SUM_TOL: f64 = 1e-8;
pub const PSD_TOL: f64 = 1e-8;

/// Probe data patterns, the unknown state's pattern, and the probe states.
#[derive(Debug, Clone, PartialEq)]
pub struct FdpProblem {
    /// `M x N`, row `xi` is the pattern of probe `xi`.
    pub probe_patterns: DMatrix<f64>,
    pub target: DVector<f64>,
    pub probe_states: Vec<DensityMatrix>,
}

impl FdpProblem {
    pub fn new(probe_patterns: DMatrix<f64>, target: DVector<f64>, probe_states: Vec<DensityMatrix>) -> Result<Self> {
        let (m, n) = probe_patterns.shape();
        if m == 0 {
            return Err(FdpError::Invalid("no probes".into()));
        }
        if target.len() != n {
            return Err(FdpError::DimensionMismatch { expected: n, found: target.len() });
        }
        if probe_states.len() != m {
            return Err(FdpError::DimensionMismatch { expected: m, found: probe_states.len() });
        }
        let dim = probe_states[0].dim();
        if let Some(bad) = probe_states.iter().find(|s| s.dim() != dim) {
            return Err(FdpError::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        for i in 0..m {
            let s: f64 = probe_patterns.row(i).sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(FdpError::Invalid(format!("probe pattern {i} sums to {s}")));
            }
        }
        let s = target.sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(FdpError::Invalid(format!("target pattern sums to {s}")));
        }
        Ok(Self { probe_patterns, target, probe_states })
    }

    /// Builds a problem from histograms, checking that all binnings match.
    pub fn from_patterns(probes: &[DataPattern], target: &DataPattern, probe_states: Vec<DensityMatrix>) -> Result<Self> {
        if let Some(p) = probes.iter().find(|p| p.binning != target.binning) {
            return Err(FdpError::Invalid(format!(
                "binning mismatch between probe pattern {:?} and target {:?}",
                p.binning, target.binning
            )));
        }
        let n = target.binning.n_bins;
        let rows: Vec<f64> = probes.iter().flat_map(|p| p.frequencies()).collect();
        let f = DMatrix::from_row_slice(probes.len(), n, &rows);
        Self::new(f, DVector::from_vec(target.frequencies()), probe_states)
    }

    pub fn n_probes(&self) -> usize {
        self.probe_patterns.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.probe_patterns.ncols()
    }

    pub fn dim(&self) -> usize {
        self.probe_states[0].dim()
    }

    pub fn is_diagonal(&self) -> bool {
        self.probe_states.iter().all(DensityMatrix::is_diagonal)
    }

    /// `M x D` matrix of probe photon-number distributions.
    pub fn diagonal_constraints(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_probes(), self.dim(), |xi, n| self.probe_states[xi].get(n, n).re)
    }

    /// Predicted pattern `F^T a`.
    pub fn predicted(&self, coefficients: &DVector<f64>) -> DVector<f64> {
        self.probe_patterns.tr_mul(coefficients)
    }
}

/// Which constraint representation the solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    /// Diagonal reduction whenever every probe is diagonal.
    #[default]
    Auto,
    Diagonal,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Cap on total iterations (gradient steps plus active-set steps).
    pub max_iterations: usize,
    /// Projected-gradient iterations before the active-set refinement.
    pub gradient_iterations: usize,
    /// Sweeps per Dykstra projection.
    pub dykstra_sweeps: usize,
    /// Objective change below which the gradient phase stops; also the
    /// duality gap targeted by the barrier route.
    pub objective_tol: f64,
    /// Relative singular-value cutoff for minimum-norm solves.
    pub rank_tol: f64,
    pub path: SolverPath,
    /// Also run the penalty route and keep the better objective.
    pub cross_check: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            gradient_iterations: 50,
            dykstra_sweeps: 500,
            objective_tol: 1e-14,
            rank_tol: 1e-11,
            path: SolverPath::Auto,
            cross_check: true,
        }
    }
}

/// Fitted coefficients with their state and certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct FdpSolution {
    pub coefficients: DVector<f64>,
    pub objective: f64,
    pub state: DensityMatrix,
    pub min_eigenvalue: f64,
    /// `sum(a) - 1`.
    pub sum_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective reached by the penalty route when it ran.
    pub cross_check_objective: Option<f64>,
}

/// Raw coefficients as produced by a solver route.
#[derive(Debug, Clone)]
pub(crate) struct RouteResult {
    pub coefficients: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `sum_xi a_xi sigma_xi`. Hermitian; the trace equals `sum a`, which must be
/// within `SUM_TOL` of one. Positivity is left to the caller.
pub fn assemble_state(coefficients: &[f64], probe_states: &[DensityMatrix]) -> Result<DensityMatrix> {
    if coefficients.len() != probe_states.len() {
        return Err(FdpError::DimensionMismatch { expected: probe_states.len(), found: coefficients.len() });
    }
    let Some(first) = probe_states.first() else {
        return Err(FdpError::Invalid("no probe states".into()));
    };
    let d = first.dim();
    let mut m = CMatrix::zeros(d, d);
    for (a, s) in coefficients.iter().zip(probe_states) {
        if s.dim() != d {
            return Err(FdpError::DimensionMismatch { expected: d, found: s.dim() });
        }
        m += s.elements().map(|v| v * *a);
    }
    // exact hermiticity for the stored estimate
    let herm = (&m + m.adjoint()).map(|v: C64| v * 0.5);
    DensityMatrix::from_hermitian_within(herm, SUM_TOL)
}

/// `E(a)`, summed bin by bin.
pub fn objective(problem: &FdpProblem, coefficients: &DVector<f64>) -> f64 {
    let pred = problem.predicted(coefficients);
    problem.target.iter().zip(pred.iter()).map(|(t, p)| (t - p) * (t - p)).sum()
}

/// Per-bin residuals `t_n - sum_xi a_xi F_xi,n`.
pub fn residuals(problem: &FdpProblem, solution: &FdpSolution) -> Vec<f64> {
    let pred = problem.predicted(&solution.coefficients);
    problem.target.iter().zip(pred.iter()).map(|(t, p)| t - p).collect()
}

/// Statistical envelope `factor * sqrt(N_n) / K` of a measured pattern. An
/// empty bin is given a counting error of one event rather than zero.
pub fn noise_envelope(pattern: &DataPattern, factor: f64) -> Vec<f64> {
    let k = pattern.total as f64;
    pattern.counts.iter().map(|&c| factor * (c as f64).sqrt().max(1.0) / k).collect()
}

/// Fraction of bins whose residual lies within the envelope.
pub fn fraction_within(residuals: &[f64], envelope: &[f64]) -> f64 {
    let inside = residuals.iter().zip(envelope).filter(|(r, e)| r.abs() <= **e).count();
    inside as f64 / residuals.len().max(1) as f64
}

/// Solves the constrained fit.
///
/// Errors when the best coefficients found still violate the sum or
/// positivity tolerances. A solve that hits the iteration cap but satisfies
/// the constraints is returned with `converged == false`.
pub fn fdp_fit(problem: &FdpProblem, options: &SolverOptions) -> Result<FdpSolution> {
    let diagonal = match options.path {
        SolverPath::Auto => problem.is_diagonal(),
        SolverPath::Diagonal => {
            if !problem.is_diagonal() {
                return Err(FdpError::Invalid("diagonal solver path requested for non-diagonal probes".into()));
            }
            true
        }
        SolverPath::General => false,
    };
    let (primary, secondary) = if diagonal {
        let p = projected::solve(problem, options)?;
        let s = if options.cross_check { Some(penalty::solve(problem, options)?) } else { None };
        (p, s)
    } else {
        let p = general::solve_barrier(problem, options)?;
        let s = if options.cross_check { Some(general::solve_penalty(problem, options)?) } else { None };
        (p, s)
    };

    let primary_obj = objective(problem, &primary.coefficients);
    let cross_obj = secondary.as_ref().map(|s| objective(problem, &s.coefficients));
    let mut chosen = primary;
    if let (Some(s), Some(so)) = (secondary, cross_obj) {
        if so < primary_obj - 1e-12 && is_feasible(problem, &s.coefficients) {
            chosen = RouteResult { iterations: chosen.iterations + s.iterations, ..s };
        }
    }
    finish(problem, chosen, cross_obj)
}

fn is_feasible(problem: &FdpProblem, a: &DVector<f64>) -> bool {
    match assemble_state(a.as_slice(), &problem.probe_states) {
        Ok(state) => (a.sum() - 1.0).abs() <= SUM_TOL && state.min_eigenvalue() >= -PSD_TOL,
        Err(_) => false,
    }
}

fn finish(problem: &FdpProblem, route: RouteResult, cross_check_objective: Option<f64>) -> Result<FdpSolution> {
    let a = route.coefficients;
    let sum_residual = a.sum() - 1.0;
    if !(sum_residual.abs() <= SUM_TOL) {
        return Err(FdpError::Solver(format!("coefficient sum residual {sum_residual:.3e} exceeds {SUM_TOL:.0e}")));
    }
    let state = assemble_state(a.as_slice(), &problem.probe_states)?;
    let min_eigenvalue = state.min_eigenvalue();
    if min_eigenvalue < -PSD_TOL {
        return Err(FdpError::Solver(format!(
            "assembled state has eigenvalue {min_eigenvalue:.3e} below -{PSD_TOL:.0e} after {} iterations",
            route.iterations
        )));
    }
    Ok(FdpSolution {
        objective: objective(problem, &a),
        coefficients: a,
        state,
        min_eigenvalue,
        sum_residual,
        iterations: route.iterations,
        converged: route.converged,
        cross_check_objective,
    })
}

/// Serializable view: coefficients keyed by probe amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub coefficients: Vec<CoefficientEntry>,
    pub objective: f64,
    pub sum_residual: f64,
    pub min_eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cross_check_objective: Option<f64>,
    pub state: DensityMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub alpha: f64,
    pub coefficient: f64,
}

impl SolutionRecord {
    pub fn new(solution: &FdpSolution, amplitudes: &[f64]) -> Self {
        Self {
            coefficients: amplitudes
                .iter()
                .zip(solution.coefficients.iter())
                .map(|(&alpha, &coefficient)| CoefficientEntry { alpha, coefficient })
                .collect(),
            objective: solution.objective,
            sum_residual: solution.sum_residual,
            min_eigenvalue: solution.min_eigenvalue,
            iterations: solution.iterations,
            converged: solution.converged,
            cross_check_objective: solution.cross_check_objective,
            state: solution.state.clone(),
        }
    }

    pub fn coefficient_map(&self) -> BTreeMap<String, f64> {
        self.coefficients.iter().map(|c| (format!("{}", c.alpha), c.coefficient)).collect()
    }
}

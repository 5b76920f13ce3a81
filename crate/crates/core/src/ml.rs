//! Maximum-likelihood reconstruction from binned homodyne data under the
//! ideal quadrature measurement, with detector efficiency folded into the
//! measurement operators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FdpError, Result};
use crate::fock::{CMatrix, DensityMatrix, C64};
use crate::homodyne::{bin_operators, BinningSpec, DataPattern};
use crate::special::binomial;

/// Efficiency-adjusted bin operators `Pi_j = L_eta^dag(int_bin |x><x| dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedPovm {
    pub binning: BinningSpec,
    pub dim: usize,
    pub eta: f64,
    /// Real symmetric, one per bin.
    pub elements: Vec<DMatrix<f64>>,
}

impl BinnedPovm {
    pub fn n_outcomes(&self) -> usize {
        self.elements.len()
    }

    /// `N x D` matrix of diagonal elements `<n|Pi_j|n>`.
    pub fn diagonal_table(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.elements.len(), self.dim, |j, n| self.elements[j][(n, n)])
    }

    /// `Tr(Pi_j rho)` for every bin.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.elements.iter().map(|op| crate::homodyne::born_probability(op, rho)).collect()
    }
}

/// Adjoint of the loss channel applied to a real symmetric operator:
/// `<m|L^dag(Pi)|n> = sum_k sqrt(C(m,k) C(n,k)) eta^((m+n)/2 - k) (1-eta)^k Pi_{m-k,n-k}`.
pub fn loss_adjoint(op: &DMatrix<f64>, eta: f64) -> DMatrix<f64> {
    let d = op.nrows();
    let seta = eta.sqrt();
    DMatrix::from_fn(d, d, |m, n| {
        (0..=m.min(n))
            .map(|k| {
                (binomial(m, k) * binomial(n, k)).sqrt()
                    * seta.powi((m + n - 2 * k) as i32)
                    * (1.0 - eta).powi(k as i32)
                    * op[(m - k, n - k)]
            })
            .sum()
    })
}

pub fn build_binned_povm(binning: &BinningSpec, dim: usize, eta: f64) -> Result<BinnedPovm> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(FdpError::Domain(format!("efficiency {eta} outside (0, 1]; the POVM would be degenerate")));
    }
    let raw = bin_operators(binning, dim)?;
    let elements = if eta == 1.0 { raw } else { raw.iter().map(|op| loss_adjoint(op, eta)).collect() };
    Ok(BinnedPovm { binning: *binning, dim, eta, elements })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlOptions {
    pub max_iterations: usize,
    /// Relative log-likelihood change that ends the iteration.
    pub tolerance: f64,
    /// Lower bound on predicted bin probabilities.
    pub probability_floor: f64,
    /// Restrict to phase-invariant (Fock-diagonal) states.
    pub diagonal: bool,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self { max_iterations: 50_000, tolerance: 1e-11, probability_floor: 1e-12, diagonal: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlReconstruction {
    pub state: DensityMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after every accepted iteration.
    pub history: Vec<f64>,
}

/// `sum_j f_j ln p_j`, skipping empty bins.
fn log_likelihood(freqs: &[f64], probs: &[f64], floor: f64) -> f64 {
    freqs.iter().zip(probs).filter(|(f, _)| **f > 0.0).map(|(f, p)| f * p.max(floor).ln()).sum()
}

/// Dilution factors tried in order: undiluted `R rho R` first, then
/// `(1 + eps R) rho (1 + eps R)` with shrinking `eps` until the likelihood
/// does not decrease.
const DILUTION: [f64; 14] = [f64::INFINITY, 1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 1e-2, 5e-3, 1e-3, 1e-4, 1e-5, 1e-6, 1e-8];

/// Iterative `R rho R` maximum-likelihood reconstruction.
pub fn ml_reconstruct(pattern: &DataPattern, povm: &BinnedPovm, options: &MlOptions) -> Result<MlReconstruction> {
    if pattern.binning != povm.binning {
        return Err(FdpError::Invalid("pattern and POVM use different binnings".into()));
    }
    let freqs = pattern.frequencies();
    if options.diagonal {
        diagonal_iteration(&freqs, povm, options)
    } else {
        full_iteration(&freqs, povm, options)
    }
}

fn diagonal_iteration(freqs: &[f64], povm: &BinnedPovm, options: &MlOptions) -> Result<MlReconstruction> {
    let d = povm.dim;
    let table = povm.diagonal_table();
    let floor = options.probability_floor;
    let predict = |p: &[f64]| -> Vec<f64> {
        (0..table.nrows()).map(|j| (0..d).map(|n| table[(j, n)] * p[n]).sum::<f64>()).collect()
    };
    let mut p = vec![1.0 / d as f64; d];
    let mut probs = predict(&p);
    let mut ll = log_likelihood(freqs, &probs, floor);
    let mut history = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let r: Vec<f64> = (0..d)
            .map(|n| (0..table.nrows()).filter(|&j| freqs[j] > 0.0).map(|j| freqs[j] * table[(j, n)] / probs[j].max(floor)).sum())
            .collect();
        let mut accepted = None;
        for eps in DILUTION {
            let mut cand: Vec<f64> = if eps.is_infinite() {
                p.iter().zip(&r).map(|(pn, rn)| pn * rn * rn).collect()
            } else {
                p.iter().zip(&r).map(|(pn, rn)| pn * (1.0 + eps * rn).powi(2)).collect()
            };
            let z: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|v| *v /= z);
            let cand_probs = predict(&cand);
            let cand_ll = log_likelihood(freqs, &cand_probs, floor);
            if cand_ll >= ll {
                accepted = Some((cand, cand_probs, cand_ll));
                break;
            }
        }
        let Some((cand, cand_probs, cand_ll)) = accepted else {
            converged = true;
            break;
        };
        let change = (cand_ll - ll) / ll.abs().max(1e-300);
        p = cand;
        probs = cand_probs;
        ll = cand_ll;
        history.push(ll);
        if change < options.tolerance {
            converged = true;
            break;
        }
    }
    Ok(MlReconstruction { state: DensityMatrix::from_diagonal(&p)?, log_likelihood: ll, iterations, converged, history })
}

/// Gradient of the log-likelihood in the diagonal parametrization,
/// projected onto the simplex tangent: `P(n) (R_n - 1)`.
pub fn diagonal_stationarity(pattern: &DataPattern, povm: &BinnedPovm, rho: &DensityMatrix) -> f64 {
    let freqs = pattern.frequencies();
    let probs = povm.probabilities(rho);
    let table = povm.diagonal_table();
    (0..povm.dim)
        .map(|n| {
            let r: f64 = (0..table.nrows()).filter(|&j| freqs[j] > 0.0).map(|j| freqs[j] * table[(j, n)] / probs[j]).sum();
            (rho.get(n, n).re * (r - 1.0)).abs()
        })
        .fold(0.0, f64::max)
}

fn full_iteration(freqs: &[f64], povm: &BinnedPovm, options: &MlOptions) -> Result<MlReconstruction> {
    let d = povm.dim;
    let floor = options.probability_floor;
    let ops: Vec<CMatrix> = povm.elements.iter().map(|m| m.map(|v| C64::new(v, 0.0))).collect();
    let predict = |rho: &CMatrix| -> Vec<f64> {
        ops.iter().map(|op| (op * rho).trace().re).collect()
    };
    let normalize = |m: CMatrix| -> CMatrix {
        let h = (&m + m.adjoint()).map(|v| v * 0.5);
        let tr = h.trace().re;
        h.map(|v| v / tr)
    };
    let mut rho = CMatrix::identity(d, d).map(|v| v / d as f64);
    let mut probs = predict(&rho);
    let mut ll = log_likelihood(freqs, &probs, floor);
    let mut history = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let ident = CMatrix::identity(d, d);
    while iterations < options.max_iterations {
        iterations += 1;
        let mut r = CMatrix::zeros(d, d);
        for (j, op) in ops.iter().enumerate() {
            if freqs[j] > 0.0 {
                r += op.map(|v| v * (freqs[j] / probs[j].max(floor)));
            }
        }
        let mut accepted = None;
        for eps in DILUTION {
            let step = if eps.is_infinite() { r.clone() } else { &ident + r.map(|v| v * eps) };
            let cand = normalize(&step * &rho * &step);
            let cand_probs = predict(&cand);
            let cand_ll = log_likelihood(freqs, &cand_probs, floor);
            if cand_ll >= ll {
                accepted = Some((cand, cand_probs, cand_ll));
                break;
            }
        }
        let Some((cand, cand_probs, cand_ll)) = accepted else {
            converged = true;
            break;
        };
        let change = (cand_ll - ll) / ll.abs().max(1e-300);
        rho = cand;
        probs = cand_probs;
        ll = cand_ll;
        history.push(ll);
        if change < options.tolerance {
            converged = true;
            break;
        }
    }
    Ok(MlReconstruction { state: DensityMatrix::new(rho)?, log_likelihood: ll, iterations, converged, history })
}

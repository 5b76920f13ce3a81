//! Truncated Fock-space density matrices and the quantities derived from them.
//!
//! States live on the basis `|0>, .., |D-1>`. The quadrature convention is
//! `x = (a + a^dag) / sqrt(2)`, so the vacuum has variance 1/2 in both
//! quadratures and its Wigner function peaks at `1/pi`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{FdpError, Result};
use crate::exec::{map_indexed, Execution};
use crate::special::{binomial, laguerre_all, sqrt_factorial_ratio};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;

/// Default Fock cutoff.
pub const DEFAULT_DIM: usize = 20;

/// Hermitian, unit-trace, positive semidefinite matrix on a truncated Fock space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DensityMatrixRecord", try_from = "DensityMatrixRecord")]
pub struct DensityMatrix {
    elements: CMatrix,
}

impl DensityMatrix {
    /// Validates all three invariants.
    pub fn new(elements: CMatrix) -> Result<Self> {
        let rho = Self::from_hermitian(elements)?;
        let min = rho.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(FdpError::InvalidState(format!("smallest eigenvalue {min:.3e} is negative")));
        }
        Ok(rho)
    }

    /// Checks shape, hermiticity and trace but not positivity. Used for
    /// linear combinations whose positivity is certified by the caller.
    pub fn from_hermitian(elements: CMatrix) -> Result<Self> {
        Self::from_hermitian_within(elements, TRACE_TOL)
    }

    /// As [`Self::from_hermitian`] with a caller-chosen trace tolerance.
    pub fn from_hermitian_within(elements: CMatrix, trace_tol: f64) -> Result<Self> {
        if elements.nrows() != elements.ncols() || elements.nrows() == 0 {
            return Err(FdpError::InvalidState(format!(
                "matrix is {}x{}, expected non-empty square",
                elements.nrows(),
                elements.ncols()
            )));
        }
        let rho = Self { elements };
        let herm = rho.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(FdpError::InvalidState(format!("not Hermitian (max deviation {herm:.3e})")));
        }
        let tr = rho.trace();
        if !((tr - 1.0).abs() <= trace_tol) {
            return Err(FdpError::InvalidState(format!("trace {tr} differs from 1")));
        }
        Ok(rho)
    }

    pub fn from_diagonal(probabilities: &[f64]) -> Result<Self> {
        let n = probabilities.len();
        let m = CMatrix::from_fn(n, n, |i, j| if i == j { C64::new(probabilities[i], 0.0) } else { C64::new(0.0, 0.0) });
        Self::new(m)
    }

    /// `|psi><psi|` for a normalized amplitude vector.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let n = amplitudes.len();
        let m = CMatrix::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj());
        Self::new(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { elements: CMatrix::identity(dim, dim).map(|v| v / dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> &CMatrix {
        &self.elements
    }

    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.elements[(m, n)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.elements[(i, i)].re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.elements[(i, j)] - self.elements[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.elements.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.is_diagonal() {
            return (0..self.dim()).map(|i| self.elements[(i, i)].re).fold(f64::INFINITY, f64::min);
        }
        self.eigenvalues()[0]
    }

    /// True when every off-diagonal element is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.elements[(i, j)] == C64::new(0.0, 0.0)))
    }

    /// Sum of squared moduli of the off-diagonal elements.
    pub fn off_diagonal_mass(&self) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += self.elements[(i, j)].norm_sqr();
                }
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.elements.clone()).map(|_| ())
    }

    /// Embeds into a larger cutoff by zero padding.
    pub fn padded(&self, dim: usize) -> Result<Self> {
        if dim < self.dim() {
            return Err(FdpError::DimensionMismatch { expected: self.dim(), found: dim });
        }
        let mut m = CMatrix::zeros(dim, dim);
        m.view_mut((0, 0), (self.dim(), self.dim())).copy_from(&self.elements);
        Ok(Self { elements: m })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("density matrix serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| FdpError::Parse(e.to_string()))
    }
}

/// On-disk layout: dimension plus row-major real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityMatrixRecord {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<DensityMatrix> for DensityMatrixRecord {
    fn from(rho: DensityMatrix) -> Self {
        let d = rho.dim();
        let mut re = Vec::with_capacity(d * d);
        let mut im = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                re.push(rho.elements[(i, j)].re);
                im.push(rho.elements[(i, j)].im);
            }
        }
        Self { dim: d, re, im }
    }
}

impl TryFrom<DensityMatrixRecord> for DensityMatrix {
    type Error = FdpError;

    fn try_from(r: DensityMatrixRecord) -> Result<Self> {
        let n = r.dim * r.dim;
        if r.re.len() != n || r.im.len() != n {
            return Err(FdpError::Parse(format!("expected {n} entries for dim {}", r.dim)));
        }
        let m = CMatrix::from_fn(r.dim, r.dim, |i, j| C64::new(r.re[i * r.dim + j], r.im[i * r.dim + j]));
        DensityMatrix::from_hermitian(m)
    }
}

/// `|n><n|` in a cutoff of `dim`.
pub fn fock_state(n: usize, dim: usize) -> Result<DensityMatrix> {
    if n >= dim {
        return Err(FdpError::OutOfRange { index: n, dim });
    }
    let mut m = CMatrix::zeros(dim, dim);
    m[(n, n)] = C64::new(1.0, 0.0);
    Ok(DensityMatrix { elements: m })
}

/// Photon loss with transmission `eta`.
///
/// Kraus form `E_k |n> = sqrt(C(n,k)) eta^((n-k)/2) (1-eta)^(k/2) |n-k>`, so
/// `rho'_{mn} = sum_k sqrt(C(m+k,k) C(n+k,k)) eta^((m+n)/2) (1-eta)^k rho_{m+k,n+k}`.
pub fn loss_channel(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(FdpError::Domain(format!("transmission {eta} outside [0, 1]")));
    }
    let d = rho.dim();
    let seta = eta.sqrt();
    let mut out = CMatrix::zeros(d, d);
    for m in 0..d {
        for n in 0..d {
            let base = seta.powi((m + n) as i32);
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d - m.max(n) {
                let w = (binomial(m + k, k) * binomial(n + k, k)).sqrt() * (1.0 - eta).powi(k as i32);
                acc += rho.elements[(m + k, n + k)] * w;
            }
            out[(m, n)] = acc * base;
        }
    }
    Ok(DensityMatrix { elements: out })
}

/// `P(n) = <n|rho|n>`.
pub fn photon_statistics(rho: &DensityMatrix) -> Vec<f64> {
    (0..rho.dim()).map(|i| rho.elements[(i, i)].re).collect()
}

pub fn mean_photon_number(rho: &DensityMatrix) -> f64 {
    photon_statistics(rho).iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

/// Wigner function at a single phase-space point.
///
/// `W(x,p) = (1/pi) sum_{mn} rho_{nm} (-1)^n <m|D(beta)|n>` with
/// `beta = sqrt(2)(x + i p)`. The displacement matrix elements carry
/// generalized Laguerre polynomials, generated per diagonal offset with the
/// upward recurrence.
pub fn wigner_point(rho: &DensityMatrix, x: f64, p: f64) -> f64 {
    let d = rho.dim();
    let beta = C64::new(x, p) * std::f64::consts::SQRT_2;
    let y = beta.norm_sqr();
    let envelope = (-0.5 * y).exp();
    let mut total = 0.0;
    let mut beta_pow = C64::new(1.0, 0.0);
    for offset in 0..d {
        let lag = laguerre_all(d - offset, offset as f64, y);
        for n in 0..d - offset {
            let m = n + offset;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let weight = sign * sqrt_factorial_ratio(n, m) * lag[n];
            let term = if offset == 0 {
                rho.elements[(n, n)].re
            } else {
                2.0 * (rho.elements[(n, m)] * beta_pow).re
            };
            total += weight * term;
        }
        beta_pow *= beta;
    }
    total * envelope / PI
}

/// Wigner function sampled on a rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x_values: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Row-major, `values[i * p_values.len() + j] = W(x_i, p_j)`.
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p_values.len() + j]
    }

    /// Riemann sum assuming uniform spacing on both axes.
    pub fn integral(&self) -> f64 {
        let step = |v: &[f64]| if v.len() > 1 { (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64 } else { 1.0 };
        self.values.iter().sum::<f64>() * step(&self.x_values) * step(&self.p_values)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Delimited table with header `x,p,W`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,p,W\n");
        for (i, x) in self.x_values.iter().enumerate() {
            for (j, p) in self.p_values.iter().enumerate() {
                let _ = writeln!(s, "{x},{p},{}", self.at(i, j));
            }
        }
        s
    }
}

pub fn wigner(rho: &DensityMatrix, x_values: &[f64], p_values: &[f64]) -> WignerGrid {
    wigner_with(rho, x_values, p_values, Execution::default())
}

pub fn wigner_with(rho: &DensityMatrix, x_values: &[f64], p_values: &[f64], mode: Execution) -> WignerGrid {
    let rows = map_indexed(x_values.len(), mode, |i| {
        p_values.iter().map(|&p| wigner_point(rho, x_values[i], p)).collect::<Vec<_>>()
    });
    WignerGrid { x_values: x_values.to_vec(), p_values: p_values.to_vec(), values: rows.concat() }
}

/// Uniform grid `lo, lo+step, .., hi` (inclusive within rounding).
pub fn uniform_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Eigenvalues at or below this multiple of `dim * eps * max` are rounding
/// noise; their square roots would otherwise add `O(1e-8)` errors.
const EIGEN_NOISE: f64 = 4.0;

fn clip_noise(values: &DVector<f64>) -> impl Fn(f64) -> f64 {
    let top = values.iter().copied().fold(0.0, f64::max);
    let floor = EIGEN_NOISE * values.len() as f64 * f64::EPSILON * top;
    move |l| if l <= floor { 0.0 } else { l }
}

/// Hermitian square root with negative and rounding-level eigenvalues set to zero.
pub fn sqrt_psd(m: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(m.clone());
    let clip = clip_noise(&eig.eigenvalues);
    let roots = eig.eigenvalues.map(|l| C64::new(clip(l).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    v * CMatrix::from_diagonal(&roots) * v.adjoint()
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(a) b sqrt(a)))^2`, clipped to [0, 1].
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(FdpError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    if a.is_diagonal() && b.is_diagonal() {
        let s: f64 = (0..a.dim())
            .map(|i| (a.elements[(i, i)].re.max(0.0) * b.elements[(i, i)].re.max(0.0)).sqrt())
            .sum();
        return Ok((s * s).clamp(0.0, 1.0));
    }
    let ra = sqrt_psd(&a.elements);
    let mut inner = &ra * &b.elements * &ra;
    // symmetrize away rounding before the Hermitian eigensolve
    inner = (&inner + inner.adjoint()).map(|v| v * 0.5);
    let values = SymmetricEigen::new(inner).eigenvalues;
    let clip = clip_noise(&values);
    let s: f64 = values.iter().map(|&l| clip(l).sqrt()).sum();
    Ok((s * s).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fock_state_examples() {
        let vac = fock_state(0, 5).unwrap();
        assert_eq!(photon_statistics(&vac), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let one = fock_state(1, 5).unwrap();
        assert_eq!(photon_statistics(&one), vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(fock_state(4, 3), Err(FdpError::OutOfRange { index: 4, dim: 3 }));
    }

    #[test]
    fn loss_examples() {
        let one = fock_state(1, 4).unwrap();
        assert_eq!(loss_channel(&one, 1.0).unwrap(), one);
        let half = photon_statistics(&loss_channel(&one, 0.5).unwrap());
        assert!((half[0] - 0.5).abs() < 1e-15 && (half[1] - 0.5).abs() < 1e-15);
        let two = photon_statistics(&loss_channel(&fock_state(2, 4).unwrap(), 0.5).unwrap());
        for (got, want) in two.iter().zip([0.25, 0.5, 0.25, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(matches!(loss_channel(&one, 1.5), Err(FdpError::Domain(_))));
        assert!(matches!(loss_channel(&one, -0.1), Err(FdpError::Domain(_))));
    }

    #[test]
    fn photon_statistics_of_mixed() {
        assert_eq!(photon_statistics(&DensityMatrix::maximally_mixed(2)), vec![0.5, 0.5]);
    }

    #[test]
    fn wigner_origin_values() {
        let vac = fock_state(0, 6).unwrap();
        assert!((wigner_point(&vac, 0.0, 0.0) - 1.0 / PI).abs() < 1e-15);
        let one = fock_state(1, 6).unwrap();
        assert!((wigner_point(&one, 0.0, 0.0) + 1.0 / PI).abs() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(40);
        for &(x, p) in &[(0.0, 0.0), (0.5, -1.0), (2.0, 1.5)] {
            assert!(wigner_point(&mixed, x, p) >= 0.0);
        }
    }

    #[test]
    fn wigner_normalization_on_grid() {
        let axis = uniform_axis(-5.0, 5.0, 0.1);
        for n in [0, 1, 3] {
            let grid = wigner(&fock_state(n, 8).unwrap(), &axis, &axis);
            assert!((grid.integral() - 1.0).abs() < 1e-3, "n={n}: {}", grid.integral());
        }
    }

    #[test]
    fn fidelity_examples() {
        let vac = fock_state(0, 2).unwrap();
        let one = fock_state(1, 2).unwrap();
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!((fidelity(&vac, &vac).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&vac, &one).unwrap().abs() < 1e-12);
        assert!((fidelity(&vac, &mixed).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            fidelity(&vac, &fock_state(0, 3).unwrap()),
            Err(FdpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let psi = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let rho = DensityMatrix::pure(&psi).unwrap();
        let back = DensityMatrix::from_json(&rho.to_json()).unwrap();
        assert_eq!(back, rho);
        assert!(DensityMatrix::from_json(r#"{"dim":2,"re":[1.0],"im":[0.0]}"#).is_err());
    }

    #[test]
    fn rejects_invalid_matrices() {
        let neg = DensityMatrix::from_diagonal(&[1.5, -0.5]);
        assert!(matches!(neg, Err(FdpError::InvalidState(_))));
        let trace = DensityMatrix::from_diagonal(&[0.5, 0.4]);
        assert!(matches!(trace, Err(FdpError::InvalidState(_))));
    }
}

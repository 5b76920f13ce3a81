//! Heralded Fock-state source: two-mode squeezed vacuum conditioned on the
//! click pattern of a spatially multiplexed trigger detector.

use serde::{Deserialize, Serialize};

use crate::error::{FdpError, Result};
use crate::fock::DensityMatrix;

/// Tolerated TMSV mass beyond the cutoff.
pub const TMSV_TAIL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmsvSpec {
    /// Squeezing parameter, `0 <= gamma < 1`.
    pub gamma: f64,
    pub dim: usize,
}

impl Default for TmsvSpec {
    fn default() -> Self {
        Self { gamma: 0.2, dim: crate::fock::DEFAULT_DIM }
    }
}

impl TmsvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(FdpError::Invalid(format!("squeezing parameter {} outside [0, 1)", self.gamma)));
        }
        if self.dim == 0 {
            return Err(FdpError::Invalid("cutoff must be positive".into()));
        }
        let tail = self.gamma.powi(2 * self.dim as i32);
        if tail > TMSV_TAIL_TOL {
            return Err(FdpError::Invalid(format!(
                "TMSV mass {tail:.3e} beyond cutoff {} exceeds {TMSV_TAIL_TOL:.0e}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Pair-number distribution `(1 - g^2) g^(2n)`, renormalized over the cutoff.
    pub fn photon_distribution(&self) -> Vec<f64> {
        let g2 = self.gamma * self.gamma;
        let mut p: Vec<f64> = (0..self.dim).map(|n| (1.0 - g2) * g2.powi(n as i32)).collect();
        let kept: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= kept);
        p
    }
}

/// Splitter network feeding binary click detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmdSpec {
    pub n_apds: usize,
    /// Probability that a photon is routed to each APD.
    pub splitting: Vec<f64>,
    pub apd_efficiency: f64,
    pub dark_count_prob: f64,
}

impl Default for SmdSpec {
    fn default() -> Self {
        Self::symmetric(3)
    }
}

impl SmdSpec {
    /// Equal splitting, unit efficiency, no dark counts.
    pub fn symmetric(n_apds: usize) -> Self {
        Self {
            n_apds,
            splitting: vec![1.0 / n_apds as f64; n_apds],
            apd_efficiency: 1.0,
            dark_count_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_apds == 0 || self.n_apds > 20 {
            return Err(FdpError::Invalid(format!("APD count {} outside 1..=20", self.n_apds)));
        }
        if self.splitting.len() != self.n_apds {
            return Err(FdpError::DimensionMismatch { expected: self.n_apds, found: self.splitting.len() });
        }
        if self.splitting.iter().any(|s| !(*s >= 0.0)) {
            return Err(FdpError::Invalid("splitting probabilities must be >= 0".into()));
        }
        let total: f64 = self.splitting.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FdpError::Invalid(format!("splitting probabilities sum to {total}")));
        }
        if !(0.0..=1.0).contains(&self.apd_efficiency) {
            return Err(FdpError::Invalid("APD efficiency outside [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.dark_count_prob) {
            return Err(FdpError::Invalid("dark-count probability outside [0, 1)".into()));
        }
        Ok(())
    }

    /// Probability that every APD in `mask` stays dark given `m` photons.
    fn silent(&self, mask: u32, m: usize) -> f64 {
        let mut routed = 0.0;
        let mut size = 0;
        for i in 0..self.n_apds {
            if mask & (1 << i) != 0 {
                routed += self.splitting[i];
                size += 1;
            }
        }
        let photon_miss = (1.0 - self.apd_efficiency * routed).max(0.0);
        (1.0 - self.dark_count_prob).powi(size) * photon_miss.powi(m as i32)
    }
}

/// Probability that `m` trigger photons produce exactly `k` clicks.
///
/// For a click set `C`, inclusion-exclusion over `J ⊆ C` of the probability
/// that `J` and every APD outside `C` stay silent gives the probability that
/// exactly `C` fires.
pub fn click_probability(m: usize, k: usize, smd: &SmdSpec) -> Result<f64> {
    smd.validate()?;
    if k > smd.n_apds {
        return Err(FdpError::Domain(format!("{k} clicks requested from {} APDs", smd.n_apds)));
    }
    let full: u32 = (1u32 << smd.n_apds) - 1;
    let mut total = 0.0;
    for clicked in 0..=full {
        if clicked.count_ones() as usize != k {
            continue;
        }
        let outside = full & !clicked;
        // iterate subsets of `clicked`
        let mut sub = clicked;
        loop {
            let sign = if sub.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * smd.silent(outside | sub, m);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & clicked;
        }
    }
    Ok(total)
}

/// Probability of a `k`-click herald from the TMSV source.
pub fn herald_probability(tmsv: &TmsvSpec, smd: &SmdSpec, k: usize) -> Result<f64> {
    tmsv.validate()?;
    let p = tmsv.photon_distribution();
    let mut total = 0.0;
    for (n, pn) in p.iter().enumerate() {
        total += pn * click_probability(n, k, smd)?;
    }
    Ok(total)
}

/// Signal-mode state conditioned on `k` clicks: `P(n|k) ∝ P(n) P(k|n)`.
pub fn heralded_state(tmsv: &TmsvSpec, smd: &SmdSpec, k_clicks: usize) -> Result<DensityMatrix> {
    tmsv.validate()?;
    let prior = tmsv.photon_distribution();
    let mut post = Vec::with_capacity(prior.len());
    for (n, pn) in prior.iter().enumerate() {
        post.push(pn * click_probability(n, k_clicks, smd)?);
    }
    let z: f64 = post.iter().sum();
    if !(z > 0.0) {
        return Err(FdpError::Invalid(format!("heralding probability for {k_clicks} clicks is zero")));
    }
    post.iter_mut().for_each(|v| *v /= z);
    DensityMatrix::from_diagonal(&post)
}

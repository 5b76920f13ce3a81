//! Phase-averaged coherent probe states and amplitude calibration.

use serde::{Deserialize, Serialize};

use crate::error::{FdpError, Result};
use crate::fock::DensityMatrix;

/// Largest Poisson mass allowed beyond the cutoff.
pub const LEAKAGE_TOL: f64 = 1e-6;

/// Planck constant, J s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn poisson_pmf(mean: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut p = (-mean).exp();
    for n in 0..count {
        out.push(p);
        p *= mean / (n + 1) as f64;
    }
    out
}

/// Poisson mass at `n >= dim`, summed directly so it stays accurate when tiny.
pub fn poisson_tail(mean: f64, dim: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let head = poisson_pmf(mean, dim + 1);
    let mut term = head[dim];
    let mut tail = 0.0;
    let mut n = dim;
    while term > 0.0 && (term > tail * 1e-17 || (n as f64) < mean) {
        tail += term;
        n += 1;
        term *= mean / n as f64;
        if n > dim + 10_000 {
            break;
        }
    }
    tail
}

/// Smallest cutoff whose Poisson leakage is within `tol`.
pub fn required_dim(alpha_abs: f64, tol: f64) -> usize {
    let mean = alpha_abs * alpha_abs;
    (1..).find(|&d| poisson_tail(mean, d) <= tol).unwrap_or(usize::MAX)
}

/// Diagonal Poisson mixture obtained by averaging `|alpha e^{i phi}>` over phase.
pub fn phav_density(alpha_abs: f64, dim: usize) -> Result<DensityMatrix> {
    phav_density_with_tolerance(alpha_abs, dim, LEAKAGE_TOL)
}

/// As [`phav_density`] with an explicit leakage tolerance. The retained mass
/// is renormalized to unit trace.
pub fn phav_density_with_tolerance(alpha_abs: f64, dim: usize, tol: f64) -> Result<DensityMatrix> {
    if !(alpha_abs >= 0.0) || !alpha_abs.is_finite() {
        return Err(FdpError::Domain(format!("probe amplitude {alpha_abs} must be finite and >= 0")));
    }
    if dim == 0 {
        return Err(FdpError::Domain("cutoff must be positive".into()));
    }
    let mean = alpha_abs * alpha_abs;
    let leakage = poisson_tail(mean, dim);
    if leakage > tol {
        return Err(FdpError::Cutoff {
            alpha: alpha_abs,
            dim,
            leakage,
            tolerance: tol,
            required_dim: required_dim(alpha_abs, tol),
        });
    }
    let mut p = poisson_pmf(mean, dim);
    let kept: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= kept);
    DensityMatrix::from_diagonal(&p)
}

/// Inputs to the optical-power amplitude calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInputs {
    /// Average power on the power meter, W.
    pub power_meas: f64,
    /// Transmissivity over reflectivity of the pick-off splitter.
    pub t_over_r: f64,
    pub od1: f64,
    pub od2: f64,
    /// Probe/LO interference visibility.
    pub visibility: f64,
    /// Central wavelength, m.
    pub wavelength: f64,
    /// Probe repetition rate, Hz.
    pub rep_rate: f64,
    #[serde(default = "default_planck")]
    pub planck: f64,
    #[serde(default = "default_c")]
    pub speed_of_light: f64,
}

fn default_planck() -> f64 {
    PLANCK
}

fn default_c() -> f64 {
    SPEED_OF_LIGHT
}

impl Default for CalibrationInputs {
    /// Probe-path values of the reference experiment with the power set to
    /// give roughly unit amplitude.
    fn default() -> Self {
        let wavelength = 827.6e-9;
        let rep_rate = 3.997e6;
        Self {
            power_meas: PLANCK * SPEED_OF_LIGHT * rep_rate / wavelength,
            t_over_r: 1.0,
            od1: 0.0,
            od2: 0.0,
            visibility: 1.0,
            wavelength,
            rep_rate,
            planck: PLANCK,
            speed_of_light: SPEED_OF_LIGHT,
        }
    }
}

impl CalibrationInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("power_meas", self.power_meas),
            ("t_over_r", self.t_over_r),
            ("wavelength", self.wavelength),
            ("rep_rate", self.rep_rate),
            ("planck", self.planck),
            ("speed_of_light", self.speed_of_light),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(FdpError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.od1 >= 0.0 && self.od2 >= 0.0) {
            return Err(FdpError::Domain("optical densities must be >= 0".into()));
        }
        if !(self.visibility > 0.0 && self.visibility <= 1.0) {
            return Err(FdpError::Domain(format!("visibility {} outside (0, 1]", self.visibility)));
        }
        Ok(())
    }
}

/// Amplitude registered by the detector:
/// `sqrt(P (T/R) 10^(-OD1-OD2) V^2 lambda / (h c nu))`.
pub fn calibrate_alpha(inputs: &CalibrationInputs) -> Result<f64> {
    inputs.validate()?;
    let photons_per_pulse = inputs.power_meas * inputs.wavelength / (inputs.planck * inputs.speed_of_light * inputs.rep_rate);
    let radicand = photons_per_pulse
        * inputs.t_over_r
        * 10f64.powf(-inputs.od1 - inputs.od2)
        * inputs.visibility
        * inputs.visibility;
    Ok(radicand.sqrt())
}

/// Ordered probe amplitudes plus the cutoff they are represented in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub amplitudes: Vec<f64>,
    pub dim: usize,
}

impl ProbeSpec {
    pub fn count(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.is_empty() {
            return Err(FdpError::Invalid("probe set is empty".into()));
        }
        if self.amplitudes.iter().any(|a| !(*a >= 0.0)) {
            return Err(FdpError::Invalid("probe amplitudes must be >= 0".into()));
        }
        if self.amplitudes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FdpError::Invalid("probe amplitudes must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Probe amplitudes with their density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub spec: ProbeSpec,
    pub states: Vec<DensityMatrix>,
}

impl ProbeSet {
    pub fn from_spec(spec: ProbeSpec) -> Result<Self> {
        spec.validate()?;
        let states = spec
            .amplitudes
            .iter()
            .map(|&a| phav_density(a, spec.dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, states })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.spec.amplitudes
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }
}

/// Ladder layout options.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LadderOptions {
    /// Prepend an `|alpha| = 0` probe ahead of the evenly spaced ladder.
    pub include_vacuum: bool,
}

/// `count` evenly spaced amplitudes from `alpha_min` to `alpha_max` inclusive.
pub fn build_probe_ladder(alpha_min: f64, alpha_max: f64, count: usize, dim: usize) -> Result<ProbeSet> {
    build_probe_ladder_with(alpha_min, alpha_max, count, dim, LadderOptions::default())
}

pub fn build_probe_ladder_with(
    alpha_min: f64,
    alpha_max: f64,
    count: usize,
    dim: usize,
    options: LadderOptions,
) -> Result<ProbeSet> {
    if !(alpha_min < alpha_max) {
        return Err(FdpError::Invalid(format!("degenerate amplitude range [{alpha_min}, {alpha_max}]")));
    }
    if count < 2 {
        return Err(FdpError::Invalid(format!("probe count {count} < 2")));
    }
    if alpha_min < 0.0 || (options.include_vacuum && alpha_min == 0.0) {
        return Err(FdpError::Invalid("alpha_min must be positive when a vacuum probe is prepended".into()));
    }
    let step = (alpha_max - alpha_min) / (count - 1) as f64;
    let mut amplitudes: Vec<f64> = (0..count).map(|i| alpha_min + i as f64 * step).collect();
    amplitudes[count - 1] = alpha_max;
    if options.include_vacuum {
        amplitudes.insert(0, 0.0);
    }
    ProbeSet::from_spec(ProbeSpec { amplitudes, dim })
}

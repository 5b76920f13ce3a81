//! Pulsed balanced homodyne detection: quadrature sampling, raw-voltage
//! generation, blocked-input rescaling and histogramming into data patterns.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FdpError, Result};
use crate::exec::{map_indexed, Execution};
use crate::fock::{fock_state, loss_channel, DensityMatrix};
use crate::probe::ProbeSet;
use crate::seed::derive_seed;
use crate::special::{hermite_functions, GaussRule};

/// Rescaling targets for blocked-input frames: zero mean, vacuum variance 1/2.
pub const C1_DEFAULT: f64 = 0.0;
pub const C2_DEFAULT: f64 = 0.5;

/// Pulses between blocked-input calibration frames when drift is modelled.
pub const CALIBRATION_FRAME: usize = 10_000;

/// Inverse-CDF table extent and spacing, quadrature units.
pub const TABLE_HALF_WIDTH: f64 = 8.0;
pub const TABLE_STEP: f64 = 1e-3;

const CHUNK: usize = 1 << 16;

/// Signal-to-noise ratio of shot noise over electronic noise, dB.
pub const DEFAULT_SNR_DB: f64 = 14.5;

/// Uniform outcome bins over `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub n_bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self { n_bins: 151, lo: -6.0, hi: 6.0 }
    }
}

impl BinningSpec {
    pub fn new(n_bins: usize, lo: f64, hi: f64) -> Result<Self> {
        let b = Self { n_bins, lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(FdpError::Invalid(format!("bin count {} < 2", self.n_bins)));
        }
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(FdpError::Invalid(format!("bin range [{}, {}) is empty", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.width();
        let mut e: Vec<f64> = (0..=self.n_bins).map(|i| self.lo + i as f64 * w).collect();
        e[self.n_bins] = self.hi;
        e
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.width();
        (0..self.n_bins).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    /// Half-open bin index; out-of-range values clamp to the edge bins.
    pub fn index_of(&self, x: f64) -> usize {
        if !(x >= self.lo) {
            return 0;
        }
        let i = ((x - self.lo) / self.width()).floor() as usize;
        i.min(self.n_bins - 1)
    }
}

/// Histogram of detector outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPattern {
    pub binning: BinningSpec,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl DataPattern {
    pub fn from_counts(binning: BinningSpec, counts: Vec<u64>) -> Result<Self> {
        binning.validate()?;
        if counts.len() != binning.n_bins {
            return Err(FdpError::DimensionMismatch { expected: binning.n_bins, found: counts.len() });
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(FdpError::Invalid("pattern has no counts".into()));
        }
        Ok(Self { binning, counts, total })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let k = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / k).collect()
    }

    pub fn mean(&self) -> f64 {
        self.binning.centers().iter().zip(self.frequencies()).map(|(x, f)| x * f).sum()
    }

    /// Variance of the binned distribution using bin centers.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.binning.centers().iter().zip(self.frequencies()).map(|(x, f)| f * (x - m).powi(2)).sum()
    }

    /// Delimited table `bin_center,count,frequency` with a commented header
    /// carrying the binning and total.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# n_bins={} lo={} hi={} total={}", self.binning.n_bins, self.binning.lo, self.binning.hi, self.total);
        s.push_str("bin_center,count,frequency\n");
        for ((c, n), f) in self.binning.centers().iter().zip(&self.counts).zip(self.frequencies()) {
            let _ = writeln!(s, "{c},{n},{f}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| FdpError::Parse("empty pattern file".into()))?;
        let header = header.strip_prefix('#').ok_or_else(|| FdpError::Parse("missing '#' header line".into()))?;
        let (mut n_bins, mut lo, mut hi, mut total) = (None, None, None, None);
        for field in header.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| FdpError::Parse(format!("bad header field '{field}'")))?;
            let bad = |_| FdpError::Parse(format!("bad value for {key}: '{value}'"));
            match key {
                "n_bins" => n_bins = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "lo" => lo = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "hi" => hi = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "total" => total = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(FdpError::Parse(format!("unknown header key '{key}'"))),
            }
        }
        let missing = |k: &str| FdpError::Parse(format!("header lacks {k}"));
        let binning = BinningSpec::new(
            n_bins.ok_or_else(|| missing("n_bins"))?,
            lo.ok_or_else(|| missing("lo"))?,
            hi.ok_or_else(|| missing("hi"))?,
        )?;
        let mut counts = Vec::with_capacity(binning.n_bins);
        for (lineno, line) in lines.enumerate() {
            if lineno == 0 && line.starts_with("bin_center") {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let count = line
                .split(',')
                .nth(1)
                .and_then(|v| v.trim().parse::<u64>().ok())
                .ok_or_else(|| FdpError::Parse(format!("line {}: bad row '{line}'", lineno + 3)))?;
            counts.push(count);
        }
        let pattern = Self::from_counts(binning, counts)?;
        if let Some(t) = total {
            if t != pattern.total {
                return Err(FdpError::Parse(format!("header total {t} but counts sum to {}", pattern.total)));
            }
        }
        Ok(pattern)
    }
}

/// Slow sinusoidal wander of detector gain and offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    /// Relative gain excursion.
    pub gain_amplitude: f64,
    /// Offset excursion, raw volts.
    pub offset_amplitude: f64,
    /// Period in pulses.
    pub period: f64,
}

/// Raw-voltage response of the simulated detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Optical efficiency applied to the measured state before detection.
    pub eta_bhd: f64,
    /// Raw volts per quadrature unit.
    pub gain: f64,
    /// Raw volts.
    pub offset: f64,
    /// Standard deviation of additive electronic noise, raw volts.
    pub electronic_noise_sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Drift>,
}

impl Default for DetectorModel {
    fn default() -> Self {
        let gain = 0.02;
        Self {
            eta_bhd: 0.85,
            gain,
            offset: 0.003,
            electronic_noise_sd: noise_sd_for_snr(gain, DEFAULT_SNR_DB),
            drift: None,
        }
    }
}

/// Electronic-noise SD giving the stated shot-noise-to-electronic-noise
/// variance ratio for the vacuum quadrature variance of 1/2.
pub fn noise_sd_for_snr(gain: f64, snr_db: f64) -> f64 {
    gain * (0.5 / 10f64.powf(snr_db / 10.0)).sqrt()
}

impl DetectorModel {
    /// Unit efficiency, unit gain, no offset, no noise, no drift.
    pub fn ideal() -> Self {
        Self { eta_bhd: 1.0, gain: 1.0, offset: 0.0, electronic_noise_sd: 0.0, drift: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta_bhd) {
            return Err(FdpError::Invalid(format!("eta_bhd {} outside [0, 1]", self.eta_bhd)));
        }
        if !(self.gain > 0.0) {
            return Err(FdpError::Invalid(format!("gain {} must be positive", self.gain)));
        }
        if !(self.electronic_noise_sd >= 0.0) {
            return Err(FdpError::Invalid("electronic noise SD must be >= 0".into()));
        }
        if let Some(d) = &self.drift {
            if !(d.period > 0.0) || !(d.gain_amplitude.abs() < 1.0) {
                return Err(FdpError::Invalid("drift needs a positive period and |gain_amplitude| < 1".into()));
            }
        }
        Ok(())
    }

    /// After blocked-input rescaling, Gaussian electronic noise acts on the
    /// quadrature exactly like a beam splitter of this transmission.
    pub fn electronic_efficiency(&self) -> f64 {
        let shot = 0.5 * self.gain * self.gain;
        shot / (shot + self.electronic_noise_sd * self.electronic_noise_sd)
    }

    /// Total efficiency seen by an estimator that assumes an ideal quadrature POVM.
    pub fn effective_efficiency(&self) -> f64 {
        self.eta_bhd * self.electronic_efficiency()
    }

    /// Copy used for probes whose amplitudes are specified as registered at
    /// the detector, so the optical efficiency is already included.
    pub fn for_registered_probes(&self) -> Self {
        Self { eta_bhd: 1.0, ..self.clone() }
    }

    fn gain_offset_at(&self, pulse: usize) -> (f64, f64) {
        match &self.drift {
            None => (self.gain, self.offset),
            Some(d) => {
                let phase = 2.0 * PI * pulse as f64 / d.period;
                (self.gain * (1.0 + d.gain_amplitude * phase.sin()), self.offset + d.offset_amplitude * phase.cos())
            }
        }
    }
}

/// Quadrature probability density at phase 0.
pub fn quadrature_pdf(rho: &DensityMatrix, x: f64) -> f64 {
    let d = rho.dim();
    let psi = hermite_functions(x, d);
    let mut total = 0.0;
    for m in 0..d {
        total += rho.get(m, m).re * psi[m] * psi[m];
        for n in (m + 1)..d {
            total += 2.0 * rho.get(m, n).re * psi[m] * psi[n];
        }
    }
    total.max(0.0)
}

/// Tabulated inverse-CDF sampler for a quadrature distribution.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl QuadratureSampler {
    pub fn new(rho: &DensityMatrix) -> Self {
        let n = (2.0 * TABLE_HALF_WIDTH / TABLE_STEP).round() as usize;
        let xs: Vec<f64> = (0..=n).map(|i| -TABLE_HALF_WIDTH + i as f64 * TABLE_STEP).collect();
        let pdf: Vec<f64> = xs.iter().map(|&x| quadrature_pdf(rho, x)).collect();
        let mut cdf = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..xs.len() {
            acc += 0.5 * (pdf[i] + pdf[i - 1]) * TABLE_STEP;
            cdf.push(acc);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Self { xs, cdf }
    }

    /// Maps a uniform variate in [0, 1) to a quadrature value.
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[i - 1] + t * (self.xs[i] - self.xs[i - 1])
    }
}

/// Raw voltages for `k` pulses of `rho` through `detector`.
pub fn simulate_pulses(rho: &DensityMatrix, detector: &DetectorModel, k: usize, seed: u64) -> Result<Vec<f64>> {
    simulate_pulses_with(rho, detector, k, seed, Execution::default())
}

/// As [`simulate_pulses`]; chunk `c` draws from ChaCha stream `c` of `seed`,
/// so the output is independent of the execution mode.
pub fn simulate_pulses_with(
    rho: &DensityMatrix,
    detector: &DetectorModel,
    k: usize,
    seed: u64,
    mode: Execution,
) -> Result<Vec<f64>> {
    detector.validate()?;
    if k == 0 {
        return Err(FdpError::Invalid("pulse count must be >= 1".into()));
    }
    let degraded = loss_channel(rho, detector.eta_bhd)?;
    let sampler = QuadratureSampler::new(&degraded);
    let n_chunks = k.div_ceil(CHUNK);
    let chunks = map_indexed(n_chunks, mode, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let start = c * CHUNK;
        let end = (start + CHUNK).min(k);
        (start..end)
            .map(|t| {
                let x = sampler.quantile(rng.random::<f64>());
                let noise: f64 = rng.sample(StandardNormal);
                let (g, o) = detector.gain_offset_at(t);
                g * x + o + detector.electronic_noise_sd * noise
            })
            .collect::<Vec<_>>()
    });
    Ok(chunks.concat())
}

/// Blocked-input voltages: the vacuum through the same detector.
pub fn simulate_blocked(detector: &DetectorModel, k: usize, seed: u64, mode: Execution) -> Result<Vec<f64>> {
    simulate_pulses_with(&fock_state(0, 1)?, detector, k, seed, mode)
}

/// Affine map `V' = A V - B` fixed by blocked-input statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescaling {
    pub a: f64,
    pub b: f64,
}

impl Rescaling {
    /// `A = sqrt(C2 / var(V))`, `B = A <V> - C1`, with the population variance.
    pub fn estimate(blocked: &[f64], c1: f64, c2: f64) -> Result<Self> {
        if blocked.len() < 2 {
            return Err(FdpError::Calibration("need at least two blocked-input samples".into()));
        }
        if !(c2 > 0.0) {
            return Err(FdpError::Calibration(format!("target variance {c2} must be positive")));
        }
        let n = blocked.len() as f64;
        let mean = blocked.iter().sum::<f64>() / n;
        let var = blocked.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if !(var > (4.0 * f64::EPSILON * mean.abs()).powi(2)) {
            return Err(FdpError::Calibration("blocked-input samples have zero variance".into()));
        }
        let a = (c2 / var).sqrt();
        Ok(Self { a, b: a * mean - c1 })
    }

    pub fn apply(&self, v: f64) -> f64 {
        self.a * v - self.b
    }
}

pub fn rescale_voltages(signal: &[f64], blocked: &[f64], c1: f64, c2: f64) -> Result<Vec<f64>> {
    let r = Rescaling::estimate(blocked, c1, c2)?;
    Ok(signal.iter().map(|&v| r.apply(v)).collect())
}

/// Histograms rescaled samples; out-of-range samples land in the edge bins.
pub fn bin_samples(samples: &[f64], binning: &BinningSpec) -> Result<DataPattern> {
    binning.validate()?;
    let mut counts = vec![0u64; binning.n_bins];
    for &x in samples {
        counts[binning.index_of(x)] += 1;
    }
    DataPattern::from_counts(*binning, counts)
}

/// Simulate, rescale against blocked-input frames, and bin.
pub fn acquire_pattern(
    rho: &DensityMatrix,
    detector: &DetectorModel,
    k: usize,
    binning: &BinningSpec,
    seed: u64,
) -> Result<DataPattern> {
    acquire_pattern_with(rho, detector, k, binning, seed, Execution::default())
}

pub fn acquire_pattern_with(
    rho: &DensityMatrix,
    detector: &DetectorModel,
    k: usize,
    binning: &BinningSpec,
    seed: u64,
    mode: Execution,
) -> Result<DataPattern> {
    binning.validate()?;
    let signal = simulate_pulses_with(rho, detector, k, derive_seed(seed, "signal", 0), mode)?;
    let blocked = simulate_blocked(detector, k.max(2), derive_seed(seed, "blocked", 0), mode)?;
    let rescaled = if detector.drift.is_some() {
        let mut out = Vec::with_capacity(k);
        for (frame, chunk) in signal.chunks(CALIBRATION_FRAME).enumerate() {
            let start = frame * CALIBRATION_FRAME;
            let end = (start + CALIBRATION_FRAME).min(blocked.len());
            let r = Rescaling::estimate(&blocked[start..end], C1_DEFAULT, C2_DEFAULT)?;
            out.extend(chunk.iter().map(|&v| r.apply(v)));
        }
        out
    } else {
        rescale_voltages(&signal, &blocked, C1_DEFAULT, C2_DEFAULT)?
    };
    bin_samples(&rescaled, binning)
}

/// One pattern per probe, acquired with the probe amplitudes taken as
/// registered at the detector (optical efficiency already folded in).
/// Probes run through [`map_indexed`], each sequential inside and seeded by
/// its index.
pub fn acquire_probe_patterns(
    probes: &ProbeSet,
    detector: &DetectorModel,
    k: usize,
    binning: &BinningSpec,
    seed: u64,
    mode: Execution,
) -> Result<Vec<DataPattern>> {
    let registered = detector.for_registered_probes();
    map_indexed(probes.len(), mode, |i| {
        acquire_pattern_with(&probes.states[i], &registered, k, binning, derive_seed(seed, "probe", i as u64), Execution::Sequential)
    })
    .into_iter()
    .collect()
}

/// Outer integration limit for the clamped edge bins.
fn tail_limit(binning: &BinningSpec, dim: usize) -> f64 {
    binning.lo.abs().max(binning.hi.abs()).max((2.0 * dim as f64 + 1.0).sqrt()) + 12.0
}

/// Bin integrals `<m| Pi_j |n> = int_bin psi_m(x) psi_n(x) dx` of the ideal
/// quadrature measurement. Edge bins extend to the tails to match the
/// clamping rule, so the operators sum to the identity.
pub fn bin_operators(binning: &BinningSpec, dim: usize) -> Result<Vec<DMatrix<f64>>> {
    binning.validate()?;
    let rule = GaussRule::new(20);
    let edges = binning.edges();
    let limit = tail_limit(binning, dim);
    let tri = dim * (dim + 1) / 2;
    let integrand = |x: f64, out: &mut [f64]| {
        let psi = hermite_functions(x, dim);
        let mut idx = 0;
        for m in 0..dim {
            for n in m..dim {
                out[idx] = psi[m] * psi[n];
                idx += 1;
            }
        }
    };
    let mut ops = Vec::with_capacity(binning.n_bins);
    for j in 0..binning.n_bins {
        let a = if j == 0 { -limit } else { edges[j] };
        let b = if j + 1 == binning.n_bins { limit } else { edges[j + 1] };
        let v = rule.integrate_adaptive(a, b, tri, 1e-15, &integrand);
        let mut m = DMatrix::zeros(dim, dim);
        let mut idx = 0;
        for r in 0..dim {
            for c in r..dim {
                m[(r, c)] = v[idx];
                m[(c, r)] = v[idx];
                idx += 1;
            }
        }
        ops.push(m);
    }
    Ok(ops)
}

/// Born-rule bin probabilities of `rho` under the ideal quadrature measurement.
pub fn bin_probabilities(rho: &DensityMatrix, binning: &BinningSpec) -> Result<Vec<f64>> {
    let ops = bin_operators(binning, rho.dim())?;
    Ok(ops.iter().map(|op| born_probability(op, rho)).collect())
}

/// `Tr(Pi rho)` for a real symmetric `Pi`.
pub fn born_probability(op: &DMatrix<f64>, rho: &DensityMatrix) -> f64 {
    let d = rho.dim();
    let mut s = 0.0;
    for m in 0..d {
        for n in 0..d {
            s += op[(m, n)] * rho.get(n, m).re;
        }
    }
    s
}

//! Monte Carlo propagation of counting noise and probe-amplitude errors into
//! one-sigma intervals for coefficients, photon statistics and fidelities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{FdpError, Result};
use crate::exec::{map_indexed, Execution};
use crate::fdp::{fdp_fit, FdpProblem, SolverOptions};
use crate::fock::{fidelity, loss_channel, photon_statistics, DensityMatrix};
use crate::homodyne::DataPattern;
use crate::ml::{ml_reconstruct, BinnedPovm, MlOptions};
use crate::probe::phav_density_with_tolerance;
use crate::seed::derive_seed;

/// Cutoff leakage accepted for perturbed probes. Amplitudes pushed above
/// the ladder maximum would otherwise fail the strict probe tolerance.
pub const PERTURBED_LEAKAGE_TOL: f64 = 1e-4;

/// Fraction of failed trials above which a report is flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McSpec {
    pub n_trials: usize,
    /// Poisson resampling of every histogram count.
    pub bin_noise: bool,
    /// Relative standard deviation of each probe amplitude.
    pub alpha_rel_error: f64,
    pub seed: u64,
}

impl Default for McSpec {
    fn default() -> Self {
        Self { n_trials: 200, bin_noise: true, alpha_rel_error: 0.027, seed: 0 }
    }
}

impl McSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 2 {
            return Err(FdpError::Invalid(format!("n_trials = {} but at least 2 are needed", self.n_trials)));
        }
        if !(self.alpha_rel_error >= 0.0) || !self.alpha_rel_error.is_finite() {
            return Err(FdpError::Invalid(format!("alpha_rel_error = {} must be finite and >= 0", self.alpha_rel_error)));
        }
        Ok(())
    }
}

/// ML side of the comparison.
#[derive(Debug, Clone)]
pub struct MlComparison {
    pub povm: BinnedPovm,
    pub options: MlOptions,
    /// Loss applied to the ML estimate before comparing with FDP.
    pub eta_bhd: f64,
}

/// Raw measurements and settings behind one fit.
#[derive(Debug, Clone)]
pub struct McInputs {
    pub probe_patterns: Vec<DataPattern>,
    pub target: DataPattern,
    pub amplitudes: Vec<f64>,
    pub dim: usize,
    pub solver: SolverOptions,
    pub ml: Option<MlComparison>,
    /// Known state to score each trial against, when simulating.
    pub reference: Option<DensityMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityInterval {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub quantities: Vec<QuantityInterval>,
    pub n_trials: usize,
    pub failed: usize,
    pub flagged: bool,
}

impl IntervalReport {
    /// Aggregates per-trial samples; `samples[t][q]` is quantity `q` in trial `t`.
    pub fn from_samples(names: &[String], samples: &[Vec<f64>], n_trials: usize) -> Self {
        let quantities = names
            .iter()
            .enumerate()
            .map(|(q, name)| {
                let (mean, sd) = mean_sd(samples.iter().map(|s| s[q]));
                QuantityInterval { name: name.clone(), mean, sd, lower: mean - sd, upper: mean + sd }
            })
            .collect();
        let failed = n_trials - samples.len();
        Self { quantities, n_trials, failed, flagged: failed as f64 > FAILURE_FLAG_FRACTION * n_trials as f64 }
    }

    pub fn get(&self, name: &str) -> Option<&QuantityInterval> {
        self.quantities.iter().find(|q| q.name == name)
    }

    /// Rows matching a name prefix, in report order.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a QuantityInterval> + 'a {
        self.quantities.iter().filter(move |q| q.name.starts_with(prefix))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,mean,sd,lower,upper\n");
        for q in &self.quantities {
            out.push_str(&format!("{},{:.12e},{:.12e},{:.12e},{:.12e}\n", q.name, q.mean, q.sd, q.lower, q.upper));
        }
        out
    }
}

/// Sample mean and (n - 1)-normalized standard deviation.
fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    // shifted by the first sample so identical samples give exactly zero spread
    let first = values.clone().next().unwrap_or(0.0);
    let mean = first + values.clone().map(|v| v - first).sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Replaces every count by a Poisson draw with that mean.
pub fn resample_counts(pattern: &DataPattern, rng: &mut ChaCha8Rng) -> Result<DataPattern> {
    let counts = pattern
        .counts
        .iter()
        .map(|&c| if c == 0 { 0 } else { Poisson::new(c as f64).map(|p| p.sample(rng) as u64).unwrap_or(c) })
        .collect();
    DataPattern::from_counts(pattern.binning, counts)
}

pub fn coefficient_name(alpha: f64) -> String {
    format!("a[{alpha:.6}]")
}

pub fn photon_name(n: usize) -> String {
    format!("P({n})")
}

pub const FIDELITY_ML: &str = "F(fdp,ml)";
pub const FIDELITY_REFERENCE: &str = "F(fdp,reference)";

fn quantity_names(inputs: &McInputs) -> Vec<String> {
    let mut names: Vec<String> = inputs.amplitudes.iter().map(|&a| coefficient_name(a)).collect();
    names.extend((0..inputs.dim).map(photon_name));
    if inputs.ml.is_some() {
        names.push(FIDELITY_ML.into());
    }
    if inputs.reference.is_some() {
        names.push(FIDELITY_REFERENCE.into());
    }
    names
}

fn run_trial(inputs: &McInputs, spec: &McSpec, index: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "mc-trial", index as u64));
    let (probes, target) = if spec.bin_noise {
        let p = inputs.probe_patterns.iter().map(|p| resample_counts(p, &mut rng)).collect::<Result<Vec<_>>>()?;
        (p, resample_counts(&inputs.target, &mut rng)?)
    } else {
        (inputs.probe_patterns.clone(), inputs.target.clone())
    };
    let states = if spec.alpha_rel_error > 0.0 {
        let normal = Normal::new(1.0, spec.alpha_rel_error).map_err(|e| FdpError::Invalid(e.to_string()))?;
        inputs
            .amplitudes
            .iter()
            .map(|&a| phav_density_with_tolerance((a * normal.sample(&mut rng)).abs(), inputs.dim, PERTURBED_LEAKAGE_TOL))
            .collect::<Result<Vec<_>>>()?
    } else {
        inputs
            .amplitudes
            .iter()
            .map(|&a| phav_density_with_tolerance(a, inputs.dim, PERTURBED_LEAKAGE_TOL))
            .collect::<Result<Vec<_>>>()?
    };
    let problem = FdpProblem::from_patterns(&probes, &target, states)?;
    let solution = fdp_fit(&problem, &inputs.solver)?;
    let mut row: Vec<f64> = solution.coefficients.iter().copied().collect();
    row.extend(photon_statistics(&solution.state));
    if let Some(ml) = &inputs.ml {
        let estimate = ml_reconstruct(&target, &ml.povm, &ml.options)?;
        row.push(fidelity(&solution.state, &loss_channel(&estimate.state, ml.eta_bhd)?)?);
    }
    if let Some(reference) = &inputs.reference {
        row.push(fidelity(&solution.state, reference)?);
    }
    Ok(row)
}

/// Runs `spec.n_trials` perturbed refits. Failed trials are excluded from
/// the statistics and counted.
pub fn mc_propagate(inputs: &McInputs, spec: &McSpec, mode: Execution) -> Result<IntervalReport> {
    spec.validate()?;
    if inputs.amplitudes.len() != inputs.probe_patterns.len() {
        return Err(FdpError::DimensionMismatch { expected: inputs.probe_patterns.len(), found: inputs.amplitudes.len() });
    }
    let names = quantity_names(inputs);
    let rows = map_indexed(spec.n_trials, mode, |i| run_trial(inputs, spec, i));
    let samples: Vec<Vec<f64>> = rows.into_iter().filter_map(|r| r.ok()).collect();
    Ok(IntervalReport::from_samples(&names, &samples, spec.n_trials))
}

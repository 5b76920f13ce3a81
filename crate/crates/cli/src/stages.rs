//! Pipeline stages. Each one reads and writes files under the output
//! directory only, so any stage can be rerun on its own.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fdp_core::fdp::{fraction_within, noise_envelope, SolutionRecord};
use fdp_core::fock::{uniform_axis, wigner_point};
use fdp_core::ml::{build_binned_povm, ml_reconstruct};
use fdp_core::probe::{ProbeSet, ProbeSpec};
use fdp_core::seed::derive_seed;
use fdp_core::uncertainty::{mc_propagate, IntervalReport, McInputs, McSpec, MlComparison};
use fdp_core::{
    acquire_pattern, acquire_probe_patterns, fdp_fit, fidelity, loss_channel, photon_statistics, residuals, wigner,
    BinningSpec, DataPattern, DensityMatrix, Execution, FdpProblem,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::selector::StateSelector;

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const PROBE_TABLE_FILE: &str = "probe_patterns.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

/// Probe data patterns with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub probes: ProbeSpec,
    pub binning: BinningSpec,
    pub pulses: usize,
    pub seed: u64,
    pub patterns: Vec<DataPattern>,
}

/// Unknown-state pattern plus the simulated ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub selector: String,
    pub pulses: usize,
    pub seed: u64,
    pub pattern: DataPattern,
    /// The remaining fields exist only because the data are simulated.
    pub simulation_only: bool,
    pub prepared: DensityMatrix,
    /// Prepared state after the detector's optical loss: what a fit against
    /// probes registered at the detector should return.
    pub registered: DensityMatrix,
}

/// Headline numbers of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub selector: String,
    pub objective: f64,
    pub sum_residual: f64,
    pub min_eigenvalue: f64,
    pub converged: bool,
    pub iterations: usize,
    pub cross_check_objective: Option<f64>,
    /// F(fdp, ml after the detector's optical loss).
    pub fidelity_ml: f64,
    /// F(fdp, registered true state).
    pub fidelity_truth: f64,
    pub envelope_factor: f64,
    pub envelope_fraction: f64,
    pub wigner_origin: f64,
    pub photon_statistics: Vec<f64>,
    pub ml_log_likelihood: f64,
    pub ml_iterations: usize,
    pub ml_converged: bool,
}

/// Everything the fit stage computes for one state.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub summary: FitSummary,
    pub solution: SolutionRecord,
    pub ml_state: DensityMatrix,
    pub ml_after_loss: DensityMatrix,
    pub residuals: Vec<f64>,
    pub envelope: Vec<f64>,
    pub fitted: Vec<f64>,
}

pub fn state_file(out: &Path, sel: &StateSelector) -> PathBuf {
    out.join("states").join(format!("{}.json", sel.tag()))
}

pub fn fit_dir(out: &Path, sel: &StateSelector) -> PathBuf {
    out.join("fits").join(sel.tag())
}

fn write(path: &Path, content: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    std::fs::write(path, content).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
    text.push('\n');
    write(path, &text)
}

fn read_json<T: DeserializeOwned>(path: &Path, hint: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Validation(format!("{} not found; run `{hint}` first", path.display()))
        } else {
            CliError::Io { path: path.to_path_buf(), source: e }
        }
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Adds a stage's wall-clock time to the timing file, the only output that
/// differs between otherwise identical runs.
pub fn record_time(out: &Path, stage: &str, seconds: f64) -> CliResult<()> {
    let path = out.join(TIMING_FILE);
    let mut map: BTreeMap<String, f64> = match std::fs::read_to_string(&path) {
        Ok(t) => serde_json::from_str(&t).unwrap_or_default(),
        Err(_) => BTreeMap::new(),
    };
    map.insert(stage.to_string(), seconds);
    write_json(&path, &map)
}

pub fn calibrate(config: &ExperimentConfig, mode: Execution) -> CliResult<Calibration> {
    config.check()?;
    let probes = config.probe_set()?;
    let seed = derive_seed(config.seed, "calibrate", 0);
    let patterns = acquire_probe_patterns(&probes, &config.detector, config.pulses.probe, &config.binning, seed, mode)?;
    Ok(Calibration { probes: probes.spec, binning: config.binning, pulses: config.pulses.probe, seed, patterns })
}

pub fn probe_table(cal: &Calibration) -> String {
    let mut s = String::from("bin,center");
    for a in &cal.probes.amplitudes {
        let _ = write!(s, ",f[{a:.6}]");
    }
    s.push('\n');
    for (j, c) in cal.binning.centers().iter().enumerate() {
        let _ = write!(s, "{j},{c:.6}");
        for p in &cal.patterns {
            let _ = write!(s, ",{:.12e}", p.counts[j] as f64 / p.total as f64);
        }
        s.push('\n');
    }
    s
}

pub fn run_calibrate(config: &ExperimentConfig) -> CliResult<Calibration> {
    let start = Instant::now();
    let cal = calibrate(config, Execution::Parallel)?;
    let out = &config.output_dir;
    write_json(&out.join(CALIBRATION_FILE), &cal)?;
    write(&out.join(PROBE_TABLE_FILE), &probe_table(&cal))?;
    record_time(out, "calibrate", start.elapsed().as_secs_f64())?;
    Ok(cal)
}

pub fn acquire(config: &ExperimentConfig, sel: &StateSelector) -> CliResult<StateRecord> {
    config.check()?;
    let prepared = sel.prepared_state(config)?;
    let registered = loss_channel(&prepared, config.detector.eta_bhd)?;
    let seed = derive_seed(config.seed, &format!("acquire/{sel}"), 0);
    let pattern = acquire_pattern(&prepared, &config.detector, config.pulses.state, &config.binning, seed)?;
    Ok(StateRecord {
        selector: sel.to_string(),
        pulses: config.pulses.state,
        seed,
        pattern,
        simulation_only: true,
        prepared,
        registered,
    })
}

pub fn run_acquire(config: &ExperimentConfig, sel: &StateSelector) -> CliResult<StateRecord> {
    let start = Instant::now();
    let record = acquire(config, sel)?;
    let out = &config.output_dir;
    let path = state_file(out, sel);
    write_json(&path, &record)?;
    write(&path.with_extension("csv"), &record.pattern.to_csv())?;
    record_time(out, &format!("acquire/{sel}"), start.elapsed().as_secs_f64())?;
    Ok(record)
}

pub fn load_calibration(out: &Path) -> CliResult<Calibration> {
    read_json(&out.join(CALIBRATION_FILE), "fdp calibrate")
}

pub fn load_state(out: &Path, sel: &StateSelector) -> CliResult<StateRecord> {
    read_json(&state_file(out, sel), &format!("fdp acquire {sel}"))
}

fn probe_states(cal: &Calibration) -> CliResult<ProbeSet> {
    Ok(ProbeSet::from_spec(cal.probes.clone())?)
}

fn check_binning(cal: &Calibration, state: &StateRecord) -> CliResult<()> {
    if cal.binning != state.pattern.binning {
        return Err(CliError::Validation(format!(
            "binning mismatch: probes use {:?}, state '{}' uses {:?}",
            cal.binning, state.selector, state.pattern.binning
        )));
    }
    Ok(())
}

pub fn fit(config: &ExperimentConfig, cal: &Calibration, state: &StateRecord) -> CliResult<FitOutcome> {
    check_binning(cal, state)?;
    let probes = probe_states(cal)?;
    let problem = FdpProblem::from_patterns(&cal.patterns, &state.pattern, probes.states.clone())?;
    let solution = fdp_fit(&problem, &config.solver)?;
    let record = SolutionRecord::new(&solution, probes.amplitudes());

    let eta = config.detector.eta_bhd;
    let povm = build_binned_povm(&cal.binning, probes.dim(), config.detector.effective_efficiency())?;
    let ml = ml_reconstruct(&state.pattern, &povm, &config.ml)?;
    let ml_after_loss = loss_channel(&ml.state, eta)?;

    let res = residuals(&problem, &solution);
    let factor = config.acceptance.envelope_factor;
    let envelope = noise_envelope(&state.pattern, factor);
    let truth = state.registered.padded(probes.dim())?;
    let summary = FitSummary {
        selector: state.selector.clone(),
        objective: solution.objective,
        sum_residual: solution.sum_residual,
        min_eigenvalue: solution.min_eigenvalue,
        converged: solution.converged,
        iterations: solution.iterations,
        cross_check_objective: solution.cross_check_objective,
        fidelity_ml: fidelity(&solution.state, &ml_after_loss)?,
        fidelity_truth: fidelity(&solution.state, &truth)?,
        envelope_factor: factor,
        envelope_fraction: fraction_within(&res, &envelope),
        wigner_origin: wigner_point(&solution.state, 0.0, 0.0),
        photon_statistics: photon_statistics(&solution.state),
        ml_log_likelihood: ml.log_likelihood,
        ml_iterations: ml.iterations,
        ml_converged: ml.converged,
    };
    Ok(FitOutcome {
        summary,
        fitted: problem.predicted(&solution.coefficients).iter().copied().collect(),
        solution: record,
        ml_state: ml.state,
        ml_after_loss,
        residuals: res,
        envelope,
    })
}

fn photon_table(outcome: &FitOutcome, truth: &DensityMatrix) -> String {
    let fdp = photon_statistics(&outcome.solution.state);
    let ml = photon_statistics(&outcome.ml_state);
    let lossy = photon_statistics(&outcome.ml_after_loss);
    let tr = photon_statistics(truth);
    let mut s = String::from("n,fdp,ml,ml_after_loss,truth_registered\n");
    for n in 0..fdp.len() {
        let _ = writeln!(s, "{n},{:.12e},{:.12e},{:.12e},{:.12e}", fdp[n], ml[n], lossy[n], tr.get(n).copied().unwrap_or(0.0));
    }
    s
}

fn residual_table(outcome: &FitOutcome, state: &StateRecord) -> String {
    let mut s = String::from("bin,center,target,fitted,residual,envelope,within\n");
    let centers = state.pattern.binning.centers();
    let freqs = state.pattern.frequencies();
    for j in 0..centers.len() {
        let r = outcome.residuals[j];
        let e = outcome.envelope[j];
        let _ = writeln!(
            s,
            "{j},{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            centers[j],
            freqs[j],
            outcome.fitted[j],
            r,
            e,
            r.abs() <= e
        );
    }
    s
}

fn coefficient_table(record: &SolutionRecord) -> String {
    let mut s = String::from("alpha,coefficient\n");
    for c in &record.coefficients {
        let _ = writeln!(s, "{:.6},{:.12e}", c.alpha, c.coefficient);
    }
    s
}

pub fn run_fit(config: &ExperimentConfig, selectors: &[StateSelector]) -> CliResult<Vec<FitSummary>> {
    let out = &config.output_dir;
    let cal = load_calibration(out)?;
    let states = selectors.iter().map(|s| load_state(out, s)).collect::<CliResult<Vec<_>>>()?;
    let mut summaries = Vec::new();
    for (sel, state) in selectors.iter().zip(&states) {
        let start = Instant::now();
        let outcome = fit(config, &cal, state)?;
        let dir = fit_dir(out, sel);
        write_json(&dir.join("summary.json"), &outcome.summary)?;
        write_json(&dir.join("solution.json"), &outcome.solution)?;
        write(&dir.join("coefficients.csv"), &coefficient_table(&outcome.solution))?;
        write(&dir.join("rho_fdp.json"), &outcome.solution.state.to_json())?;
        write(&dir.join("rho_ml.json"), &outcome.ml_state.to_json())?;
        write(&dir.join("photon_statistics.csv"), &photon_table(&outcome, &state.registered))?;
        write(&dir.join("residuals.csv"), &residual_table(&outcome, state))?;
        let axis = uniform_axis(config.wigner.lo, config.wigner.hi, config.wigner.step);
        write(&dir.join("wigner_fdp.csv"), &wigner(&outcome.solution.state, &axis, &axis).to_csv())?;
        record_time(out, &format!("fit/{sel}"), start.elapsed().as_secs_f64())?;
        summaries.push(outcome.summary);
    }
    Ok(summaries)
}

pub fn mc_inputs(config: &ExperimentConfig, cal: &Calibration, state: &StateRecord) -> CliResult<McInputs> {
    check_binning(cal, state)?;
    let povm = build_binned_povm(&cal.binning, cal.probes.dim, config.detector.effective_efficiency())?;
    Ok(McInputs {
        probe_patterns: cal.patterns.clone(),
        target: state.pattern.clone(),
        amplitudes: cal.probes.amplitudes.clone(),
        dim: cal.probes.dim,
        solver: config.solver.clone(),
        ml: Some(MlComparison { povm, options: config.ml.clone(), eta_bhd: config.detector.eta_bhd }),
        reference: Some(state.registered.padded(cal.probes.dim)?),
    })
}

pub fn run_mc(config: &ExperimentConfig, selectors: &[StateSelector]) -> CliResult<Vec<IntervalReport>> {
    let out = &config.output_dir;
    let cal = load_calibration(out)?;
    let mut reports = Vec::new();
    for sel in selectors {
        let start = Instant::now();
        let state = load_state(out, sel)?;
        let inputs = mc_inputs(config, &cal, &state)?;
        let spec = McSpec { seed: derive_seed(config.seed, &format!("mc/{sel}"), config.mc.seed), ..config.mc.clone() };
        let report = mc_propagate(&inputs, &spec, Execution::Parallel)?;
        let dir = fit_dir(out, sel);
        write(&dir.join("intervals.csv"), &report.to_csv())?;
        write_json(&dir.join("intervals.json"), &report)?;
        record_time(out, &format!("mc/{sel}"), start.elapsed().as_secs_f64())?;
        reports.push(report);
    }
    Ok(reports)
}

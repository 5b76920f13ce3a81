//! Consolidated run report and acceptance checks.

use std::fmt::Write as _;
use std::path::Path;

use fdp_core::fdp::{PSD_TOL, SUM_TOL};
use fdp_core::uncertainty::{IntervalReport, FIDELITY_ML, FIDELITY_REFERENCE};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::selector::StateSelector;
use crate::stages::{fit_dir, state_file, FitSummary, CALIBRATION_FILE, REPORT_JSON, REPORT_TEXT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub state: String,
    pub name: String,
    pub value: f64,
    /// `>= bound` when `at_least`, otherwise `<= bound`.
    pub bound: f64,
    pub at_least: bool,
    pub passed: bool,
}

impl Check {
    fn new(state: &str, name: &str, value: f64, bound: f64, at_least: bool) -> Self {
        let passed = if at_least { value >= bound } else { value <= bound };
        Self { state: state.into(), name: name.into(), value, bound, at_least, passed }
    }

    fn describe(&self) -> String {
        let op = if self.at_least { ">=" } else { "<=" };
        let num = |v: f64| if v != 0.0 && v.abs() < 1e-3 { format!("{v:.3e}") } else { format!("{v:.6}") };
        let verdict = if self.passed { "ok" } else { "VIOLATED" };
        format!("{} {}: {} {op} {} {verdict}", self.state, self.name, num(self.value), num(self.bound))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub summary: FitSummary,
    pub intervals: IntervalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub states: Vec<StateReport>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Lists every missing stage output before reading anything.
fn missing_outputs(config: &ExperimentConfig, selectors: &[StateSelector]) -> Vec<String> {
    let out = &config.output_dir;
    let mut missing = Vec::new();
    if !out.join(CALIBRATION_FILE).exists() {
        missing.push(format!("{} (run `fdp calibrate`)", out.join(CALIBRATION_FILE).display()));
    }
    for sel in selectors {
        let st = state_file(out, sel);
        if !st.exists() {
            missing.push(format!("{} (run `fdp acquire {sel}`)", st.display()));
        }
        let dir = fit_dir(out, sel);
        if !dir.join("summary.json").exists() {
            missing.push(format!("{} (run `fdp fit {sel}`)", dir.join("summary.json").display()));
        }
        if !dir.join("intervals.json").exists() {
            missing.push(format!("{} (run `fdp mc {sel}`)", dir.join("intervals.json").display()));
        }
    }
    missing
}

pub fn build_report(config: &ExperimentConfig) -> CliResult<RunReport> {
    let selectors = config.selectors()?;
    let missing = missing_outputs(config, &selectors);
    if !missing.is_empty() {
        return Err(CliError::Validation(format!("missing stage outputs:\n  {}", missing.join("\n  "))));
    }
    let acc = &config.acceptance;
    let mut states = Vec::new();
    let mut checks = Vec::new();
    for sel in &selectors {
        let dir = fit_dir(&config.output_dir, sel);
        let summary: FitSummary = read(&dir.join("summary.json"))?;
        let intervals: IntervalReport = read(&dir.join("intervals.json"))?;
        let name = sel.to_string();
        checks.push(Check::new(&name, "|sum a - 1|", summary.sum_residual.abs(), SUM_TOL, false));
        checks.push(Check::new(&name, "min eigenvalue", summary.min_eigenvalue, -PSD_TOL, true));
        if let Some(&bound) = acc.min_fidelity_truth.get(&name) {
            checks.push(Check::new(&name, "F(fdp, truth)", summary.fidelity_truth, bound, true));
        }
        if let Some(bound) = acc.min_fidelity_ml {
            checks.push(Check::new(&name, "F(fdp, ml)", summary.fidelity_ml, bound, true));
        }
        if let Some(bound) = acc.min_envelope_fraction {
            checks.push(Check::new(&name, "envelope fraction", summary.envelope_fraction, bound, true));
        }
        if let Some(&bound) = acc.max_wigner_origin.get(&name) {
            checks.push(Check::new(&name, "W(0,0)", summary.wigner_origin, bound, false));
        }
        if intervals.flagged {
            checks.push(Check::new(&name, "failed MC trials", intervals.failed as f64, 0.05 * intervals.n_trials as f64, false));
        }
        states.push(StateReport { summary, intervals });
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(RunReport { seed: config.seed, states, checks, passed })
}

pub fn render(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "master seed {}", report.seed);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<10} {:>18} {:>18} {:>10} {:>10} {:>11} {:>11}", "state", "F(fdp,ml)", "F(fdp,truth)", "envelope", "W(0,0)", "|sum-1|", "min eig");
    for st in &report.states {
        let sm = &st.summary;
        let with_sd = |name: &str, v: f64| match st.intervals.get(name) {
            Some(q) => format!("{v:.4} +/- {:.4}", q.sd),
            None => format!("{v:.4}"),
        };
        let _ = writeln!(
            s,
            "{:<10} {:>18} {:>18} {:>10.4} {:>10.4} {:>11.2e} {:>11.2e}",
            sm.selector,
            with_sd(FIDELITY_ML, sm.fidelity_ml),
            with_sd(FIDELITY_REFERENCE, sm.fidelity_truth),
            sm.envelope_fraction,
            sm.wigner_origin,
            sm.sum_residual.abs(),
            sm.min_eigenvalue
        );
    }
    let _ = writeln!(s);
    for st in &report.states {
        let p = &st.summary.photon_statistics;
        let shown: Vec<String> = p.iter().take(6).enumerate().map(|(n, v)| {
            let sd = st.intervals.get(&format!("P({n})")).map(|q| q.sd).unwrap_or(0.0);
            format!("P({n})={v:.4}({sd:.4})")
        }).collect();
        let _ = writeln!(s, "{:<10} {}", st.summary.selector, shown.join(" "));
    }
    let _ = writeln!(s);
    for c in &report.checks {
        let _ = writeln!(s, "{}", c.describe());
    }
    let _ = writeln!(s, "{}", if report.passed { "all acceptance checks passed" } else { "acceptance checks FAILED" });
    s
}

/// Writes both report files; an acceptance violation is returned as an
/// error after the files are written.
pub fn run_report(config: &ExperimentConfig) -> CliResult<RunReport> {
    let report = build_report(config)?;
    let out = &config.output_dir;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Validation(e.to_string()))?;
    json.push('\n');
    std::fs::write(out.join(REPORT_JSON), json).map_err(CliError::io(out.join(REPORT_JSON)))?;
    std::fs::write(out.join(REPORT_TEXT), render(&report)).map_err(CliError::io(out.join(REPORT_TEXT)))?;
    if !report.passed {
        let failed = report.checks.iter().filter(|c| !c.passed).map(Check::describe).collect();
        return Err(CliError::Acceptance(failed));
    }
    Ok(report)
}

//! Experiment configuration: one TOML file whose tables mirror the core types.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use fdp_core::herald::{SmdSpec, TmsvSpec};
use fdp_core::ml::MlOptions;
use fdp_core::probe::{build_probe_ladder_with, LadderOptions, ProbeSet};
use fdp_core::uncertainty::McSpec;
use fdp_core::{BinningSpec, DetectorModel, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::selector::StateSelector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeLadder {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub count: usize,
    pub include_vacuum: bool,
}

impl Default for ProbeLadder {
    fn default() -> Self {
        Self { alpha_min: 0.17, alpha_max: 2.24, count: 48, include_vacuum: false }
    }
}

/// Pulses per pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pulses {
    pub probe: usize,
    pub state: usize,
}

impl Default for Pulses {
    fn default() -> Self {
        Self { probe: 1_000_000, state: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WignerAxes {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for WignerAxes {
    fn default() -> Self {
        Self { lo: -5.0, hi: 5.0, step: 0.1 }
    }
}

/// Thresholds checked by the report stage. Keys are state selectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Acceptance {
    /// Lower bound on F(fdp, true registered state), simulation only.
    pub min_fidelity_truth: BTreeMap<String, f64>,
    /// Lower bound on F(fdp, loss-adjusted ml) for every state.
    pub min_fidelity_ml: Option<f64>,
    /// Residual envelope is `envelope_factor * sqrt(N_n) / K`.
    pub envelope_factor: f64,
    pub min_envelope_fraction: Option<f64>,
    /// Upper bound on W(0, 0) of the fitted state.
    pub max_wigner_origin: BTreeMap<String, f64>,
}

impl Default for Acceptance {
    fn default() -> Self {
        Self {
            min_fidelity_truth: [("herald:1", 0.98), ("herald:2", 0.96), ("herald:3", 0.93)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            min_fidelity_ml: Some(0.92),
            envelope_factor: 3.0,
            min_envelope_fraction: Some(0.99),
            max_wigner_origin: BTreeMap::from([("herald:1".to_string(), -0.05)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Fock cutoff for probes, states and estimates.
    pub dim: usize,
    /// States processed by `fit`, `mc` and `report`.
    pub states: Vec<String>,
    pub probes: ProbeLadder,
    pub binning: BinningSpec,
    pub detector: DetectorModel,
    pub pulses: Pulses,
    pub tmsv: TmsvSpec,
    pub smd: SmdSpec,
    pub solver: SolverOptions,
    pub ml: MlOptions,
    pub mc: McSpec,
    pub wigner: WignerAxes,
    pub acceptance: Acceptance,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            output_dir: PathBuf::from("fdp-run"),
            dim: 20,
            states: vec!["herald:1".into(), "herald:2".into(), "herald:3".into()],
            probes: ProbeLadder::default(),
            binning: BinningSpec::default(),
            detector: DetectorModel::default(),
            pulses: Pulses::default(),
            tmsv: TmsvSpec::default(),
            smd: SmdSpec::default(),
            solver: SolverOptions::default(),
            ml: MlOptions::default(),
            mc: McSpec::default(),
            wigner: WignerAxes::default(),
            acceptance: Acceptance::default(),
        }
    }
}

/// One validation finding, located in the source text when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub line: Option<usize>,
    pub section: String,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        let path = if self.section.is_empty() { self.key.clone() } else { format!("{}.{}", self.section, self.key) };
        write!(f, "{path}: {}", self.message)
    }
}

fn issues_error(issues: &[Issue]) -> CliError {
    let lines: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
    CliError::Validation(format!("invalid configuration:\n  {}", lines.join("\n  ")))
}

/// 1-based line of `key` inside `[section]` (top level when empty), falling
/// back to the section header.
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            let name = line.split('=').next().unwrap_or("").trim().trim_matches('"');
            if line.contains('=') && name == key {
                return Some(i + 1);
            }
        }
    }
    header
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl ExperimentConfig {
    /// Parses and validates. Errors name the offending line.
    pub fn parse(text: &str) -> CliResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            let msg = e.message().to_string();
            match line {
                Some(l) => CliError::Validation(format!("invalid configuration:\n  line {l}: {msg}")),
                None => CliError::Validation(format!("invalid configuration:\n  {msg}")),
            }
        })?;
        let mut issues = config.validate();
        for issue in &mut issues {
            issue.line = locate(text, &issue.section, &issue.key);
        }
        if issues.is_empty() {
            Ok(config)
        } else {
            Err(issues_error(&issues))
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Validates an in-memory config, without line information.
    pub fn check(&self) -> CliResult<()> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues_error(&issues))
        }
    }

    pub fn validate(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let mut push = |section: &str, key: &str, message: String| {
            out.push(Issue { line: None, section: section.into(), key: key.into(), message });
        };
        if self.dim == 0 {
            push("", "dim", "cutoff must be at least 1".into());
        }
        if self.seed > i64::MAX as u64 {
            push("", "seed", format!("must not exceed {}", i64::MAX));
        }
        if self.states.is_empty() {
            push("", "states", "list at least one state selector".into());
        }
        for s in &self.states {
            if let Err(e) = s.parse::<StateSelector>() {
                push("", "states", e.to_string());
            }
        }

        let p = &self.probes;
        if p.count < 2 {
            push("probes", "count", format!("{} probes; at least 2 are needed", p.count));
        } else if !(p.alpha_min < p.alpha_max) {
            push("probes", "alpha_max", format!("range [{}, {}] is empty", p.alpha_min, p.alpha_max));
        } else if !(p.alpha_min >= 0.0) {
            push("probes", "alpha_min", "must be >= 0".into());
        } else if self.dim > 0 {
            if let Err(e) = self.probe_set() {
                push("probes", "alpha_max", e.to_string());
            }
        }

        let b = &self.binning;
        if b.n_bins < 2 {
            push("binning", "n_bins", format!("{} bins; at least 2 are needed", b.n_bins));
        } else if !(b.lo < b.hi) || !b.lo.is_finite() || !b.hi.is_finite() {
            push("binning", "hi", format!("range [{}, {}) is empty", b.lo, b.hi));
        }

        let d = &self.detector;
        if !(d.eta_bhd > 0.0 && d.eta_bhd <= 1.0) {
            push("detector", "eta_bhd", format!("{} outside (0, 1]", d.eta_bhd));
        }
        if !(d.gain > 0.0) {
            push("detector", "gain", format!("{} must be positive", d.gain));
        }
        if !(d.electronic_noise_sd >= 0.0) {
            push("detector", "electronic_noise_sd", "must be >= 0".into());
        }
        if d.drift.is_some() {
            if let Err(e) = d.validate() {
                push("detector.drift", "period", e.to_string());
            }
        }

        if self.pulses.probe == 0 {
            push("pulses", "probe", "must be at least 1".into());
        }
        if self.pulses.state == 0 {
            push("pulses", "state", "must be at least 1".into());
        }

        if !(0.0..1.0).contains(&self.tmsv.gamma) {
            push("tmsv", "gamma", format!("{} outside [0, 1)", self.tmsv.gamma));
        } else if let Err(e) = self.tmsv.validate() {
            push("tmsv", "dim", e.to_string());
        }
        if self.tmsv.dim > self.dim {
            push("tmsv", "dim", format!("{} exceeds the working cutoff {}", self.tmsv.dim, self.dim));
        }
        if let Err(e) = self.smd.validate() {
            push("smd", "splitting", e.to_string());
        }

        let s = &self.solver;
        if s.max_iterations == 0 {
            push("solver", "max_iterations", "must be at least 1".into());
        }
        if !(s.objective_tol > 0.0) {
            push("solver", "objective_tol", "must be positive".into());
        }
        if !(s.rank_tol > 0.0 && s.rank_tol < 1.0) {
            push("solver", "rank_tol", "must lie in (0, 1)".into());
        }
        if self.ml.max_iterations == 0 {
            push("ml", "max_iterations", "must be at least 1".into());
        }
        if !(self.ml.tolerance > 0.0) {
            push("ml", "tolerance", "must be positive".into());
        }
        if !(self.ml.probability_floor > 0.0) {
            push("ml", "probability_floor", "must be positive".into());
        }
        if self.mc.n_trials < 2 {
            push("mc", "n_trials", format!("{} trials; at least 2 are needed", self.mc.n_trials));
        }
        if !(self.mc.alpha_rel_error >= 0.0) || !self.mc.alpha_rel_error.is_finite() {
            push("mc", "alpha_rel_error", "must be finite and >= 0".into());
        }

        let w = &self.wigner;
        if !(w.step > 0.0) {
            push("wigner", "step", "must be positive".into());
        } else if !(w.lo <= w.hi) {
            push("wigner", "hi", "must not be below lo".into());
        }

        let a = &self.acceptance;
        for (section, map) in [
            ("acceptance.min_fidelity_truth", &a.min_fidelity_truth),
            ("acceptance.max_wigner_origin", &a.max_wigner_origin),
        ] {
            for key in map.keys() {
                if let Err(e) = key.parse::<StateSelector>() {
                    push(section, key, e.to_string());
                }
            }
        }
        for (key, v) in &a.min_fidelity_truth {
            if !(0.0..=1.0).contains(v) {
                push("acceptance.min_fidelity_truth", key, format!("{v} outside [0, 1]"));
            }
        }
        if !(a.envelope_factor > 0.0) {
            push("acceptance", "envelope_factor", "must be positive".into());
        }
        out
    }

    pub fn probe_set(&self) -> fdp_core::Result<ProbeSet> {
        let p = &self.probes;
        build_probe_ladder_with(
            p.alpha_min,
            p.alpha_max,
            p.count,
            self.dim,
            LadderOptions { include_vacuum: p.include_vacuum },
        )
    }

    pub fn selectors(&self) -> CliResult<Vec<StateSelector>> {
        self.states.iter().map(|s| s.parse()).collect()
    }
}

use std::path::Path;
use std::process::Command;

use fdp_cli::stages::{acquire, calibrate, fit, load_calibration, run_acquire, run_calibrate, run_fit, StateRecord};
use fdp_cli::{CliError, ExperimentConfig, StateSelector};
use fdp_core::{fock_state, BinningSpec, Execution, FdpError};

fn fdp(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fdp")).current_dir(dir).args(args).output().expect("binary runs")
}

fn mini(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("mini.toml");
    let text = format!(
        "seed = 3\noutput_dir = \"run\"\nstates = [\"herald:1\"]\n{extra}\n[probes]\ncount = 2\n\n[pulses]\nprobe = 20000\nstate = 20000\n\n[mc]\nn_trials = 3\n"
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn small_config(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.output_dir = out.to_path_buf();
    c.probes.count = 12;
    c.pulses.probe = 200_000;
    c.pulses.state = 200_000;
    c
}

#[test]
fn defaults_print_a_loadable_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fdp(tmp.path(), &["defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = ExperimentConfig::parse(&text).unwrap();
    assert_eq!(parsed, ExperimentConfig::default());
    assert_eq!(parsed.probes.count, 48);
    assert_eq!(parsed.pulses.probe, 1_000_000);
    assert_eq!(parsed.binning.n_bins, 151);
}

#[test]
fn invalid_config_exits_one_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "seed = 1\n[binning]\nn_bins = 1\nlo = -6.0\nhi = 6.0\n").unwrap();
    let out = fdp(tmp.path(), &["--config", "bad.toml", "calibrate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("binning.n_bins"), "{err}");
}

#[test]
fn mini_calibration_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = mini(tmp.path(), "");
    let cfg = cfg.to_str().unwrap();
    assert!(fdp(tmp.path(), &["--config", cfg, "calibrate"]).status.success());
    let first = std::fs::read(tmp.path().join("run/calibration.json")).unwrap();
    let cal = load_calibration(&tmp.path().join("run")).unwrap();
    assert_eq!(cal.patterns.len(), 2);
    assert_eq!(cal.probes.amplitudes, vec![0.17, 2.24]);
    assert!(cal.patterns.iter().all(|p| p.total == 20_000 && p.counts.len() == 151));
    assert!(fdp(tmp.path(), &["--config", cfg, "calibrate"]).status.success());
    assert_eq!(first, std::fs::read(tmp.path().join("run/calibration.json")).unwrap());

    assert!(fdp(tmp.path(), &["--config", cfg, "--seed", "4", "--out", "other", "--probes", "3", "calibrate"]).status.success());
    let other = load_calibration(&tmp.path().join("other")).unwrap();
    assert_eq!(other.patterns.len(), 3);
    assert_ne!(other.seed, cal.seed);
}

#[test]
fn unknown_selector_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = mini(tmp.path(), "");
    let out = fdp(tmp.path(), &["--config", cfg.to_str().unwrap(), "acquire", "squeezed:2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown state selector"));
}

#[test]
fn report_lists_missing_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = mini(tmp.path(), "");
    let out = fdp(tmp.path(), &["--config", cfg.to_str().unwrap(), "report"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    for stage in ["fdp calibrate", "fdp acquire herald:1", "fdp fit herald:1", "fdp mc herald:1"] {
        assert!(err.contains(stage), "{err}");
    }
}

#[test]
fn acceptance_violation_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    // two probes cannot reach these bounds
    let cfg = mini(tmp.path(), "");
    let cfg = cfg.to_str().unwrap();
    for stage in [vec!["calibrate"], vec!["acquire", "herald:1"], vec!["fit"], vec!["mc"]] {
        let mut args = vec!["--config", cfg];
        args.extend(stage);
        let out = fdp(tmp.path(), &args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = fdp(tmp.path(), &["--config", cfg, "report"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(tmp.path().join("run/report.json").exists());
    assert!(String::from_utf8(out.stdout).unwrap().contains("VIOLATED"));

    let relaxed = mini(
        tmp.path(),
        "\n[acceptance]\nmin_fidelity_truth = {}\nmax_wigner_origin = {}\nmin_fidelity_ml = 0.0\nmin_envelope_fraction = 0.0\n",
    );
    let out = fdp(tmp.path(), &["--config", relaxed.to_str().unwrap(), "report"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solver_errors_map_to_exit_two() {
    assert_eq!(CliError::from(FdpError::Solver("x".into())).exit_code(), 2);
    assert_eq!(CliError::from(FdpError::Invalid("x".into())).exit_code(), 1);
    assert_eq!(CliError::Acceptance(vec![]).exit_code(), 3);
}

#[test]
fn more_clicks_broaden_the_pattern() {
    let tmp = tempfile::tempdir().unwrap();
    let c = small_config(tmp.path());
    let one = acquire(&c, &StateSelector::Herald(1)).unwrap();
    let three = acquire(&c, &StateSelector::Herald(3)).unwrap();
    let vac = acquire(&c, &StateSelector::Vacuum).unwrap();
    assert!(three.pattern.variance() > one.pattern.variance());
    assert!(one.pattern.variance() > vac.pattern.variance());
    assert!(one.simulation_only);
}

#[test]
fn single_click_fit_has_modal_one_photon() {
    let tmp = tempfile::tempdir().unwrap();
    let c = small_config(tmp.path());
    run_calibrate(&c).unwrap();
    run_acquire(&c, &StateSelector::Herald(1)).unwrap();
    let s = run_fit(&c, &[StateSelector::Herald(1)]).unwrap().remove(0);
    let p = &s.photon_statistics;
    let modal = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    assert_eq!(modal, 1, "{p:?}");
    for f in ["summary.json", "coefficients.csv", "rho_fdp.json", "rho_ml.json", "photon_statistics.csv", "residuals.csv", "wigner_fdp.csv"] {
        assert!(tmp.path().join("fits/herald-1").join(f).exists(), "{f}");
    }
}

#[test]
fn probe_pattern_as_target_gives_one_hot() {
    let tmp = tempfile::tempdir().unwrap();
    let c = small_config(tmp.path());
    let cal = calibrate(&c, Execution::Parallel).unwrap();
    let probes = c.probe_set().unwrap();
    let state = StateRecord {
        selector: "fock:0".into(),
        pulses: c.pulses.probe,
        seed: 0,
        pattern: cal.patterns[5].clone(),
        simulation_only: true,
        prepared: probes.states[5].clone(),
        registered: probes.states[5].clone(),
    };
    let outcome = fit(&c, &cal, &state).unwrap();
    for (i, e) in outcome.solution.coefficients.iter().enumerate() {
        let want = if i == 5 { 1.0 } else { 0.0 };
        assert!((e.coefficient - want).abs() < 1e-6, "{i}: {}", e.coefficient);
    }
}

#[test]
fn binning_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let c = small_config(tmp.path());
    let cal = calibrate(&c, Execution::Parallel).unwrap();
    let mut other = c.clone();
    other.binning = BinningSpec::new(101, -6.0, 6.0).unwrap();
    let state = acquire(&other, &StateSelector::Vacuum).unwrap();
    match fit(&c, &cal, &state) {
        Err(CliError::Validation(m)) => assert!(m.contains("binning mismatch")),
        other => panic!("expected a binning error, got {other:?}"),
    }
}

#[test]
fn state_files_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("two.json");
    std::fs::write(&path, fock_state(2, 6).unwrap().to_json()).unwrap();
    let c = small_config(tmp.path());
    let sel: StateSelector = format!("file:{}", path.display()).parse().unwrap();
    let rec = acquire(&c, &sel).unwrap();
    assert_eq!(rec.prepared.dim(), c.dim);
    assert!((rec.prepared.get(2, 2).re - 1.0).abs() < 1e-15);
}

#[path = "support/oracles.rs"]
mod oracles;

use fdp_core::fdp::{noise_envelope, SolverPath, PSD_TOL, SUM_TOL};
use fdp_core::fock::C64;
use fdp_core::homodyne::bin_probabilities;
use fdp_core::probe::phav_density;
use fdp_core::{
    acquire_pattern, assemble_state, fdp_fit, objective, residuals, BinningSpec, DensityMatrix, DetectorModel,
    FdpProblem, FdpSolution, SolverOptions,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact_patterns(states: &[DensityMatrix], b: &BinningSpec) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = states.iter().map(|s| bin_probabilities(s, b).unwrap()).collect();
    DMatrix::from_fn(rows.len(), b.n_bins, |i, j| rows[i][j])
}

fn small_ladder(amps: &[f64], dim: usize) -> Vec<DensityMatrix> {
    amps.iter().map(|&a| phav_density(a, dim).unwrap()).collect()
}

fn assert_certified(problem: &FdpProblem, s: &FdpSolution) {
    assert!(s.sum_residual.abs() <= SUM_TOL, "sum residual {}", s.sum_residual);
    assert!((s.coefficients.sum() - 1.0).abs() <= SUM_TOL);
    assert!(s.min_eigenvalue >= -PSD_TOL, "min eigenvalue {}", s.min_eigenvalue);
    assert!((objective(problem, &s.coefficients) - s.objective).abs() < 1e-15);
}

#[test]
fn exact_probe_pattern_recovers_one_hot() {
    let b = BinningSpec::new(61, -6.0, 6.0).unwrap();
    let states = small_ladder(&[0.3, 0.7, 1.1, 1.5], 14);
    let f = exact_patterns(&states, &b);
    for xi in 0..4 {
        let problem = FdpProblem::new(f.clone(), f.row(xi).transpose(), states.clone()).unwrap();
        let s = fdp_fit(&problem, &SolverOptions::default()).unwrap();
        assert_certified(&problem, &s);
        for (j, a) in s.coefficients.iter().enumerate() {
            let want = if j == xi { 1.0 } else { 0.0 };
            assert!((a - want).abs() < 1e-6, "probe {xi}: a = {:?}", s.coefficients);
        }
    }
}

#[test]
fn even_mixture_is_reproduced() {
    let b = BinningSpec::new(61, -6.0, 6.0).unwrap();
    let states = small_ladder(&[0.3, 0.7, 1.1, 1.5], 14);
    let f = exact_patterns(&states, &b);
    let target = (f.row(0) + f.row(2)).transpose() * 0.5;
    let problem = FdpProblem::new(f, target, states.clone()).unwrap();
    let s = fdp_fit(&problem, &SolverOptions::default()).unwrap();
    assert!(s.objective <= 1e-12);
    let avg = assemble_state(&[0.5, 0.0, 0.5, 0.0], &states).unwrap();
    assert!((s.state.elements() - avg.elements()).camax() < 1e-6);
}

#[test]
fn objective_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let states = small_ladder(&[0.2, 0.5, 0.9, 1.3, 1.8], 20);
    let f = DMatrix::from_fn(5, 30, |_, _| rng.random::<f64>());
    let f = DMatrix::from_fn(5, 30, |i, j| f[(i, j)] / f.row(i).sum());
    let t = DVector::from_fn(30, |_, _| rng.random::<f64>());
    let t = &t / t.sum();
    let problem = FdpProblem::new(f.clone(), t.clone(), states).unwrap();
    for _ in 0..10 {
        let a = DVector::from_fn(5, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        assert!((objective(&problem, &a) - oracles::brute_objective(&f, &t, &a)).abs() < 1e-12);
    }
    let zero = DVector::zeros(5);
    assert!((objective(&problem, &zero) - t.norm_squared()).abs() < 1e-15);
}

#[test]
fn interior_optimum_equals_normal_equations() {
    // a strictly positive mixture plus a small perturbation keeps the
    // sum-constrained least-squares optimum inside the positivity region
    let b = BinningSpec::new(61, -6.0, 6.0).unwrap();
    let states = small_ladder(&[0.3, 0.7, 1.1, 1.5, 1.9], 20);
    let f = exact_patterns(&states, &b);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let weights = DVector::from_vec(vec![0.1, 0.3, 0.2, 0.25, 0.15]);
    let noise = DVector::from_fn(b.n_bins, |_, _| 1e-4 * (rng.random::<f64>() - 0.5));
    let mut target = f.tr_mul(&weights) + noise;
    let total = target.sum();
    target /= total;
    let problem = FdpProblem::new(f.clone(), target.clone(), states).unwrap();
    let closed = oracles::sum_constrained_least_squares(&f, &target);
    let s = fdp_fit(&problem, &SolverOptions::default()).unwrap();
    let gap = s.objective - oracles::brute_objective(&f, &target, &closed);
    assert!(gap.abs() <= 1e-10, "gap {gap:e}");
    assert!((&s.coefficients - &closed).amax() < 1e-6);
}

fn noisy_instance(m: usize, seed: u64, k: usize) -> FdpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = BinningSpec::default();
    let mut amps: Vec<f64> = (0..m).map(|_| 0.1 + 2.1 * rng.random::<f64>()).collect();
    amps.sort_by(f64::total_cmp);
    amps.dedup();
    let states = small_ladder(&amps, 20);
    let det = DetectorModel::default().for_registered_probes();
    let patterns: Vec<_> =
        states.iter().enumerate().map(|(i, s)| acquire_pattern(s, &det, k, &b, seed * 1000 + i as u64).unwrap()).collect();
    let weights: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let unknown = DensityMatrix::from_diagonal(&p).unwrap();
    let target = acquire_pattern(&unknown, &DetectorModel::default(), k, &b, seed * 1000 + 999).unwrap();
    FdpProblem::from_patterns(&patterns, &target, states).unwrap()
}

#[test]
fn randomized_suite_routes_agree() {
    for seed in 0..20u64 {
        let m = 6 + (seed as usize * 7) % 43;
        let problem = noisy_instance(m, seed + 10, 20_000);
        let s = fdp_fit(&problem, &SolverOptions::default()).unwrap();
        assert_certified(&problem, &s);
        let cross = s.cross_check_objective.unwrap();
        assert!((s.objective - cross).abs() <= 1e-8, "seed {seed}: {} vs {cross}", s.objective);
        assert!(s.objective <= cross + 1e-10);
        // the estimate is diagonal because every probe is
        assert_eq!(s.state.off_diagonal_mass(), 0.0);
    }
}

#[test]
fn permuting_probes_permutes_coefficients() {
    let problem = noisy_instance(10, 3, 50_000);
    let s = fdp_fit(&problem, &SolverOptions::default()).unwrap();
    let m = problem.n_probes();
    let perm: Vec<usize> = (0..m).rev().collect();
    let f = DMatrix::from_fn(m, problem.n_bins(), |i, j| problem.probe_patterns[(perm[i], j)]);
    let states: Vec<_> = perm.iter().map(|&i| problem.probe_states[i].clone()).collect();
    let permuted = FdpProblem::new(f, problem.target.clone(), states).unwrap();
    let sp = fdp_fit(&permuted, &SolverOptions::default()).unwrap();
    assert!((s.objective - sp.objective).abs() <= 1e-12);
    let scale = s.coefficients.amax().max(1.0);
    for (i, &j) in perm.iter().enumerate() {
        assert!((sp.coefficients[i] - s.coefficients[j]).abs() <= 1e-7 * scale);
    }
    assert!((s.state.elements() - sp.state.elements()).camax() <= 1e-8);
}

#[test]
fn empty_bin_column_changes_nothing() {
    let problem = noisy_instance(8, 4, 50_000);
    let s = fdp_fit(&problem, &SolverOptions::default()).unwrap();
    let (m, n) = problem.probe_patterns.shape();
    let f = problem.probe_patterns.clone().insert_column(n, 0.0);
    let t = problem.target.clone().insert_row(n, 0.0);
    let padded = FdpProblem::new(f, t, problem.probe_states.clone()).unwrap();
    let sp = fdp_fit(&padded, &SolverOptions::default()).unwrap();
    assert_eq!(sp.coefficients.len(), m);
    assert!((s.objective - sp.objective).abs() <= 1e-14);
    assert!((&s.coefficients - &sp.coefficients).amax() <= 1e-9 * s.coefficients.amax().max(1.0));
}

#[test]
fn residual_identities() {
    let b = BinningSpec::new(61, -6.0, 6.0).unwrap();
    let states = small_ladder(&[0.3, 0.7, 1.1, 1.5], 14);
    let f = exact_patterns(&states, &b);
    let exact = FdpProblem::new(f.clone(), f.row(1).transpose(), states).unwrap();
    let s = fdp_fit(&exact, &SolverOptions::default()).unwrap();
    assert!(residuals(&exact, &s).iter().all(|r| r.abs() < 1e-9));

    let noisy = noisy_instance(12, 5, 50_000);
    let s = fdp_fit(&noisy, &SolverOptions::default()).unwrap();
    let r = residuals(&noisy, &s);
    assert!(r.iter().sum::<f64>().abs() <= 1e-10);
    assert_eq!(r.len(), noisy.n_bins());
}

#[test]
fn envelope_counts_empty_bins_as_one_event() {
    let b = BinningSpec::new(3, -1.0, 1.0).unwrap();
    let p = fdp_core::DataPattern::from_counts(b, vec![0, 100, 4]).unwrap();
    let e = noise_envelope(&p, 3.0);
    assert_eq!(e, vec![3.0 / 104.0, 30.0 / 104.0, 6.0 / 104.0]);
}

#[test]
fn general_path_agrees_with_diagonal_reduction() {
    let b = BinningSpec::new(61, -6.0, 6.0).unwrap();
    let states = small_ladder(&[0.2, 0.6, 1.0, 1.4, 1.8], 16);
    let problem = {
        let f = exact_patterns(&states, &b);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let one = fdp_core::loss_channel(&fdp_core::fock_state(1, 16).unwrap(), 0.8).unwrap();
        let mut t = DVector::from_vec(bin_probabilities(&one, &b).unwrap());
        t.iter_mut().for_each(|v| *v *= 1.0 + 0.01 * (rng.random::<f64>() - 0.5));
        let total = t.sum();
        FdpProblem::new(f, t / total, states).unwrap()
    };
    let diag = fdp_fit(&problem, &SolverOptions { path: SolverPath::Diagonal, ..Default::default() }).unwrap();
    let general = fdp_fit(&problem, &SolverOptions { path: SolverPath::General, ..Default::default() }).unwrap();
    assert_certified(&problem, &general);
    assert!((diag.objective - general.objective).abs() <= 1e-8, "{} vs {}", diag.objective, general.objective);
    let cross = general.cross_check_objective.unwrap();
    assert!((general.objective - cross).abs() <= 1e-8);
}

#[test]
fn general_path_handles_coherent_probes() {
    // pure probes with coherences in a 3-level space
    let dim = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let states: Vec<DensityMatrix> = (0..9)
        .map(|_| {
            let v: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            DensityMatrix::pure(&v.iter().map(|z| z / norm).collect::<Vec<_>>()).unwrap()
        })
        .collect();
    let b = BinningSpec::new(41, -5.0, 5.0).unwrap();
    let f = exact_patterns(&states, &b);
    let target = (f.row(0) * 0.6 + f.row(4) * 0.4).transpose();
    let problem = FdpProblem::new(f, target, states).unwrap();
    assert!(!problem.is_diagonal());
    let s = fdp_fit(&problem, &SolverOptions::default()).unwrap();
    assert_certified(&problem, &s);
    assert!(s.objective <= 1e-10, "objective {}", s.objective);
    assert!((s.objective - s.cross_check_objective.unwrap()).abs() <= 1e-8);
    assert!(fdp_fit(&problem, &SolverOptions { path: SolverPath::Diagonal, ..Default::default() }).is_err());
}

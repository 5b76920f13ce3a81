#[path = "support/oracles.rs"]
mod oracles;

use fdp_core::fock::{wigner_point, CMatrix, C64};
use fdp_core::herald::{click_probability, SmdSpec};
use fdp_core::homodyne::quadrature_pdf;
use fdp_core::{fock_state, loss_channel, phav_density, DensityMatrix};

fn random_state(dim: usize, seed: u64) -> DensityMatrix {
    // deterministic pseudo-random mixed state G G^dag / Tr
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let g = CMatrix::from_fn(dim, dim, |_, _| C64::new(next(), next()));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m.map(|z| z / tr)).unwrap()
}

#[test]
fn loss_channel_matches_beam_splitter() {
    for dim in 1..=4 {
        for (seed, eta) in [(1, 0.0), (2, 0.3), (3, 0.5), (4, 0.85), (5, 1.0)] {
            let rho = random_state(dim, seed + 10 * dim as u64);
            let ours = loss_channel(&rho, eta).unwrap();
            let oracle = oracles::beam_splitter_loss(rho.elements(), eta);
            let err = (ours.elements() - &oracle).camax();
            assert!(err <= 1e-12, "dim {dim} eta {eta}: {err:e}");
        }
    }
}

#[test]
fn loss_examples_against_oracle() {
    let one = fock_state(1, 4).unwrap();
    let out = oracles::beam_splitter_loss(one.elements(), 0.5);
    assert!((out[(0, 0)].re - 0.5).abs() < 1e-12 && (out[(1, 1)].re - 0.5).abs() < 1e-12);
    let two = fock_state(2, 4).unwrap();
    let out = oracles::beam_splitter_loss(two.elements(), 0.5);
    for (n, want) in [0.25, 0.5, 0.25].iter().enumerate() {
        assert!((out[(n, n)].re - want).abs() < 1e-12);
    }
}

#[test]
fn wigner_matches_displaced_parity() {
    let points = [(0.0, 0.0), (0.7, -0.3), (-1.2, 0.9), (2.0, 1.5), (0.1, -2.2)];
    for dim in [1, 2, 5, 10] {
        let rho = random_state(dim, 77 + dim as u64);
        for &(x, p) in &points {
            let ours = wigner_point(&rho, x, p);
            let oracle = oracles::displaced_parity_wigner(rho.elements(), x, p);
            assert!((ours - oracle).abs() < 1e-10, "dim {dim} at ({x},{p}): {ours} vs {oracle}");
        }
    }
    let vac = oracles::displaced_parity_wigner(fock_state(0, 3).unwrap().elements(), 0.0, 0.0);
    assert!((vac - 1.0 / std::f64::consts::PI).abs() < 1e-12);
    let one = oracles::displaced_parity_wigner(fock_state(1, 3).unwrap().elements(), 0.0, 0.0);
    assert!((one + 1.0 / std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn wigner_marginal_is_quadrature_pdf() {
    let rho = random_state(8, 4242);
    for x in [-2.5, -1.0, 0.0, 0.4, 1.7, 3.0] {
        let marginal = oracles::simpson(|p| wigner_point(&rho, x, p), -9.0, 9.0, 1800);
        let pdf = quadrature_pdf(&rho, x);
        assert!((marginal - pdf).abs() < 1e-4, "x={x}: {marginal} vs {pdf}");
    }
}

#[test]
fn click_probability_matches_enumeration() {
    let smds = [
        SmdSpec::symmetric(3),
        SmdSpec { n_apds: 3, splitting: vec![0.5, 0.3, 0.2], apd_efficiency: 0.7, dark_count_prob: 0.01 },
        SmdSpec { n_apds: 3, splitting: vec![0.25, 0.25, 0.5], apd_efficiency: 0.9, dark_count_prob: 0.0 },
    ];
    for smd in &smds {
        for m in 0..=4 {
            for k in 0..=3 {
                let ours = click_probability(m, k, smd).unwrap();
                let oracle = oracles::brute_force_clicks(m, k, &smd.splitting, smd.apd_efficiency, smd.dark_count_prob);
                assert!((ours - oracle).abs() <= 1e-14, "m={m} k={k}: {ours} vs {oracle}");
            }
        }
    }
    let two_two = oracles::brute_force_clicks(2, 2, &[1.0 / 3.0; 3], 1.0, 0.0);
    assert!((two_two - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn phav_matches_phase_average() {
    for alpha in [0.17, 1.0, 2.24] {
        let ours = phav_density(alpha, 20).unwrap();
        let oracle = oracles::phase_averaged_coherent(alpha, 20, 10_000);
        let err = (ours.elements() - &oracle).camax();
        assert!(err < 1e-12, "alpha {alpha}: {err:e}");
    }
    let p = phav_density(1.0, 20).unwrap();
    let e = (-1.0f64).exp();
    assert!((p.get(0, 0).re - e).abs() < 1e-9);
    assert!((p.get(1, 1).re - e).abs() < 1e-9);
    assert!((p.get(2, 2).re - e / 2.0).abs() < 1e-9);
}

#[test]
fn quadrature_pdf_moments_match_operator_algebra() {
    let mut states = vec![fock_state(0, 6).unwrap(), fock_state(1, 6).unwrap(), phav_density(1.3, 20).unwrap()];
    let s = 0.5f64.sqrt();
    states.push(DensityMatrix::pure(&[C64::new(s, 0.0), C64::new(0.0, s), C64::new(0.0, 0.0)]).unwrap());
    states.push(random_state(7, 99));
    for rho in &states {
        let norm = oracles::simpson(|x| quadrature_pdf(rho, x), -12.0, 12.0, 4000);
        let mean = oracles::simpson(|x| x * quadrature_pdf(rho, x), -12.0, 12.0, 4000);
        let second = oracles::simpson(|x| x * x * quadrature_pdf(rho, x), -12.0, 12.0, 4000);
        let (m_ref, s_ref) = oracles::analytic_moments(rho.elements());
        assert!((norm - 1.0).abs() < 1e-8, "norm {norm}");
        assert!((mean - m_ref).abs() < 1e-8, "mean {mean} vs {m_ref}");
        assert!((second - s_ref).abs() < 1e-8, "second {second} vs {s_ref}");
    }
    let one = fock_state(1, 4).unwrap();
    let var = oracles::simpson(|x| x * x * quadrature_pdf(&one, x), -12.0, 12.0, 4000);
    assert!((var - 1.5).abs() < 1e-8);
}

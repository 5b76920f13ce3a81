//! Independent reference computations. Nothing here calls into the library's
//! numerical kernels; each oracle takes a different route to the same answer.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};

type C64 = Complex<f64>;

/// Annihilation operator on `0..dim`.
pub fn annihilation(dim: usize) -> DMatrix<C64> {
    DMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { C64::new(0.0, 0.0) })
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Loss by mixing with vacuum on a beam splitter of transmissivity `eta`
/// and tracing out the reflected mode. Exact for total photon number below
/// `dim` because the mixing unitary conserves it.
pub fn beam_splitter_loss(rho: &DMatrix<C64>, eta: f64) -> DMatrix<C64> {
    let d = rho.nrows();
    let a = annihilation(d);
    let id = DMatrix::<C64>::identity(d, d);
    let a1 = kron(&a, &id);
    let b1 = kron(&id, &a);
    let theta = eta.sqrt().acos();
    let gen = (a1.adjoint() * &b1 - a1 * b1.adjoint()) * C64::new(theta, 0.0);
    let u = gen.exp();
    let mut env = DMatrix::<C64>::zeros(d, d);
    env[(0, 0)] = C64::new(1.0, 0.0);
    let joint = &u * kron(rho, &env) * u.adjoint();
    DMatrix::from_fn(d, d, |i, j| (0..d).map(|k| joint[(i * d + k, j * d + k)]).sum())
}

/// `W(x, p) = (1/pi) Tr[rho D(alpha) P D(alpha)^dag]`, `alpha = (x + i p)/sqrt 2`,
/// with the displacement exponentiated in a much larger space.
pub fn displaced_parity_wigner(rho: &DMatrix<C64>, x: f64, p: f64) -> f64 {
    let d = rho.nrows();
    let big = 80;
    let a = annihilation(big);
    let alpha = C64::new(x, p) / 2f64.sqrt();
    let gen = a.adjoint() * alpha - &a * alpha.conj();
    let disp = gen.exp();
    let parity = DMatrix::<C64>::from_fn(big, big, |i, j| {
        if i == j { C64::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0) } else { C64::new(0.0, 0.0) }
    });
    let op = &disp * parity * disp.adjoint();
    let mut tr = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            tr += rho[(i, j)] * op[(j, i)];
        }
    }
    tr.re / std::f64::consts::PI
}

/// Enumerates every photon routing, every per-photon detection outcome and
/// every dark-count pattern.
pub fn brute_force_clicks(m: usize, k: usize, splitting: &[f64], eff: f64, dark: f64) -> f64 {
    let n = splitting.len();
    let mut total = 0.0;
    let routes = n.pow(m as u32);
    for route in 0..routes {
        let mut r = route;
        let mut apd = Vec::with_capacity(m);
        let mut p_route = 1.0;
        for _ in 0..m {
            apd.push(r % n);
            p_route *= splitting[r % n];
            r /= n;
        }
        for det in 0..(1usize << m) {
            let mut p_det = 1.0;
            let mut lit = vec![false; n];
            for (ph, &target) in apd.iter().enumerate() {
                if det >> ph & 1 == 1 {
                    p_det *= eff;
                    lit[target] = true;
                } else {
                    p_det *= 1.0 - eff;
                }
            }
            for darks in 0..(1usize << n) {
                let mut p_dark = 1.0;
                let mut clicks = 0;
                for (j, &l) in lit.iter().enumerate() {
                    let dk = darks >> j & 1 == 1;
                    p_dark *= if dk { dark } else { 1.0 - dark };
                    if l || dk {
                        clicks += 1;
                    }
                }
                if clicks == k {
                    total += p_route * p_det * p_dark;
                }
            }
        }
    }
    total
}

/// Average of truncated coherent projectors over `phases` equally spaced
/// phases, renormalized to unit trace.
pub fn phase_averaged_coherent(alpha: f64, dim: usize, phases: usize) -> DMatrix<C64> {
    let mut acc = DMatrix::<C64>::zeros(dim, dim);
    let mut mags = vec![(-0.5 * alpha * alpha).exp(); dim];
    for n in 1..dim {
        mags[n] = mags[n - 1] * alpha / (n as f64).sqrt();
    }
    for k in 0..phases {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / phases as f64;
        let v = DVector::from_fn(dim, |n, _| C64::from_polar(mags[n], n as f64 * phi));
        acc += &v * v.adjoint();
    }
    let tr = acc.trace();
    acc.map(|z| z / tr)
}

/// `<x>` and `<x^2>` from ladder-operator algebra, `x = (a + a^dag)/sqrt 2`.
pub fn analytic_moments(rho: &DMatrix<C64>) -> (f64, f64) {
    let d = rho.nrows();
    let a = annihilation(d);
    let n_op = a.adjoint() * &a;
    let a2 = &a * &a;
    let tr = |m: &DMatrix<C64>| (rho * m).trace();
    let mean = 2f64.sqrt() * tr(&a).re;
    let second = tr(&a2).re + tr(&n_op).re + 0.5;
    (mean, second)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `sum_n (t_n - sum_xi a_xi F_xi,n)^2` by plain loops.
pub fn brute_objective(patterns: &DMatrix<f64>, target: &DVector<f64>, a: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for n in 0..patterns.ncols() {
        let mut fit = 0.0;
        for xi in 0..patterns.nrows() {
            fit += a[xi] * patterns[(xi, n)];
        }
        total += (target[n] - fit) * (target[n] - fit);
    }
    total
}

/// Minimizer of the objective subject only to `sum a = 1`, from the KKT
/// system `[2 F F^T, 1; 1^T, 0] [a; mu] = [2 F t; 1]`.
pub fn sum_constrained_least_squares(patterns: &DMatrix<f64>, target: &DVector<f64>) -> DVector<f64> {
    let m = patterns.nrows();
    let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
    kkt.view_mut((0, 0), (m, m)).copy_from(&(patterns * patterns.transpose() * 2.0));
    for i in 0..m {
        kkt[(i, m)] = 1.0;
        kkt[(m, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m + 1);
    rhs.rows_mut(0, m).copy_from(&(patterns * target * 2.0));
    rhs[m] = 1.0;
    let sol = kkt.lu().solve(&rhs).expect("non-singular KKT system");
    sol.rows(0, m).into_owned()
}

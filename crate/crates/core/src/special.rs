//! Special functions and quadrature used by the Fock-space routines.

use std::f64::consts::PI;

/// Binomial coefficient as a float; exact for the cutoffs used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `sqrt(lo! / hi!)` for `lo <= hi`, accumulated as a product to avoid overflow.
pub fn sqrt_factorial_ratio(lo: usize, hi: usize) -> f64 {
    debug_assert!(lo <= hi);
    ((lo + 1)..=hi).fold(1.0, |acc, j| acc / (j as f64).sqrt())
}

/// Normalized Hermite functions `psi_0(x) .. psi_{count-1}(x)`.
///
/// Convention: `psi_0(x)^2 = exp(-x^2) / sqrt(pi)`, i.e. the vacuum quadrature
/// variance is 1/2. Evaluated with the three-term recurrence
/// `psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1}`.
pub fn hermite_functions(x: f64, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count];
    if count == 0 {
        return out;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if count > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for n in 1..count.saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
    out
}

/// Generalized Laguerre polynomials `L_0^(a)(y) .. L_{count-1}^(a)(y)` by upward recurrence.
pub fn laguerre_all(count: usize, a: f64, y: f64) -> Vec<f64> {
    let mut out = vec![0.0; count];
    if count == 0 {
        return out;
    }
    out[0] = 1.0;
    if count > 1 {
        out[1] = 1.0 + a - y;
    }
    for j in 1..count.saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = ((2.0 * jf + 1.0 + a - y) * out[j] - (jf + a) * out[j - 1]) / (jf + 1.0);
    }
    out
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order Gauss-Legendre rule mapped onto arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    /// Integrates a vector-valued `f` over `[a, b]`, writing `len` components.
    pub fn integrate<F>(&self, a: f64, b: f64, len: usize, f: &F) -> Vec<f64>
    where
        F: Fn(f64, &mut [f64]),
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = vec![0.0; len];
        let mut buf = vec![0.0; len];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            buf.iter_mut().for_each(|v| *v = 0.0);
            f(mid + half * x, &mut buf);
            for (s, v) in acc.iter_mut().zip(&buf) {
                *s += w * half * v;
            }
        }
        acc
    }

    /// Adaptive bisection: accept a panel once its two halves agree with the
    /// whole to `tol` (absolute, max-norm over components), or to a few ulps
    /// of the panel's largest component when `tol` is below roundoff.
    pub fn integrate_adaptive<F>(&self, a: f64, b: f64, len: usize, tol: f64, f: &F) -> Vec<f64>
    where
        F: Fn(f64, &mut [f64]),
    {
        let whole = self.integrate(a, b, len, f);
        self.refine(a, b, len, tol, whole, 0, f)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine<F>(&self, a: f64, b: f64, len: usize, tol: f64, whole: Vec<f64>, depth: u32, f: &F) -> Vec<f64>
    where
        F: Fn(f64, &mut [f64]),
    {
        let mid = 0.5 * (a + b);
        let left = self.integrate(a, mid, len, f);
        let right = self.integrate(mid, b, len, f);
        let err = whole
            .iter()
            .zip(left.iter().zip(&right))
            .map(|(w, (l, r))| (w - l - r).abs())
            .fold(0.0, f64::max);
        let scale = left.iter().zip(&right).map(|(l, r)| l.abs() + r.abs()).fold(0.0, f64::max);
        if err <= tol.max(32.0 * f64::EPSILON * scale) || depth >= 40 {
            return left.iter().zip(&right).map(|(l, r)| l + r).collect();
        }
        let l = self.refine(a, mid, len, 0.5 * tol, left, depth + 1, f);
        let r = self.refine(mid, b, len, 0.5 * tol, right, depth + 1, f);
        l.iter().zip(&r).map(|(x, y)| x + y).collect()
    }
}

//! Reference computations for tests. Nothing here calls into the library's numerics; the
//! library is only used for data containers.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

/// Adaptive Gauss–Kronrod (7/15) quadrature with recursive bisection.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64, abs: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: (f64, f64), rel: f64, abs: f64, depth: u32) -> f64 {
        let (val, err) = whole;
        if err <= abs.max(rel * val.abs()) || depth == 0 {
            return val;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        rec(f, a, m, left, rel, abs / 2.0, depth - 1) + rec(f, m, b, right, rel, abs / 2.0, depth - 1)
    }
    rec(f, a, b, gk15(f, a, b), rel, abs, 60)
}

/// `∫₀^∞ s^{p} e^{−s − r/(4s)} ds` via `s = e^u`.
fn mixture_integral(p: f64, r: f64) -> f64 {
    let f = |u: f64| ((p + 1.0) * u - u.exp() - 0.25 * r * (-u).exp()).exp();
    // split at the peak region for robustness
    let pieces = [-90.0, -20.0, -5.0, 0.0, 2.0, 6.0];
    pieces.windows(2).map(|w| integrate(&f, w[0], w[1], 1e-14, 0.0)).sum()
}

/// Matérn-type profile as a Gaussian scale mixture,
/// `𝒦(r) = ∫ s^{γ−1} e^{−s} e^{−r/(4s)} ds / Γ(γ)`, with `Γ(γ)` the same integral at `r = 0`.
pub fn sobolev_value(gamma: f64, r: f64) -> f64 {
    mixture_integral(gamma - 1.0, r) / mixture_integral(gamma - 1.0, 0.0)
}

/// `𝒦′(r) = −¼ ∫ s^{γ−2} e^{−s − r/(4s)} ds / Γ(γ)`.
pub fn sobolev_d1(gamma: f64, r: f64) -> f64 {
    -0.25 * mixture_integral(gamma - 2.0, r) / mixture_integral(gamma - 1.0, 0.0)
}

/// Ridge loss for the Gaussian kernel at a symmetric `Σ`, by plain loops and a Cholesky solve.
pub fn ridge_loss(x: &DMatrix<f64>, y: &DVector<Complex64>, sigma: &DMatrix<f64>, beta: f64, lambda: f64) -> f64 {
    let n = x.nrows();
    let d = x.ncols();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut q = 0.0;
            for a in 0..d {
                for b in 0..d {
                    q += (x[(i, a)] - x[(j, a)]) * sigma[(a, b)] * (x[(i, b)] - x[(j, b)]);
                }
            }
            g[(i, j)] = (-beta * q).exp();
        }
    }
    let shifted = &g + DMatrix::identity(n, n) * (n as f64 * lambda);
    let chol = shifted.cholesky().expect("ridge system is SPD");
    let mut loss = 0.0;
    for part in 0..2 {
        let yp = DVector::from_iterator(n, y.iter().map(|v| if part == 0 { v.re } else { v.im }));
        let c = chol.solve(&yp);
        let r = &yp - &g * &c;
        loss += r.norm_squared() / (2.0 * n as f64) + 0.5 * lambda * c.dot(&(&g * &c));
    }
    loss
}

/// Matrix exponential by scaling and squaring with a Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / 2f64.powi(squarings as i32);
    let n = a.nrows();
    let mut term = DMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `∫ ω² k(ω) |Σ_j c_j e^{−2πiωz_j}|² dω` in one dimension with `k(ω) = (π/β)^{1/2} e^{−π²ω²/β}`.
pub fn spectral_quadrature_1d(c: &[Complex64], z: &[f64], beta: f64) -> f64 {
    let f = |w: f64| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (cj, zj) in c.iter().zip(z) {
            acc += cj * Complex64::from_polar(1.0, -2.0 * PI * w * zj);
        }
        w * w * (PI / beta).sqrt() * (-PI * PI * w * w / beta).exp() * acc.norm_sqr()
    };
    let edge = 12.0 * beta.sqrt() / PI;
    let cuts: Vec<f64> = (0..=24).map(|i| -edge + 2.0 * edge * i as f64 / 24.0).collect();
    cuts.windows(2).map(|p| integrate(&f, p[0], p[1], 1e-13, 0.0)).sum()
}

/// Gaussian inputs and smooth complex-free labels with a little noise.
pub fn random_problem(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = (0..n)
        .map(|i| (x[(i, 0)]).sin() + 0.5 * x[(i, d - 1)] * x[(i, 0)] + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (x, y)
}

/// Random well-conditioned factor `U = I + 0.3·G`.
pub fn random_factor(seed: u64, d: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    DMatrix::identity(d, d) * 0.8 + DMatrix::from_fn(d, d, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal))
}

/// Random orthogonal matrix from the QR of a Gaussian matrix.
pub fn random_orthogonal(seed: u64, d: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

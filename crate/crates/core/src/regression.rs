//! Kernel ridge regression at a fixed metric.

use faer::linalg::solvers::Solve;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::kernel::RadialKernel;
use crate::linalg::{numerical_rank, psd_factor};

/// Relative singular-value cutoff used to read off the rank of a factor.
pub const RANK_TOL: f64 = 1e-12;

/// A point `Σ = UᵀU` on the PSD cone, held through its factor `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    u: DMatrix<f64>,
    rank: usize,
}

impl MetricPoint {
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        if !u.is_square() || u.nrows() == 0 {
            return Err(Error::Input(format!("factor must be square and nonempty, got {:?}", u.shape())));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("factor has non-finite entries".into()));
        }
        let rank = numerical_rank(&u, RANK_TOL);
        Ok(Self { u, rank })
    }

    pub fn identity(d: usize) -> Self {
        Self { u: DMatrix::identity(d, d), rank: d }
    }

    /// Factor of a symmetric matrix by eigendecomposition; negative eigenvalues are clamped to
    /// zero. Returns the point and the number of clamped eigenvalues.
    pub fn from_sigma(sigma: &DMatrix<f64>) -> Result<(Self, usize)> {
        if !sigma.is_square() || sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("sigma must be square and finite".into()));
        }
        let (u, clamped, _) = psd_factor(sigma);
        Ok((Self::new(u)?, clamped))
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn into_u(self) -> DMatrix<f64> {
        self.u
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        self.u.tr_mul(&self.u)
    }
}

/// Squared distances `|U(x_i − x_j)|²`.
pub(crate) fn sq_dists_factor(x: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let z = x * u.transpose();
    let n = z.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut acc = 0.0;
                    for k in 0..z.ncols() {
                        let t = z[(i, k)] - z[(j, k)];
                        acc += t * t;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Quadratic form `(x_i − x_j)ᵀ Σ (x_i − x_j)` for an arbitrary symmetric `Σ` (may be negative).
pub(crate) fn sq_dists_form(x: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let d = x.ncols();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut diff = vec![0.0; d];
            (0..n)
                .map(|j| {
                    for k in 0..d {
                        diff[k] = x[(i, k)] - x[(j, k)];
                    }
                    let mut acc = 0.0;
                    for a in 0..d {
                        let mut row = 0.0;
                        for b in 0..d {
                            row += sigma[(a, b)] * diff[b];
                        }
                        acc += diff[a] * row;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

pub(crate) fn gram_from_dists(dists: &DMatrix<f64>, k: &RadialKernel) -> DMatrix<f64> {
    let mut g = dists.map(|r| k.value_at(r));
    for i in 0..g.nrows() {
        g[(i, i)] = 1.0;
    }
    g
}

fn check_dims(s: &SampleSet, d: usize, k: &RadialKernel) -> Result<()> {
    if s.dim() != d {
        return Err(Error::Input(format!("samples have dimension {}, metric has {d}", s.dim())));
    }
    if k.dim() != d {
        return Err(Error::Input(format!("kernel dimension {} does not match data dimension {d}", k.dim())));
    }
    Ok(())
}

/// `G_ij = 𝒦(|U(x_i − x_j)|²)`.
pub fn gram_matrix(s: &SampleSet, m: &MetricPoint, k: &RadialKernel) -> Result<DMatrix<f64>> {
    check_dims(s, m.dim(), k)?;
    Ok(gram_from_dists(&sq_dists_factor(s.x(), m.u()), k))
}

/// Gram matrix for a symmetric, possibly indefinite `Σ`. Only kernels whose profile extends to
/// negative arguments give finite entries off the PSD cone.
pub fn gram_matrix_form(s: &SampleSet, sigma: &DMatrix<f64>, k: &RadialKernel) -> Result<DMatrix<f64>> {
    check_dims(s, sigma.nrows(), k)?;
    let g = gram_from_dists(&sq_dists_form(s.x(), sigma), k);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("kernel undefined at a negative squared distance (indefinite sigma)".into()));
    }
    Ok(g)
}

/// Solution of `(G + nλI)c = y`.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub c: DVector<Complex64>,
    pub r: DVector<Complex64>,
    pub loss: f64,
    pub gram: DMatrix<f64>,
    pub lambda: f64,
}

impl RidgeSolution {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// `c*Gc`, the squared RKHS norm of the fit.
    pub fn rkhs_norm_sq(&self) -> f64 {
        quad_form(&self.gram, &self.c)
    }
}

fn quad_form(g: &DMatrix<f64>, c: &DVector<Complex64>) -> f64 {
    let re = DVector::from_iterator(c.len(), c.iter().map(|v| v.re));
    let im = DVector::from_iterator(c.len(), c.iter().map(|v| v.im));
    re.dot(&(g * &re)) + im.dot(&(g * &im))
}

pub fn solve_ridge(g: &DMatrix<f64>, y: &DVector<Complex64>, lambda: f64) -> Result<RidgeSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let n = y.len();
    if g.shape() != (n, n) {
        return Err(Error::Input(format!("gram is {:?} but y has length {n}", g.shape())));
    }
    if g.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Numeric("non-finite entries in ridge system".into()));
    }
    let shift = n as f64 * lambda;
    let a = faer::Mat::<f64>::from_fn(n, n, |i, j| g[(i, j)] + if i == j { shift } else { 0.0 });
    let llt = a
        .llt(faer::Side::Lower)
        .map_err(|e| Error::Numeric(format!("ridge system not positive definite: {e:?}")))?;
    let mut rhs = faer::Mat::<f64>::from_fn(n, 2, |i, j| if j == 0 { y[i].re } else { y[i].im });
    llt.solve_in_place(rhs.as_mut());
    let c = DVector::from_fn(n, |i, _| Complex64::new(rhs[(i, 0)], rhs[(i, 1)]));
    if c.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Numeric("ridge solve produced non-finite coefficients".into()));
    }
    let gc = g.map(|v| Complex64::new(v, 0.0)) * &c;
    let r = y - gc;
    let loss = r.norm_squared() / (2.0 * n as f64) + 0.5 * lambda * quad_form(g, &c);
    Ok(RidgeSolution { c, r, loss, gram: g.clone(), lambda })
}

/// Gram assembly followed by the ridge solve.
pub fn solve_at(s: &SampleSet, m: &MetricPoint, k: &RadialKernel, lambda: f64) -> Result<RidgeSolution> {
    solve_ridge(&gram_matrix(s, m, k)?, s.y(), lambda)
}

pub fn loss_at(s: &SampleSet, m: &MetricPoint, k: &RadialKernel, lambda: f64) -> Result<f64> {
    Ok(solve_at(s, m, k, lambda)?.loss)
}

/// Loss at a symmetric, possibly indefinite `Σ`.
pub fn loss_at_form(s: &SampleSet, sigma: &DMatrix<f64>, k: &RadialKernel, lambda: f64) -> Result<f64> {
    Ok(solve_ridge(&gram_matrix_form(s, sigma, k)?, s.y(), lambda)?.loss)
}

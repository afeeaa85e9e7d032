//! First variation of the ridge loss in `Σ`, the metric on the PSD cone and gradients.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::kernel::RadialKernel;
use crate::linalg::{sym_eigen, symmetrize};
use crate::regression::{sq_dists_factor, sq_dists_form, MetricPoint, RidgeSolution};

/// Relative agreement required between the residual and coefficient forms of `D𝒥`.
pub const DUAL_FORM_TOL: f64 = 1e-9;

/// `D𝒥` as a symmetric `d×d` matrix (upper indices, whitened coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentTensor(DMatrix<f64>);

/// Symmetric `d×d` matrix with lower indices, such as a gradient or `dΣ/dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentTensor(DMatrix<f64>);

macro_rules! sym_newtype {
    ($t:ident) => {
        impl $t {
            /// Symmetrizes its argument; fails on non-square or non-finite input.
            pub fn new(m: DMatrix<f64>) -> Result<Self> {
                if !m.is_square() {
                    return Err(Error::Input(format!("expected a square matrix, got {:?}", m.shape())));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("tensor has non-finite entries".into()));
                }
                Ok(Self(symmetrize(&m)))
            }

            pub fn zeros(d: usize) -> Self {
                Self(DMatrix::zeros(d, d))
            }

            pub fn value(&self) -> &DMatrix<f64> {
                &self.0
            }

            pub fn into_inner(self) -> DMatrix<f64> {
                self.0
            }

            pub fn dim(&self) -> usize {
                self.0.nrows()
            }
        }
    };
}

sym_newtype!(CotangentTensor);
sym_newtype!(TangentTensor);

/// `Σ_ij w_ij (x_i − x_j)(x_i − x_j)ᵀ` for symmetric weights, as `2(Xᵀ diag(W1) X − XᵀWX)`.
fn pair_outer_sum(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let row_sums: DVector<f64> = DVector::from_iterator(w.nrows(), w.row_iter().map(|r| r.sum()));
    let mut xs = x.clone();
    for (i, mut row) in xs.row_iter_mut().enumerate() {
        row *= row_sums[i];
    }
    let a = x.tr_mul(&xs);
    let b = x.tr_mul(&(w * x));
    symmetrize(&((a - b) * 2.0))
}

fn weights(v: &DVector<Complex64>, kd1: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_fn(n, n, |i, j| (v[i] * v[j].conj()).re * kd1[(i, j)])
}

/// Both forms of the first variation from precomputed `𝒦′` values on all pairs.
fn both_forms(x: &DMatrix<f64>, sol: &RidgeSolution, kd1: &DMatrix<f64>, sup_d1: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = sol.n() as f64;
    let lambda = sol.lambda;
    let from_r = pair_outer_sum(x, &weights(&sol.r, kd1)) * (-1.0 / (2.0 * lambda * n * n));
    let from_c = pair_outer_sum(x, &weights(&sol.c, kd1)) * (-0.5 * lambda);
    let diff = (&from_r - &from_c).norm();
    // Absolute floor: rounding scale of the pair sum itself, for the case D𝒥 ≈ 0 with large terms.
    let mean_r2 = sol.r.norm_squared() / n;
    let mean_x2 = x.norm_squared() / n;
    let floor = 1e3 * f64::EPSILON * sup_d1 * mean_r2 * 4.0 * mean_x2 / (2.0 * lambda);
    let scale = from_r.norm().max(from_c.norm()).max(floor);
    if !(diff <= DUAL_FORM_TOL * scale) && diff > 0.0 {
        return Err(Error::Consistency(format!(
            "residual and coefficient forms of the first variation differ: |diff| = {diff:e}, scale = {scale:e}"
        )));
    }
    Ok((from_r, from_c))
}

/// Empirical first variation `D𝒥` at `Σ = UᵀU` (V-statistic over ordered pairs). The residual
/// form is returned after checking it against the coefficient form.
pub fn first_variation(s: &SampleSet, sol: &RidgeSolution, m: &MetricPoint, k: &RadialKernel) -> Result<CotangentTensor> {
    check(s, sol, m.dim())?;
    let kd1 = sq_dists_factor(s.x(), m.u()).map(|r| k.d1_at(r));
    let (d, _) = both_forms(s.x(), sol, &kd1, k.sup_abs_d1())?;
    CotangentTensor::new(d)
}

/// First variation at an arbitrary symmetric `Σ` (used off the PSD cone by the Euclidean flow).
pub fn first_variation_form(s: &SampleSet, sol: &RidgeSolution, sigma: &DMatrix<f64>, k: &RadialKernel) -> Result<CotangentTensor> {
    check(s, sol, sigma.nrows())?;
    let kd1 = sq_dists_form(s.x(), sigma).map(|r| k.d1_at(r));
    if kd1.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("kernel derivative undefined at a negative squared distance".into()));
    }
    // Off the cone 𝒦′ is unbounded; the floor uses the largest value actually encountered.
    let sup = kd1.amax().max(k.sup_abs_d1());
    let (d, _) = both_forms(s.x(), sol, &kd1, sup)?;
    CotangentTensor::new(d)
}

/// Residual-form and coefficient-form `D𝒥`, both returned (for inspection and tests).
pub fn first_variation_pair(s: &SampleSet, sol: &RidgeSolution, m: &MetricPoint, k: &RadialKernel) -> Result<(CotangentTensor, CotangentTensor)> {
    check(s, sol, m.dim())?;
    let kd1 = sq_dists_factor(s.x(), m.u()).map(|r| k.d1_at(r));
    let (a, b) = both_forms(s.x(), sol, &kd1, k.sup_abs_d1())?;
    Ok((CotangentTensor::new(a)?, CotangentTensor::new(b)?))
}

fn check(s: &SampleSet, sol: &RidgeSolution, d: usize) -> Result<()> {
    if sol.n() != s.n() {
        return Err(Error::Input(format!("solution has {} coefficients for {} samples", sol.n(), s.n())));
    }
    if s.dim() != d {
        return Err(Error::Input(format!("samples have dimension {}, metric has {d}", s.dim())));
    }
    Ok(())
}

/// `𝔤(A, B) = Tr(AΣB)`, evaluated as `⟨UA, UB⟩_F`.
pub fn metric_cotangent(m: &MetricPoint, a: &CotangentTensor, b: &CotangentTensor) -> f64 {
    let ua = m.u() * a.value();
    let ub = m.u() * b.value();
    ua.dot(&ub)
}

/// `½(ΣD + DΣ)`.
pub fn riemannian_gradient(m: &MetricPoint, dj: &CotangentTensor) -> TangentTensor {
    let sigma = m.sigma();
    let sd = &sigma * dj.value();
    TangentTensor(symmetrize(&(&sd + sd.transpose())) * 0.5)
}

/// Velocity of the lifted flow, `−½UD`.
pub fn pullback_gradient_u(m: &MetricPoint, dj: &CotangentTensor) -> DMatrix<f64> {
    m.u() * dj.value() * -0.5
}

/// `|B|²_𝔤 = Σ 2|B_ij|²/(λ_i + λ_j)` in the eigenbasis of `Σ`; requires `Σ` positive definite.
pub fn tangent_norm_sq(m: &MetricPoint, b: &TangentTensor) -> Result<f64> {
    let (vals, vecs) = sym_eigen(&m.sigma());
    let floor = 1e-14 * vals.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    if vals[0] <= floor {
        return Err(Error::Domain("tangent norm needs a positive definite sigma".into()));
    }
    let be = vecs.transpose() * b.value() * &vecs;
    let mut acc = 0.0;
    for i in 0..vals.len() {
        for j in 0..vals.len() {
            acc += 2.0 * be[(i, j)].powi(2) / (vals[i] + vals[j]);
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::solve_at;

    #[test]
    fn two_point_example() {
        let s = SampleSet::from_real(DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]), &[1.0, -1.0], None).unwrap();
        let k = RadialKernel::gaussian(1.0, 1).unwrap();
        let m = MetricPoint::identity(1);
        let sol = solve_at(&s, &m, &k, 0.1).unwrap();
        let d = first_variation(&s, &sol, &m, &k).unwrap();
        let c = 1.0 / (1.2 - (-4f64).exp());
        let expected = -0.4 * c * c * (-4f64).exp();
        assert!((d.value()[(0, 0)] - expected).abs() < 1e-14 * expected.abs());
        assert!((expected + 5.2468e-3).abs() < 1e-6);
    }

    #[test]
    fn zero_labels_zero_variation() {
        let s = SampleSet::from_real(DMatrix::from_row_slice(3, 1, &[-1.0, 0.2, 1.0]), &[0.0; 3], None).unwrap();
        let k = RadialKernel::gaussian(1.0, 1).unwrap();
        let m = MetricPoint::identity(1);
        let sol = solve_at(&s, &m, &k, 0.1).unwrap();
        assert_eq!(first_variation(&s, &sol, &m, &k).unwrap().value()[(0, 0)], 0.0);
    }

    #[test]
    fn metric_examples() {
        let a = CotangentTensor::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -3.0])).unwrap();
        let id = MetricPoint::identity(2);
        assert!((metric_cotangent(&id, &a, &a) - (1.0 + 8.0 + 9.0)).abs() < 1e-14);
        let zero = MetricPoint::new(DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(metric_cotangent(&zero, &a, &a), 0.0);
        // Σ = diag(3, 5), A = E_01 + E_10: 𝔤 = ½(3+5)·2 = 8
        let m = MetricPoint::new(DMatrix::from_diagonal(&DVector::from_vec(vec![3f64.sqrt(), 5f64.sqrt()]))).unwrap();
        let e = CotangentTensor::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((metric_cotangent(&m, &e, &e) - 8.0).abs() < 1e-13);
    }

    #[test]
    fn gradient_examples() {
        let m = MetricPoint::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2f64.sqrt(), 1.0]))).unwrap();
        let d = CotangentTensor::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let g = riemannian_gradient(&m, &d);
        assert!((g.value() - DMatrix::from_row_slice(2, 2, &[0.0, 1.5, 1.5, 0.0])).amax() < 1e-15);
        let g = riemannian_gradient(&MetricPoint::identity(2), &d);
        assert_eq!(g.value(), d.value());
        let v = pullback_gradient_u(&MetricPoint::identity(2), &d);
        assert_eq!(v, d.value() * -0.5);
    }

    #[test]
    fn eigenbasis_metric_is_dual() {
        // Gradient of D has 𝔤-norm equal to 𝔤(D, D).
        let u = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.1, 0.0, 0.7, 0.3, 0.4, 0.0, 1.3]);
        let m = MetricPoint::new(u).unwrap();
        let d = CotangentTensor::new(DMatrix::from_row_slice(3, 3, &[0.5, -0.2, 0.1, -0.2, 1.0, 0.3, 0.1, 0.3, -0.7])).unwrap();
        let g = riemannian_gradient(&m, &d);
        let lhs = tangent_norm_sq(&m, &g).unwrap();
        let rhs = metric_cotangent(&m, &d, &d);
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
    }
}

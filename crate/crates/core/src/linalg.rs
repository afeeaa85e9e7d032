//! Small dense helpers shared by the metric, flow and diagnostics code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
/// Column `i` of the returned matrix is the eigenvector for eigenvalue `i`.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    sym_eigen(m).0
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Factor a (nearly) PSD matrix as `UᵀU`. Eigenvalues below zero are clamped;
/// returns the factor, the number of clamped eigenvalues and the minimum eigenvalue.
pub fn psd_factor(sigma: &DMatrix<f64>) -> (DMatrix<f64>, usize, f64) {
    let (values, vectors) = sym_eigen(sigma);
    let d = values.len();
    let mut clamped = 0;
    let mut u = DMatrix::zeros(d, d);
    for (i, &v) in values.iter().enumerate() {
        let v = if v < 0.0 {
            clamped += 1;
            0.0
        } else {
            v
        };
        let s = v.sqrt();
        for c in 0..d {
            u[(i, c)] = s * vectors[(c, i)];
        }
    }
    (u, clamped, values.first().copied().unwrap_or(0.0))
}

/// Numerical rank from singular values, relative to the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Frobenius pairing `Tr(AᵀB)`.
pub fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Orthonormal basis whose first column is `w` (assumed unit), completed by a Householder reflection.
pub fn basis_with_first(w: &DVector<f64>) -> DMatrix<f64> {
    let d = w.len();
    let mut e1 = DVector::zeros(d);
    e1[0] = 1.0;
    let v = &e1 - w;
    let vv = v.dot(&v);
    if vv < 1e-30 {
        return DMatrix::identity(d, d);
    }
    // H = I − 2vvᵀ/|v|² maps e₁ ↔ w; its columns are orthonormal with H e₁ = w.
    DMatrix::identity(d, d) - (&v * v.transpose()) * (2.0 / vv)
}

/// Largest absolute deviation of `QᵀQ` from the identity.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let n = g.nrows();
    (&g - DMatrix::<f64>::identity(n, n)).amax()
}

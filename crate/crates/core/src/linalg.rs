//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Result, VfarError};

/// Symmetric eigendecomposition with eigenvalues sorted in nonincreasing
/// order. Columns of the returned matrix are the matching eigenvectors.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the solver's order for exact ties
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric PSD square root. Eigenvalues below `-tol * max|eig|` are an
/// error; small negative ones are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_desc(m);
    let scale = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let mut root = DVector::zeros(vals.len());
    for (i, &v) in vals.iter().enumerate() {
        if v < -tol {
            return Err(VfarError::Numerical(format!(
                "matrix is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        root[i] = v.max(0.0).sqrt();
    }
    Ok(&vecs * DMatrix::from_diagonal(&root) * vecs.transpose())
}

/// Inverse symmetric square root of a positive definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_desc(m);
    let max = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = vals.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if !(min > 1e-12 * max.max(f64::MIN_POSITIVE)) {
        return Err(VfarError::Singular(format!(
            "{what} is singular (smallest eigenvalue {min:e})"
        )));
    }
    let d = vals.map(|v| 1.0 / v.sqrt());
    Ok(&vecs * DMatrix::from_diagonal(&d) * vecs.transpose())
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration, run to
/// relative change `tol`.
pub fn power_lambda_max(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic, non-degenerate start
    let mut v = DVector::from_iterator(n, (0..n).map(|i| 1.0 + (i as f64 * 0.618_033_988_7).fract()));
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs() {
            return next.max(norm);
        }
        lambda = next;
    }
    lambda
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(VfarError::InvalidArgument(format!("spectral radius of a {:?} matrix", m.shape())));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(VfarError::Numerical("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| VfarError::Numerical("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

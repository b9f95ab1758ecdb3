//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SnefyError};

/// Relative diagonal jitter tried, in order, when a plain Cholesky factorisation fails.
pub const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Lower-triangular `A` with `A Aᵀ = C`, retrying with `jitter · ‖C‖_F` on the diagonal.
pub fn cholesky_with_jitter(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !c.is_square() {
        return Err(SnefyError::invalid(format!(
            "covariance must be square, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(SnefyError::invalid("covariance has non-finite entries"));
    }
    if !is_symmetric(c, 1e-12) {
        return Err(SnefyError::NotPositiveSemidefinite);
    }
    if let Some(ch) = c.clone().cholesky() {
        return Ok(ch.l());
    }
    let scale = c.norm();
    for jitter in JITTER_LADDER {
        let mut cj = c.clone();
        for i in 0..c.nrows() {
            cj[(i, i)] += jitter * scale;
        }
        if let Some(ch) = cj.cholesky() {
            return Ok(ch.l());
        }
    }
    Err(SnefyError::NotPositiveSemidefinite)
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Square factor `F` with `FᵀF = M` for a symmetric PSD `M`; negative round-off
/// eigenvalues are clipped to zero.
pub fn psd_root(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut f = DMatrix::zeros(n, n);
    for k in 0..n {
        let s = eig.eigenvalues[k].max(0.0).sqrt();
        for c in 0..n {
            f[(k, c)] = s * eig.eigenvectors[(c, k)];
        }
    }
    f
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn to_nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn from_nested(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(SnefyError::invalid(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_of_diagonal() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let a = cholesky_with_jitter(&c).unwrap();
        assert_eq!(a, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
    }

    #[test]
    fn jitter_rescues_rank_deficient_and_rejects_indefinite() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let c = &v * v.transpose();
        let a = cholesky_with_jitter(&c).unwrap();
        assert!((&a * a.transpose() - &c).norm() <= 1e-7 * c.norm());

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(cholesky_with_jitter(&bad), Err(SnefyError::NotPositiveSemidefinite));
    }

    #[test]
    fn psd_root_reconstructs() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.2, 2.0, 0.3, 0.1]);
        let m = &b * b.transpose();
        let f = psd_root(&m);
        assert!((f.transpose() * &f - &m).norm() < 1e-12);
    }
}

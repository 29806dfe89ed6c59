//! Dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance of the Gram-Schmidt rank test.
pub const RANK_TOL: f64 = 1e-9;

pub fn mat_from_rows(rows: &[Vec<f64>], ncols: usize, field: &str) -> Result<DMatrix<f64>> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::Dimension(format!(
                "{field}: row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!("{field}: row {i} has non-finite entries")));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Number of columns of a row-major nested array, `None` when it has no rows.
pub fn rows_width(rows: &[Vec<f64>]) -> Option<usize> {
    rows.first().map(Vec::len)
}

pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
pub fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sym_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `I_t ⊗ m`.
pub fn kron_eye(t: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(t * r, t * c);
    for k in 0..t {
        out.view_mut((k * r, k * c), (r, c)).copy_from(m);
    }
    out
}

/// `1_t ⊗ v`.
pub fn repeat_vec(t: usize, v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(t * n, |i, _| v[i % n])
}

/// Select rows of a matrix in the given order.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Incremental modified Gram-Schmidt basis over row vectors.
///
/// A candidate row is dependent when its residual after projection onto the
/// span of the accepted rows is at most `RANK_TOL * (1 + ‖row‖)`.
#[derive(Debug, Clone)]
pub struct RowBasis {
    basis: Vec<DVector<f64>>,
}

impl RowBasis {
    pub fn new() -> Self {
        Self { basis: Vec::new() }
    }

    /// Try to add a row; returns whether it was independent.
    pub fn push(&mut self, row: DVector<f64>) -> bool {
        let norm = row.norm();
        let mut r = row;
        // two passes keep the orthogonality loss at rounding level
        for _ in 0..2 {
            for q in &self.basis {
                let proj = q.dot(&r);
                r.axpy(-proj, q, 1.0);
            }
        }
        let res = r.norm();
        if res <= RANK_TOL * (1.0 + norm) {
            return false;
        }
        self.basis.push(r / res);
        true
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }
}

impl Default for RowBasis {
    fn default() -> Self {
        Self::new()
    }
}

/// Whether the listed rows of `m` are linearly independent.
pub fn rows_independent(m: &DMatrix<f64>, rows: &[usize]) -> bool {
    if rows.len() > m.ncols() {
        return false;
    }
    let mut basis = RowBasis::new();
    rows.iter()
        .all(|&i| basis.push(m.row(i).transpose().into_owned()))
}

/// Least-squares solve via SVD. Returns the solution and the relative residual.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = smax * 1e-13;
    let x = svd
        .solve(b, eps)
        .map_err(|e| Error::NumericalFailure(format!("least squares: {e}")))?;
    let res = (a * &x - b).norm() / (1.0 + b.norm());
    Ok((x, res))
}

/// Ratio of extreme singular values; infinite for singular matrices.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

pub fn inf_norm_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn inf_norm_mat(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_rows_are_dependent() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert!(rows_independent(&m, &[0, 1]));
        assert!(!rows_independent(&m, &[0, 2]));
        assert!(!rows_independent(&m, &[0, 1, 2]));
    }

    #[test]
    fn kron_and_repeat() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let k = kron_eye(2, &m);
        assert_eq!(k.shape(), (2, 4));
        assert_eq!(k[(1, 2)], 1.0);
        assert_eq!(k[(0, 2)], 0.0);
        let v = repeat_vec(3, &DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(v.as_slice(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn rows_roundtrip_and_width_check() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let m = mat_from_rows(&rows, 2, "m").unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(mat_to_rows(&m), rows);
        assert!(mat_from_rows(&rows, 3, "m").is_err());
    }
}

//! Small dense linear-algebra helpers shared by the copula and portfolio
//! modules: symmetry checks, positive-definite projection of correlation
//! matrices, and a guarded solve for the mean-variance system.

use crate::error::{CoreError, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative tolerance used when checking that a matrix is symmetric.
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalue floor applied when projecting to the positive-definite cone.
pub const EIGEN_FLOOR: f64 = 1e-8;

/// Builds a `DMatrix` from nested rows, validating rectangularity.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(CoreError::Dimension("matrix with zero rows".into()));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(CoreError::Dimension("ragged matrix rows".into()));
    }
    let mut m = DMatrix::zeros(n, p);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::RejectedInput(format!(
                    "non-finite matrix entry at ({i}, {j})"
                )));
            }
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Converts a matrix back to nested rows (for serialization).
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Checks that `m` is square and symmetric within a relative tolerance.
pub fn require_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(CoreError::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = 1.0 + m.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(CoreError::RejectedInput(format!(
                    "matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    require_symmetric(m)?;
    let eig = SymmetricEigen::new(m.clone());
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Projects a symmetric matrix with unit diagonal onto the positive-definite
/// correlation matrices: eigenvalues are floored at [`EIGEN_FLOOR`], the
/// matrix is rebuilt, and the diagonal is rescaled back to exactly one.
///
/// Returns the projected matrix and a flag telling whether any eigenvalue
/// actually had to be clipped (i.e. whether the input needed repair).
pub fn nearest_pd_correlation(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    require_symmetric(m)?;
    let eig = SymmetricEigen::new(m.clone());
    let mut clipped = false;
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < EIGEN_FLOOR {
            *v = EIGEN_FLOOR;
            clipped = true;
        }
    }
    if !clipped {
        return Ok((m.clone(), false));
    }
    let q = eig.eigenvectors;
    let rebuilt = &q * DMatrix::from_diagonal(&vals) * q.transpose();
    // Rescale to unit diagonal so the result is again a correlation matrix.
    let d: DVector<f64> = DVector::from_iterator(
        rebuilt.nrows(),
        (0..rebuilt.nrows()).map(|i| 1.0 / rebuilt[(i, i)].sqrt()),
    );
    let mut out = rebuilt;
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            out[(i, j)] *= d[i] * d[j];
        }
    }
    // Force exact symmetry and exact unit diagonal after rounding.
    for i in 0..out.nrows() {
        out[(i, i)] = 1.0;
        for j in (i + 1)..out.ncols() {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok((out, true))
}

/// Solves the symmetric positive-definite system `a x = b` via Cholesky,
/// falling back to LU when Cholesky fails marginally.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(CoreError::Dimension(format!(
            "system is {}x{} but rhs has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| CoreError::NotPositiveDefinite("singular system in solve".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pd_matrix_passes_through_unchanged() {
        let m = matrix_from_rows(&[vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let (out, repaired) = nearest_pd_correlation(&m).unwrap();
        assert!(!repaired);
        assert_eq!(out, m);
    }

    #[test]
    fn indefinite_matrix_is_projected_to_pd_with_unit_diagonal() {
        // Pairwise entries that are not jointly consistent: eigenvalue < 0.
        let m = matrix_from_rows(&[
            vec![1.0, 0.9, -0.9],
            vec![0.9, 1.0, 0.9],
            vec![-0.9, 0.9, 1.0],
        ])
        .unwrap();
        assert!(min_eigenvalue(&m).unwrap() < 0.0);
        let (out, repaired) = nearest_pd_correlation(&m).unwrap();
        assert!(repaired);
        assert!(min_eigenvalue(&out).unwrap() >= EIGEN_FLOOR * 0.5);
        for i in 0..3 {
            assert_abs_diff_eq!(out[(i, i)], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn solve_spd_recovers_known_solution() {
        let a = matrix_from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let b = &a * &x;
        let got = solve_spd(&a, &b).unwrap();
        assert_abs_diff_eq!(got[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = matrix_from_rows(&[vec![1.0, 0.2], vec![0.4, 1.0]]).unwrap();
        assert!(require_symmetric(&m).is_err());
    }
}

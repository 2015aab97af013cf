//! Thin wrappers over dense linear algebra with explicit numerical contracts.
//!
//! Every solve used for ground truth goes through [`solve_checked`], which
//! verifies the infinity-norm residual instead of trusting the factorization
//! blindly. Least squares goes through a minimum-norm SVD path with a
//! relative singular-value cutoff.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tol;

/// Solve `a * x = b` by LU factorization and verify the residual.
///
/// `what` names the system in the error message. Fails if the matrix is
/// singular to working precision or the residual exceeds
/// [`tol::SOLVE_RESIDUAL_TOL`] in the infinity norm.
pub fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Numerics(format!("{what}: LU solve failed (singular matrix)")))?;
    let residual = (a * &x - b).abs().max();
    if residual > tol::SOLVE_RESIDUAL_TOL {
        return Err(Error::Numerics(format!(
            "{what}: solve residual {residual:.3e} exceeds {:.1e}",
            tol::SOLVE_RESIDUAL_TOL
        )));
    }
    Ok(x)
}

/// Minimum-norm least-squares solution of `a * x ~ b` via SVD.
///
/// Singular values below `SV_CUTOFF_REL * sigma_max` are treated as zero, so
/// rank-deficient systems return the minimum-norm minimizer instead of
/// amplifying noise along null directions. An all-zero `a` yields `x = 0`.
pub fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let ncols = a.ncols();
    let svd = a.clone().svd(true, true);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Numerics("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numerics("SVD did not produce V^T".into()))?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tol::SV_CUTOFF_REL * sigma_max;
    let mut x = DVector::zeros(ncols);
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let coeff = u.column(j).dot(b) / s;
            x += v_t.row(j).transpose() * coeff;
        }
    }
    Ok(x)
}

/// Eigen-decomposition of a symmetric matrix, returned as
/// `(eigenvalues, eigenvectors)` with matching column order.
pub fn sym_eig(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    (eig.eigenvalues, eig.eigenvectors)
}

/// Largest eigenvalue of a symmetric matrix; 0 for an empty matrix.
pub fn max_eigenvalue_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (vals, _) = sym_eig(m);
    vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_checked_recovers_known_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x_true = DVector::from_vec(vec![1.5, -0.5]);
        let b = &a * &x_true;
        let x = solve_checked(&a, &b, "test system").unwrap();
        assert!((x - x_true).abs().max() < 1e-12);
    }

    #[test]
    fn solve_checked_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert!(solve_checked(&a, &b, "singular").is_err());
    }

    #[test]
    fn min_norm_lstsq_matches_full_rank_solve() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        // Normal equations are invertible here; cross-check against them.
        let gram = a.transpose() * &a;
        let rhs = a.transpose() * &b;
        let x_ne = solve_checked(&gram, &rhs, "normal equations").unwrap();
        let x = min_norm_lstsq(&a, &b).unwrap();
        assert!((x - x_ne).abs().max() < 1e-10);
    }

    #[test]
    fn min_norm_lstsq_picks_minimum_norm_on_rank_deficiency() {
        // Columns are identical: any (x0, x1) with x0 + x1 = 1 fits exactly;
        // the minimum-norm answer is (0.5, 0.5).
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = min_norm_lstsq(&a, &b).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!((x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn min_norm_lstsq_zero_matrix_returns_zero() {
        let a = DMatrix::zeros(3, 2);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = min_norm_lstsq(&a, &b).unwrap();
        assert_eq!(x, DVector::zeros(2));
    }

    #[test]
    fn sym_eig_reconstructs_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let (vals, vecs) = sym_eig(&m);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - &m).abs().max() < 1e-10);
    }
}

//! Small dense linear-algebra helpers shared by the factorization code.
//!
//! Matrices are column-major `nalgebra` types; everything here operates on
//! `f64`. The systems involved are tiny (R x R for a rank-R model, I_n x I_n
//! for an initialization Gram matrix), so dense factorizations are the right
//! tool throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Khatri-Rao (columnwise Kronecker) product of two matrices with equal
/// column counts. Column `r` of the result is `a[:,r] kron b[:,r]`, so the
/// row index of `b` varies fastest.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::shape(format!(
            "khatri_rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (ra, rb, cols) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = Matrix::zeros(ra * rb, cols);
    for r in 0..cols {
        for i in 0..ra {
            let air = a[(i, r)];
            for j in 0..rb {
                out[(i * rb + j, r)] = air * b[(j, r)];
            }
        }
    }
    Ok(out)
}

/// Solve `a x = rhs` for symmetric positive definite `a` via Cholesky.
pub fn solve_spd(a: Matrix, rhs: &Vector) -> Result<Vector> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::numerical("Cholesky factorization failed: matrix not positive definite"))?;
    Ok(chol.solve(rhs))
}

/// Eigenvalues and eigenvectors of a symmetric matrix, sorted by descending
/// eigenvalue. Eigenvectors are the columns of the returned matrix.
pub fn symmetric_eigen_desc(m: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("eigenvalues of a real symmetric matrix are finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(m.nrows(), n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix. Eigenvalues
/// below `rel_tol * max_eigenvalue` are treated as zero.
pub fn pinv_sym(m: &Matrix, rel_tol: f64) -> Matrix {
    let (values, vectors) = symmetric_eigen_desc(m);
    let max = values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = rel_tol * max;
    let n = m.nrows();
    let mut out = Matrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        if lambda > cutoff && lambda > 0.0 {
            let v = vectors.column(k);
            // out += v v^T / lambda
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += v[i] * v[j] / lambda;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn khatri_rao_ones_absorb() {
        let a = Matrix::from_element(2, 1, 1.0);
        let b = Matrix::from_element(3, 1, 1.0);
        let k = khatri_rao(&a, &b).unwrap();
        assert_eq!(k.nrows(), 6);
        assert_eq!(k.ncols(), 1);
        assert!(k.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn khatri_rao_identity_columns() {
        let id = Matrix::identity(2, 2);
        let k = khatri_rao(&id, &id).unwrap();
        // columns are e1 kron e1 and e2 kron e2
        let expected = Matrix::from_row_slice(
            4,
            2,
            &[
                1.0, 0.0, //
                0.0, 0.0, //
                0.0, 0.0, //
                0.0, 1.0,
            ],
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn khatri_rao_matches_per_column_kronecker() {
        let mut rng = 1234u64;
        let mut next = || {
            // xorshift, good enough for a fixed test fixture
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        let a = Matrix::from_fn(3, 2, |_, _| next());
        let b = Matrix::from_fn(4, 2, |_, _| next());
        let k = khatri_rao(&a, &b).unwrap();
        assert_eq!((k.nrows(), k.ncols()), (12, 2));
        for r in 0..2 {
            for i in 0..3 {
                for j in 0..4 {
                    assert_eq!(k[(i * 4 + j, r)], a[(i, r)] * b[(j, r)]);
                }
            }
        }
    }

    #[test]
    fn khatri_rao_rejects_column_mismatch() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::zeros(2, 3);
        assert!(khatri_rao(&a, &b).is_err());
    }

    #[test]
    fn spd_solve_recovers_solution() {
        let a = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let x = Vector::from_vec(vec![1.0, -2.0]);
        let rhs = &a * &x;
        let got = solve_spd(a, &rhs).unwrap();
        assert_relative_eq!(got, x, epsilon = 1e-12);
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
        let (values, vectors) = symmetric_eigen_desc(&m);
        assert_relative_eq!(values[0], 5.0, epsilon = 1e-12);
        assert_relative_eq!(values[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(vectors.column(0)[1].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pinv_inverts_nonsingular() {
        let m = Matrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let p = pinv_sym(&m, 1e-12);
        let id = &m * &p;
        assert_relative_eq!(id, Matrix::identity(2, 2), epsilon = 1e-10);
    }

    #[test]
    fn pinv_drops_null_space() {
        // rank-1 matrix v v^T with v = (1, 1)
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pinv_sym(&m, 1e-12);
        // pinv of v v^T is v v^T / |v|^4
        assert_relative_eq!(p, m.clone() * 0.25, epsilon = 1e-12);
    }
}

//! Small dense symmetric-matrix helpers shared by the solver and the models.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative asymmetry accepted by the checked entry points.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("matrix is singular or not positive definite")]
    Singular,
}

/// max |M - Mᵀ| / max(1, max |M|).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    let mut scale = 1.0_f64;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(m[(i, j)].abs());
            if j > i {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
    }
    worst / scale
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let a = asymmetry(m);
    if a > SYMMETRY_TOL {
        return Err(LinalgError::NonSymmetric { asymmetry: a });
    }
    Ok(())
}

/// Eigendecomposition with eigenvalues sorted in descending order.
///
/// The input is symmetrized first so both triangles contribute equally.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = faer::Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    // faer returns ascending eigenvalues; it only fails on non-finite input.
    let Ok(eig) = sym.self_adjoint_eigen(faer::Side::Lower) else {
        return (DVector::from_element(n, f64::NAN), DMatrix::from_element(n, n, f64::NAN));
    };
    let (s, u) = (eig.S(), eig.U());
    let values = DVector::from_fn(n, |k, _| s[n - 1 - k]);
    let vectors = DMatrix::from_fn(n, n, |i, k| u[(i, n - 1 - k)]);
    (values, vectors)
}

pub fn eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    sym_eigen(m).0
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral norm of a symmetric matrix, max |λᵢ|.
pub fn max_abs_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Σ f(λᵢ) vᵢvᵢᵀ over the given eigenpairs, symmetrized.
pub(crate) fn recompose(
    values: &DVector<f64>,
    vectors: &DMatrix<f64>,
    f: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let n = vectors.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..values.len() {
        let w = f(values[k]);
        if w == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out.ger(w, &v, &v, 1.0);
    }
    (&out + out.transpose()) * 0.5
}

/// Euclidean projection onto the PSD cone without the symmetry check.
pub(crate) fn project_psd_unchecked(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen(m);
    if values.iter().all(|&v| v >= 0.0) {
        return (m + m.transpose()) * 0.5;
    }
    recompose(&values, &vectors, |l| l.max(0.0))
}

/// Euclidean projection onto the cone of positive semidefinite matrices:
/// keeps the nonnegative part of the spectrum.
pub fn project_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_symmetric(m)?;
    Ok(project_psd_unchecked(m))
}

/// Splits a symmetric matrix into its positive and negative spectral parts,
/// `m = plus - minus` with both parts PSD.
pub fn spectral_split(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), LinalgError> {
    check_symmetric(m)?;
    let (values, vectors) = sym_eigen(m);
    let plus = recompose(&values, &vectors, |l| l.max(0.0));
    let minus = recompose(&values, &vectors, |l| (-l).max(0.0));
    Ok((plus, minus))
}

/// Length of the packed upper triangle of a `dim x dim` matrix.
pub const fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Position of entry `(i, j)`, `i <= j`, in row-major packed upper storage.
#[inline]
pub fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

/// Scaled half-vectorization: off-diagonal entries carry a factor √2 so the
/// Euclidean inner product of two vectors equals the trace inner product of
/// the matrices.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(packed_len(n));
    svec_into(m, &mut out);
    out
}

pub(crate) fn svec_into(m: &DMatrix<f64>, out: &mut Vec<f64>) {
    let n = m.nrows();
    out.clear();
    for i in 0..n {
        out.push(m[(i, i)]);
        for j in (i + 1)..n {
            out.push(0.5 * (m[(i, j)] + m[(j, i)]) * std::f64::consts::SQRT_2);
        }
    }
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), packed_len(n));
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        m[(i, i)] = v[k];
        k += 1;
        for j in (i + 1)..n {
            let val = v[k] * std::f64::consts::FRAC_1_SQRT_2;
            m[(i, j)] = val;
            m[(j, i)] = val;
            k += 1;
        }
    }
    m
}

/// Cholesky solve of an SPD system; `Singular` if the factorization fails.
pub fn cholesky_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(LinalgError::Singular)?;
    Ok(chol.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn projection_clips_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let p = project_psd(&m).unwrap();
        assert_abs_diff_eq!(p, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn projection_of_swap_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = project_psd(&m).unwrap();
        assert_abs_diff_eq!(p, DMatrix::from_element(2, 2, 0.5), epsilon = 1e-14);
    }

    #[test]
    fn projection_is_identity_on_cone() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.0, 1.0, 1.0]);
        let m = &b * b.transpose();
        assert_abs_diff_eq!(project_psd(&m).unwrap(), m, epsilon = 1e-12);
    }

    #[test]
    fn projection_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(project_psd(&m), Err(LinalgError::NonSymmetric { .. })));
    }

    #[test]
    fn svec_round_trip_and_isometry() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 5.0, 6.0, 3.0, 6.0, 9.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 4.0, 0.0, 4.0, 1.0]);
        assert_abs_diff_eq!(smat(&svec(&a), 3), a, epsilon = 1e-14);
        let inner: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert_abs_diff_eq!(inner, (&a * &b).trace(), epsilon = 1e-12);
    }

    #[test]
    fn packed_index_is_row_major_upper() {
        let n = 4;
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                assert_eq!(packed_index(n, i, j), k);
                assert_eq!(packed_index(n, j, i), k);
                k += 1;
            }
        }
    }

    #[test]
    fn eigenpairs_reconstruct_input() {
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(6, 6, &[
            -4.12125479389222, 3.3059314327456777, 5.187369457033078, -0.9623055679953547, 6.344476957530048, 2.490326278174812,
            3.3059314327456777, -0.780915890860147, -3.1562721500421715, 0.6191787583453355, -4.216426602983219, -0.8843099048442025,
            5.187369457033078, -3.1562721500421715, -2.8673989245680405, 1.585897686252938, -5.048400000168383, -1.8192540783604405,
            -0.9623055679953547, 0.6191787583453355, 1.585897686252938, 2.0236927205642035, 1.6358018504781755, -0.06961853723579446,
            6.344476957530048, -4.216426602983219, -5.048400000168383, 1.6358018504781755, -2.2662776075338944, -2.44646597176802,
            2.490326278174812, -0.8843099048442025, -1.8192540783604405, -0.06961853723579446, -2.44646597176802, 3.668033282562333,
        ]);
        let (vals, vecs) = sym_eigen(&m);
        let back = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_abs_diff_eq!(back, m, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[5], -17.648719514913687, epsilon = 1e-12);
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, -2.0]);
        let (vals, _) = sym_eigen(&m);
        assert_eq!(vals.as_slice(), &[3.0, 1.0, -2.0]);
    }
}

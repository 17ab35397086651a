//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative threshold on `sigma_min / sigma_max` below which a matrix is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-13;

/// `N x cols` Vandermonde matrix with rows `(1, w, w^2, ..., w^(cols-1))`.
pub fn vandermonde(points: &[Complex64], cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(points.len(), cols, |i, k| points[i].powu(k as u32))
}

/// Singular values, largest first.
pub fn singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Ratio of the extreme singular values of a full-column-rank matrix.
pub fn condition_number(m: &DMatrix<Complex64>) -> Result<f64> {
    if m.nrows() < m.ncols() || m.ncols() == 0 {
        return Err(Error::Singular(format!(
            "{}x{} matrix cannot have full column rank",
            m.nrows(),
            m.ncols()
        )));
    }
    let sv = singular_values(m);
    let (max, min) = (sv[0], sv[sv.len() - 1]);
    if !(max > 0.0) || min <= RANK_TOL * max {
        return Err(Error::Singular(format!(
            "rank deficient: singular values span [{min:e}, {max:e}]"
        )));
    }
    Ok(max / min)
}

/// Left pseudo-inverse `(B^H B)^-1 B^H` of a full-column-rank matrix.
pub fn left_pseudo_inverse(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    condition_number(m)?;
    let svd = m.clone().svd(true, true);
    svd.pseudo_inverse(0.0)
        .map_err(|e| Error::Singular(e.to_string()))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn identity(n: usize) -> DMatrix<Complex64> {
    DMatrix::identity(n, n)
}

pub fn ones(n: usize) -> DVector<Complex64> {
    DVector::from_element(n, Complex64::new(1.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_perfectly_conditioned() {
        assert!((condition_number(&identity(3)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let p = [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)];
        let v = vandermonde(&p, 3);
        assert!(matches!(condition_number(&v), Err(Error::Singular(_))));
    }

    #[test]
    fn pseudo_inverse_of_square_is_inverse() {
        let p = [Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
        let v = vandermonde(&p, 2);
        let inv = left_pseudo_inverse(&v).unwrap();
        let prod = &inv * &v;
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }
}

//! Dense helpers on top of nalgebra.

use log::warn;
use nalgebra::{DMatrix, DVector};

/// Symmetric positive semidefinite square root via eigendecomposition.
///
/// The input is symmetrized first; eigenvalues below zero (round-off in
/// covariance estimates) are clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(m.nrows(), m.ncols(), "psd_sqrt needs a square matrix");
    if m.nrows() == 0 {
        return m.clone();
    }
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        if v < 0.0 {
            warn!("clipping negative variance {v:e} to zero");
        }
        return DMatrix::from_element(1, 1, v.max(0.0).sqrt());
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let roots = eig.eigenvalues.map(|l| {
        if l < -1e-12 * scale {
            warn!("clipping negative eigenvalue {l:e} to zero");
        }
        l.max(0.0).sqrt()
    });
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows() + b.nrows();
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

/// Concatenates two vectors.
pub fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_round_trips() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = psd_sqrt(&a);
        let back = &r * &r;
        assert!((back - &a).amax() < 1e-12);
        assert!((&r - r.transpose()).amax() < 1e-14);
    }

    #[test]
    fn indefinite_input_is_clipped() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-18]);
        let r = psd_sqrt(&a);
        assert!((r[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(r[(1, 1)], 0.0);
    }
}

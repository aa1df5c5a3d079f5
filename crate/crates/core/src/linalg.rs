//! Dense symmetric positive-definite solves with a jitter fallback.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const JITTER_LADDER: [f64; 7] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5];
const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor of `K + shift I` (plus jitter, when needed).
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    log_det: f64,
}

impl SpdFactor {
    /// Factors `k + shift I`. On failure, `delta * mean(diag(k))` is added with `delta`
    /// stepping from 1e-10 to 1e-4 by factors of ten.
    pub fn new(k: &DMatrix<f64>, shift: f64) -> Result<Self> {
        let n = k.nrows();
        if n == 0 {
            return Err(Error::Empty);
        }
        let mean_diag = (k.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
        for delta in JITTER_LADDER.iter().copied().chain(std::iter::once(JITTER_MAX)) {
            let jitter = delta * mean_diag;
            let mut a = k.clone();
            for i in 0..n {
                a[(i, i)] += shift + jitter;
            }
            if let Some(chol) = Cholesky::new(a) {
                let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                if log_det.is_finite() {
                    return Ok(SpdFactor {
                        chol,
                        jitter,
                        log_det,
                    });
                }
            }
        }
        Err(Error::IllConditioned {
            jitter: JITTER_MAX * mean_diag,
        })
    }

    /// Jitter that had to be added on the diagonal (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `(L L')^{-1} = L^{-T} L^{-1}`, with the triangular inverse done in place and the
    /// product left to gemm.
    pub fn inverse(&self) -> DMatrix<f64> {
        let x = lower_inverse(&self.chol.l());
        x.transpose() * &x
    }
}

/// Inverse of a lower-triangular matrix by column-oriented forward substitution.
fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let ls = l.as_slice();
    let mut x = DMatrix::zeros(n, n);
    for (j, col) in x.as_mut_slice().chunks_exact_mut(n).enumerate() {
        col[j] = 1.0;
        for k in j..n {
            let lk = &ls[k * n..(k + 1) * n];
            let v = col[k] / lk[k];
            col[k] = v;
            for (c, &li) in col[k + 1..].iter_mut().zip(&lk[k + 1..]) {
                *c -= v * li;
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_det_matches_eigenvalues() {
        let k = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = SpdFactor::new(&k, 0.5).unwrap();
        let mut shifted = k.clone();
        for i in 0..3 {
            shifted[(i, i)] += 0.5;
        }
        let expected: f64 = shifted.symmetric_eigen().eigenvalues.iter().map(|e| e.ln()).sum();
        assert!((f.log_det() - expected).abs() < 1e-12);
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn inverse_matches_solve() {
        let k = DMatrix::from_fn(6, 6, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let f = SpdFactor::new(&k, 0.1).unwrap();
        let expected = f.solve_matrix(&DMatrix::identity(6, 6));
        assert!((f.inverse() - expected).abs().max() < 1e-10);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let k = DMatrix::from_element(4, 4, 1.0);
        let f = SpdFactor::new(&k, 0.0).unwrap();
        assert!(f.jitter() > 0.0 && f.jitter() <= 1e-4);
    }

    #[test]
    fn indefinite_fails() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(SpdFactor::new(&k, 0.0), Err(Error::IllConditioned { .. })));
    }
}

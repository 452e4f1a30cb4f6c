//! Dense symmetric positive-definite solves for the normal equations.

use ndarray::{Array1, Array2};

use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor of `a + jitter * I`.
///
/// The jitter is multiplied by ten until the factorisation succeeds, which
/// only happens for numerically singular designs.
pub(crate) fn cholesky<F: Scalar>(a: &Array2<F>, jitter: F) -> Array2<F> {
    let d = a.nrows();
    let mut jitter = jitter;
    'retry: loop {
        let mut l = Array2::<F>::zeros((d, d));
        for j in 0..d {
            let mut diag = a[[j, j]] + jitter;
            for k in 0..j {
                diag = diag - l[[j, k]] * l[[j, k]];
            }
            if diag <= F::zero() || !diag.is_finite() {
                jitter = if jitter > F::zero() { jitter * F::lit(10.0) } else { F::lit(1e-10) };
                continue 'retry;
            }
            let ljj = diag.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..d {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s = s - l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / ljj;
            }
        }
        return l;
    }
}

/// Solves `L L^T x = b` given the Cholesky factor.
pub(crate) fn cholesky_solve<F: Scalar>(l: &Array2<F>, b: &Array1<F>) -> Array1<F> {
    let d = l.nrows();
    let mut z = b.clone();
    for i in 0..d {
        let mut s = z[i];
        for k in 0..i {
            s = s - l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    for i in (0..d).rev() {
        let mut s = z[i];
        for k in (i + 1)..d {
            s = s - l[[k, i]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    z
}

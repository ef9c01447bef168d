//! Dense symmetric eigensolver (cyclic Jacobi).
//!
//! Both consumers (semantic factorization of style-affine weights, Fréchet
//! distance matrix square roots) only need symmetric eigendecompositions, so a
//! self-contained Jacobi solver keeps the numerics dependency-free and exact
//! enough for the residual bounds asserted in tests (~1e-12 relative).

use ndarray::{Array1, Array2};

/// Eigendecomposition of a symmetric matrix: `a = V diag(w) V^T`.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in columns, in the
/// order produced by the sweep (diagonal input keeps coordinate order; callers
/// sort as needed).
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        return (m.diag().to_owned(), v);
    }

    let scale: f64 = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1.0);
    let tol = 1e-15 * scale;

    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[[p, q]].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                // Rotation angle per Golub & Van Loan (8.4).
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    (m.diag().to_owned(), v)
}

/// Symmetric positive semi-definite square root via eigendecomposition.
/// Eigenvalues in `[-neg_tol, 0)` are clipped to zero.
pub fn sqrtm_psd(a: &Array2<f64>, neg_tol: f64) -> Array2<f64> {
    let (w, v) = symmetric_eigen(a);
    let n = a.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let lam = if w[k] < 0.0 {
            debug_assert!(w[k] >= -neg_tol.max(1e-8) * 100.0, "eigenvalue {} well below clip tolerance", w[k]);
            0.0
        } else {
            w[k]
        };
        let s = lam.sqrt();
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] += s * v[[i, k]] * v[[j, k]];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn diagonal_matrix_keeps_coordinate_order() {
        let a = array![[9.0, 0.0], [0.0, 1.0]];
        let (w, v) = symmetric_eigen(&a);
        assert_eq!(w[0], 9.0);
        assert_eq!(w[1], 1.0);
        assert_eq!(v, Array2::<f64>::eye(2));
    }

    #[test]
    fn reconstruction_residual_small() {
        let mut rng = crate::rng::fork(11, "eig", 0);
        let n = 24;
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random::<f64>() - 0.5;
                a[[i, j]] = x;
                a[[j, i]] = x;
            }
        }
        let (w, v) = symmetric_eigen(&a);
        // residual of A v_k - w_k v_k
        for k in 0..n {
            let vk = v.column(k);
            let av = a.dot(&vk);
            for i in 0..n {
                assert!((av[i] - w[k] * vk[i]).abs() < 1e-10, "residual too large");
            }
        }
    }

    #[test]
    fn sqrtm_squares_back() {
        let mut rng = crate::rng::fork(5, "sqrtm", 0);
        let n = 8;
        let mut b = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                b[[i, j]] = rng.random::<f64>() - 0.5;
            }
        }
        let a = b.dot(&b.t()); // PSD
        let s = sqrtm_psd(&a, 1e-8);
        let ss = s.dot(&s);
        for i in 0..n {
            for j in 0..n {
                assert!((ss[[i, j]] - a[[i, j]]).abs() < 1e-9);
            }
        }
    }
}

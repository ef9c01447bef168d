//! Fréchet distance between Gaussians fitted to two feature sets.

use crate::error::{Error, Result};
use crate::linalg::{sqrtm_psd, symmetric_eigen};
use ndarray::{Array1, Array2, ArrayView2};

const JITTER: f64 = 1e-6;
const SINGULAR_EIG: f64 = 1e-10;
const NEG_EIG_TOL: f64 = 1e-8;

/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})` with unbiased
/// covariance estimates (divisor n-1). The cross term uses the symmetrized
/// product `sqrt(S_a) S_b sqrt(S_a)`, whose eigendecomposition stays real;
/// slightly negative eigenvalues (within -1e-8) are clipped to zero.
/// Near-singular covariances are jittered by `1e-6 I` with a warning.
pub fn frechet_distance(features_a: ArrayView2<f64>, features_b: ArrayView2<f64>) -> Result<f64> {
    for (name, f) in [("first", &features_a), ("second", &features_b)] {
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{name} feature set contains non-finite values")));
        }
        if f.nrows() < 2 {
            return Err(Error::invalid(format!(
                "{name} feature set needs at least 2 samples for an unbiased covariance, got {}",
                f.nrows()
            )));
        }
    }
    if features_a.ncols() != features_b.ncols() || features_a.ncols() == 0 {
        return Err(Error::invalid(format!(
            "feature dimensions disagree: {} vs {}",
            features_a.ncols(),
            features_b.ncols()
        )));
    }

    let (mu_a, mut cov_a) = fit_gaussian(features_a);
    let (mu_b, mut cov_b) = fit_gaussian(features_b);

    for (name, cov) in [("first", &mut cov_a), ("second", &mut cov_b)] {
        let (w, _) = symmetric_eigen(cov);
        let min_eig = w.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < SINGULAR_EIG {
            eprintln!(
                "warning: {name} covariance near-singular (min eigenvalue {min_eig:.3e}); \
                 adding {JITTER:.0e} jitter"
            );
            for i in 0..cov.nrows() {
                cov[[i, i]] += JITTER;
            }
        }
    }

    let mean_term: f64 = mu_a
        .iter()
        .zip(mu_b.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let sqrt_a = sqrtm_psd(&cov_a, NEG_EIG_TOL);
    let inner = sqrt_a.dot(&cov_b).dot(&sqrt_a);
    // symmetrize away rounding asymmetry before the eigendecomposition
    let sym = (&inner + &inner.t()) * 0.5;
    let (w, _) = symmetric_eigen(&sym);
    let scale = w.iter().cloned().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut tr_sqrt = 0.0;
    for lam in w.iter() {
        if *lam < -NEG_EIG_TOL * scale {
            return Err(Error::invalid(format!(
                "cross-covariance eigenvalue {lam:.3e} below clipping tolerance"
            )));
        }
        tr_sqrt += lam.max(0.0).sqrt();
    }

    let trace_a: f64 = cov_a.diag().sum();
    let trace_b: f64 = cov_b.diag().sum();
    let fd = mean_term + trace_a + trace_b - 2.0 * tr_sqrt;
    // rounding can leave a tiny negative residue on identical inputs
    Ok(if fd < 0.0 && fd > -1e-6 { 0.0 } else { fd })
}

fn fit_gaussian(f: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = f.nrows();
    let d = f.ncols();
    let mu = f.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let mut centered = f.to_owned();
    for mut row in centered.rows_mut() {
        row -= &mu;
    }
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    debug_assert_eq!(cov.dim(), (d, d));
    (mu, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::Array2;

    #[test]
    fn identical_sets_give_zero() {
        let mut r = rng::fork(1, "fd", 0);
        let a = Array2::from_shape_fn((40, 6), |_| rng::normal(&mut r));
        let d = frechet_distance(a.view(), a.view()).unwrap();
        assert!(d.abs() <= 1e-6, "fd = {d}");
    }

    #[test]
    fn one_dimensional_analytic_case() {
        // A = {0, 2}: mean 1, unbiased var 2. B = {1, 3}: mean 2, var 2.
        // FD = (1-2)^2 + (2 + 2 - 2*2) = 1.
        let a = Array2::from_shape_vec((2, 1), vec![0.0, 2.0]).unwrap();
        let b = Array2::from_shape_vec((2, 1), vec![1.0, 3.0]).unwrap();
        let d = frechet_distance(a.view(), b.view()).unwrap();
        assert!((d - 1.0).abs() <= 1e-9, "fd = {d}");
    }

    #[test]
    fn invariant_under_shared_rotation() {
        let mut r = rng::fork(2, "fd", 0);
        let d = 8;
        let a = Array2::from_shape_fn((60, d), |_| rng::normal(&mut r) + 0.3);
        let b = Array2::from_shape_fn((50, d), |_| 1.5 * rng::normal(&mut r));
        // random orthonormal matrix via Gram-Schmidt on a random matrix
        let mut q = Array2::from_shape_fn((d, d), |_| rng::normal(&mut r));
        for i in 0..d {
            for j in 0..i {
                let proj: f64 = (0..d).map(|k| q[[k, i]] * q[[k, j]]).sum();
                for k in 0..d {
                    let v = q[[k, j]];
                    q[[k, i]] -= proj * v;
                }
            }
            let norm: f64 = (0..d).map(|k| q[[k, i]] * q[[k, i]]).sum::<f64>().sqrt();
            for k in 0..d {
                q[[k, i]] /= norm;
            }
        }
        let d0 = frechet_distance(a.view(), b.view()).unwrap();
        let ar = a.dot(&q);
        let br = b.dot(&q);
        let d1 = frechet_distance(ar.view(), br.view()).unwrap();
        assert!((d0 - d1).abs() <= 1e-6, "{d0} vs {d1}");
    }

    #[test]
    fn rejects_non_finite_features() {
        let mut a = Array2::zeros((4, 2));
        a[[1, 1]] = f64::NAN;
        let b = Array2::zeros((4, 2));
        assert!(frechet_distance(a.view(), b.view()).is_err());
    }

    #[test]
    fn singular_covariance_is_jittered_not_fatal() {
        // constant features -> zero covariance
        let a = Array2::from_elem((10, 3), 0.5);
        let b = Array2::from_elem((12, 3), 0.75);
        let d = frechet_distance(a.view(), b.view()).unwrap();
        // means differ by 0.25 in each of 3 dims
        assert!((d - 3.0 * 0.0625).abs() < 1e-6, "fd = {d}");
    }
}

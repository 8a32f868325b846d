//! Joint draws of random-walk state paths from tridiagonal Gaussian
//! posteriors.
//!
//! Both the log-volatility paths and the time-varying loading paths combine
//! a random-walk prior with per-period observation terms, giving a posterior
//! precision that is symmetric tridiagonal. The whole trajectory is drawn in
//! one pass via a banded Cholesky factorization: no sequential filtering.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Draw x ~ N(P^{-1} rhs, P^{-1}) for a symmetric positive-definite
/// tridiagonal precision P with main diagonal `diag` and first off-diagonal
/// `offdiag` (length one less).
pub fn sample_tridiag_gaussian<F: Scalar, R: Rng + ?Sized>(
    diag: &[F],
    offdiag: &[F],
    rhs: &[F],
    rng: &mut R,
) -> Result<Vec<F>> {
    let t_len = diag.len();
    if t_len == 0 {
        return Ok(Vec::new());
    }
    if offdiag.len() + 1 != t_len || rhs.len() != t_len {
        return Err(Error::argument(format!(
            "tridiagonal system size mismatch: diag {t_len}, offdiag {}, rhs {}",
            offdiag.len(),
            rhs.len()
        )));
    }

    // Banded Cholesky P = L L^T: l = diag of L, s = subdiagonal of L.
    let mut l = vec![F::zero(); t_len];
    let mut s = vec![F::zero(); t_len.saturating_sub(1)];
    let mut pivot = diag[0];
    for t in 0..t_len {
        if !(pivot > F::zero()) || !pivot.is_finite() {
            return Err(Error::domain(format!(
                "tridiagonal precision not positive definite at index {t} (pivot {pivot:e})"
            )));
        }
        l[t] = pivot.sqrt();
        if t + 1 < t_len {
            s[t] = offdiag[t] / l[t];
            pivot = diag[t + 1] - s[t] * s[t];
        }
    }

    // Forward solve L y = rhs.
    let mut y = vec![F::zero(); t_len];
    y[0] = rhs[0] / l[0];
    for t in 1..t_len {
        y[t] = (rhs[t] - s[t - 1] * y[t - 1]) / l[t];
    }

    // Backward solve L^T x = y + z with z ~ N(0, I), giving
    // x = mean + L^{-T} z in a single pass.
    let mut x = vec![F::zero(); t_len];
    let z_last: F = F::std_normal(rng);
    x[t_len - 1] = (y[t_len - 1] + z_last) / l[t_len - 1];
    for t in (0..t_len - 1).rev() {
        let z: F = F::std_normal(rng);
        x[t] = (y[t] + z - s[t] * x[t + 1]) / l[t];
    }
    Ok(x)
}

/// Posterior mean only (no noise); used by tests and diagnostics.
pub fn solve_tridiag<F: Scalar>(diag: &[F], offdiag: &[F], rhs: &[F]) -> Result<Vec<F>> {
    let t_len = diag.len();
    if t_len == 0 {
        return Ok(Vec::new());
    }
    let mut l = vec![F::zero(); t_len];
    let mut s = vec![F::zero(); t_len.saturating_sub(1)];
    let mut pivot = diag[0];
    for t in 0..t_len {
        if !(pivot > F::zero()) || !pivot.is_finite() {
            return Err(Error::domain(format!(
                "tridiagonal precision not positive definite at index {t}"
            )));
        }
        l[t] = pivot.sqrt();
        if t + 1 < t_len {
            s[t] = offdiag[t] / l[t];
            pivot = diag[t + 1] - s[t] * s[t];
        }
    }
    let mut y = vec![F::zero(); t_len];
    y[0] = rhs[0] / l[0];
    for t in 1..t_len {
        y[t] = (rhs[t] - s[t - 1] * y[t - 1]) / l[t];
    }
    let mut x = vec![F::zero(); t_len];
    x[t_len - 1] = y[t_len - 1] / l[t_len - 1];
    for t in (0..t_len - 1).rev() {
        x[t] = (y[t] - s[t] * x[t + 1]) / l[t];
    }
    Ok(x)
}

/// Build the tridiagonal posterior for a random-walk path:
/// prior x_t = x_{t-1} + N(0, innovation_var), x_0 ~ N(init_mean, init_var),
/// observations contribute `obs_precision[t]` to the diagonal and
/// `obs_rhs[t]` to the right-hand side.
pub fn random_walk_posterior<F: Scalar>(
    innovation_var: F,
    init_mean: F,
    init_var: F,
    obs_precision: &[F],
    obs_rhs: &[F],
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let t_len = obs_precision.len();
    let qinv = F::one() / innovation_var;
    let mut diag = vec![F::zero(); t_len];
    let mut offdiag = vec![-qinv; t_len.saturating_sub(1)];
    let mut rhs = vec![F::zero(); t_len];
    for t in 0..t_len {
        let prior = if t_len == 1 {
            F::one() / init_var
        } else if t == 0 {
            F::one() / init_var + qinv
        } else if t + 1 == t_len {
            qinv
        } else {
            qinv + qinv
        };
        diag[t] = prior + obs_precision[t];
        rhs[t] = obs_rhs[t];
    }
    if t_len > 0 {
        rhs[0] += init_mean / init_var;
    }
    if t_len == 1 {
        offdiag.clear();
    }
    (diag, offdiag, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_from_tridiag(diag: &[f64], offdiag: &[f64]) -> DMatrix<f64> {
        let n = diag.len();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            p[(i, i)] = diag[i];
            if i + 1 < n {
                p[(i, i + 1)] = offdiag[i];
                p[(i + 1, i)] = offdiag[i];
            }
        }
        p
    }

    #[test]
    fn mean_matches_dense_solve() {
        let diag = vec![3.0, 4.0, 3.5, 5.0, 2.5];
        let off = vec![-1.0, -1.2, -0.8, -1.1];
        let rhs = vec![0.3, -0.6, 1.0, 0.2, -0.4];
        let mean = solve_tridiag(&diag, &off, &rhs).unwrap();
        let p = dense_from_tridiag(&diag, &off);
        let dense = p
            .clone()
            .cholesky()
            .unwrap()
            .solve(&DVector::from_column_slice(&rhs));
        for i in 0..5 {
            assert!((mean[i] - dense[i]).abs() < 1e-12, "index {i}");
        }
    }

    #[test]
    fn sample_moments_match_dense_posterior() {
        // Monte Carlo check of mean and covariance against the dense inverse.
        let diag = vec![4.0, 5.0, 4.5, 6.0];
        let off = vec![-1.5, -2.0, -1.0];
        let rhs = vec![1.0, 0.0, -1.0, 0.5];
        let p = dense_from_tridiag(&diag, &off);
        let cov = p.clone().try_inverse().unwrap();
        let mean = &cov * DVector::from_column_slice(&rhs);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n_draws = 200_000;
        let mut acc_mean = DVector::<f64>::zeros(4);
        let mut acc_cov = DMatrix::<f64>::zeros(4, 4);
        for _ in 0..n_draws {
            let x = sample_tridiag_gaussian(&diag, &off, &rhs, &mut rng).unwrap();
            let xv = DVector::from_column_slice(&x);
            acc_mean += &xv;
            acc_cov += &xv * xv.transpose();
        }
        let emp_mean = acc_mean / n_draws as f64;
        let emp_cov = acc_cov / n_draws as f64 - &emp_mean * emp_mean.transpose();
        for i in 0..4 {
            assert!((emp_mean[i] - mean[i]).abs() < 0.01, "mean {i}");
            for j in 0..4 {
                assert!(
                    (emp_cov[(i, j)] - cov[(i, j)]).abs() < 0.015,
                    "cov ({i},{j}): {} vs {}",
                    emp_cov[(i, j)],
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn random_walk_prior_structure() {
        let (diag, off, rhs) =
            random_walk_posterior(0.5f64, 2.0, 10.0, &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]);
        assert_eq!(diag.len(), 3);
        assert!((diag[0] - (0.1 + 2.0)).abs() < 1e-14);
        assert!((diag[1] - 4.0).abs() < 1e-14);
        assert!((diag[2] - 2.0).abs() < 1e-14);
        assert!(off.iter().all(|v| (*v + 2.0).abs() < 1e-14));
        assert!((rhs[0] - 0.2).abs() < 1e-14);
        // With no observations the posterior mean is flat at the anchor.
        let mean = solve_tridiag(&diag, &off, &rhs).unwrap();
        for m in mean {
            assert!((m - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn non_positive_definite_detected() {
        let diag = vec![1.0, 1.0];
        let off = vec![-2.0]; // |off| > sqrt(d_i d_j) breaks positive definiteness
        let rhs = vec![0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_tridiag_gaussian(&diag, &off, &rhs, &mut rng).is_err());
    }

    #[test]
    fn vanishing_innovation_variance_collapses_path_to_constant() {
        // omega^2 -> 0 limit: prior dominance freezes the whole path at its
        // best constant even against informative observations.
        let t_len = 60;
        let obs_prec = vec![1.0f64; t_len];
        let obs_rhs: Vec<f64> = (0..t_len).map(|t| if t < 30 { -2.0 } else { 2.0 }).collect();
        let (diag, off, rhs) = random_walk_posterior(1e-14, 0.0, 10.0, &obs_prec, &obs_rhs);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = sample_tridiag_gaussian(&diag, &off, &rhs, &mut rng).unwrap();
        let spread = x.iter().cloned().fold(f64::MIN, f64::max)
            - x.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-4, "path spread {spread} under vanishing innovations");
        // The constant it collapses to is near the observation average (0).
        assert!(x[0].abs() < 0.5, "collapsed level {}", x[0]);
    }

    #[test]
    fn single_point_path() {
        let (diag, off, rhs) = random_walk_posterior(1.0f64, 0.0, 4.0, &[1.0], &[2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = sample_tridiag_gaussian(&diag, &off, &rhs, &mut rng).unwrap();
        assert_eq!(x.len(), 1);
        // posterior: precision 1/4 + 1, mean = 2 / 1.25 = 1.6
        let mean = solve_tridiag(&diag, &off, &rhs).unwrap();
        assert!((mean[0] - 1.6).abs() < 1e-12);
    }
}

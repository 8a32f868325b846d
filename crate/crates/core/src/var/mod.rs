//! Deterministic VAR algebra: regressor construction, companion form, moving
//! average coefficients, stability diagnostics. Everything here is pure and
//! freely parallel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reduced-form VAR coefficients: intercept and p lag matrices, each
/// `n_vars x n_vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarCoefficients<F> {
    pub intercept: DVector<F>,
    pub lag_matrices: Vec<DMatrix<F>>,
}

impl<F: Scalar> VarCoefficients<F> {
    pub fn n_vars(&self) -> usize {
        self.intercept.len()
    }

    pub fn lags(&self) -> usize {
        self.lag_matrices.len()
    }

    /// Number of regressors per equation: intercept + p*n_vars.
    pub fn n_regressors(&self) -> usize {
        1 + self.lags() * self.n_vars()
    }

    /// Stacked `n x (1 + p n)` coefficient matrix `[c, Phi_1, ..., Phi_p]`,
    /// matching the regressor layout of `build_regressors`.
    pub fn stacked(&self) -> DMatrix<F> {
        let n = self.n_vars();
        let k = self.n_regressors();
        let mut out = DMatrix::<F>::zeros(n, k);
        out.column_mut(0).copy_from(&self.intercept);
        for (j, phi) in self.lag_matrices.iter().enumerate() {
            out.view_mut((0, 1 + j * n), (n, n)).copy_from(phi);
        }
        out
    }

    /// Inverse of `stacked`: split an `n x k` coefficient matrix into
    /// intercept and lag blocks.
    pub fn from_stacked(stacked: &DMatrix<F>, p: usize) -> Result<VarCoefficients<F>> {
        let n = stacked.nrows();
        if stacked.ncols() != 1 + p * n {
            return Err(Error::argument(format!(
                "stacked coefficients are {}x{}, expected {}x{}",
                stacked.nrows(),
                stacked.ncols(),
                n,
                1 + p * n
            )));
        }
        let intercept = DVector::from_iterator(n, stacked.column(0).iter().copied());
        let lag_matrices = (0..p)
            .map(|j| stacked.view((0, 1 + j * n), (n, n)).into_owned())
            .collect();
        Ok(VarCoefficients {
            intercept,
            lag_matrices,
        })
    }
}

/// Moving-average coefficients `Psi_0..Psi_H`; `Psi_0` is the identity.
#[derive(Debug, Clone)]
pub struct VmaSequence<F> {
    pub psi: Vec<DMatrix<F>>,
}

impl<F: Scalar> VmaSequence<F> {
    pub fn horizon(&self) -> usize {
        self.psi.len() - 1
    }
}

/// Build the regression pair (Y, X) for a p-lag VAR on a `T x n` panel.
///
/// Row t of X is `[1, z_{t-1}', ..., z_{t-p}']`; Y is aligned so row t is
/// `z_t`. Output has `T - p` rows.
pub fn build_regressors<F: Scalar>(
    values: &DMatrix<F>,
    p: usize,
) -> Result<(DMatrix<F>, DMatrix<F>)> {
    let t_len = values.nrows();
    let n = values.ncols();
    if p == 0 || p >= t_len {
        return Err(Error::argument(format!(
            "lag order p={p} must satisfy 0 < p < T={t_len}"
        )));
    }
    let rows = t_len - p;
    let k = 1 + p * n;
    let mut y = DMatrix::<F>::zeros(rows, n);
    let mut x = DMatrix::<F>::zeros(rows, k);
    for t in 0..rows {
        for c in 0..n {
            y[(t, c)] = values[(t + p, c)];
        }
        x[(t, 0)] = F::one();
        for lag in 1..=p {
            for c in 0..n {
                x[(t, 1 + (lag - 1) * n + c)] = values[(t + p - lag, c)];
            }
        }
    }
    Ok((y, x))
}

/// Companion matrix of order `p*n`: lag blocks on the top row, identities on
/// the subdiagonal blocks, zeros elsewhere.
pub fn companion<F: Scalar>(coeffs: &VarCoefficients<F>) -> DMatrix<F> {
    let n = coeffs.n_vars();
    let p = coeffs.lags();
    let d = n * p;
    let mut out = DMatrix::<F>::zeros(d, d);
    for (j, phi) in coeffs.lag_matrices.iter().enumerate() {
        out.view_mut((0, j * n), (n, n)).copy_from(phi);
    }
    for j in 1..p {
        for i in 0..n {
            out[(j * n + i, (j - 1) * n + i)] = F::one();
        }
    }
    out
}

/// Moving-average recursion: `Psi_0 = I`, `Psi_h = sum_j Psi_{h-j} Phi_j`.
/// The intercept does not enter.
pub fn vma<F: Scalar>(coeffs: &VarCoefficients<F>, horizon: usize) -> VmaSequence<F> {
    let n = coeffs.n_vars();
    let p = coeffs.lags();
    let mut psi: Vec<DMatrix<F>> = Vec::with_capacity(horizon + 1);
    psi.push(DMatrix::<F>::identity(n, n));
    for h in 1..=horizon {
        let mut next = DMatrix::<F>::zeros(n, n);
        for j in 1..=p.min(h) {
            next += &psi[h - j] * &coeffs.lag_matrices[j - 1];
        }
        psi.push(next);
    }
    VmaSequence { psi }
}

/// Largest eigenvalue modulus of a square matrix. Reported per stored draw as
/// a stationarity diagnostic; never used to reject draws.
pub fn spectral_radius<F: Scalar>(matrix: &DMatrix<F>) -> Result<F> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::argument(format!(
            "spectral radius needs a square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.nrows() == 0 {
        return Ok(F::zero());
    }
    let eigs = matrix.clone().complex_eigenvalues();
    let mut rho = F::zero();
    for e in eigs.iter() {
        let modulus = (e.re * e.re + e.im * e.im).sqrt();
        if modulus > rho {
            rho = modulus;
        }
    }
    Ok(rho)
}

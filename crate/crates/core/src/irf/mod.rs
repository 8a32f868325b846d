//! Impulse-response analysis over posterior draws: per-draw responses,
//! quantile summaries, time-varying impact surfaces, and the reduced-rank
//! structural matrices.

mod export;

pub use export::{irf_to_csv, irf_to_json, surface_to_csv};

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::gibbs::{PosteriorDraws, StoredDraw};
use crate::scalar::Scalar;
use crate::var::{vma, VarCoefficients};

/// Reporting units for summarized responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    /// The estimation scale (standardized when the panel was standardized).
    Standardized,
    /// Each variable's row multiplied by its stored standard deviation.
    Original,
}

/// Quantile levels reported everywhere: 5/16/50/84/95 give the 68% and 90%
/// bands around the median.
pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.16, 0.5, 0.84, 0.95];

/// Posterior quantiles of impulse responses over
/// (quantile, time slice, horizon, variable, shock). The time axis has one
/// entry when loadings are constant or no times were requested.
#[derive(Debug, Clone)]
pub struct IrfResult {
    pub horizons: usize,
    pub variables: Vec<String>,
    pub shocks: Vec<String>,
    pub quantiles: Vec<f64>,
    /// Periods the time axis refers to (`None` = single implicit slice).
    pub time_index: Option<Vec<usize>>,
    values: Vec<f64>,
    n_vars: usize,
    n_shocks: usize,
    n_slices: usize,
}

impl IrfResult {
    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn value(&self, q: usize, slice: usize, h: usize, var: usize, shock: usize) -> f64 {
        let nh = self.horizons + 1;
        self.values
            [(((q * self.n_slices + slice) * nh + h) * self.n_vars + var) * self.n_shocks + shock]
    }

    fn index_mut(
        &mut self,
        q: usize,
        slice: usize,
        h: usize,
        var: usize,
        shock: usize,
    ) -> &mut f64 {
        let nh = self.horizons + 1;
        &mut self.values
            [(((q * self.n_slices + slice) * nh + h) * self.n_vars + var) * self.n_shocks + shock]
    }

    /// Quantile monotonicity check: q05 <= q16 <= q50 <= q84 <= q95 in every
    /// cell. True when the invariant holds.
    pub fn bands_monotone(&self) -> bool {
        let nh = self.horizons + 1;
        for slice in 0..self.n_slices {
            for h in 0..nh {
                for v in 0..self.n_vars {
                    for s in 0..self.n_shocks {
                        for q in 1..self.quantiles.len() {
                            if self.value(q, slice, h, v, s) < self.value(q - 1, slice, h, v, s) {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    }
}

/// Type-7 empirical quantile (linear interpolation) of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Impulse responses of one stored draw to shock `shock` over `0..=horizon`.
///
/// The loading matrix is frozen at `at_time` (final period by default when
/// loadings vary); the impact row equals the loading column exactly.
pub fn irf_draw<F: Scalar>(
    draw: &StoredDraw<F>,
    tv_rows: &[usize],
    p: usize,
    shock: usize,
    horizon: usize,
    at_time: Option<usize>,
) -> Result<DMatrix<F>> {
    let r = draw.gamma.ncols().max(draw.lambda.ncols());
    if shock >= r {
        return Err(Error::argument(format!(
            "shock index {shock} out of range ({r} factors)"
        )));
    }
    check_time(draw, tv_rows, at_time)?;
    let gstar = draw.gamma_star(tv_rows, at_time);
    let coeffs = VarCoefficients::from_stacked(&draw.phi, p)?;
    let psi = vma(&coeffs, horizon);
    let nv = gstar.nrows();
    let col = gstar.column(shock).into_owned();
    let mut out = DMatrix::<F>::zeros(horizon + 1, nv);
    // h = 0 is the identity times the loading column: copy it exactly.
    for i in 0..nv {
        out[(0, i)] = col[i];
    }
    for h in 1..=horizon {
        let resp = &psi.psi[h] * &col;
        for i in 0..nv {
            out[(h, i)] = resp[i];
        }
    }
    Ok(out)
}

fn check_time<F: Scalar>(
    draw: &StoredDraw<F>,
    tv_rows: &[usize],
    at_time: Option<usize>,
) -> Result<()> {
    if let Some(t) = at_time {
        if tv_rows.is_empty() {
            return Err(Error::argument(
                "time-indexed responses need time-varying loadings".to_string(),
            ));
        }
        let t_len = draw.lambda_paths[0].nrows();
        if t >= t_len {
            return Err(Error::argument(format!(
                "time index {t} out of range (0..{t_len})"
            )));
        }
    }
    Ok(())
}

/// Responses of one draw to several shocks, sharing one moving-average pass.
fn irf_draw_multi<F: Scalar>(
    draw: &StoredDraw<F>,
    tv_rows: &[usize],
    p: usize,
    shocks: &[usize],
    horizon: usize,
    at_time: Option<usize>,
) -> Result<Vec<DMatrix<f64>>> {
    check_time(draw, tv_rows, at_time)?;
    let gstar = draw.gamma_star(tv_rows, at_time);
    let coeffs = VarCoefficients::from_stacked(&draw.phi, p)?;
    let psi = vma(&coeffs, horizon);
    let nv = gstar.nrows();
    let mut out = Vec::with_capacity(shocks.len());
    for &shock in shocks {
        if shock >= gstar.ncols() {
            return Err(Error::argument(format!("shock index {shock} out of range")));
        }
        let col = gstar.column(shock).into_owned();
        let mut irf = DMatrix::<f64>::zeros(horizon + 1, nv);
        for i in 0..nv {
            irf[(0, i)] = col[i].to_f64_lossy();
        }
        for h in 1..=horizon {
            let resp = &psi.psi[h] * &col;
            for i in 0..nv {
                irf[(h, i)] = resp[i].to_f64_lossy();
            }
        }
        out.push(irf);
    }
    Ok(out)
}

/// Summarize responses across draws into per-cell quantiles.
///
/// With `times` given (requires time-varying loadings), the result carries
/// one time slice per requested period, each holding the full
/// horizon-by-variable panel for every shock.
pub fn summarize<F: Scalar>(
    draws: &PosteriorDraws<F>,
    shocks: &[usize],
    horizon: usize,
    times: Option<&[usize]>,
    units: Units,
) -> Result<IrfResult> {
    if draws.len() < 50 {
        return Err(Error::argument(format!(
            "need at least 50 stored draws to summarize, have {}",
            draws.len()
        )));
    }
    let meta = &draws.meta;
    let nv = meta.m + meta.n;
    let time_points: Vec<Option<usize>> = match times {
        None => vec![None],
        Some(ts) => ts.iter().map(|t| Some(*t)).collect(),
    };
    let n_slices = time_points.len();
    let nh = horizon + 1;
    let nq = QUANTILE_LEVELS.len();
    let mut result = IrfResult {
        horizons: horizon,
        variables: meta.variable_labels.clone(),
        shocks: shocks.iter().map(|&j| meta.shock_labels[j].clone()).collect(),
        quantiles: QUANTILE_LEVELS.to_vec(),
        time_index: times.map(|t| t.to_vec()),
        values: vec![0.0; nq * n_slices * nh * nv * shocks.len()],
        n_vars: nv,
        n_shocks: shocks.len(),
        n_slices,
    };

    let mut cell = vec![0.0f64; draws.len()];
    for (slice, at_time) in time_points.iter().enumerate() {
        let per_draw: Vec<Vec<DMatrix<f64>>> = draws
            .draws
            .iter()
            .map(|d| irf_draw_multi(d, &meta.tv_rows, meta.p, shocks, horizon, *at_time))
            .collect::<Result<_>>()?;
        for si in 0..shocks.len() {
            for h in 0..nh {
                for var in 0..nv {
                    let scale = match units {
                        Units::Standardized => 1.0,
                        Units::Original => meta.scaling_sds[var],
                    };
                    for (di, d) in per_draw.iter().enumerate() {
                        cell[di] = d[si][(h, var)] * scale;
                    }
                    cell.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    for (qi, level) in QUANTILE_LEVELS.iter().enumerate() {
                        *result.index_mut(qi, slice, h, var, si) = quantile_sorted(&cell, *level);
                    }
                }
            }
        }
    }
    Ok(result)
}

/// Reduced-rank structural matrices of one draw: the left pseudo-inverse of
/// the stacked loadings and the implied structural coefficient matrix.
pub fn structural_matrices<F: Scalar>(
    draw: &StoredDraw<F>,
    tv_rows: &[usize],
    at_time: Option<usize>,
) -> Result<(DMatrix<F>, DMatrix<F>)> {
    let gstar = draw.gamma_star(tv_rows, at_time);
    let gtg = gstar.transpose() * &gstar;
    let chol = Cholesky::new(gtg).ok_or_else(|| {
        Error::domain("stacked loadings are rank deficient; pseudo-inverse undefined".to_string())
    })?;
    // A* = (G'G)^{-1} G'
    let a_star = chol.solve(&gstar.transpose());
    let b_star = &a_star * &draw.phi;
    Ok((a_star, b_star))
}

/// Quantile bands of the impact loading path of one (variable, shock) cell.
pub struct SurfaceResult {
    pub variable: String,
    pub shock: String,
    pub dates: Vec<String>,
    pub quantiles: Vec<f64>,
    /// `values[q][t]`
    pub values: Vec<Vec<f64>>,
}

/// Per-period quantiles of an impact loading path; only valid for rows whose
/// loadings vary over time (constant rows are served by `irf_draw`).
pub fn impact_surface<F: Scalar>(
    draws: &PosteriorDraws<F>,
    shock: usize,
    variable: usize,
) -> Result<SurfaceResult> {
    let meta = &draws.meta;
    let slot = meta
        .tv_rows
        .iter()
        .position(|&row| row == variable)
        .ok_or_else(|| {
            Error::argument(format!(
                "variable {} has constant loadings; use the standard responses",
                meta.variable_labels
                    .get(variable)
                    .cloned()
                    .unwrap_or_else(|| variable.to_string())
            ))
        })?;
    if shock >= meta.r {
        return Err(Error::argument(format!("shock {shock} out of range")));
    }
    if draws.is_empty() {
        return Err(Error::argument("no stored draws".to_string()));
    }
    let t_len = meta.t_eff;
    let mut values = vec![vec![0.0f64; t_len]; QUANTILE_LEVELS.len()];
    let mut cell = vec![0.0f64; draws.len()];
    for t in 0..t_len {
        for (di, d) in draws.draws.iter().enumerate() {
            cell[di] = d.lambda_paths[slot][(t, shock)].to_f64_lossy();
        }
        cell.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (qi, level) in QUANTILE_LEVELS.iter().enumerate() {
            values[qi][t] = quantile_sorted(&cell, *level);
        }
    }
    Ok(SurfaceResult {
        variable: meta.variable_labels[variable].clone(),
        shock: meta.shock_labels[shock].clone(),
        dates: meta.dates.clone(),
        quantiles: QUANTILE_LEVELS.to_vec(),
        values,
    })
}

//! Panel assembly and standardization.
//!
//! `assemble` turns per-variable raw series into a rectangular monthly panel:
//! transforms applied, columns ordered instruments / core / other, instrument
//! months without observations filled with exact zeros, macro coverage gaps
//! fatal. `standardize` demeans and scales each column to unit standard
//! deviation, remembering the (mean, sd) pairs so results can be mapped back
//! to original units.

use nalgebra::DMatrix;

use crate::data::csv::RawSeries;
use crate::data::meta::{ordered_schema, Role, VariableMeta};
use crate::data::transform::{apply_tcode, tcode_lag};
use crate::error::{Error, Result};
use crate::month::{month_range, Month};
use crate::scalar::Scalar;

/// An aligned monthly panel: T x (m+n) values, gap-free dates, per-column
/// metadata, and optional standardization scaling.
#[derive(Debug, Clone)]
pub struct Dataset<F> {
    pub values: DMatrix<F>,
    pub dates: Vec<Month>,
    pub meta: Vec<VariableMeta>,
    /// Per-column (mean, sd) recorded by `standardize`; `None` for raw panels.
    pub scaling: Option<Vec<(F, F)>>,
}

impl<F: Scalar> Dataset<F> {
    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    /// Number of instrument columns (they always come first).
    pub fn n_instruments(&self) -> usize {
        self.meta
            .iter()
            .take_while(|m| m.role == Role::Instrument)
            .count()
    }

    pub fn mnemonics(&self) -> Vec<String> {
        self.meta.iter().map(|m| m.mnemonic.clone()).collect()
    }

    pub fn column_index(&self, mnemonic: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.mnemonic == mnemonic)
    }

    /// Per-column standard deviations for reporting in original units;
    /// all ones when the panel was never standardized.
    pub fn report_sds(&self) -> Vec<F> {
        match &self.scaling {
            Some(s) => s.iter().map(|(_, sd)| *sd).collect(),
            None => vec![F::one(); self.n_vars()],
        }
    }
}

/// Assemble a panel over `[start, end]` from raw series.
///
/// Macro (CORE/OTHER) series must cover `[start - transform lag, end]`
/// contiguously; instruments may have gaps, which become exact `0.0`.
pub fn assemble<F: Scalar>(
    raw: &[RawSeries<F>],
    schema: &[VariableMeta],
    sample: (Month, Month),
) -> Result<Dataset<F>> {
    let (start, end) = sample;
    if end < start {
        return Err(Error::argument(format!(
            "sample end {end} precedes start {start}"
        )));
    }
    let ordered = ordered_schema(schema)?;
    let dates: Vec<Month> = month_range(start, end).collect();
    let t_len = dates.len();
    let mut values = DMatrix::<F>::zeros(t_len, ordered.len());

    for (col, meta) in ordered.iter().enumerate() {
        let series = raw
            .iter()
            .find(|s| s.mnemonic == meta.mnemonic)
            .ok_or_else(|| Error::schema(format!("no raw series for {:?}", meta.mnemonic)))?;

        if meta.role == Role::Instrument {
            // Transform over the observed span, then place observed months and
            // leave absent ones at the exact zero fill.
            let transformed = apply_tcode(series, meta.tcode)?;
            for (date, v) in &transformed.observations {
                if *date >= start && *date <= end {
                    let row = date.diff(&start) as usize;
                    values[(row, col)] = *v;
                }
            }
        } else {
            let lag = tcode_lag(meta.tcode) as i64;
            let need_start = start.plus(-lag);
            coverage_check(series, meta, need_start, end)?;
            let transformed = apply_tcode(series, meta.tcode)?;
            let t0 = transformed.observations[0].0;
            for (row, date) in dates.iter().enumerate() {
                let idx = date.diff(&t0);
                // Coverage was verified above; defend against logic drift.
                if idx < 0 || idx as usize >= transformed.observations.len() {
                    return Err(Error::Coverage {
                        series: meta.mnemonic.clone(),
                        span: format!("{date}"),
                    });
                }
                values[(row, col)] = transformed.observations[idx as usize].1;
            }
        }
    }

    Ok(Dataset {
        values,
        dates,
        meta: ordered,
        scaling: None,
    })
}

fn coverage_check<F: Scalar>(
    series: &RawSeries<F>,
    meta: &VariableMeta,
    need_start: Month,
    need_end: Month,
) -> Result<()> {
    let missing_span = |a: Month, b: Month| {
        if a == b {
            format!("{a}")
        } else {
            format!("{a}..{b}")
        }
    };
    let first = series.first_date();
    let last = series.last_date();
    match (first, last) {
        (Some(first), Some(last)) => {
            if first > need_start {
                return Err(Error::Coverage {
                    series: meta.mnemonic.clone(),
                    span: missing_span(need_start, first.plus(-1)),
                });
            }
            if last < need_end {
                return Err(Error::Coverage {
                    series: meta.mnemonic.clone(),
                    span: missing_span(last.plus(1), need_end),
                });
            }
            if !series.is_contiguous() {
                return Err(Error::Coverage {
                    series: meta.mnemonic.clone(),
                    span: "interior gaps".to_string(),
                });
            }
            Ok(())
        }
        _ => Err(Error::Coverage {
            series: meta.mnemonic.clone(),
            span: missing_span(need_start, need_end),
        }),
    }
}

/// Standardize each column to mean zero, unit sample standard deviation
/// (denominator T-1), recording the scaling for later inversion.
pub fn standardize<F: Scalar>(ds: &Dataset<F>) -> Result<Dataset<F>> {
    let t_len = ds.n_obs();
    if t_len < 2 {
        return Err(Error::argument("standardize needs T >= 2".to_string()));
    }
    let tf = F::cast_usize(t_len);
    let mut values = ds.values.clone();
    let mut scaling = Vec::with_capacity(ds.n_vars());
    for col in 0..ds.n_vars() {
        let mut mean = F::zero();
        for row in 0..t_len {
            mean += values[(row, col)];
        }
        mean /= tf;
        let mut ss = F::zero();
        for row in 0..t_len {
            let d = values[(row, col)] - mean;
            ss += d * d;
        }
        let var = ss / (tf - F::one());
        if var <= F::zero() {
            return Err(Error::domain(format!(
                "column {:?} has zero variance; cannot standardize",
                ds.meta[col].mnemonic
            )));
        }
        let sd = var.sqrt();
        for row in 0..t_len {
            values[(row, col)] = (values[(row, col)] - mean) / sd;
        }
        scaling.push((mean, sd));
    }
    Ok(Dataset {
        values,
        dates: ds.dates.clone(),
        meta: ds.meta.clone(),
        scaling: Some(scaling),
    })
}

/// Invert `standardize`: map a standardized panel back to original units.
pub fn unstandardize<F: Scalar>(ds: &Dataset<F>) -> Result<Dataset<F>> {
    let scaling = ds
        .scaling
        .as_ref()
        .ok_or_else(|| Error::argument("dataset has no scaling to invert".to_string()))?;
    let mut values = ds.values.clone();
    for col in 0..ds.n_vars() {
        let (mean, sd) = scaling[col];
        for row in 0..ds.n_obs() {
            values[(row, col)] = values[(row, col)] * sd + mean;
        }
    }
    Ok(Dataset {
        values,
        dates: ds.dates.clone(),
        meta: ds.meta.clone(),
        scaling: None,
    })
}

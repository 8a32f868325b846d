//! Stationarity transforms keyed by tcode. Lag-based codes shorten the series
//! and trim dates accordingly; log-based codes require strictly positive
//! inputs and fail loudly otherwise, naming the offending date.

use crate::data::csv::RawSeries;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of leading observations consumed by a transform.
pub fn tcode_lag(tcode: u8) -> usize {
    match tcode {
        1 | 4 => 0,
        2 | 5 => 1,
        7 => 12,
        _ => 0,
    }
}

/// Whether a transform differences across time (and therefore needs a
/// contiguous series).
pub fn tcode_needs_contiguity(tcode: u8) -> bool {
    tcode_lag(tcode) > 0
}

/// Apply a stationarity transform to a contiguous raw series.
///
/// Codes: 1 identity; 2 x_t - x_{t-1}; 4 100*ln x_t;
/// 5 100*(ln x_t - ln x_{t-1}); 7 100*(ln x_t - ln x_{t-12}).
pub fn apply_tcode<F: Scalar>(series: &RawSeries<F>, tcode: u8) -> Result<RawSeries<F>> {
    let lag = match tcode {
        1 | 4 => 0,
        2 | 5 => 1,
        7 => 12,
        other => {
            return Err(Error::argument(format!(
                "invalid tcode {other} for series {:?}",
                series.mnemonic
            )))
        }
    };
    if tcode_needs_contiguity(tcode) && !series.is_contiguous() {
        return Err(Error::domain(format!(
            "series {:?} has interior gaps; tcode {tcode} requires a gap-free span",
            series.mnemonic
        )));
    }
    if series.observations.len() <= lag {
        return Err(Error::domain(format!(
            "series {:?} too short for tcode {tcode}: length {} needs > {lag}",
            series.mnemonic,
            series.observations.len()
        )));
    }
    let needs_log = matches!(tcode, 4 | 5 | 7);
    if needs_log {
        for (date, v) in &series.observations {
            if *v <= F::zero() {
                return Err(Error::domain(format!(
                    "series {:?} has non-positive value at {date}; tcode {tcode} takes logs",
                    series.mnemonic
                )));
            }
        }
    }

    let obs = &series.observations;
    let hundred = F::cast(100.0);
    let out: Vec<(crate::month::Month, F)> = match tcode {
        1 => obs.clone(),
        2 => (1..obs.len())
            .map(|t| (obs[t].0, obs[t].1 - obs[t - 1].1))
            .collect(),
        4 => obs.iter().map(|(d, v)| (*d, hundred * v.ln())).collect(),
        5 => (1..obs.len())
            .map(|t| (obs[t].0, hundred * (obs[t].1.ln() - obs[t - 1].1.ln())))
            .collect(),
        7 => (12..obs.len())
            .map(|t| (obs[t].0, hundred * (obs[t].1.ln() - obs[t - 12].1.ln())))
            .collect(),
        _ => unreachable!(),
    };

    Ok(RawSeries {
        mnemonic: series.mnemonic.clone(),
        observations: out,
    })
}

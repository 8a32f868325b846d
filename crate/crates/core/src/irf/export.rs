//! Plot-ready exports: long-format CSV and JSON with a metadata header.

use serde_json::json;

use crate::irf::{IrfResult, SurfaceResult};

/// Long format: shock, variable, horizon, time?, q05, q16, q50, q84, q95.
pub fn irf_to_csv(result: &IrfResult) -> String {
    let mut out = String::new();
    let time_col = result.time_index.is_some();
    if time_col {
        out.push_str("shock,variable,horizon,time,q05,q16,q50,q84,q95\n");
    } else {
        out.push_str("shock,variable,horizon,q05,q16,q50,q84,q95\n");
    }
    for (si, shock) in result.shocks.iter().enumerate() {
        for slice in 0..result.n_slices() {
            for h in 0..=result.horizons {
                for (vi, var) in result.variables.iter().enumerate() {
                    out.push_str(&format!("{shock},{var},{h}"));
                    if let Some(times) = &result.time_index {
                        out.push_str(&format!(",{}", times[slice]));
                    }
                    for q in 0..result.quantiles.len() {
                        out.push_str(&format!(",{:.10e}", result.value(q, slice, h, vi, si)));
                    }
                    out.push('\n');
                }
            }
        }
    }
    out
}

/// JSON export: same cells with a metadata header.
pub fn irf_to_json(result: &IrfResult) -> String {
    let mut rows = Vec::new();
    for (si, shock) in result.shocks.iter().enumerate() {
        for slice in 0..result.n_slices() {
            for h in 0..=result.horizons {
                for (vi, var) in result.variables.iter().enumerate() {
                    let quantiles: Vec<f64> = (0..result.quantiles.len())
                        .map(|q| result.value(q, slice, h, vi, si))
                        .collect();
                    let mut row = json!({
                        "shock": shock,
                        "variable": var,
                        "horizon": h,
                        "quantiles": quantiles,
                    });
                    if let Some(times) = &result.time_index {
                        row["time"] = json!(times[slice]);
                    }
                    rows.push(row);
                }
            }
        }
    }
    serde_json::to_string_pretty(&json!({
        "quantile_levels": result.quantiles,
        "horizons": result.horizons,
        "time_index": result.time_index,
        "cells": rows,
    }))
    .expect("irf serialization")
}

/// Per-period impact band export for one (variable, shock) surface.
pub fn surface_to_csv(surface: &SurfaceResult) -> String {
    let mut out = String::from("shock,variable,time,date,q05,q16,q50,q84,q95\n");
    for t in 0..surface.dates.len() {
        out.push_str(&format!(
            "{},{},{t},{}",
            surface.shock, surface.variable, surface.dates[t]
        ));
        for q in 0..surface.quantiles.len() {
            out.push_str(&format!(",{:.10e}", surface.values[q][t]));
        }
        out.push('\n');
    }
    out
}

//! Response-summary properties over real posterior draws: impact identity,
//! band nesting, unit coherence, degenerate distributions, surfaces.

use fsvar::data::standardize;
use fsvar::dgp::{simulate, LoadingPath, TruthSpec};
use fsvar::gibbs::{run_chain_collect, Features, ModelSpec, PosteriorDraws, Shrinkage};
use fsvar::irf::{impact_surface, irf_draw, irf_to_csv, irf_to_json, summarize, Units};

fn desk_run(features: Features, draws: usize, burn: usize, seed: u64) -> PosteriorDraws<f64> {
    let mut truth = TruthSpec::default_desk();
    truth.t_len = 200;
    let (ds, _) = simulate::<f64>(&truth, seed).unwrap();
    let ds = standardize(&ds).unwrap();
    let spec = ModelSpec {
        lags: truth.lags,
        factors: truth.r,
        features,
        scheme: truth.scheme.clone(),
        draws,
        burn,
        thin: 2,
        seed,
        shrinkage: Shrinkage::Horseshoe,
    };
    run_chain_collect(&ds, &spec, 2).unwrap()
}

#[test]
fn impact_identity_across_stored_draws() {
    let out = desk_run(Features::default(), 150, 50, 71);
    for d in &out.draws {
        let gstar = d.gamma_star(&out.meta.tv_rows, None);
        for shock in 0..out.meta.r {
            let irf = irf_draw(d, &out.meta.tv_rows, out.meta.p, shock, 4, None).unwrap();
            for i in 0..(out.meta.m + out.meta.n) {
                // bit-exact, not approximately equal
                assert_eq!(irf[(0, i)].to_bits(), gstar[(i, shock)].to_bits());
            }
        }
    }
}

#[test]
fn bands_nested_and_monotone() {
    let out = desk_run(Features::default(), 200, 50, 72);
    let result = summarize(&out, &[0, 1], 12, None, Units::Standardized).unwrap();
    assert!(result.bands_monotone());
    // 68% band inside 90% band is quantile monotonicity at the band level:
    // q05 <= q16 and q84 <= q95 in every cell.
    for h in 0..=12 {
        for v in 0..(out.meta.m + out.meta.n) {
            for s in 0..2 {
                let q05 = result.value(0, 0, h, v, s);
                let q16 = result.value(1, 0, h, v, s);
                let q84 = result.value(3, 0, h, v, s);
                let q95 = result.value(4, 0, h, v, s);
                assert!(q05 <= q16 && q16 <= q84 && q84 <= q95);
            }
        }
    }
}

#[test]
fn sign_restricted_impact_bands_respect_side() {
    let out = desk_run(Features::default(), 200, 50, 73);
    let result = summarize(&out, &[0, 1], 4, None, Units::Standardized).unwrap();
    let scheme = fsvar::ident::parse_scheme(&out.meta.scheme_json).unwrap();
    for v in 0..(out.meta.m + out.meta.n) {
        for s in 0..2 {
            match scheme.entry(v, s) {
                fsvar::ident::Restriction::Pos => {
                    assert!(result.value(0, 0, 0, v, s) > 0.0, "POS band crosses zero");
                }
                fsvar::ident::Restriction::Neg => {
                    assert!(result.value(4, 0, 0, v, s) < 0.0, "NEG band crosses zero");
                }
                fsvar::ident::Restriction::Zero => {
                    for q in 0..5 {
                        assert_eq!(result.value(q, 0, 0, v, s), 0.0);
                    }
                }
                fsvar::ident::Restriction::Free => {}
            }
        }
    }
}

#[test]
fn unit_coherence_original_equals_standardized_times_sd() {
    let out = desk_run(Features::default(), 120, 40, 74);
    let std = summarize(&out, &[0], 6, None, Units::Standardized).unwrap();
    let orig = summarize(&out, &[0], 6, None, Units::Original).unwrap();
    for h in 0..=6 {
        for v in 0..(out.meta.m + out.meta.n) {
            for q in 0..5 {
                let expected = std.value(q, 0, h, v, 0) * out.meta.scaling_sds[v];
                let got = orig.value(q, 0, h, v, 0);
                let err = (got - expected).abs();
                assert!(
                    err <= 1e-12 * expected.abs().max(1.0),
                    "unit coherence off at h={h}, v={v}, q={q}: {err:e}"
                );
            }
        }
    }
}

#[test]
fn degenerate_draw_sets_collapse_quantiles() {
    let mut out = desk_run(Features::default(), 120, 40, 75);
    // All draws identical: every quantile equals the common value.
    let first = out.draws[0].clone();
    for d in out.draws.iter_mut() {
        *d = first.clone();
    }
    let result = summarize(&out, &[0], 3, None, Units::Standardized).unwrap();
    for h in 0..=3 {
        for v in 0..(out.meta.m + out.meta.n) {
            let q50 = result.value(2, 0, h, v, 0);
            for q in 0..5 {
                assert_eq!(result.value(q, 0, h, v, 0), q50);
            }
        }
    }
}

#[test]
fn symmetric_draws_give_symmetric_bands() {
    let mut out = desk_run(Features::default(), 120, 40, 76);
    // Mirror the loading sign of a FREE cell across draws: +a / -a around 0.
    let n_draws = out.draws.len();
    for (idx, d) in out.draws.iter_mut().enumerate() {
        let v = 0.7 * if idx % 2 == 0 { 1.0 } else { -1.0 };
        d.lambda[(7, 2)] = v; // SP500 row, residual shock (FREE cell)
        d.phi.fill(0.0);
    }
    let _ = n_draws;
    let result = summarize(&out, &[2], 0, None, Units::Standardized).unwrap();
    let row = out.meta.m + 7;
    let q50 = result.value(2, 0, 0, row, 0);
    let q05 = result.value(0, 0, 0, row, 0);
    let q95 = result.value(4, 0, 0, row, 0);
    assert!(q50.abs() < 1e-12, "median {q50}");
    assert!((q05 + q95).abs() < 1e-12, "q05 {q05}, q95 {q95}");
}

#[test]
fn too_few_draws_rejected() {
    let out = desk_run(Features::default(), 40, 20, 77);
    assert!(summarize(&out, &[0], 4, None, Units::Standardized).is_err());
}

#[test]
fn surface_flat_for_constant_and_rising_for_ramp() {
    let mut truth = TruthSpec::default_desk();
    truth.t_len = 300;
    truth.n_other = 2;
    truth.r = 2;
    truth.scheme = fsvar::ident::default_scheme(2, 7, 2, 2).unwrap();
    // Row 9 ramps, row 10 stays constant.
    truth.ramps = vec![(9, 0, LoadingPath::Ramp { from: 0.0, to: 1.0 })];
    let (ds, _) = simulate::<f64>(&truth, 81).unwrap();
    let ds = standardize(&ds).unwrap();
    let spec = ModelSpec {
        lags: truth.lags,
        factors: truth.r,
        features: Features {
            tv_loadings: true,
            ..Features::default()
        },
        scheme: truth.scheme.clone(),
        draws: 1500,
        burn: 700,
        thin: 5,
        seed: 81,
        shrinkage: Shrinkage::Horseshoe,
    };
    let out = run_chain_collect(&ds, &spec, 2).unwrap();

    let ramp = impact_surface(&out, 0, 9).unwrap();
    let t_last = ramp.dates.len() - 1;
    let rise = ramp.values[2][t_last] - ramp.values[2][0];
    // In standardized units the ramp is scaled by 1/sd of row 9.
    let rise_orig = rise * out.meta.scaling_sds[9];
    assert!(rise_orig > 0.4, "ramp surface rise {rise_orig:.2}");

    let flat = impact_surface(&out, 0, 10).unwrap();
    let med: Vec<f64> = flat.values[2].clone();
    let max = med.iter().cloned().fold(f64::MIN, f64::max);
    let min = med.iter().cloned().fold(f64::MAX, f64::min);
    let spread_orig = (max - min) * out.meta.scaling_sds[10];
    assert!(spread_orig < 0.4, "constant surface spread {spread_orig:.2}");

    // Constant (CORE) rows are rejected.
    assert!(impact_surface(&out, 0, 2).is_err());
}

#[test]
fn exports_have_expected_shape() {
    let out = desk_run(Features::default(), 120, 40, 78);
    let result = summarize(&out, &[0, 1], 5, None, Units::Original).unwrap();
    let csv = irf_to_csv(&result);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "shock,variable,horizon,q05,q16,q50,q84,q95");
    assert_eq!(lines.len(), 1 + 2 * 6 * 12);
    let json = irf_to_json(&result);
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed["cells"].as_array().unwrap().len(), 2 * 6 * 12);
    assert_eq!(parsed["quantile_levels"].as_array().unwrap().len(), 5);
}

#[test]
fn time_indexed_summary_uses_requested_periods() {
    let mut truth = TruthSpec::default_desk();
    truth.t_len = 200;
    truth.ramps = vec![(9, 0, LoadingPath::Ramp { from: -0.5, to: 0.5 })];
    let (ds, _) = simulate::<f64>(&truth, 83).unwrap();
    let ds = standardize(&ds).unwrap();
    let spec = ModelSpec {
        lags: truth.lags,
        factors: truth.r,
        features: Features {
            tv_loadings: true,
            ..Features::default()
        },
        scheme: truth.scheme.clone(),
        draws: 300,
        burn: 150,
        thin: 3,
        seed: 83,
        shrinkage: Shrinkage::Horseshoe,
    };
    let out = run_chain_collect(&ds, &spec, 2).unwrap();
    let t_eff = out.meta.t_eff;
    let times = vec![0usize, t_eff / 2, t_eff - 1];
    let result = summarize(&out, &[0], 4, Some(&times), Units::Standardized).unwrap();
    assert_eq!(result.n_slices(), 3);
    assert!(result.bands_monotone());
    let csv = irf_to_csv(&result);
    assert!(csv.starts_with("shock,variable,horizon,time,"));
    // Requesting a time slice without the feature is an error.
    let out_const = desk_run(Features::default(), 60, 20, 84);
    assert!(summarize(&out_const, &[0], 4, Some(&[0]), Units::Standardized).is_err());
}

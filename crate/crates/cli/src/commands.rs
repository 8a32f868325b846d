//! Subcommand implementations: simulate, estimate, irf, diagnose, export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fsvar::data::{assemble, load_csv, schema_from_json, standardize, Dataset};
use fsvar::dgp::{dataset_to_csv, simulate, truth_to_json};
use fsvar::diagnostics::{effective_sample_size, split_rhat};
use fsvar::error::{Error, Result};
use fsvar::gibbs::rng::chain_seed;
use fsvar::gibbs::{run_chain, DrawSink, ModelSpec, PosteriorDraws, RunMeta, Shrinkage, StoredDraw};
use fsvar::irf::{impact_surface, irf_to_csv, irf_to_json, summarize, surface_to_csv, Units};
use fsvar::month::Month;
use fsvar::store::{read_draws, RunWriter};

use crate::config::{resolve_relative, RunConfig, SimConfig};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---- simulate ----------------------------------------------------------------

pub fn cmd_simulate(config_path: &Path, seed_override: Option<u64>, strict: bool) -> Result<()> {
    let mut config = SimConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let truth_spec = config.to_truth_spec(&base, strict)?;
    let out_dir = resolve_relative(&base, &config.output_dir);
    let (ds, truth) = simulate::<f64>(&truth_spec, config.seed)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    write_file(&out_dir.join("dataset.csv"), &dataset_to_csv(&ds))?;
    let schema_json =
        serde_json::to_string_pretty(&ds.meta).expect("schema serialization");
    write_file(&out_dir.join("schema.json"), &schema_json)?;
    write_file(&out_dir.join("truth.json"), &truth_to_json(&truth))?;
    write_file(
        &out_dir.join("scheme.json"),
        &fsvar::ident::scheme_to_json(&truth_spec.scheme),
    )?;
    println!(
        "simulated {} months x {} variables ({} instruments, {} factors), seed {}",
        ds.n_obs(),
        ds.n_vars(),
        ds.n_instruments(),
        truth_spec.r,
        config.seed
    );
    println!("wrote dataset.csv, schema.json, truth.json, scheme.json to {}", out_dir.display());
    Ok(())
}

// ---- estimate ----------------------------------------------------------------

/// Sink wrapper that tees progress into log.txt and stderr.
struct LoggingSink {
    inner: RunWriter<f64>,
    log: BufWriter<File>,
    started: Instant,
    next_report: usize,
}

impl LoggingSink {
    fn new(dir: &Path) -> Result<LoggingSink> {
        let inner = RunWriter::create(dir)?;
        let log_path = dir.join("log.txt");
        let log = BufWriter::new(
            File::create(&log_path).map_err(|e| Error::io(log_path.display().to_string(), e))?,
        );
        Ok(LoggingSink {
            inner,
            log,
            started: Instant::now(),
            next_report: 0,
        })
    }
}

impl DrawSink<f64> for LoggingSink {
    fn start(&mut self, meta: &RunMeta) -> Result<()> {
        let _ = writeln!(
            self.log,
            "run start: {} variables, r={}, p={}, T_eff={}, draws={}, burn={}, thin={}, seed={}",
            meta.m + meta.n,
            meta.r,
            meta.p,
            meta.t_eff,
            meta.draws,
            meta.burn,
            meta.thin,
            meta.seed
        );
        self.inner.start(meta)
    }

    fn record(&mut self, draw: &StoredDraw<f64>) -> Result<()> {
        self.inner.record(draw)
    }

    fn progress(&mut self, iteration: usize, total: usize) {
        if iteration >= self.next_report {
            let _ = writeln!(
                self.log,
                "iteration {iteration}/{total} ({:.1}s elapsed)",
                self.started.elapsed().as_secs_f64()
            );
            eprintln!("iteration {iteration}/{total}");
            self.next_report = iteration + (total / 10).max(1);
        }
    }

    fn finish(&mut self) -> Result<()> {
        let _ = writeln!(
            self.log,
            "run complete in {:.1}s",
            self.started.elapsed().as_secs_f64()
        );
        let _ = self.log.flush();
        self.inner.finish()
    }

    fn abort(&mut self, context: &str) -> Result<()> {
        let _ = writeln!(self.log, "run aborted: {context}");
        let _ = self.log.flush();
        self.inner.abort(context)
    }
}

pub struct EstimateOptions {
    pub seed_override: Option<u64>,
    pub chains_override: Option<usize>,
    pub threads: usize,
}

fn load_dataset(config: &RunConfig, base: &Path) -> Result<(Dataset<f64>, Month, Month)> {
    let schema_path = resolve_relative(base, &config.schema);
    let schema_text = std::fs::read_to_string(&schema_path)
        .map_err(|e| Error::io(schema_path.display().to_string(), e))?;
    let schema = schema_from_json(&schema_text)?;
    let data_path = resolve_relative(base, &config.data);
    let raw = load_csv::<f64>(&data_path, &schema)?;

    // Sample bounds: explicit when configured, else the widest span for
    // which every macro series (after transform lags) has coverage.
    let start = match &config.sample_start {
        Some(s) => s.parse::<Month>()?,
        None => raw
            .iter()
            .zip(schema.iter())
            .filter(|(_, m)| m.role != fsvar::data::Role::Instrument)
            .map(|(s, m)| {
                s.first_date()
                    .map(|d| d.plus(fsvar::data::tcode_lag(m.tcode) as i64))
            })
            .collect::<Option<Vec<_>>>()
            .and_then(|v| v.into_iter().max())
            .ok_or_else(|| Error::schema("cannot infer sample start".to_string()))?,
    };
    let end = match &config.sample_end {
        Some(s) => s.parse::<Month>()?,
        None => raw
            .iter()
            .zip(schema.iter())
            .filter(|(_, m)| m.role != fsvar::data::Role::Instrument)
            .filter_map(|(s, _)| s.last_date())
            .min()
            .ok_or_else(|| Error::schema("cannot infer sample end".to_string()))?,
    };
    let ds = assemble(&raw, &schema, (start, end))?;
    let ds = if config.standardize {
        standardize(&ds)?
    } else {
        ds
    };
    Ok((ds, start, end))
}

pub fn cmd_estimate(config_path: &Path, opts: &EstimateOptions) -> Result<PathBuf> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = opts.seed_override {
        config.seed = seed;
    }
    if let Some(chains) = opts.chains_override {
        config.chains = chains;
    }
    config.validate()?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let (ds, start, end) = load_dataset(&config, &base)?;
    // Materialize inferred sample bounds so spec.json is fully explicit.
    config.sample_start = Some(start.to_string());
    config.sample_end = Some(end.to_string());
    let scheme_path_base = base.clone();
    let schema_for_scheme = ds.meta.clone();
    let scheme = config.load_scheme(&schema_for_scheme, &scheme_path_base)?;

    // Cross-check scheme rows against panel columns by name.
    let mismatches: Vec<String> = ds
        .mnemonics()
        .iter()
        .zip(scheme.row_labels.iter())
        .filter(|(a, b)| a != b)
        .map(|(a, b)| format!("data column {a:?} vs scheme row {b:?}"))
        .collect();
    if ds.n_vars() != scheme.n_rows() {
        return Err(Error::Validation(vec![format!(
            "scheme has {} rows but data has {} columns",
            scheme.n_rows(),
            ds.n_vars()
        )]));
    }
    if !mismatches.is_empty() {
        return Err(Error::Validation(mismatches));
    }

    let out_dir = resolve_relative(&base, &config.output_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    // Resolved configuration goes to disk before estimation starts.
    write_file(&out_dir.join("spec.json"), &config.resolved_json(&scheme))?;

    let spec = ModelSpec {
        lags: config.lags,
        factors: config.factors,
        features: config.features,
        scheme,
        draws: config.draws,
        burn: config.burn,
        thin: config.thin,
        seed: config.seed,
        shrinkage: Shrinkage::Horseshoe,
    };
    spec.validate(ds.n_instruments(), ds.n_vars() - ds.n_instruments())?;

    let started = Instant::now();
    if config.chains == 1 {
        let mut sink = LoggingSink::new(&out_dir)?;
        run_chain(&ds, &spec, opts.threads, &mut sink)?;
    } else {
        let per_chain_threads = (opts.threads / config.chains).max(1);
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..config.chains)
                .map(|c| {
                    let ds = &ds;
                    let spec = &spec;
                    let dir = out_dir.join(format!("chain_{c}"));
                    scope.spawn(move || -> Result<()> {
                        let mut chain_spec = spec.clone();
                        chain_spec.seed = chain_seed(spec.seed, c as u64);
                        let mut sink = LoggingSink::new(&dir)?;
                        run_chain(ds, &chain_spec, per_chain_threads, &mut sink)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect()
        });
        for r in results {
            r?;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();

    // Post-run summary: wall time, dof acceptance, explosive share.
    let summary_dir = if config.chains == 1 {
        out_dir.clone()
    } else {
        out_dir.join("chain_0")
    };
    let draws = read_draws(&summary_dir.join("draws.bin"))?;
    let explosive = draws
        .draws
        .iter()
        .filter(|d| d.spectral_radius >= 1.0)
        .count();
    let acceptance = draws
        .draws
        .last()
        .map(|d| d.dof_acceptance)
        .unwrap_or(f64::NAN);
    println!(
        "estimation finished in {elapsed:.1}s: {} stored draws, explosive share {:.3}, dof acceptance {:.2}",
        draws.len(),
        explosive as f64 / draws.len().max(1) as f64,
        acceptance
    );
    Ok(out_dir)
}

// ---- irf ---------------------------------------------------------------------

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

pub struct IrfOptions {
    pub shocks: Option<Vec<usize>>,
    pub horizon: usize,
    pub times: Option<Vec<usize>>,
    pub units: UnitsChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitsChoice {
    Standardized,
    Original,
    Both,
}

pub fn cmd_irf(run_dir: &Path, opts: &IrfOptions) -> Result<()> {
    let draws = read_draws(&run_dir.join("draws.bin"))?;
    let shocks: Vec<usize> = match &opts.shocks {
        Some(s) => s.clone(),
        None => (0..draws.meta.r).collect(),
    };
    for &s in &shocks {
        if s >= draws.meta.r {
            return Err(Error::argument(format!(
                "shock {s} out of range (r = {})",
                draws.meta.r
            )));
        }
    }
    // Original units take the plain irf_<shock> name; the standardized
    // variant carries a _std suffix.
    let unit_list: Vec<(Units, &str)> = match opts.units {
        UnitsChoice::Standardized => vec![(Units::Standardized, "_std")],
        UnitsChoice::Original => vec![(Units::Original, "")],
        UnitsChoice::Both => vec![(Units::Original, ""), (Units::Standardized, "_std")],
    };
    for &shock in &shocks {
        for (units, tag) in &unit_list {
            let result = summarize(&draws, &[shock], opts.horizon, None, *units)?;
            let name = sanitize(&draws.meta.shock_labels[shock]);
            let csv_path = run_dir.join(format!("irf_{name}{tag}.csv"));
            write_file(&csv_path, &irf_to_csv(&result))?;
            let json_path = run_dir.join(format!("irf_{name}{tag}.json"));
            write_file(&json_path, &irf_to_json(&result))?;
            println!("wrote {}", csv_path.display());
        }
        if opts.times.is_some() {
            for &row in &draws.meta.tv_rows.clone() {
                let surface = impact_surface(&draws, shock, row)?;
                let path = run_dir.join(format!(
                    "surface_{}_{}.csv",
                    sanitize(&draws.meta.shock_labels[shock]),
                    sanitize(&draws.meta.variable_labels[row])
                ));
                write_file(&path, &surface_to_csv(&surface))?;
                println!("wrote {}", path.display());
            }
        }
    }
    if let Some(times) = &opts.times {
        // Time-sliced full responses in one file per shock.
        for &shock in &shocks {
            for (units, tag) in &unit_list {
                let result = summarize(&draws, &[shock], opts.horizon, Some(times), *units)?;
                let name = sanitize(&draws.meta.shock_labels[shock]);
                let path = run_dir.join(format!("irf_{name}{tag}_times.csv"));
                write_file(&path, &irf_to_csv(&result))?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

// ---- diagnose ------------------------------------------------------------------

fn chain_dirs(run_dir: &Path) -> Vec<PathBuf> {
    let mut chains = Vec::new();
    let mut idx = 0;
    loop {
        let dir = run_dir.join(format!("chain_{idx}"));
        if dir.join("draws.bin").exists() {
            chains.push(dir);
            idx += 1;
        } else {
            break;
        }
    }
    if chains.is_empty() {
        chains.push(run_dir.to_path_buf());
    }
    chains
}

pub fn cmd_diagnose(run_dir: &Path) -> Result<()> {
    let dirs = chain_dirs(run_dir);
    let chains: Vec<PosteriorDraws<f64>> = dirs
        .iter()
        .map(|d| read_draws(&d.join("draws.bin")))
        .collect::<Result<_>>()?;
    let meta = &chains[0].meta;
    if chains.iter().any(|c| c.is_empty()) {
        return Err(Error::integrity("a chain has no stored draws".to_string()));
    }

    let mut report = String::new();
    report.push_str(&format!(
        "run: {} chains, {} stored draws each, {} variables, r={}\n",
        chains.len(),
        chains[0].len(),
        meta.m + meta.n,
        meta.r
    ));

    // Effective sample size of each scalar diagnostic series.
    let mut csv = String::from("metric,value\n");
    let rho_series: Vec<f64> = chains[0]
        .draws
        .iter()
        .map(|d| d.spectral_radius)
        .collect();
    let ess_rho = effective_sample_size(&rho_series);
    report.push_str(&format!(
        "spectral radius: ESS {ess_rho:.0} of {}\n",
        rho_series.len()
    ));
    csv.push_str(&format!("ess_spectral_radius,{ess_rho:.2}\n"));
    if meta.features.student_t {
        // Acceptance is cumulative, so its ESS mainly flags a frozen chain.
        let acc_series: Vec<f64> = chains[0].draws.iter().map(|d| d.dof_acceptance).collect();
        let ess_acc = effective_sample_size(&acc_series);
        csv.push_str(&format!("ess_dof_acceptance,{ess_acc:.2}\n"));
    }

    let explosive = rho_series.iter().filter(|r| **r >= 1.0).count() as f64
        / rho_series.len() as f64;
    report.push_str(&format!("explosive draw share: {explosive:.3}\n"));
    csv.push_str(&format!("explosive_share,{explosive:.5}\n"));

    // Split-chain potential scale reduction on identified-shock loadings.
    let nv = meta.m + meta.n;
    let mut worst_psr = f64::MIN;
    let mut psr_count = 0usize;
    for shock in 0..meta.m.max(1).min(meta.r) {
        for var in 0..nv {
            let series: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| {
                    c.draws
                        .iter()
                        .map(|d| d.gamma_star(&meta.tv_rows, None)[(var, shock)])
                        .collect::<Vec<f64>>()
                })
                .collect();
            // Pinned zeros have no variance and no convergence content.
            if series.iter().all(|s| s.iter().all(|v| *v == 0.0)) {
                continue;
            }
            let r = split_rhat(&series);
            if r.is_finite() {
                worst_psr = worst_psr.max(r);
                psr_count += 1;
            }
        }
    }
    if psr_count > 0 {
        report.push_str(&format!(
            "identified-shock loadings: worst split-chain PSR {worst_psr:.3} over {psr_count} cells\n"
        ));
        csv.push_str(&format!("worst_loading_psr,{worst_psr:.4}\n"));
    }

    // Degrees-of-freedom posterior summary.
    if meta.features.student_t {
        let mut all: Vec<f64> = Vec::new();
        for c in &chains {
            for d in &c.draws {
                if let Some(nu) = &d.nu {
                    all.extend(nu.iter());
                }
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = all[all.len() / 2];
        let lo = all[all.len() / 20];
        let hi = all[all.len() * 19 / 20];
        report.push_str(&format!(
            "degrees of freedom: median {med:.1}, 90% interval [{lo:.1}, {hi:.1}]\n"
        ));
        csv.push_str(&format!("dof_median,{med:.3}\n"));
        let acc = chains[0]
            .draws
            .last()
            .map(|d| d.dof_acceptance)
            .unwrap_or(f64::NAN);
        report.push_str(&format!("dof Metropolis acceptance: {acc:.2}\n"));
        csv.push_str(&format!("dof_acceptance,{acc:.4}\n"));
    }

    print!("{report}");
    write_file(&run_dir.join("diagnose.csv"), &csv)?;
    write_file(&run_dir.join("diagnose.txt"), &report)?;
    Ok(())
}

// ---- export --------------------------------------------------------------------

/// Convert the binary draws record to a wide CSV of scalar parameters.
pub fn cmd_export(run_dir: &Path, output: Option<&Path>) -> Result<()> {
    let draws = read_draws(&run_dir.join("draws.bin"))?;
    let meta = &draws.meta;
    let nv = meta.m + meta.n;
    let mut header = vec!["draw".to_string(), "spectral_radius".to_string()];
    for j in 0..meta.r {
        for i in 0..nv {
            header.push(format!(
                "loading_{}_{}",
                sanitize(&meta.variable_labels[i]),
                sanitize(&meta.shock_labels[j])
            ));
        }
    }
    for i in 0..meta.m {
        header.push(format!("w_{}", sanitize(&meta.variable_labels[i])));
    }
    if !meta.features.stoch_vol {
        for j in 0..meta.n {
            header.push(format!("sigma_{}", sanitize(&meta.variable_labels[meta.m + j])));
        }
    }
    if meta.features.student_t {
        for j in 0..meta.n {
            header.push(format!("nu_{}", sanitize(&meta.variable_labels[meta.m + j])));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for (idx, d) in draws.draws.iter().enumerate() {
        let mut row = vec![idx.to_string(), format!("{:.10e}", d.spectral_radius)];
        let gstar = d.gamma_star(&meta.tv_rows, None);
        for j in 0..meta.r {
            for i in 0..nv {
                row.push(format!("{:.10e}", gstar[(i, j)]));
            }
        }
        for i in 0..meta.m {
            row.push(format!("{:.10e}", d.w_diag[i]));
        }
        if let Some(sigma) = &d.sigma_diag {
            for v in sigma.iter() {
                row.push(format!("{:.10e}", v));
            }
        }
        if let Some(nu) = &d.nu {
            for v in nu.iter() {
                row.push(format!("{:.10e}", v));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let path = output
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| run_dir.join("draws.csv"));
    write_file(&path, &out)?;
    println!("wrote {} ({} draws)", path.display(), draws.len());
    Ok(())
}

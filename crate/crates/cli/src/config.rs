//! Run and simulation configuration files, with full default resolution.
//! The resolved form is written to the run directory before estimation so a
//! run is reproducible from `spec.json` plus the input data alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fsvar::data::{ordered_schema, Role, VariableMeta};
use fsvar::dgp::{LoadingPath, TruthSpec, VolPath};
use fsvar::error::{Error, Result};
use fsvar::gibbs::Features;
use fsvar::ident::{default_scheme, parse_scheme, RestrictionScheme};
use fsvar::irf::QUANTILE_LEVELS;

fn default_thin() -> usize {
    1
}
fn default_standardize() -> bool {
    true
}
fn default_horizon() -> usize {
    36
}
fn default_chains() -> usize {
    1
}
fn default_lags() -> usize {
    2
}
fn default_factors() -> usize {
    4
}

/// Estimation configuration as read from --config JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    /// "default" for the built-in grid, or a path to a scheme JSON.
    #[serde(default = "default_scheme_field")]
    pub scheme: String,
    pub output_dir: PathBuf,
    #[serde(default = "default_lags")]
    pub lags: usize,
    #[serde(default = "default_factors")]
    pub factors: usize,
    #[serde(default)]
    pub features: Features,
    pub draws: usize,
    #[serde(default)]
    pub burn: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_standardize")]
    pub standardize: bool,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Optional explicit sample bounds (YYYY-MM); inferred from coverage
    /// when absent.
    #[serde(default)]
    pub sample_start: Option<String>,
    #[serde(default)]
    pub sample_end: Option<String>,
    /// Reported quantile levels; fixed to the canonical five.
    #[serde(default)]
    pub quantiles: Option<Vec<f64>>,
}

fn default_scheme_field() -> String {
    "default".to_string()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.draws == 0 {
            problems.push("draws must be positive".to_string());
        }
        if self.thin == 0 {
            problems.push("thin must be at least 1".to_string());
        }
        if self.chains == 0 {
            problems.push("chains must be at least 1".to_string());
        }
        if let Some(q) = &self.quantiles {
            let canonical: Vec<f64> = QUANTILE_LEVELS.to_vec();
            if *q != canonical {
                problems.push(format!(
                    "quantile levels are fixed to {canonical:?} in this version"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Materialize every default and inline the restriction scheme, so the
    /// output is self-contained.
    pub fn resolved_json(&self, scheme: &RestrictionScheme) -> String {
        let mut value = serde_json::to_value(self).expect("config serialization");
        value["quantiles"] = serde_json::to_value(QUANTILE_LEVELS.to_vec()).expect("levels");
        value["scheme_inline"] =
            serde_json::from_str(&fsvar::ident::scheme_to_json(scheme)).expect("scheme json");
        serde_json::to_string_pretty(&value).expect("resolved config")
    }

    /// Load the restriction scheme: the built-in default grid (sized from
    /// the schema's role counts) or a user file.
    pub fn load_scheme(&self, schema: &[VariableMeta], base: &Path) -> Result<RestrictionScheme> {
        let ordered = ordered_schema(schema)?;
        if self.scheme == "default" {
            let m = ordered.iter().filter(|v| v.role == Role::Instrument).count();
            let n_core = ordered.iter().filter(|v| v.role == Role::Core).count();
            let n_other = ordered.iter().filter(|v| v.role == Role::Other).count();
            let mut scheme = default_scheme(m, n_core, n_other, self.factors)?;
            // Keep user mnemonics on the OTHER rows.
            for (i, meta) in ordered.iter().enumerate() {
                scheme.row_labels[i] = meta.mnemonic.clone();
            }
            Ok(scheme)
        } else {
            let path = resolve_relative(base, Path::new(&self.scheme));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            parse_scheme(&text)
        }
    }
}

/// Resolve a possibly relative path against the config file's directory.
pub fn resolve_relative(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RampConfig {
    pub row: usize,
    pub shock: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolBreakConfig {
    pub factor: f64,
    pub at: f64,
}

fn default_t_len() -> usize {
    400
}
fn default_m() -> usize {
    2
}
fn default_n_core() -> usize {
    7
}
fn default_n_other() -> usize {
    3
}
fn default_sim_factors() -> usize {
    3
}
fn default_gap_share() -> f64 {
    0.6
}

/// Simulation configuration for `fsvar simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_t_len")]
    pub t_len: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n_core")]
    pub n_core: usize,
    #[serde(default = "default_n_other")]
    pub n_other: usize,
    #[serde(default = "default_sim_factors")]
    pub factors: usize,
    #[serde(default = "default_lags")]
    pub lags: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub student_dof: Option<f64>,
    #[serde(default)]
    pub vol_break: Option<VolBreakConfig>,
    #[serde(default)]
    pub ramps: Vec<RampConfig>,
    #[serde(default = "default_gap_share")]
    pub instrument_gap_share: f64,
    /// "default" or a path to a scheme JSON used to shape the loadings.
    #[serde(default = "default_scheme_field")]
    pub scheme: String,
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: SimConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(config)
    }

    pub fn to_truth_spec(&self, base: &Path, strict: bool) -> Result<TruthSpec> {
        if self.t_len == 0 {
            return Err(Error::Validation(vec!["t_len must be positive".to_string()]));
        }
        let scheme = if self.scheme == "default" {
            default_scheme(self.m, self.n_core, self.n_other, self.factors)?
        } else {
            let path = resolve_relative(base, Path::new(&self.scheme));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            parse_scheme(&text)?
        };
        Ok(TruthSpec {
            m: self.m,
            n_core: self.n_core,
            n_other: self.n_other,
            r: self.factors,
            lags: self.lags,
            t_len: self.t_len,
            scheme,
            student_dof: self.student_dof,
            vol: match &self.vol_break {
                None => VolPath::Constant,
                Some(b) => VolPath::Break {
                    factor: b.factor,
                    at: b.at,
                },
            },
            ramps: self
                .ramps
                .iter()
                .map(|r| {
                    (
                        r.row,
                        r.shock,
                        LoadingPath::Ramp {
                            from: r.from,
                            to: r.to,
                        },
                    )
                })
                .collect(),
            instrument_gap_share: self.instrument_gap_share,
            stability_bound: 0.95,
            strict,
        })
    }
}

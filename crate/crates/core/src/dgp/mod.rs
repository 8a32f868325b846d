//! Synthetic data generation from fully specified model instances, plus the
//! exact quantities recovery tests compare against.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Role, VariableMeta};
use crate::error::{Error, Result};
use crate::gibbs::rng::{substream, Block};
use crate::ident::{default_scheme, Restriction, RestrictionScheme};
use crate::month::Month;
use crate::scalar::Scalar;
use crate::var::{companion, spectral_radius, vma, VarCoefficients};

/// Loading drift over the sample for one (row, shock) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LoadingPath {
    Constant,
    /// Linear ramp from `from` to `to` across the sample.
    Ramp { from: f64, to: f64 },
}

/// Idiosyncratic volatility profile for macro rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VolPath {
    Constant,
    /// Variance multiplied by `factor` from period `at` (fraction of T) on.
    Break { factor: f64, at: f64 },
}

/// Full description of a generating process.
#[derive(Debug, Clone)]
pub struct TruthSpec {
    pub m: usize,
    pub n_core: usize,
    pub n_other: usize,
    pub r: usize,
    pub lags: usize,
    pub t_len: usize,
    pub scheme: RestrictionScheme,
    /// Student-t degrees of freedom on macro rows (None = Gaussian).
    pub student_dof: Option<f64>,
    /// Volatility profile applied to every macro row.
    pub vol: VolPath,
    /// Overrides of the loading drift, keyed by (panel row, shock).
    pub ramps: Vec<(usize, usize, LoadingPath)>,
    /// Share of months where instruments carry no observation.
    pub instrument_gap_share: f64,
    /// Largest admissible spectral radius of the generating VAR.
    pub stability_bound: f64,
    /// Reject an unstable requested process instead of rescaling it.
    pub strict: bool,
}

impl TruthSpec {
    /// Desk-scale default: 7 core + 3 other macro series, 2 instruments,
    /// 3 factors (2 identified + 1 residual), 2 lags, 400 months.
    pub fn default_desk() -> TruthSpec {
        TruthSpec {
            m: 2,
            n_core: 7,
            n_other: 3,
            r: 3,
            lags: 2,
            t_len: 400,
            scheme: default_scheme(2, 7, 3, 3).expect("desk scheme"),
            student_dof: None,
            vol: VolPath::Constant,
            ramps: Vec::new(),
            instrument_gap_share: 0.6,
            stability_bound: 0.95,
            strict: false,
        }
    }

    pub fn n_macro(&self) -> usize {
        self.n_core + self.n_other
    }

    pub fn n_vars(&self) -> usize {
        self.m + self.n_macro()
    }
}

/// Everything the estimator is asked to recover, plus the realized factors.
#[derive(Debug, Clone)]
pub struct TruthBundle<F: Scalar> {
    pub coefficients: VarCoefficients<F>,
    /// (m+n) x r loading matrix at the start of the sample.
    pub gamma_star0: DMatrix<F>,
    /// Per-period loading matrices (shares storage pattern with estimation).
    pub loading_paths: Vec<DMatrix<F>>, // per (row,shock) constant unless ramped; see `loading_at`
    pub w_diag: DVector<F>,
    pub sigma_diag: DVector<F>,
    pub vol: VolPath,
    pub student_dof: Option<f64>,
    pub factors: DMatrix<F>,
    pub spectral_radius: f64,
    pub rescaled: bool,
    t_len: usize,
}

impl<F: Scalar> TruthBundle<F> {
    /// Loading matrix at period t (ramps applied).
    pub fn gamma_star_at(&self, t: usize) -> DMatrix<F> {
        self.loading_paths[t.min(self.t_len - 1)].clone()
    }

    /// Idiosyncratic standard deviation of macro row j at period t.
    pub fn macro_sd_at(&self, j: usize, t: usize) -> F {
        let base = self.sigma_diag[j];
        let mult = match self.vol {
            VolPath::Constant => 1.0,
            VolPath::Break { factor, at } => {
                if (t as f64) >= at * self.t_len as f64 {
                    factor
                } else {
                    1.0
                }
            }
        };
        (base * F::cast(mult)).sqrt()
    }
}

fn stable_coefficients<F: Scalar>(
    spec: &TruthSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(VarCoefficients<F>, f64, bool)> {
    let nv = spec.n_vars();
    // Diagonal persistence plus sparse small cross terms.
    let mut lag1 = DMatrix::<F>::zeros(nv, nv);
    for i in 0..nv {
        let persistence = if i < spec.m { 0.05 } else { 0.3 + 0.3 * F::uniform(rng).to_f64_lossy() };
        lag1[(i, i)] = F::cast(persistence);
        for j in 0..nv {
            if i != j && F::uniform(rng).to_f64_lossy() < 0.2 {
                lag1[(i, j)] = F::cast(0.2) * (F::uniform(rng) - F::cast(0.5));
            }
        }
    }
    let mut lags = vec![lag1];
    for _ in 1..spec.lags {
        let mut extra = DMatrix::<F>::zeros(nv, nv);
        for i in 0..nv {
            extra[(i, i)] = F::cast(0.1) * (F::uniform(rng) - F::cast(0.5));
        }
        lags.push(extra);
    }
    let mut coeffs = VarCoefficients {
        intercept: DVector::zeros(nv),
        lag_matrices: lags,
    };
    let mut rho = spectral_radius(&companion(&coeffs))?.to_f64_lossy();
    let mut rescaled = false;
    if rho >= spec.stability_bound {
        if spec.strict {
            return Err(Error::domain(format!(
                "requested process has spectral radius {rho:.3} >= bound {}",
                spec.stability_bound
            )));
        }
        let shrink = F::cast(0.9 * spec.stability_bound / rho);
        let mut factor = shrink;
        for lag in coeffs.lag_matrices.iter_mut() {
            *lag *= factor;
            factor *= shrink;
        }
        rho = spectral_radius(&companion(&coeffs))?.to_f64_lossy();
        rescaled = true;
    }
    Ok((coeffs, rho, rescaled))
}

fn draw_loadings<F: Scalar>(spec: &TruthSpec, rng: &mut ChaCha8Rng) -> DMatrix<F> {
    let nv = spec.n_vars();
    let mut g = DMatrix::<F>::zeros(nv, spec.r);
    for i in 0..nv {
        for j in 0..spec.r {
            let magnitude = 0.4 + 0.6 * F::uniform(rng).to_f64_lossy();
            g[(i, j)] = match spec.scheme.entry(i, j) {
                Restriction::Zero => F::zero(),
                Restriction::Pos => F::cast(magnitude),
                Restriction::Neg => -F::cast(magnitude),
                Restriction::Free => {
                    let signed = magnitude * if F::uniform(rng).to_f64_lossy() < 0.5 { -1.0 } else { 1.0 };
                    F::cast(signed)
                }
            };
        }
    }
    g
}

/// Simulate a dataset and return it with the full generating truth.
///
/// The forward model is the factor VAR: z_t = sum Phi_j z_{t-j} + G_t f_t +
/// e_t with f_t ~ N(0, I); instrument idiosyncratic errors are Gaussian with
/// variance W, macro errors are (optionally) standardized Student-t with the
/// requested volatility profile. Months flagged as instrument gaps carry the
/// exact zero observations the zero-fill convention produces.
pub fn simulate<F: Scalar>(spec: &TruthSpec, seed: u64) -> Result<(Dataset<F>, TruthBundle<F>)> {
    if spec.r < spec.m || spec.r == 0 {
        return Err(Error::argument(format!(
            "need r >= m and r >= 1, got r={}, m={}",
            spec.r, spec.m
        )));
    }
    if spec.t_len < spec.lags + 10 {
        return Err(Error::argument(format!("sample too short: T={}", spec.t_len)));
    }
    let violations = spec.scheme.validate(spec.m, spec.n_macro(), spec.r);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }

    let mut rng = substream(seed, 0, Block::Simulate, 0);
    let nv = spec.n_vars();
    let (coeffs, rho, rescaled) = stable_coefficients::<F>(spec, &mut rng)?;
    if rescaled {
        eprintln!("note: generating VAR rescaled to spectral radius {rho:.3}");
    }
    let gamma0 = draw_loadings::<F>(spec, &mut rng);

    // Idiosyncratic scales: modest relative to unit-variance factors.
    let w_diag = DVector::from_fn(spec.m, |_, _| F::cast(0.05 + 0.1 * F::uniform(&mut rng).to_f64_lossy()));
    let sigma_diag =
        DVector::from_fn(spec.n_macro(), |_, _| F::cast(0.1 + 0.2 * F::uniform(&mut rng).to_f64_lossy()));

    // Per-period loading matrices with ramps applied.
    let mut loading_paths = Vec::with_capacity(spec.t_len);
    for t in 0..spec.t_len {
        let mut g = gamma0.clone();
        for (row, shock, path) in &spec.ramps {
            if let LoadingPath::Ramp { from, to } = path {
                let frac = t as f64 / (spec.t_len - 1) as f64;
                g[(*row, *shock)] = F::cast(from + (to - from) * frac);
            }
        }
        loading_paths.push(g);
    }

    // Instrument gap months (exact zeros after zero-fill).
    let gap: Vec<bool> = (0..spec.t_len)
        .map(|_| F::uniform(&mut rng).to_f64_lossy() < spec.instrument_gap_share)
        .collect();

    let mut factors = DMatrix::<F>::zeros(spec.t_len, spec.r);
    let mut values = DMatrix::<F>::zeros(spec.t_len, nv);
    let mut z_prev: Vec<DVector<F>> = vec![DVector::zeros(nv); spec.lags];
    let truth_stub = TruthBundle {
        coefficients: coeffs.clone(),
        gamma_star0: gamma0.clone(),
        loading_paths: loading_paths.clone(),
        w_diag: w_diag.clone(),
        sigma_diag: sigma_diag.clone(),
        vol: spec.vol,
        student_dof: spec.student_dof,
        factors: DMatrix::zeros(0, 0),
        spectral_radius: rho,
        rescaled,
        t_len: spec.t_len,
    };
    for t in 0..spec.t_len {
        let mut z = DVector::<F>::zeros(nv);
        for (j, phi) in coeffs.lag_matrices.iter().enumerate() {
            z += phi * &z_prev[j];
        }
        let f_t = DVector::from_fn(spec.r, |_, _| F::std_normal(&mut rng));
        for j in 0..spec.r {
            factors[(t, j)] = f_t[j];
        }
        z += &loading_paths[t] * &f_t;
        for i in 0..spec.m {
            z[i] += w_diag[i].sqrt() * F::std_normal(&mut rng);
        }
        for jm in 0..spec.n_macro() {
            let sd = truth_stub.macro_sd_at(jm, t);
            let shock = match spec.student_dof {
                None => F::std_normal(&mut rng),
                Some(nu) => standardized_t(F::cast(nu), &mut rng),
            };
            z[spec.m + jm] += sd * shock;
        }
        if gap[t] {
            // No announcement this month: the recorded surprise is exactly
            // zero, matching what assembly's zero-fill produces.
            for i in 0..spec.m {
                z[i] = F::zero();
            }
        }
        for i in 0..nv {
            values[(t, i)] = z[i];
        }
        for j in (1..spec.lags).rev() {
            z_prev[j] = z_prev[j - 1].clone();
        }
        z_prev[0] = z;
    }

    let start: Month = "1991-01".parse().expect("static date");
    let dates: Vec<Month> = (0..spec.t_len).map(|t| start.plus(t as i64)).collect();
    let meta = desk_meta(spec);
    let dataset = Dataset {
        values,
        dates,
        meta,
        scaling: None,
    };
    let mut truth = truth_stub;
    truth.factors = factors;
    Ok((dataset, truth))
}

/// Standardized Student-t draw: unit variance for any dof > 2.
fn standardized_t<F: Scalar, R: Rng + ?Sized>(dof: F, rng: &mut R) -> F {
    let half = F::cast(0.5);
    let z: F = F::std_normal(rng);
    // chi2(nu) = Gamma(nu/2, 2)
    let chi2 = F::gamma(dof * half, F::cast(2.0), rng);
    let t = z / (chi2 / dof).sqrt();
    t * ((dof - F::cast(2.0)) / dof).sqrt()
}

fn desk_meta(spec: &TruthSpec) -> Vec<VariableMeta> {
    let mut meta = Vec::with_capacity(spec.n_vars());
    for i in 0..spec.n_vars() {
        let label = spec
            .scheme
            .row_labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("V{i}"));
        let role = if i < spec.m {
            Role::Instrument
        } else if i < spec.m + spec.n_core {
            Role::Core
        } else {
            Role::Other
        };
        meta.push(VariableMeta::new(&label, role, 1));
    }
    meta
}

/// Exact impulse responses implied by a truth bundle (loading matrix frozen
/// at `at_time`, final period by default).
pub fn oracle_irf<F: Scalar>(
    truth: &TruthBundle<F>,
    shock: usize,
    horizon: usize,
    at_time: Option<usize>,
) -> DMatrix<F> {
    let g = truth.gamma_star_at(at_time.unwrap_or(truth.t_len - 1));
    let psi = vma(&truth.coefficients, horizon);
    let nv = g.nrows();
    let mut out = DMatrix::<F>::zeros(horizon + 1, nv);
    let col = g.column(shock);
    for h in 0..=horizon {
        let resp = &psi.psi[h] * col;
        for i in 0..nv {
            out[(h, i)] = resp[i];
        }
    }
    out
}

/// Serialize a truth bundle to JSON (matrices as nested row-major arrays).
pub fn truth_to_json<F: Scalar>(truth: &TruthBundle<F>) -> String {
    let mat = |m: &DMatrix<F>| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)].to_f64_lossy()).collect())
            .collect()
    };
    let vec = |v: &DVector<F>| -> Vec<f64> { v.iter().map(|x| x.to_f64_lossy()).collect() };
    let value = serde_json::json!({
        "intercept": vec(&truth.coefficients.intercept),
        "lag_matrices": truth.coefficients.lag_matrices.iter().map(&mat).collect::<Vec<_>>(),
        "gamma_star0": mat(&truth.gamma_star0),
        "gamma_star_final": mat(&truth.gamma_star_at(usize::MAX)),
        "w_diag": vec(&truth.w_diag),
        "sigma_diag": vec(&truth.sigma_diag),
        "vol": truth.vol,
        "student_dof": truth.student_dof,
        "factors": mat(&truth.factors),
        "spectral_radius": truth.spectral_radius,
        "rescaled": truth.rescaled,
    });
    serde_json::to_string_pretty(&value).expect("truth serialization")
}

/// Write a simulated dataset in the CSV format the loader consumes;
/// instrument gap months become empty cells.
pub fn dataset_to_csv<F: Scalar>(ds: &Dataset<F>) -> String {
    let mut out = String::from("date");
    for m in &ds.meta {
        out.push(',');
        out.push_str(&m.mnemonic);
    }
    out.push('\n');
    let m_count = ds.n_instruments();
    for (t, date) in ds.dates.iter().enumerate() {
        out.push_str(&date.to_string());
        for c in 0..ds.n_vars() {
            out.push(',');
            let v = ds.values[(t, c)];
            let is_gap = c < m_count && v == F::zero();
            if !is_gap {
                out.push_str(&format!("{:?}", v.to_f64_lossy()));
            }
        }
        out.push('\n');
    }
    out
}

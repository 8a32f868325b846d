use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{DofSampler, HorseshoeState, TScaleState};
use crate::error::Result;
use crate::gibbs::spec::Features;
use crate::scalar::Scalar;

/// Full parameter state of one Gibbs iteration.
///
/// `phi` is the stacked `N x k` coefficient matrix (intercept first), `gamma`
/// the instrument loading block, `lambda` the constant macro loadings, and
/// `lambda_paths` one `T x r` path matrix per time-varying row. Volatility
/// lives either in `sigma_diag` (constant) or `logvol` (stochastic
/// volatility), and `tscale` carries the Student-t machinery.
#[derive(Debug, Clone)]
pub struct ChainState<F: Scalar> {
    pub phi: DMatrix<F>,
    pub gamma: DMatrix<F>,
    pub lambda: DMatrix<F>,
    pub lambda_paths: Vec<DMatrix<F>>,
    pub factors: DMatrix<F>,
    pub w_diag: DVector<F>,
    pub sigma_diag: DVector<F>,
    pub logvol: DMatrix<F>,
    pub omega2: DVector<F>,
    pub q_diag: DVector<F>,
    pub horseshoe_phi: HorseshoeState<F>,
    pub horseshoe_q: HorseshoeState<F>,
    pub tscale: TScaleState<F>,
    pub mixture_indicators: Vec<Vec<usize>>,
    pub dof_samplers: Vec<DofSampler<F>>,
    /// Current VAR residuals E = Y - X phi', refreshed after the phi step.
    pub resid: DMatrix<F>,
    pub iteration: usize,
}

/// One stored (thinned, post-burn) snapshot: everything needed to
/// reconstruct any impulse response, plus per-draw diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDraw<F: Scalar> {
    pub phi: DMatrix<F>,
    pub gamma: DMatrix<F>,
    pub lambda: DMatrix<F>,
    pub lambda_paths: Vec<DMatrix<F>>,
    pub w_diag: DVector<F>,
    pub sigma_diag: Option<DVector<F>>,
    pub logvol: Option<DMatrix<F>>,
    pub omega2: Option<DVector<F>>,
    pub q_diag: Option<DVector<F>>,
    pub nu: Option<DVector<F>>,
    pub spectral_radius: f64,
    pub dof_acceptance: f64,
}

impl<F: Scalar> StoredDraw<F> {
    /// Stacked loading matrix at a given period: gamma over lambda, with
    /// time-varying rows taken from their paths (`None` = final period).
    pub fn gamma_star(&self, tv_rows: &[usize], at_time: Option<usize>) -> DMatrix<F> {
        let m = self.gamma.nrows();
        let n = self.lambda.nrows();
        let r = self.gamma.ncols().max(self.lambda.ncols());
        let mut out = DMatrix::<F>::zeros(m + n, r);
        out.view_mut((0, 0), (m, self.gamma.ncols())).copy_from(&self.gamma);
        out.view_mut((m, 0), (n, self.lambda.ncols())).copy_from(&self.lambda);
        for (slot, &row) in tv_rows.iter().enumerate() {
            let path = &self.lambda_paths[slot];
            let t = at_time.unwrap_or(path.nrows() - 1).min(path.nrows() - 1);
            for j in 0..r {
                out[(row, j)] = path[(t, j)];
            }
        }
        out
    }

    /// Idiosyncratic variance diagonal at a period (instruments then macro);
    /// Student-t mixing scales are not included.
    pub fn variance_diag(&self, at_time: Option<usize>) -> DVector<F> {
        let m = self.w_diag.len();
        let n = if let Some(s) = &self.sigma_diag {
            s.len()
        } else if let Some(h) = &self.logvol {
            h.ncols()
        } else {
            0
        };
        let mut out = DVector::<F>::zeros(m + n);
        for i in 0..m {
            out[i] = self.w_diag[i];
        }
        if let Some(s) = &self.sigma_diag {
            for j in 0..n {
                out[m + j] = s[j];
            }
        } else if let Some(h) = &self.logvol {
            let t = at_time.unwrap_or(h.nrows() - 1).min(h.nrows() - 1);
            for j in 0..n {
                out[m + j] = h[(t, j)].exp();
            }
        }
        out
    }
}

/// Immutable description of a run, stored alongside the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub k: usize,
    pub t_eff: usize,
    pub features: Features,
    pub tv_rows: Vec<usize>,
    pub variable_labels: Vec<String>,
    pub shock_labels: Vec<String>,
    /// Effective-sample dates (after lag trimming), as YYYY-MM strings.
    pub dates: Vec<String>,
    pub scaling_means: Vec<f64>,
    pub scaling_sds: Vec<f64>,
    pub seed: u64,
    pub draws: usize,
    pub burn: usize,
    pub thin: usize,
    pub scheme_json: String,
}

/// Thinned posterior draws plus run metadata.
#[derive(Debug, Clone)]
pub struct PosteriorDraws<F: Scalar> {
    pub meta: RunMeta,
    pub draws: Vec<StoredDraw<F>>,
}

impl<F: Scalar> PosteriorDraws<F> {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Receiver for stored draws; lets the engine stream to disk or memory.
pub trait DrawSink<F: Scalar> {
    fn start(&mut self, meta: &RunMeta) -> Result<()>;
    fn record(&mut self, draw: &StoredDraw<F>) -> Result<()>;
    fn progress(&mut self, _iteration: usize, _total: usize) {}
    /// Normal completion.
    fn finish(&mut self) -> Result<()>;
    /// Abnormal completion: flush what exists, marked truncated.
    fn abort(&mut self, context: &str) -> Result<()>;
}

/// In-memory sink backing `run_chain_collect`.
#[derive(Debug, Default)]
pub struct MemorySink<F: Scalar> {
    pub meta: Option<RunMeta>,
    pub draws: Vec<StoredDraw<F>>,
    pub truncated: Option<String>,
}

impl<F: Scalar> MemorySink<F> {
    pub fn new() -> MemorySink<F> {
        MemorySink {
            meta: None,
            draws: Vec::new(),
            truncated: None,
        }
    }

    pub fn into_posterior(self) -> PosteriorDraws<F> {
        PosteriorDraws {
            meta: self.meta.expect("sink never started"),
            draws: self.draws,
        }
    }
}

impl<F: Scalar> DrawSink<F> for MemorySink<F> {
    fn start(&mut self, meta: &RunMeta) -> Result<()> {
        self.meta = Some(meta.clone());
        Ok(())
    }

    fn record(&mut self, draw: &StoredDraw<F>) -> Result<()> {
        self.draws.push(draw.clone());
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }

    fn abort(&mut self, context: &str) -> Result<()> {
        self.truncated = Some(context.to_string());
        Ok(())
    }
}

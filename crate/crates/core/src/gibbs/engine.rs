//! The posterior sampler: initialization and the conditional blocks, cycled
//! burn+draws times.
//!
//! Iteration order: VAR coefficients (with horseshoe refresh), constant
//! loadings, latent factors, idiosyncratic variances, then the optional
//! blocks (log-volatility paths, time-varying loading paths, degrees of
//! freedom). Equation- and series-indexed loops run as independent tasks on
//! RNG substreams keyed by (seed, iteration, block, task), so chains are
//! bit-reproducible for any thread count.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::data::Dataset;
use crate::dist::{
    sample_inverse_gamma, sample_logchi2_mixture_indicator, sample_t_scales,
    sample_truncated_normal, update_horseshoe, update_horseshoe_grouped, DofSampler, HalfLine,
    HorseshoeState, TScaleState,
};
use crate::error::{Error, Result};
use crate::gibbs::parallel::run_tasks;
use crate::gibbs::rng::{substream, Block};
use crate::gibbs::spec::{ModelSpec, Shrinkage};
use crate::gibbs::state::{ChainState, DrawSink, MemorySink, PosteriorDraws, RunMeta, StoredDraw};
use crate::gibbs::state_space::{random_walk_posterior, sample_tridiag_gaussian};
use crate::ident::{Restriction, RestrictionScheme};
use crate::scalar::Scalar;
use crate::var::{build_regressors, companion, spectral_radius, VarCoefficients};

/// Prior variance on free and sign-restricted loading elements.
const LOADING_PRIOR_VAR: f64 = 10.0;
/// Prior variance on equation intercepts.
const INTERCEPT_PRIOR_VAR: f64 = 10.0;
/// Inverse-gamma prior (shape, scale) on idiosyncratic variances.
const VARIANCE_PRIOR: (f64, f64) = (3.0, 0.5);
/// Inverse-gamma prior (shape, scale) on log-volatility innovation variances.
const OMEGA_PRIOR: (f64, f64) = (3.0, 0.03);
/// Diffuse initial-state variance for random-walk paths.
const PATH_INIT_VAR: f64 = 10.0;
/// Floor on time-variation innovation variances.
const Q_FLOOR: f64 = 1e-12;
/// Initial degrees of freedom and Metropolis step size.
const DOF_INIT: f64 = 30.0;
const DOF_STEP_INIT: f64 = 0.3;

pub(crate) struct Engine<F: Scalar> {
    y: DMatrix<F>,
    xt: DMatrix<F>, // k x T, regressors transposed for contiguous access
    xtx: DMatrix<F>,
    m: usize,
    n: usize,
    r: usize,
    p: usize,
    k: usize,
    t_eff: usize,
    scheme: RestrictionScheme,
    features: crate::gibbs::spec::Features,
    shrinkage: Shrinkage,
    /// Panel row index of each time-varying row (empty when the feature is off).
    tv_rows: Vec<usize>,
    /// Macro index -> slot in `tv_rows`.
    tv_slot: Vec<Option<usize>>,
    seed: u64,
    threads: usize,
    /// Fixed anchors for log-volatility and time-varying loading paths.
    sv_mu0: Vec<F>,
    tv_anchor: DMatrix<F>,
}

impl<F: Scalar> Engine<F> {
    pub fn new(ds: &Dataset<F>, spec: &ModelSpec, threads: usize) -> Result<Engine<F>> {
        let m = ds.n_instruments();
        let n = ds.n_vars() - m;
        spec.validate(m, n)?;
        if spec.lags * ds.n_vars() + 1 > ds.n_obs().saturating_sub(spec.lags) {
            // k > T is allowed (shrinkage handles it) but worth surfacing.
            eprintln!(
                "note: {} regressors exceed {} effective observations; relying on shrinkage",
                spec.lags * ds.n_vars() + 1,
                ds.n_obs().saturating_sub(spec.lags)
            );
        }
        let (y, x) = build_regressors(&ds.values, spec.lags)?;
        let t_eff = y.nrows();
        let k = x.ncols();
        let xt = x.transpose();
        let xtx = &xt * &x;
        let tv_rows = if spec.features.tv_loadings {
            spec.scheme.tv_rows()
        } else {
            Vec::new()
        };
        let mut tv_slot = vec![None; n];
        for (slot, &row) in tv_rows.iter().enumerate() {
            if row < m {
                return Err(Error::Validation(vec![format!(
                    "time-varying row {row} is an instrument row"
                )]));
            }
            tv_slot[row - m] = Some(slot);
        }
        Ok(Engine {
            y,
            xt,
            xtx,
            m,
            n,
            r: spec.factors,
            p: spec.lags,
            k,
            t_eff,
            scheme: spec.scheme.clone(),
            features: spec.features,
            shrinkage: spec.shrinkage,
            tv_rows,
            tv_slot,
            seed: spec.seed,
            threads: threads.max(1),
            sv_mu0: Vec::new(),
            tv_anchor: DMatrix::zeros(0, 0),
        })
    }

    fn n_vars(&self) -> usize {
        self.m + self.n
    }

    /// Loading of panel row i on shock j at period t, respecting paths.
    #[inline]
    fn loading(&self, state: &ChainState<F>, i: usize, j: usize, t: usize) -> F {
        if i < self.m {
            state.gamma[(i, j)]
        } else if let Some(slot) = self.tv_slot[i - self.m] {
            state.lambda_paths[slot][(t, j)]
        } else {
            state.lambda[(i - self.m, j)]
        }
    }

    /// Idiosyncratic variance of panel row i at period t, with Student-t
    /// mixing scales folded in.
    #[inline]
    fn variance_at(&self, state: &ChainState<F>, i: usize, t: usize) -> F {
        if i < self.m {
            state.w_diag[i]
        } else {
            let j = i - self.m;
            let base = if self.features.stoch_vol {
                state.logvol[(t, j)].exp()
            } else {
                state.sigma_diag[j]
            };
            if self.features.student_t {
                base * state.tscale.mixing_scales[(t, j)]
            } else {
                base
            }
        }
    }

    /// Common-component residual u_{i,t} = e_{i,t} - loading_row_i(t) . f_t
    /// for one panel row, as a vector over time.
    fn factor_removed(&self, state: &ChainState<F>, i: usize) -> Vec<F> {
        (0..self.t_eff)
            .map(|t| {
                let mut u = state.resid[(t, i)];
                for j in 0..self.r {
                    u -= self.loading(state, i, j, t) * state.factors[(t, j)];
                }
                u
            })
            .collect()
    }

    // ----- initialization ---------------------------------------------------

    pub fn initialize(&mut self) -> Result<ChainState<F>> {
        let nv = self.n_vars();
        // Ridge least squares for the VAR coefficients (penalty 1.0).
        let mut a = self.xtx.clone();
        for c in 0..self.k {
            a[(c, c)] += F::one();
        }
        let chol = Cholesky::new(a).ok_or_else(|| {
            Error::Numerical {
                block: "initialization".to_string(),
                iteration: 0,
                message: "ridge normal equations not positive definite".to_string(),
            }
        })?;
        let mut phi = DMatrix::<F>::zeros(nv, self.k);
        for i in 0..nv {
            let rhs = &self.xt * self.y.column(i);
            let beta = chol.solve(&rhs);
            phi.row_mut(i).copy_from(&beta.transpose());
        }
        let resid = &self.y - (&self.xt.transpose() * phi.transpose());

        // Initial factors. Each identified factor starts as its own
        // instrument's residual column (normalized), which aligns both the
        // column ordering and the sign with the instrument block; residual
        // factors start as principal components of the macro-block
        // residuals. Starting an identified factor from an unrelated
        // component risks a sign-flipped mode the chain cannot leave.
        let tf = F::cast_usize(self.t_eff);
        let mut factors = DMatrix::<F>::zeros(self.t_eff, self.r);
        let macro_svd = resid.columns(self.m, self.n).into_owned().svd(true, false);
        let macro_u = macro_svd.u.as_ref().expect("svd with u requested");
        for j in 0..self.r {
            if j < self.m {
                let col = resid.column(j);
                let var = col.norm_squared() / tf;
                if var > F::cast(1e-12) {
                    let scale = F::one() / var.sqrt();
                    for t in 0..self.t_eff {
                        factors[(t, j)] = col[t] * scale;
                    }
                    continue;
                }
            }
            let pc = (j.saturating_sub(self.m)).min(macro_u.ncols() - 1);
            for t in 0..self.t_eff {
                factors[(t, j)] = macro_u[(t, pc)] * tf.sqrt();
            }
        }

        // Scheme-consistent least-squares loadings.
        let mut ftf = DMatrix::<F>::zeros(self.r, self.r);
        for t in 0..self.t_eff {
            for a_ in 0..self.r {
                for b_ in a_..self.r {
                    ftf[(b_, a_)] += factors[(t, a_)] * factors[(t, b_)];
                }
            }
        }
        for a_ in 0..self.r {
            for b_ in (a_ + 1)..self.r {
                ftf[(a_, b_)] = ftf[(b_, a_)];
            }
            ftf[(a_, a_)] += F::cast(1e-6) * tf;
        }
        let fchol = Cholesky::new(ftf).ok_or_else(|| Error::Numerical {
            block: "initialization".to_string(),
            iteration: 0,
            message: "factor cross-product not positive definite".to_string(),
        })?;

        let snap = F::cast(0.05);
        let mut gamma = DMatrix::<F>::zeros(self.m, self.r);
        let mut lambda = DMatrix::<F>::zeros(self.n, self.r);
        let mut variances = DVector::<F>::zeros(nv);
        for i in 0..nv {
            let mut fte = DVector::<F>::zeros(self.r);
            for t in 0..self.t_eff {
                for j in 0..self.r {
                    fte[j] += factors[(t, j)] * resid[(t, i)];
                }
            }
            let mut g = fchol.solve(&fte);
            for j in 0..self.r {
                g[j] = match self.scheme.entry(i, j) {
                    Restriction::Zero => F::zero(),
                    Restriction::Pos => g[j].max(snap),
                    Restriction::Neg => g[j].min(-snap),
                    Restriction::Free => g[j],
                };
            }
            let mut ss = F::zero();
            for t in 0..self.t_eff {
                let mut u_ti = resid[(t, i)];
                for j in 0..self.r {
                    u_ti -= g[j] * factors[(t, j)];
                }
                ss += u_ti * u_ti;
            }
            variances[i] = (ss / tf).max(F::cast(1e-4));
            if i < self.m {
                gamma.row_mut(i).copy_from(&g.transpose());
            } else {
                lambda.row_mut(i - self.m).copy_from(&g.transpose());
            }
        }

        let w_diag = DVector::from_fn(self.m, |i, _| variances[i]);
        let sigma_diag = DVector::from_fn(self.n, |j, _| variances[self.m + j]);
        self.sv_mu0 = (0..self.n).map(|j| sigma_diag[j].ln()).collect();
        let logvol = DMatrix::from_fn(self.t_eff, self.n, |_, j| self.sv_mu0[j]);

        let n_tv = self.tv_rows.len();
        self.tv_anchor = DMatrix::from_fn(n_tv, self.r, |slot, j| {
            lambda[(self.tv_rows[slot] - self.m, j)]
        });
        let lambda_paths: Vec<DMatrix<F>> = (0..n_tv)
            .map(|slot| {
                DMatrix::from_fn(self.t_eff, self.r, |_, j| self.tv_anchor[(slot, j)])
            })
            .collect();

        let n_lag_coefs = nv * (self.k - 1);
        Ok(ChainState {
            phi,
            gamma,
            lambda,
            lambda_paths,
            factors,
            w_diag,
            sigma_diag,
            logvol,
            omega2: DVector::from_element(self.n, F::cast(0.01)),
            q_diag: DVector::from_element(n_tv * self.r, F::cast(0.01)),
            horseshoe_phi: HorseshoeState::new(n_lag_coefs),
            horseshoe_q: HorseshoeState::new(n_tv * self.r),
            tscale: TScaleState::gaussian(self.t_eff, self.n, F::cast(DOF_INIT)),
            mixture_indicators: vec![vec![4; self.t_eff]; self.n],
            dof_samplers: vec![DofSampler::new(F::cast(DOF_STEP_INIT)); self.n],
            resid,
            iteration: 0,
        })
    }

    // ----- conditional blocks ------------------------------------------------

    fn numerical(&self, block: &str, iteration: usize, message: impl Into<String>) -> Error {
        Error::Numerical {
            block: block.to_string(),
            iteration,
            message: message.into(),
        }
    }

    /// Draw from N(P^{-1} rhs, P^{-1}) given the dense precision P.
    fn gaussian_from_precision<R: Rng + ?Sized>(
        precision: DMatrix<F>,
        rhs: &DVector<F>,
        rng: &mut R,
    ) -> Option<DVector<F>> {
        let dim = rhs.len();
        let chol = Cholesky::new(precision)?;
        let mean = chol.solve(rhs);
        let z = DVector::from_fn(dim, |_, _| F::std_normal(rng));
        let noise = chol.l().tr_solve_lower_triangular(&z)?;
        Some(mean + noise)
    }

    /// Prior variance of lag coefficient index c (1-based column) in
    /// equation i.
    #[inline]
    fn phi_prior_var(&self, state: &ChainState<F>, i: usize, c: usize) -> F {
        match self.shrinkage {
            Shrinkage::FixedVariance(v) => F::cast(v),
            Shrinkage::Horseshoe => state.horseshoe_phi.variance(i * (self.k - 1) + (c - 1)),
        }
    }

    pub fn step_phi(&self, state: &mut ChainState<F>) -> Result<()> {
        let iter = state.iteration;
        let rows: Vec<std::result::Result<DVector<F>, String>> =
            run_tasks(self.threads, self.n_vars(), |i| {
                let mut rng = substream(self.seed, iter as u64, Block::Phi, i as u64);
                self.draw_equation(state, i, &mut rng)
            });
        for (i, row) in rows.into_iter().enumerate() {
            let beta = row.map_err(|msg| self.numerical("phi", iter, format!("equation {i}: {msg}")))?;
            state.phi.row_mut(i).copy_from(&beta.transpose());
        }
        if matches!(self.shrinkage, Shrinkage::Horseshoe) {
            let mut coefs = Vec::with_capacity(self.n_vars() * (self.k - 1));
            for i in 0..self.n_vars() {
                for c in 1..self.k {
                    coefs.push(state.phi[(i, c)]);
                }
            }
            let mut rng = substream(self.seed, iter as u64, Block::HorseshoePhi, 0);
            state.horseshoe_phi =
                update_horseshoe(&state.horseshoe_phi, &coefs, F::one(), &mut rng)
                    .map_err(|e| self.numerical("horseshoe_phi", iter, e.to_string()))?;
        }
        state.resid = &self.y - (self.xt.transpose() * state.phi.transpose());
        Ok(())
    }

    fn draw_equation<R: Rng + ?Sized>(
        &self,
        state: &ChainState<F>,
        i: usize,
        rng: &mut R,
    ) -> std::result::Result<DVector<F>, String> {
        // Weights 1/d_{i,t}; constant for instrument rows and for macro rows
        // without stochastic volatility or Student-t scaling.
        let constant_weight = i < self.m || (!self.features.stoch_vol && !self.features.student_t);
        let mut a;
        let mut rhs = DVector::<F>::zeros(self.k);
        if constant_weight {
            let w = F::one() / self.variance_at(state, i, 0);
            a = &self.xtx * w;
            for t in 0..self.t_eff {
                let ytilde = self.net_of_factors(state, i, t);
                let col = self.xt.column(t);
                let scale = w * ytilde;
                for c in 0..self.k {
                    rhs[c] += scale * col[c];
                }
            }
        } else {
            a = DMatrix::<F>::zeros(self.k, self.k);
            for t in 0..self.t_eff {
                let w = F::one() / self.variance_at(state, i, t);
                let ytilde = self.net_of_factors(state, i, t);
                let col = self.xt.column(t);
                let scale = w * ytilde;
                for c in 0..self.k {
                    let xc = col[c] * w;
                    rhs[c] += scale * col[c];
                    for r2 in c..self.k {
                        a[(r2, c)] += xc * col[r2];
                    }
                }
            }
            for c in 0..self.k {
                for r2 in (c + 1)..self.k {
                    a[(c, r2)] = a[(r2, c)];
                }
            }
        }
        a[(0, 0)] += F::one() / F::cast(INTERCEPT_PRIOR_VAR);
        for c in 1..self.k {
            a[(c, c)] += F::one() / self.phi_prior_var(state, i, c);
        }
        Self::gaussian_from_precision(a, &rhs, rng)
            .ok_or_else(|| "singular posterior precision (degenerate scaling)".to_string())
    }

    /// y_{i,t} minus the factor contribution of row i at t.
    #[inline]
    fn net_of_factors(&self, state: &ChainState<F>, i: usize, t: usize) -> F {
        let mut out = self.y[(t, i)];
        for j in 0..self.r {
            out -= self.loading(state, i, j, t) * state.factors[(t, j)];
        }
        out
    }

    pub fn step_loadings(&self, state: &mut ChainState<F>) -> Result<()> {
        let iter = state.iteration;
        let rows: Vec<Option<std::result::Result<Vec<F>, String>>> =
            run_tasks(self.threads, self.n_vars(), |i| {
                if i >= self.m && self.tv_slot[i - self.m].is_some() {
                    return None; // time-varying rows are drawn as paths
                }
                let mut rng = substream(self.seed, iter as u64, Block::Loadings, i as u64);
                Some(self.draw_loading_row(state, i, &mut rng))
            });
        for (i, row) in rows.into_iter().enumerate() {
            let Some(row) = row else { continue };
            let values =
                row.map_err(|msg| self.numerical("loadings", iter, format!("row {i}: {msg}")))?;
            for j in 0..self.r {
                if i < self.m {
                    state.gamma[(i, j)] = values[j];
                } else {
                    state.lambda[(i - self.m, j)] = values[j];
                }
            }
        }
        Ok(())
    }

    fn draw_loading_row<R: Rng + ?Sized>(
        &self,
        state: &ChainState<F>,
        i: usize,
        rng: &mut R,
    ) -> std::result::Result<Vec<F>, String> {
        let mut row: Vec<F> = (0..self.r).map(|j| self.loading(state, i, j, 0)).collect();
        let prior_prec = F::one() / F::cast(LOADING_PRIOR_VAR);
        for j in 0..self.r {
            match self.scheme.entry(i, j) {
                Restriction::Zero => {
                    row[j] = F::zero();
                    continue;
                }
                restriction => {
                    let mut prec = prior_prec;
                    let mut num = F::zero();
                    for t in 0..self.t_eff {
                        let fj = state.factors[(t, j)];
                        if fj == F::zero() {
                            continue;
                        }
                        let winv = F::one() / self.variance_at(state, i, t);
                        let mut partial = state.resid[(t, i)];
                        for (j2, g) in row.iter().enumerate() {
                            if j2 != j {
                                partial -= *g * state.factors[(t, j2)];
                            }
                        }
                        prec += fj * fj * winv;
                        num += fj * partial * winv;
                    }
                    let var = F::one() / prec;
                    let mean = num * var;
                    row[j] = match restriction {
                        Restriction::Free => mean + var.sqrt() * F::std_normal(rng),
                        Restriction::Pos => {
                            sample_truncated_normal(mean, var, HalfLine::Positive, rng)
                                .map_err(|e| e.to_string())?
                        }
                        Restriction::Neg => {
                            sample_truncated_normal(mean, var, HalfLine::Negative, rng)
                                .map_err(|e| e.to_string())?
                        }
                        Restriction::Zero => unreachable!(),
                    };
                }
            }
        }
        Ok(row)
    }

    pub fn step_factors(&self, state: &mut ChainState<F>) -> Result<()> {
        let iter = state.iteration;
        let mut rng = substream(self.seed, iter as u64, Block::Factors, 0);
        let nv = self.n_vars();
        let mut g = DMatrix::<F>::zeros(nv, self.r);
        let mut new_factors = DMatrix::<F>::zeros(self.t_eff, self.r);
        for t in 0..self.t_eff {
            for i in 0..nv {
                for j in 0..self.r {
                    g[(i, j)] = self.loading(state, i, j, t);
                }
            }
            let mut prec = DMatrix::<F>::identity(self.r, self.r);
            let mut rhs = DVector::<F>::zeros(self.r);
            for i in 0..nv {
                let dinv = F::one() / self.variance_at(state, i, t);
                let e = state.resid[(t, i)];
                for a_ in 0..self.r {
                    let ga = g[(i, a_)] * dinv;
                    rhs[a_] += ga * e;
                    for b_ in a_..self.r {
                        prec[(b_, a_)] += ga * g[(i, b_)];
                    }
                }
            }
            for a_ in 0..self.r {
                for b_ in (a_ + 1)..self.r {
                    prec[(a_, b_)] = prec[(b_, a_)];
                }
            }
            let f_t = Self::gaussian_from_precision(prec, &rhs, &mut rng)
                .ok_or_else(|| self.numerical("factors", iter, format!("period {t}")))?;
            new_factors.row_mut(t).copy_from(&f_t.transpose());
        }
        state.factors = new_factors;
        Ok(())
    }

    pub fn step_variances(&self, state: &mut ChainState<F>) -> Result<()> {
        let iter = state.iteration;
        let (shape0, scale0) = (F::cast(VARIANCE_PRIOR.0), F::cast(VARIANCE_PRIOR.1));
        let half = F::cast(0.5);
        let tf = F::cast_usize(self.t_eff);
        let results: Vec<Option<std::result::Result<F, String>>> =
            run_tasks(self.threads, self.n_vars(), |i| {
                if i >= self.m && self.features.stoch_vol {
                    return None; // handled by the volatility step
                }
                let mut rng = substream(self.seed, iter as u64, Block::Variances, i as u64);
                let u = self.factor_removed(state, i);
                let mut ss = F::zero();
                for t in 0..self.t_eff {
                    let scale_t = if i >= self.m && self.features.student_t {
                        state.tscale.mixing_scales[(t, i - self.m)]
                    } else {
                        F::one()
                    };
                    ss += u[t] * u[t] / scale_t;
                }
                Some(
                    sample_inverse_gamma(shape0 + half * tf, scale0 + half * ss, &mut rng)
                        .map_err(|e| e.to_string()),
                )
            });
        for (i, res) in results.into_iter().enumerate() {
            let Some(res) = res else { continue };
            let v = res.map_err(|msg| self.numerical("variances", iter, format!("series {i}: {msg}")))?;
            if i < self.m {
                state.w_diag[i] = v;
            } else {
                state.sigma_diag[i - self.m] = v;
            }
        }
        Ok(())
    }

    pub fn step_stochvol(&self, state: &mut ChainState<F>) -> Result<()> {
        if !self.features.stoch_vol {
            return Ok(());
        }
        let iter = state.iteration;
        let comps = crate::dist::mixture_components::<F>();
        let (om_shape, om_scale) = (F::cast(OMEGA_PRIOR.0), F::cast(OMEGA_PRIOR.1));
        let half = F::cast(0.5);
        type SvOut<F> = std::result::Result<(Vec<F>, F, Vec<usize>), String>;
        let results: Vec<SvOut<F>> = run_tasks(self.threads, self.n, |j| {
            let mut rng = substream(self.seed, iter as u64, Block::StochVol, j as u64);
            let i = self.m + j;
            let u = self.factor_removed(state, i);
            let mut obs_prec = vec![F::zero(); self.t_eff];
            let mut obs_rhs = vec![F::zero(); self.t_eff];
            let mut indicators = vec![0usize; self.t_eff];
            for t in 0..self.t_eff {
                let s_t = if self.features.student_t {
                    state.tscale.mixing_scales[(t, j)]
                } else {
                    F::one()
                };
                let adj = u[t] / s_t.sqrt();
                let c = sample_logchi2_mixture_indicator(adj, state.logvol[(t, j)], &mut rng);
                indicators[t] = c;
                let ystar = (adj * adj + F::cast(crate::dist::LOG_OFFSET)).ln();
                let (_, mean_c, var_c) = comps[c];
                obs_prec[t] = F::one() / var_c;
                obs_rhs[t] = (ystar - mean_c) / var_c;
            }
            let (diag, off, rhs) = random_walk_posterior(
                state.omega2[j],
                self.sv_mu0[j],
                F::cast(PATH_INIT_VAR),
                &obs_prec,
                &obs_rhs,
            );
            let h = sample_tridiag_gaussian(&diag, &off, &rhs, &mut rng)
                .map_err(|e| format!("banded solve failed: {e}"))?;
            let mut incr = F::zero();
            for t in 1..self.t_eff {
                let d = h[t] - h[t - 1];
                incr += d * d;
            }
            let t_incr = F::cast_usize(self.t_eff.saturating_sub(1));
            let omega2 = sample_inverse_gamma(
                om_shape + half * t_incr,
                om_scale + half * incr,
                &mut rng,
            )
            .map_err(|e| e.to_string())?;
            Ok((h, omega2, indicators))
        });
        for (j, res) in results.into_iter().enumerate() {
            let (h, omega2, indicators) = res.map_err(|msg| {
                self.numerical("stochvol", iter, format!("series {}: {msg}", self.m + j))
            })?;
            for t in 0..self.t_eff {
                state.logvol[(t, j)] = h[t];
            }
            state.omega2[j] = omega2;
            state.mixture_indicators[j] = indicators;
        }
        Ok(())
    }

    pub fn step_tv_loadings(&self, state: &mut ChainState<F>) -> Result<()> {
        if self.tv_rows.is_empty() {
            return Ok(());
        }
        let iter = state.iteration;
        let n_tv = self.tv_rows.len();
        let results: Vec<std::result::Result<DMatrix<F>, String>> =
            run_tasks(self.threads, n_tv, |slot| {
                let mut rng = substream(self.seed, iter as u64, Block::TvLoadings, slot as u64);
                self.draw_tv_row(state, slot, &mut rng)
            });
        let mut new_paths = Vec::with_capacity(n_tv);
        for (slot, res) in results.into_iter().enumerate() {
            let path = res.map_err(|msg| {
                self.numerical(
                    "tv_loadings",
                    iter,
                    format!("row {}: {msg}", self.tv_rows[slot]),
                )
            })?;
            new_paths.push(path);
        }
        state.lambda_paths = new_paths;

        // Horseshoe on the path increments sets the innovation variances.
        let mut sum_sq = Vec::with_capacity(n_tv * self.r);
        let mut counts = Vec::with_capacity(n_tv * self.r);
        for path in &state.lambda_paths {
            for j in 0..self.r {
                let mut ss = F::zero();
                for t in 1..self.t_eff {
                    let d = path[(t, j)] - path[(t - 1, j)];
                    ss += d * d;
                }
                sum_sq.push(ss);
                counts.push(self.t_eff.saturating_sub(1));
            }
        }
        let mut rng = substream(self.seed, iter as u64, Block::HorseshoeQ, 0);
        state.horseshoe_q =
            update_horseshoe_grouped(&state.horseshoe_q, &sum_sq, &counts, &mut rng)
                .map_err(|e| self.numerical("horseshoe_q", iter, e.to_string()))?;
        for idx in 0..n_tv * self.r {
            state.q_diag[idx] = state.horseshoe_q.variance(idx).max(F::cast(Q_FLOOR));
        }
        Ok(())
    }

    fn draw_tv_row<R: Rng + ?Sized>(
        &self,
        state: &ChainState<F>,
        slot: usize,
        rng: &mut R,
    ) -> std::result::Result<DMatrix<F>, String> {
        let i = self.tv_rows[slot];
        let mut path = state.lambda_paths[slot].clone();
        for j in 0..self.r {
            let mut obs_prec = vec![F::zero(); self.t_eff];
            let mut obs_rhs = vec![F::zero(); self.t_eff];
            for t in 0..self.t_eff {
                let fj = state.factors[(t, j)];
                let dinv = F::one() / self.variance_at(state, i, t);
                let mut offset = state.resid[(t, i)];
                for j2 in 0..self.r {
                    if j2 != j {
                        offset -= path[(t, j2)] * state.factors[(t, j2)];
                    }
                }
                obs_prec[t] = fj * fj * dinv;
                obs_rhs[t] = fj * offset * dinv;
            }
            let (diag, off, rhs) = random_walk_posterior(
                state.q_diag[slot * self.r + j],
                self.tv_anchor[(slot, j)],
                F::cast(PATH_INIT_VAR),
                &obs_prec,
                &obs_rhs,
            );
            let drawn = sample_tridiag_gaussian(&diag, &off, &rhs, rng)
                .map_err(|e| format!("banded solve failed: {e}"))?;
            for t in 0..self.t_eff {
                path[(t, j)] = drawn[t];
            }
        }
        Ok(path)
    }

    pub fn step_dof(&self, state: &mut ChainState<F>) -> Result<()> {
        if !self.features.student_t {
            return Ok(());
        }
        let iter = state.iteration;
        type DofOut<F> = std::result::Result<(F, Vec<F>, DofSampler<F>), String>;
        let results: Vec<DofOut<F>> = run_tasks(self.threads, self.n, |j| {
            let mut rng = substream(self.seed, iter as u64, Block::Dof, j as u64);
            let i = self.m + j;
            let scales: Vec<F> = (0..self.t_eff)
                .map(|t| state.tscale.mixing_scales[(t, j)])
                .collect();
            let mut sampler = state.dof_samplers[j].clone();
            let dof_new = sampler.sample(state.tscale.dof[j], &scales, &mut rng);
            // Refresh mixing scales given the new dof and current residuals.
            let u = self.factor_removed(state, i);
            let varpath: Vec<F> = (0..self.t_eff)
                .map(|t| {
                    if self.features.stoch_vol {
                        state.logvol[(t, j)].exp()
                    } else {
                        state.sigma_diag[j]
                    }
                })
                .collect();
            let new_scales =
                sample_t_scales(&u, &varpath, dof_new, &mut rng).map_err(|e| e.to_string())?;
            Ok((dof_new, new_scales, sampler))
        });
        for (j, res) in results.into_iter().enumerate() {
            let (dof_new, scales, sampler) = res.map_err(|msg| {
                self.numerical("dof", iter, format!("series {}: {msg}", self.m + j))
            })?;
            state.tscale.dof[j] = dof_new;
            for t in 0..self.t_eff {
                state.tscale.mixing_scales[(t, j)] = scales[t];
            }
            state.dof_samplers[j] = sampler;
        }
        Ok(())
    }

    // ----- snapshots ---------------------------------------------------------

    fn snapshot(&self, state: &ChainState<F>) -> StoredDraw<F> {
        let coeffs = VarCoefficients::from_stacked(
            &state.phi.map(|v| v.to_f64_lossy()),
            self.p,
        )
        .expect("stacked layout is engine-controlled");
        let rho = spectral_radius(&companion(&coeffs)).unwrap_or(f64::NAN);
        let dof_acceptance = if self.features.student_t && !state.dof_samplers.is_empty() {
            state
                .dof_samplers
                .iter()
                .map(|s| s.acceptance_rate())
                .sum::<f64>()
                / state.dof_samplers.len() as f64
        } else {
            f64::NAN
        };
        StoredDraw {
            phi: state.phi.clone(),
            gamma: state.gamma.clone(),
            lambda: state.lambda.clone(),
            lambda_paths: state.lambda_paths.clone(),
            w_diag: state.w_diag.clone(),
            sigma_diag: (!self.features.stoch_vol).then(|| state.sigma_diag.clone()),
            logvol: self.features.stoch_vol.then(|| state.logvol.clone()),
            omega2: self.features.stoch_vol.then(|| state.omega2.clone()),
            q_diag: (!self.tv_rows.is_empty()).then(|| state.q_diag.clone()),
            nu: self
                .features
                .student_t
                .then(|| DVector::from_fn(self.n, |j, _| state.tscale.dof[j])),
            spectral_radius: rho,
            dof_acceptance,
        }
    }

    pub fn run_meta(&self, ds: &Dataset<F>, spec: &ModelSpec) -> RunMeta {
        let nv = self.n_vars();
        let (means, sds) = match &ds.scaling {
            Some(s) => (
                s.iter().map(|(m, _)| m.to_f64_lossy()).collect(),
                s.iter().map(|(_, sd)| sd.to_f64_lossy()).collect(),
            ),
            None => (vec![0.0; nv], vec![1.0; nv]),
        };
        RunMeta {
            m: self.m,
            n: self.n,
            r: self.r,
            p: self.p,
            k: self.k,
            t_eff: self.t_eff,
            features: self.features,
            tv_rows: self.tv_rows.clone(),
            variable_labels: ds.mnemonics(),
            shock_labels: self.scheme.shock_labels.clone(),
            dates: ds.dates[self.p..].iter().map(|d| d.to_string()).collect(),
            scaling_means: means,
            scaling_sds: sds,
            seed: spec.seed,
            draws: spec.draws,
            burn: spec.burn,
            thin: spec.thin,
            scheme_json: crate::ident::scheme_to_json(&self.scheme),
        }
    }
}

/// Run one chain, streaming stored draws into `sink`.
pub fn run_chain<F: Scalar, S: DrawSink<F>>(
    ds: &Dataset<F>,
    spec: &ModelSpec,
    threads: usize,
    sink: &mut S,
) -> Result<()> {
    let mut engine = Engine::new(ds, spec, threads)?;
    sink.start(&engine.run_meta(ds, spec))?;
    let mut state = engine.initialize()?;
    let total = spec.burn + spec.draws;
    let result = (|| -> Result<()> {
        for iter in 0..total {
            state.iteration = iter;
            if iter == spec.burn {
                for s in state.dof_samplers.iter_mut() {
                    s.freeze();
                }
            }
            engine.step_phi(&mut state)?;
            engine.step_loadings(&mut state)?;
            engine.step_factors(&mut state)?;
            engine.step_variances(&mut state)?;
            engine.step_stochvol(&mut state)?;
            engine.step_tv_loadings(&mut state)?;
            engine.step_dof(&mut state)?;
            if iter >= spec.burn && (iter - spec.burn + 1) % spec.thin == 0 {
                sink.record(&engine.snapshot(&state))?;
            }
            sink.progress(iter + 1, total);
        }
        Ok(())
    })();
    match result {
        Ok(()) => sink.finish(),
        Err(e) => {
            sink.abort(&e.to_string())?;
            Err(e)
        }
    }
}

/// Run one chain and collect the stored draws in memory.
pub fn run_chain_collect<F: Scalar>(
    ds: &Dataset<F>,
    spec: &ModelSpec,
    threads: usize,
) -> Result<PosteriorDraws<F>> {
    let mut sink = MemorySink::new();
    run_chain(ds, spec, threads, &mut sink)?;
    Ok(sink.into_posterior())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Role, VariableMeta};
    use crate::ident::Restriction;
    use crate::month::Month;

    fn plain_dataset(values: DMatrix<f64>, n_instruments: usize) -> Dataset<f64> {
        let start: Month = "1990-01".parse().unwrap();
        let meta = (0..values.ncols())
            .map(|i| {
                let role = if i < n_instruments { Role::Instrument } else { Role::Core };
                VariableMeta::new(&format!("V{i}"), role, 1)
            })
            .collect();
        Dataset {
            dates: (0..values.nrows()).map(|t| start.plus(t as i64)).collect(),
            values,
            meta,
            scaling: None,
        }
    }

    fn all_scheme(n: usize, r: usize, entry: Restriction) -> crate::ident::RestrictionScheme {
        crate::ident::RestrictionScheme::new(
            vec![vec![entry; r]; n],
            (0..n).map(|i| format!("V{i}")).collect(),
            (0..r).map(|j| format!("s{j}")).collect(),
            vec![false; n],
        )
        .unwrap()
    }

    fn spec_for(scheme: crate::ident::RestrictionScheme, r: usize, seed: u64) -> ModelSpec {
        ModelSpec {
            lags: 1,
            factors: r,
            features: Default::default(),
            scheme,
            draws: 10,
            burn: 0,
            thin: 1,
            seed,
            shrinkage: Shrinkage::FixedVariance(10.0),
        }
    }

    #[test]
    fn factors_fall_back_to_prior_when_loadings_zero() {
        // All-ZERO scheme pins the loadings at zero, so the factor
        // conditional is the N(0, I) prior: sample variance near one.
        use rand::SeedableRng;
        let t_len = 1200;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let values = DMatrix::from_fn(t_len, 3, |_, _| 0.5 * f64::std_normal(&mut rng));
        let ds = plain_dataset(values, 0);
        let spec = spec_for(all_scheme(3, 2, Restriction::Zero), 2, 1);
        let mut engine = Engine::new(&ds, &spec, 1).unwrap();
        let mut state = engine.initialize().unwrap();
        state.lambda.fill(0.0);
        engine.step_factors(&mut state).unwrap();
        for j in 0..2 {
            let mut mean = 0.0;
            let mut ss = 0.0;
            for t in 0..state.factors.nrows() {
                mean += state.factors[(t, j)];
            }
            mean /= state.factors.nrows() as f64;
            for t in 0..state.factors.nrows() {
                ss += (state.factors[(t, j)] - mean).powi(2);
            }
            let var = ss / (state.factors.nrows() - 1) as f64;
            assert!((var - 1.0).abs() < 0.1, "prior-fallback factor variance {var}");
        }
    }

    #[test]
    fn dominant_loading_pins_factor_to_oracle() {
        // One strong loading column with tiny idiosyncratic noise: the drawn
        // factor must track the generating factor almost exactly.
        use rand::SeedableRng;
        let t_len = 600;
        let n = 6;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let loading: Vec<f64> = (0..n).map(|i| 1.0 + 0.2 * i as f64).collect();
        let mut oracle = Vec::with_capacity(t_len);
        let values = DMatrix::from_fn(t_len, n, |t, i| {
            if i == 0 && oracle.len() <= t {
                oracle.push(f64::std_normal(&mut rng));
            }
            loading[i] * oracle[t] + 0.01 * f64::std_normal(&mut rng)
        });
        let ds = plain_dataset(values, 0);
        let spec = spec_for(all_scheme(n, 1, Restriction::Free), 1, 2);
        let mut engine = Engine::new(&ds, &spec, 1).unwrap();
        let mut state = engine.initialize().unwrap();
        // Plant the true loadings and tiny variances, then draw factors.
        for i in 0..n {
            state.lambda[(i, 0)] = loading[i];
            state.sigma_diag[i] = 1e-4;
        }
        state.phi.fill(0.0);
        state.resid = engine.y.clone();
        engine.step_factors(&mut state).unwrap();
        let drawn: Vec<f64> = (0..state.factors.nrows()).map(|t| state.factors[(t, 0)]).collect();
        let oracle_eff = &oracle[1..]; // one lag trimmed by the regressors
        let n_eff = drawn.len() as f64;
        let (mo, md) = (
            oracle_eff.iter().sum::<f64>() / n_eff,
            drawn.iter().sum::<f64>() / n_eff,
        );
        let mut cov = 0.0;
        let mut vo = 0.0;
        let mut vd = 0.0;
        for t in 0..drawn.len() {
            cov += (oracle_eff[t] - mo) * (drawn[t] - md);
            vo += (oracle_eff[t] - mo).powi(2);
            vd += (drawn[t] - md).powi(2);
        }
        let corr = cov / (vo * vd).sqrt();
        assert!(corr > 0.99, "factor correlation with oracle {corr}");
    }

    #[test]
    fn orthogonal_loading_columns_give_uncorrelated_factors() {
        use rand::SeedableRng;
        let t_len = 800;
        let n = 6;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // Two disjoint loading blocks and two independent factors.
        let mut f1 = Vec::with_capacity(t_len);
        let mut f2 = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            f1.push(f64::std_normal(&mut rng));
            f2.push(f64::std_normal(&mut rng));
        }
        let values = DMatrix::from_fn(t_len, n, |t, i| {
            let common = if i < 3 { 1.2 * f1[t] } else { 1.2 * f2[t] };
            common + 0.05 * f64::std_normal(&mut rng)
        });
        let ds = plain_dataset(values, 0);
        let spec = spec_for(all_scheme(n, 2, Restriction::Free), 2, 3);
        let mut engine = Engine::new(&ds, &spec, 1).unwrap();
        let mut state = engine.initialize().unwrap();
        state.lambda.fill(0.0);
        for i in 0..3 {
            state.lambda[(i, 0)] = 1.2;
            state.lambda[(i + 3, 1)] = 1.2;
        }
        for i in 0..n {
            state.sigma_diag[i] = 0.0025;
        }
        state.phi.fill(0.0);
        state.resid = engine.y.clone();
        engine.step_factors(&mut state).unwrap();
        let t_eff = state.factors.nrows() as f64;
        let mut cov = 0.0;
        let mut v1 = 0.0;
        let mut v2 = 0.0;
        let m1: f64 = (0..state.factors.nrows()).map(|t| state.factors[(t, 0)]).sum::<f64>() / t_eff;
        let m2: f64 = (0..state.factors.nrows()).map(|t| state.factors[(t, 1)]).sum::<f64>() / t_eff;
        for t in 0..state.factors.nrows() {
            let a = state.factors[(t, 0)] - m1;
            let b = state.factors[(t, 1)] - m2;
            cov += a * b;
            v1 += a * a;
            v2 += b * b;
        }
        let corr = (cov / (v1 * v2).sqrt()).abs();
        assert!(corr < 0.1, "cross-factor correlation {corr}");
    }
}

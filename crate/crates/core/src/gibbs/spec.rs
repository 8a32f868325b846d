use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::RestrictionScheme;

/// Optional model components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Features {
    /// Random-walk paths for the loadings of rows flagged in the scheme.
    #[serde(default)]
    pub tv_loadings: bool,
    /// Random-walk log-volatility for macro idiosyncratic variances.
    #[serde(default)]
    pub stoch_vol: bool,
    /// Student-t idiosyncratic errors on macro rows.
    #[serde(default)]
    pub student_t: bool,
}

/// Prior on the autoregressive coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Shrinkage {
    /// Hierarchical horseshoe across all lag coefficients (the default).
    #[default]
    Horseshoe,
    /// Fixed N(0, v) prior on every lag coefficient; used for oracle checks
    /// where shrinkage must be switched off.
    FixedVariance(f64),
}

/// Full sampler configuration for one chain.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub lags: usize,
    pub factors: usize,
    pub features: Features,
    pub scheme: RestrictionScheme,
    pub draws: usize,
    pub burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub shrinkage: Shrinkage,
}

impl ModelSpec {
    /// Validate counts and the scheme against panel dimensions
    /// (m instruments, n macro series).
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let mut problems = Vec::new();
        if self.lags == 0 {
            problems.push("lag order must be at least 1".to_string());
        }
        if self.draws == 0 {
            problems.push("draws must be positive".to_string());
        }
        if self.thin == 0 {
            problems.push("thin must be at least 1".to_string());
        }
        if self.factors == 0 {
            problems.push("need at least one factor".to_string());
        }
        if self.factors < m {
            problems.push(format!(
                "r={} factors but m={m} instruments; each instrument needs its own factor",
                self.factors
            ));
        }
        if self.factors > m + n {
            problems.push(format!(
                "r={} factors exceeds the {} series in the panel",
                self.factors,
                m + n
            ));
        }
        problems.extend(self.scheme.validate(m, n, self.factors));
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Number of post-burn states that will be stored.
    pub fn stored_count(&self) -> usize {
        self.draws / self.thin
    }
}

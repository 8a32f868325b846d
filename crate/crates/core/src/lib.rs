//! Factor-structural Bayesian VARs.
//!
//! A large vector autoregression whose reduced-form disturbances load on a
//! small number of latent structural factors. Factors are identified by a
//! positive-diagonal instrument block combined with sign and zero
//! restrictions on impact responses; estimation is a Gibbs sampler with
//! optional time-varying loadings, stochastic volatility, and Student-t
//! idiosyncratic errors. Impulse-response analysis is the primary output.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`);
//! concrete `f64` aliases are exported below and are what the CLI uses.

pub mod data;
pub mod dgp;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod gibbs;
pub mod ident;
pub mod irf;
pub mod month;
pub mod scalar;
pub mod store;
pub mod var;

pub use error::{Error, Result};
pub use month::Month;
pub use scalar::Scalar;

/// `f64` aliases for the main public types; the working precision of the CLI.
pub type Dataset = data::Dataset<f64>;
pub type RawSeries = data::RawSeries<f64>;
pub type VarCoefficients = var::VarCoefficients<f64>;
pub type VmaSequence = var::VmaSequence<f64>;
pub type HorseshoeState = dist::HorseshoeState<f64>;
pub type TScaleState = dist::TScaleState<f64>;
pub type ChainState = gibbs::ChainState<f64>;
pub type PosteriorDraws = gibbs::PosteriorDraws<f64>;
pub type StoredDraw = gibbs::StoredDraw<f64>;

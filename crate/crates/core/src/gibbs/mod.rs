//! The Gibbs sampler over the factor-structural VAR, with switches for
//! time-varying loadings, stochastic volatility, and Student-t errors.

mod engine;
mod parallel;
pub mod rng;
mod spec;
mod state;
mod state_space;

pub use engine::{run_chain, run_chain_collect};
pub use parallel::run_tasks;
pub use spec::{Features, ModelSpec, Shrinkage};
pub use state::{ChainState, DrawSink, MemorySink, PosteriorDraws, RunMeta, StoredDraw};
pub use state_space::{random_walk_posterior, sample_tridiag_gaussian, solve_tridiag};

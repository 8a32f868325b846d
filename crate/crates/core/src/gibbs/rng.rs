//! Deterministic RNG substreams.
//!
//! Every stochastic task inside an iteration draws from its own stream,
//! derived from (seed, iteration, block, task). Parallel and serial
//! schedules therefore consume identical randomness and produce identical
//! chains, for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Conditional blocks of one Gibbs iteration, used as stream discriminators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Phi = 1,
    HorseshoePhi = 2,
    Loadings = 3,
    Factors = 4,
    Variances = 5,
    StochVol = 6,
    TvLoadings = 7,
    HorseshoeQ = 8,
    Dof = 9,
    Simulate = 10,
}

/// Stream for one (iteration, block, task) triple under a master seed.
pub fn substream(seed: u64, iteration: u64, block: Block, task: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&iteration.to_le_bytes());
    key[16..24].copy_from_slice(&(block as u64).to_le_bytes());
    key[24..32].copy_from_slice(&task.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Independent seed for chain `k` of a multi-chain run (splitmix64 mix).
pub fn chain_seed(master: u64, chain: u64) -> u64 {
    let mut z = master ^ chain.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

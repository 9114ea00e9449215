//! Deterministic seed derivation.
//!
//! Every run draws from its own ChaCha8 stream seeded by a pure function of
//! (master seed, cell index, replicate index). Replicates can therefore be
//! executed in any order, on any number of threads, and still produce
//! identical trajectories. The mix is a SplitMix64 finalizer chain; it does
//! not depend on pointer values, hash-map order, or platform word size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const CELL_MIX: u64 = 0xff51_afd7_ed55_8ccd;
const REP_MIX: u64 = 0xc4ce_b9fe_1a85_ec53;

fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for one replicate of one parameter cell.
pub fn derive_replicate_seed(master_seed: u64, cell_index: u64, replicate_index: u32) -> u64 {
    let mut x = finalize(master_seed.wrapping_add(GOLDEN));
    x = finalize(x ^ cell_index.wrapping_mul(CELL_MIX));
    finalize(x ^ (replicate_index as u64).wrapping_mul(REP_MIX))
}

/// Constructs the pinned per-run generator. See [`crate::config::RNG_ID`].
pub fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, domain, block, index)`. The key is derived from the seed and the
//! domain, the 64-bit ChaCha stream id from `block` and `index`. Output is
//! therefore independent of execution order and thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates consumers so that equal `(block, index)` pairs never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    FlipScan = 1,
    EchoScan = 2,
    Wavemeter = 3,
    Mcmc = 4,
    ChainStart = 5,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream for one `(block, index)` cell of a domain.
pub fn stream(seed: u64, domain: Domain, block: u32, index: u32) -> ChaCha8Rng {
    let key = seed ^ (domain as u64).wrapping_mul(GOLDEN);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(((block as u64) << 32) | index as u64);
    rng
}

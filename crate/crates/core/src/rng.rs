//! Deterministic random-stream derivation.
//!
//! Every random draw in the simulator comes from a stream keyed by
//! `(master seed, domain, lane, round)`. Streams are derived by hashing the
//! key into a ChaCha seed, so results are independent of call order and of
//! how many draws other lanes consume — a run is reproducible bit-for-bit
//! from its master seed alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Draw domains. Separating domains keeps e.g. initialization draws from
/// ever colliding with quantization draws at the same (agent, round) key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Per-(agent, round) quantization randomness.
    Quantize = 1,
    /// Per-agent initial-point sampling.
    Init = 2,
    /// Sampling loops in statistical estimators (moments, gradient bounds).
    Estimate = 3,
    /// Random-hold stepsize draws (lane = hold index).
    HoldStepsize = 4,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the ChaCha stream for `(master_seed, domain, lane, round)`.
pub fn stream(master_seed: u64, domain: Domain, lane: u64, round: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ 0x6A09_E667_F3BC_C908;
    // Absorb the key components order-sensitively.
    for v in [domain as u64, lane, round] {
        state ^= splitmix64(&mut state) ^ v.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

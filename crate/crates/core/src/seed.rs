//! Splitting one master seed into independent per-stage streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives the seed of a named stage. Distinct names give unrelated seeds;
/// the same `(master, stage)` always gives the same one.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer over the mixed pair
    let mut z = master ^ h.rotate_left(32);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stage_rng(master: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stage_seed(master, stage))
}

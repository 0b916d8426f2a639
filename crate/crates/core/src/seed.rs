//! Run-seed derivation. Every random stream in a run is a pure function of
//! the run seed and a stream label.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream `label` under run seed `base`.
pub fn derive(base: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the base seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(base ^ splitmix64(h))
}

/// Seed for the `index`-th item of stream `label`.
pub fn derive_indexed(base: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive(base, label).wrapping_add(splitmix64(index)))
}

pub fn rng(base: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, label))
}

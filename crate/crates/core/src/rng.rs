//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th stream under `master`; distinct indices give unrelated streams.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn stream_rng(master: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(master, index))
}

/// Domain tags keep streams for different purposes apart under one master seed.
pub mod domain {
    pub const MASK: u64 = 0x6d61_736b;
    pub const PAIR: u64 = 0x7061_6972;
    pub const INIT: u64 = 0x696e_6974;
    pub const SHUFFLE: u64 = 0x7368_7566;
    pub const SCENE: u64 = 0x7363_656e;
    pub const SPLIT: u64 = 0x7370_6c74;
}

pub fn tagged_rng(master: u64, tag: u64, index: u64) -> StreamRng {
    stream_rng(stream_seed(master, tag), index)
}

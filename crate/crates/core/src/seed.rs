use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-seed for a named stream (splitmix64 finalizer).
pub fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) const INIT: u64 = 1;
pub(crate) const SHUFFLE: u64 = 2;
pub(crate) const HEAD_INIT: u64 = 3;
pub(crate) const HEAD_SHUFFLE: u64 = 4;
pub(crate) const DELTA_INIT: u64 = 5;
pub(crate) const TEMPLATE_SHUFFLE: u64 = 6;

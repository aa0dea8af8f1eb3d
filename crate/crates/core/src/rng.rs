//! Seed derivation and the generator used for every random draw.
//!
//! Microstructures are drawn from ChaCha8 streams, which are counter based and
//! produce identical output on every platform. Per-sample seeds come from a
//! keyed mix of `(master, level, index)` that is injective for a fixed master.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

/// Level key reserved for pilot (model selection) samples.
pub const PILOT_LEVEL: u64 = 0xFFFF;
/// Level key reserved for reference runs.
pub const REFERENCE_LEVEL: u64 = 0xFFFE;

const INDEX_BITS: u32 = 48;

/// SplitMix64 finalizer; a bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Microstructure seed for sample `index` of `level` under `master`.
///
/// Distinct `(level, index)` pairs (level < 2^16, index < 2^48) map to distinct
/// seeds for a fixed master.
pub fn derive_seed(master: u64, level: u64, index: u64) -> u64 {
    debug_assert!(level < (1 << (64 - INDEX_BITS)));
    debug_assert!(index < (1 << INDEX_BITS));
    let key = (level << INDEX_BITS) | index;
    mix64(mix64(master.wrapping_add(0x9E37_79B9_7F4A_7C15)) ^ key)
}

/// Derives a child master seed, e.g. one per repetition or tolerance.
pub fn child_master(master: u64, tag: u64) -> u64 {
    mix64(master ^ mix64(tag.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

pub fn rng_from_seed(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

//! Counter-based random streams.
//!
//! Every draw comes from a ChaCha8 stream addressed by `(seed, role, index)`,
//! so a replicate's randomness does not depend on which thread evaluates it
//! or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct roles never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    GroundTruth = 1,
    WorkerVariance = 2,
    Noise = 3,
    Replicate = 4,
    Subsample = 5,
    Sample = 6,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed, e.g. the seed of replicate `index` of a run.
pub fn derive_seed(seed: u64, role: Role, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(role as u64)) ^ index)
}

/// The generator for `(seed, role, index)`.
pub fn stream(seed: u64, role: Role, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(role as u64)));
    rng.set_stream(index);
    rng
}

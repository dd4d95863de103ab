//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`SeededRng`], a
//! xoshiro256++ generator. State is four 64-bit words `s0..s3`; one step
//! outputs `rotl(s0 + s3, 23) + s0` and updates
//!
//! ```text
//! t = s1 << 17
//! s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
//! ```
//!
//! The 256-bit state is expanded from a single `u64` seed with SplitMix64.
//! There is no global generator; every operation that draws takes a seed.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SeededRng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Seed for the `index`-th independent sub-task of a run seeded with `seed`.
///
/// Plain `seed + index`: the SplitMix64 expansion in [`seeded`]
/// decorrelates adjacent seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}

/// Seed for a named stream, so unrelated draws made from the same base
/// seed (rotation, noise, shuffle) do not share a generator.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

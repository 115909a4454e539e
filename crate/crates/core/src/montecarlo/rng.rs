//! Keyed random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream families, so that e.g. wealth path 3 and cohort path 3 never share
/// random numbers under the same seed.
pub const WEALTH: u64 = 1;
pub const COMMON_NOISE: u64 = 2;
pub const COHORT_AGENT: u64 = 3;
pub const POPULATION: u64 = 4;
pub const GENERIC_AGENT: u64 = 5;

/// Independent generator for `(seed, domain, id)`.
pub fn stream(seed: u64, domain: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(id);
    rng
}

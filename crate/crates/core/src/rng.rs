//! Seeded random streams. Every random draw in the crate goes through a
//! ChaCha8 generator so results are reproducible across platforms.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream for item `index` of a job seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

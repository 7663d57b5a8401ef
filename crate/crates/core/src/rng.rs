//! Seeded random streams. Each consumer of randomness in a run draws from
//! its own ChaCha8 stream of the run seed, so adding draws in one place
//! never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_STAGE1: u64 = 2;
pub const STREAM_STAGE2: u64 = 3;
pub const STREAM_SPLIT: u64 = 4;
pub const STREAM_SYNTH: u64 = 5;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Reproducible random streams keyed by `(seed, stream)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream reserved for random initial conditions.
pub const INIT_STREAM: u64 = 0x1_0000_0000;
/// First stream used for switching paths; run `k` uses `PATH_STREAM + k`.
pub const PATH_STREAM: u64 = 0;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Seed derivation so every random stream is a pure function of the run seed
//! and the coordinates (round, node, purpose) that consume it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep independent streams from colliding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Partition = 1,
    Fleet = 2,
    Clustering = 3,
    Training = 4,
    Peers = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the base seed with a stream tag and two coordinates.
pub fn derive(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed ^ (stream as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(17))
}

pub fn rng(seed: u64, stream: Stream, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, a, b))
}

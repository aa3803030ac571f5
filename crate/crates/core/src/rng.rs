//! Deterministic seed derivation.
//!
//! Every random draw in a run is taken from a ChaCha stream keyed by the run
//! seed, a purpose tag and the coordinates of the draw (round, client, ...).
//! Streams are therefore independent of execution order and of each other:
//! e.g. the mining race of round 7 is identical in a keep and a discard run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags separating the random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Partition = 2,
    Selection = 3,
    Association = 4,
    Shuffle = 5,
    Attack = 6,
    AttackChoice = 7,
    Jitter = 8,
    Compute = 9,
    Mining = 10,
    Nonce = 11,
    Keys = 12,
    Init = 13,
    LabelNoise = 14,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed, a stream tag and any number of coordinates into a seed.
pub fn derive(seed: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream(seed: u64, stream: Stream, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, coords))
}

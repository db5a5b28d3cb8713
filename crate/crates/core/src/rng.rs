//! Seeded random streams.
//!
//! All randomness derives from one user seed. Each consumer draws from its
//! own named stream so that, for example, changing the shuffle order never
//! perturbs parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Shuffle = 3,
    Generate = 4,
    Split = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    keyed_rng(seed, stream, 0)
}

/// Independent generator for `(seed, stream, key)`, e.g. one per example per epoch.
pub fn keyed_rng(seed: u64, stream: Stream, key: u64) -> ChaCha8Rng {
    let mut state = seed ^ (stream as u64).wrapping_mul(0xA076_1D64_78BD_642F);
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_mut(8).enumerate() {
        let word = splitmix64(&mut state) ^ key.rotate_left(16 * i as u32);
        chunk.copy_from_slice(&splitmix64(&mut word.clone()).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

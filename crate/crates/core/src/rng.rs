//! Seeded random substreams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream whose key is a
//! pure function of `(master_seed, label, index...)`. Streams never share
//! state, so results do not depend on how repetitions are scheduled across
//! worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream handed to samplers and mechanisms.
pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Derive the 256-bit key of the substream `(master_seed, label, index)`.
pub fn substream_key(master_seed: u64, label: &str, index: &[u64]) -> [u8; 32] {
    let mut state = splitmix64(master_seed ^ splitmix64(fnv1a64(label.as_bytes())));
    for (pos, &i) in index.iter().enumerate() {
        state = splitmix64(state ^ splitmix64(i.wrapping_add((pos as u64 + 1).wrapping_mul(GOLDEN))));
    }
    let mut key = [0u8; 32];
    for (chunk_idx, chunk) in key.chunks_exact_mut(8).enumerate() {
        state = splitmix64(state ^ chunk_idx as u64);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Independent stream for `(master_seed, label, index)`.
pub fn substream(master_seed: u64, label: &str, index: &[u64]) -> Stream {
    ChaCha8Rng::from_seed(substream_key(master_seed, label, index))
}

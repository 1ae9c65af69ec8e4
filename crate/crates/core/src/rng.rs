//! Named random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream keyed by the run
//! seed and selected by a hash of its name, so adding a new consumer never
//! shifts the draws seen by an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator handed out to simulation components.
pub type StreamRng = ChaCha8Rng;

/// Root of a family of independent named streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSeed {
    seed: u64,
}

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for a named component, e.g. `"latency"` or `"workload"`.
    pub fn stream(&self, name: &str) -> StreamRng {
        self.stream_indexed(name, 0)
    }

    /// Stream for the `index`-th member of a named family (clients, sweep points).
    pub fn stream_indexed(&self, name: &str, index: u64) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut h = fnv1a(name.as_bytes());
        h = fnv1a_extend(h, &index.to_le_bytes());
        rng.set_stream(h);
        rng
    }

    /// Derives a new root so a sub-system can hand out its own named streams.
    pub fn child(&self, name: &str) -> StreamSeed {
        let mut state = self.seed ^ fnv1a(name.as_bytes());
        StreamSeed {
            seed: splitmix64(&mut state),
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET, bytes)
}

fn fnv1a_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

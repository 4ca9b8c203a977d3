//! Named, seeded random streams.
//!
//! Every consumer of randomness in a run owns its own stream, derived from
//! the master seed and a stream name. Streams are mutually independent:
//! adding a consumer or drawing more values from one stream never shifts the
//! sequence another stream produces.

use std::collections::BTreeMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(name: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 32-byte generator seed for the stream `name` under `master_seed`.
pub fn stream_seed(master_seed: u64, name: &str) -> [u8; 32] {
    let mut state = master_seed ^ fnv1a(name);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// Fresh generator positioned at the start of the named stream.
pub fn stream_rng(master_seed: u64, name: &str) -> ChaCha12Rng {
    ChaCha12Rng::from_seed(stream_seed(master_seed, name))
}

/// Single `u64` sub-seed for APIs that take a plain seed.
pub fn derive_seed(master_seed: u64, name: &str) -> u64 {
    let mut state = master_seed ^ fnv1a(name);
    splitmix64(&mut state)
}

/// Set of named streams sharing one master seed, created lazily.
#[derive(Debug, Clone)]
pub struct RngStreams {
    master_seed: u64,
    streams: BTreeMap<String, ChaCha12Rng>,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Generator for `name`, created on first use.
    pub fn rng(&mut self, name: &str) -> &mut ChaCha12Rng {
        let master = self.master_seed;
        self.streams
            .entry(name.to_string())
            .or_insert_with(|| stream_rng(master, name))
    }

    /// Plain sub-seed for `name`; does not advance any stream.
    pub fn derive_seed(&self, name: &str) -> u64 {
        derive_seed(self.master_seed, name)
    }
}

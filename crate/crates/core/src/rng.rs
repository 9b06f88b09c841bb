//! Keyed random streams.
//!
//! Every random draw in a simulation comes from a ChaCha stream keyed by
//! `(seed, replication, individual, tag)`, so results do not depend on how
//! work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Data = 1,
    Bootstrap = 2,
    Target = 3,
    Noise = 4,
    Anomaly = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub replication: u64,
    pub individual: u64,
    pub tag: StreamTag,
}

impl StreamKey {
    pub fn new(seed: u64, replication: u64, individual: u64, tag: StreamTag) -> Self {
        StreamKey { seed, replication, individual, tag }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut s = self.replication.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (self.tag as u64);
        let a = splitmix64(&mut s);
        let mut t = self.individual ^ a.rotate_left(17);
        rng.set_stream(splitmix64(&mut t));
        rng
    }
}

pub fn stream(seed: u64, replication: u64, individual: u64, tag: StreamTag) -> ChaCha8Rng {
    StreamKey::new(seed, replication, individual, tag).rng()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

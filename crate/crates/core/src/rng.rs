//! Deterministic random sub-streams.
//!
//! Every stochastic element of an episode draws from its own ChaCha stream
//! keyed by `(master seed, component, episode, round, client)`. Streams are
//! independent of evaluation order, so fanning out client work or reordering
//! independent steps never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Owner of a random sub-stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Component {
    Dataset = 1,
    Placement = 2,
    Partition = 3,
    Sampling = 4,
    Sensing = 5,
    Walks = 6,
    Embedding = 7,
    ModelInit = 8,
    DownlinkChannel = 9,
    UplinkChannel = 10,
    Broadcast = 11,
    Training = 12,
    Uplink = 13,
    Scheduling = 14,
    TestSet = 15,
}

/// Derives sub-streams from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Streams {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master: master_seed,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master
    }

    /// Stream for `(component, episode, round, client)`.
    pub fn derive(&self, component: Component, episode: u64, round: u64, client: u64) -> SimRng {
        let mut h = splitmix64(self.master);
        for word in [component as u64, episode, round, client] {
            h = splitmix64(h ^ word);
        }
        ChaCha8Rng::seed_from_u64(h)
    }

    /// Stream for episode-level setup work of `component`.
    pub fn setup(&self, component: Component, episode: u64) -> SimRng {
        self.derive(component, episode, u64::MAX, u64::MAX)
    }
}

//! Counter-based seed derivation. Every episode gets its own streams, keyed
//! by `(master seed, epoch, episode index, stream)`, so results never depend on
//! how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Env = 1,
    Action = 2,
    Entropy = 3,
    Init = 4,
    Study = 5,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, epoch: u64, episode: u64, stream: Stream) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ epoch);
    h = splitmix64(h ^ episode);
    splitmix64(h ^ stream as u64)
}

pub fn stream_rng(master: u64, epoch: u64, episode: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, epoch, episode, stream))
}

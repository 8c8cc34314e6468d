//! Counter-based random streams.
//!
//! Every scenario owns a ChaCha stream selected by `(seed, domain, index)`,
//! so the values drawn for scenario `i` do not depend on how many other
//! scenarios are generated, or on which thread generates them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains never share a ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Domain {
    Optimization = 1,
    Assessment = 2,
    KMeans = 3,
    Synthetic = 4,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&(domain as u32).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

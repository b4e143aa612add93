//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose 256-bit
//! key is `(seed, domain, index)` and whose 64-bit stream id is `stream`. The
//! generator is counter based, so substreams are independent and can be
//! consumed in any order or on any thread:
//!
//! * sampling: `(seed, SAMPLES, 0)`, stream = sample row index;
//! * Gaussian probes: `(probe seed, PROBES, decomposition index)`, stream = attempt;
//! * model generation: `(seed, GENERATOR, 0)`, stream = 0.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Separates the consumers sharing one user seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Samples = 0x5341_4d50,
    Probes = 0x5052_4f42,
    Generator = 0x4745_4e52,
    Experiment = 0x4558_5052,
}

pub fn substream(seed: u64, domain: Domain, index: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

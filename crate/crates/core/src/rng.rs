//! Seed bookkeeping.
//!
//! Every random draw in the toolkit descends from a named root seed through
//! [`derive_seed`], which mixes the root with a stream label and a list of
//! counters (fold index, model seed, epoch, ...). Streams never share state,
//! so adding a draw in one place cannot shift the numbers drawn elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a root seed, a stream label and counters into a child seed.
pub fn derive_seed(root: u64, stream: &str, counters: &[u64]) -> u64 {
    let mut h = splitmix64(root);
    for b in stream.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    // Separator so ("ab", []) and ("a", [b]) differ.
    h = splitmix64(h ^ 0xFF);
    for &c in counters {
        h = splitmix64(h ^ c);
    }
    h
}

pub fn stream(root: u64, name: &str, counters: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(root, name, counters))
}

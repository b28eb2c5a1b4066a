//! Seeding scheme.
//!
//! Every random stream is a ChaCha8 generator seeded from a 64-bit value.
//! Child seeds are derived from a parent seed with [`derive_seed`], which
//! mixes `(parent, stream, index)` through the SplitMix64 finalizer:
//!
//! ```text
//! master seed ─┬─ instance seed  = derive_seed(master, INSTANCE, cell·2^20 + i)
//!              │     └─ run seed = derive_seed(instance, RUN, algo·2^40 + N·2^8 + r)
//!              └─ ...
//! ```
//!
//! Derivation is a pure function, so any run can be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod stream {
    pub const INSTANCE: u64 = 0x494e_5354;
    pub const RUN: u64 = 0x5255_4e53;
    pub const SEEDING: u64 = 0x5345_4544;
    pub const VALIDATION: u64 = 0x5641_4c49;
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(parent) ^ stream) ^ index)
}

//! Seeded random streams with deterministic substreams.
//!
//! Monte Carlo work is split into fixed-size chunks. Chunk `k` always draws
//! from `substream(master, k)`, so results do not depend on how many worker
//! threads process the chunks.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type Stream = ChaCha8Rng;

/// Samples per Monte Carlo chunk.
pub const CHUNK: usize = 8192;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(master: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer; used to fold labels such as `n` into a seed.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw a fresh master seed from `rng` for chunked work.
pub fn fork<R: RngCore + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}

/// Run `f(stream, start, len)` over `total` items in [`CHUNK`]-sized pieces.
/// Output order follows chunk order regardless of scheduling.
pub fn chunked<T, F>(total: usize, master: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Stream, usize, usize) -> T + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let start = k * CHUNK;
            let len = CHUNK.min(total - start);
            let mut rng = substream(master, k as u64);
            f(&mut rng, start, len)
        })
        .collect()
}

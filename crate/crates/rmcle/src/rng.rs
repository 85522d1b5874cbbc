//! Per-path random streams.
//!
//! Every path draws from a ChaCha8 stream whose key is derived from
//! `(master_seed, tag)` and whose 64-bit stream id is the path index. A path's
//! numbers therefore depend on nothing but those three values, whichever worker
//! runs it and in whatever order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the tag bytes.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 256-bit ChaCha key for an experiment.
pub fn experiment_key(master_seed: u64, tag: &str) -> [u8; 32] {
    let mut state = master_seed ^ tag_hash(tag).rotate_left(29);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// The stream for path `path_index` of experiment `(master_seed, tag)`.
pub fn path_stream(master_seed: u64, tag: &str, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(experiment_key(master_seed, tag));
    rng.set_stream(path_index);
    rng
}

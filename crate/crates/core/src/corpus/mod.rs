//! Dataset tooling: size filtering, performance augmentation and token shards.

mod augment;
mod shard;

pub use augment::{augment, AugmentParams};
pub use shard::{decode_shard, encode_shard, read_shards, shard_file_name, write_shards, SHARD_MAGIC, SHARD_VERSION};

use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Files must be strictly larger than this to be kept.
pub const DEFAULT_MIN_BYTES: u64 = 7 * 1024;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("Io: {0}")]
    Io(#[from] io::Error),
    #[error("ChecksumMismatch: shard vocabulary {found:#018x}, expected {expected:#018x}")]
    ChecksumMismatch { expected: u64, found: u64 },
    #[error("CorruptShard: {0}")]
    CorruptShard(String),
    #[error("BadToken: id {0} is outside the vocabulary")]
    BadToken(u16),
    #[error("InvalidParams: {0}")]
    InvalidParams(String),
}

pub fn passes_size_filter(size: u64, min_bytes: u64) -> bool {
    size > min_bytes
}

/// Keeps the files whose size exceeds `min_bytes`, preserving input order.
pub fn filter_by_size<P: AsRef<Path>>(files: &[P], min_bytes: u64) -> io::Result<Vec<PathBuf>> {
    let mut kept = Vec::new();
    for f in files {
        if passes_size_filter(std::fs::metadata(f)?.len(), min_bytes) {
            kept.push(f.as_ref().to_path_buf());
        }
    }
    Ok(kept)
}

/// Per-item seed that depends only on the global seed and the item's identifier.
pub fn derive_seed(global: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = h ^ global.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

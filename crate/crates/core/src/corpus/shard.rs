//! Token shard files.
//!
//! ```text
//! magic     4 bytes  "PTSH"
//! version   u8       1
//! checksum  u64      vocabulary layout checksum
//! count     u64      number of sequences
//! lengths   count × u64
//! payload   Σ lengths × u16 token ids
//! ```
//!
//! Integers are little-endian. A corpus is a directory of `shard-NNNNN.ptsh` files read in name order.

use super::CorpusError;
use crate::tokenizer::vocab::vocabulary_checksum;
use crate::tokenizer::{TokenSeq, VOCAB_SIZE};
use std::path::{Path, PathBuf};

pub const SHARD_MAGIC: &[u8; 4] = b"PTSH";
pub const SHARD_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 8 + 8;

pub fn shard_file_name(index: usize) -> String {
    format!("shard-{index:05}.ptsh")
}

pub fn encode_shard(seqs: &[TokenSeq]) -> Result<Vec<u8>, CorpusError> {
    encode_with_checksum(seqs, vocabulary_checksum())
}

fn encode_with_checksum(seqs: &[TokenSeq], checksum: u64) -> Result<Vec<u8>, CorpusError> {
    let tokens: usize = seqs.iter().map(TokenSeq::len).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * seqs.len() + 2 * tokens);
    out.extend_from_slice(SHARD_MAGIC);
    out.push(SHARD_VERSION);
    out.extend_from_slice(&checksum.to_le_bytes());
    out.extend_from_slice(&(seqs.len() as u64).to_le_bytes());
    for s in seqs {
        out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    }
    for &id in seqs.iter().flat_map(|s| s.ids()) {
        if id as usize >= VOCAB_SIZE {
            return Err(CorpusError::BadToken(id));
        }
        out.extend_from_slice(&id.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8], CorpusError> {
    if bytes.len() < n {
        return Err(CorpusError::CorruptShard(format!("truncated {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn take_u64(bytes: &mut &[u8], what: &str) -> Result<u64, CorpusError> {
    Ok(u64::from_le_bytes(take(bytes, 8, what)?.try_into().expect("eight bytes")))
}

pub fn decode_shard(mut bytes: &[u8]) -> Result<Vec<TokenSeq>, CorpusError> {
    if take(&mut bytes, 4, "magic")? != SHARD_MAGIC {
        return Err(CorpusError::CorruptShard("bad magic".into()));
    }
    let version = take(&mut bytes, 1, "version")?[0];
    if version != SHARD_VERSION {
        return Err(CorpusError::CorruptShard(format!("unsupported version {version}")));
    }
    let found = take_u64(&mut bytes, "checksum")?;
    let expected = vocabulary_checksum();
    if found != expected {
        return Err(CorpusError::ChecksumMismatch { expected, found });
    }
    let count = take_u64(&mut bytes, "count")?;
    if count > (bytes.len() / 8) as u64 {
        return Err(CorpusError::CorruptShard(format!("{count} sequences cannot fit in {} bytes", bytes.len())));
    }
    let mut lengths = Vec::with_capacity(count as usize);
    for _ in 0..count {
        lengths.push(take_u64(&mut bytes, "length table")? as usize);
    }
    let total = lengths.iter().try_fold(0usize, |acc, &l| acc.checked_add(l));
    if total.and_then(|t| t.checked_mul(2)) != Some(bytes.len()) {
        return Err(CorpusError::CorruptShard(format!("length table does not match {} payload bytes", bytes.len())));
    }
    let mut seqs = Vec::with_capacity(lengths.len());
    for len in lengths {
        let raw = take(&mut bytes, 2 * len, "payload")?;
        let ids: Vec<u16> = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= VOCAB_SIZE) {
            return Err(CorpusError::CorruptShard(format!("token id {bad} is outside the vocabulary")));
        }
        seqs.push(TokenSeq::from(ids));
    }
    Ok(seqs)
}

/// Packs sequences into shards of at most `max_tokens` tokens, never splitting a sequence.
///
/// A sequence longer than the limit gets a shard of its own. An empty corpus still yields one shard.
pub fn write_shards(seqs: &[TokenSeq], dir: &Path, max_tokens: usize) -> Result<Vec<PathBuf>, CorpusError> {
    if max_tokens == 0 {
        return Err(CorpusError::InvalidParams("max tokens per shard must be positive".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut groups: Vec<&[TokenSeq]> = Vec::new();
    let (mut start, mut tokens) = (0, 0);
    for (i, s) in seqs.iter().enumerate() {
        if i > start && tokens + s.len() > max_tokens {
            groups.push(&seqs[start..i]);
            (start, tokens) = (i, 0);
        }
        tokens += s.len();
    }
    groups.push(&seqs[start..]);
    let mut paths = Vec::with_capacity(groups.len());
    for (i, group) in groups.into_iter().enumerate() {
        let path = dir.join(shard_file_name(i));
        std::fs::write(&path, encode_shard(group)?)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads every shard in `dir` in file-name order.
pub fn read_shards(dir: &Path) -> Result<Vec<TokenSeq>, CorpusError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ptsh"))
        .collect();
    files.sort();
    let mut seqs = Vec::new();
    for f in files {
        seqs.extend(decode_shard(&std::fs::read(&f)?)?);
    }
    Ok(seqs)
}

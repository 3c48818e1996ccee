//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "RNDTCKPT"
//! version    u32      1
//! dtype      u8       4 (f32) or 8 (f64)
//! config     9 × u64  hidden, ffn, encoder layers, decoder layers, head dim,
//!                     vocab, max sequence length, compression factor, seed
//! tensors    u64      count
//! per tensor u32 name length, UTF-8 name, u64 rows, u64 cols, rows·cols values
//! ```
//!
//! Tensors appear in [`Params::tensors`] order and loading checks every name and shape.

use super::cost::tensor_shapes;
use super::params::Params;
use super::tensor::Matrix;
use super::{Model, ModelConfig, ModelError};
use crate::Scalar;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"RNDTCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("Io: {0}")]
    Io(#[from] io::Error),
    #[error("BadMagic: not a checkpoint file")]
    BadMagic,
    #[error("UnsupportedVersion: {0}")]
    UnsupportedVersion(u32),
    #[error("UnknownDtype: tag {0}")]
    UnknownDtype(u8),
    #[error("TensorMismatch: {0}")]
    TensorMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn write_checkpoint<T: Scalar, W: Write>(model: &Model<T>, mut w: W) -> Result<(), CheckpointError> {
    let c = &model.config;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[T::DTYPE_TAG])?;
    let fields = [
        c.hidden_size as u64,
        c.ffn_size as u64,
        c.encoder_layers as u64,
        c.decoder_layers as u64,
        c.head_dim as u64,
        c.vocab_size as u64,
        c.max_seq_len as u64,
        c.compression_factor as u64,
        c.seed,
    ];
    for f in fields {
        w.write_all(&f.to_le_bytes())?;
    }
    let tensors = model.params.tensors();
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    let mut buf = Vec::new();
    for (name, m) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
        buf.clear();
        for &v in m.data() {
            v.write_le(&mut buf);
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    read_array::<8>(r).map(u64::from_le_bytes)
}

fn read_values<S: Scalar, T: Scalar>(r: &mut impl Read, n: usize) -> io::Result<Vec<T>> {
    let mut bytes = vec![0u8; n * S::BYTES];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(S::BYTES).map(|c| T::of(S::read_le(c).as_f64())).collect())
}

/// Reads a checkpoint of either precision into a model of precision `T`.
pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<Model<T>, CheckpointError> {
    if &read_array::<8>(&mut r)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(read_array::<4>(&mut r)?);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let [dtype] = read_array::<1>(&mut r)?;
    if dtype != f32::DTYPE_TAG && dtype != f64::DTYPE_TAG {
        return Err(CheckpointError::UnknownDtype(dtype));
    }
    let mut f = [0u64; 9];
    for v in f.iter_mut() {
        *v = read_u64(&mut r)?;
    }
    let config = ModelConfig {
        hidden_size: f[0] as usize,
        ffn_size: f[1] as usize,
        encoder_layers: f[2] as usize,
        decoder_layers: f[3] as usize,
        head_dim: f[4] as usize,
        vocab_size: f[5] as usize,
        max_seq_len: f[6] as usize,
        compression_factor: f[7] as usize,
        seed: f[8],
    };
    config.validate()?;
    let expected = tensor_shapes(&config);
    let count = read_u64(&mut r)? as usize;
    if count != expected.len() {
        return Err(CheckpointError::TensorMismatch(format!("{count} tensors, expected {}", expected.len())));
    }
    let mut loaded = Vec::with_capacity(count);
    for (want_name, (rows, cols)) in expected {
        let len = u32::from_le_bytes(read_array::<4>(&mut r)?) as usize;
        if len != want_name.len() {
            return Err(CheckpointError::TensorMismatch(format!("unexpected tensor in place of {want_name}")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let (got_rows, got_cols) = (read_u64(&mut r)? as usize, read_u64(&mut r)? as usize);
        if name != want_name.as_bytes() || (got_rows, got_cols) != (rows, cols) {
            return Err(CheckpointError::TensorMismatch(format!(
                "{} {got_rows}×{got_cols}, expected {want_name} {rows}×{cols}",
                String::from_utf8_lossy(&name)
            )));
        }
        let data = if dtype == f32::DTYPE_TAG {
            read_values::<f32, T>(&mut r, rows * cols)?
        } else {
            read_values::<f64, T>(&mut r, rows * cols)?
        };
        loaded.push(Matrix::from_vec(rows, cols, data));
    }
    let mut params = Params::init_empty(&config);
    for (slot, m) in params.tensors_mut().into_iter().zip(loaded) {
        *slot = m;
    }
    Ok(Model::from_params(config, params)?)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<(), CheckpointError> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

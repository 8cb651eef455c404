use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Model, ModelConfig, ModelKind, NnetError, Param};
use crate::binio::{self, BinError};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_CONFIG_BYTES: usize = 1 << 16;
const MAX_NAME_BYTES: usize = 256;

/// `PVC1`: magic, `u32` version, length-prefixed JSON config, `u32` tensor
/// count, then per tensor its length-prefixed name, `u32` rank, `u32`
/// dims and `f32` row-major data. Parameters of [`Precision::F64`](super::Precision)
/// models are rounded to `f32` on the way out.
pub fn write_checkpoint<W: Write>(model: &Model, w: &mut W) -> Result<(), NnetError> {
    binio::write_magic(w, b"PVC1")?;
    binio::write_u32(w, CHECKPOINT_VERSION)?;
    let cfg = serde_json::to_vec(&model.config).map_err(|e| NnetError::Config(e.to_string()))?;
    binio::write_bytes(w, &cfg)?;
    binio::write_u32(w, model.params.len() as u32)?;
    for p in &model.params {
        binio::write_bytes(w, p.name.as_bytes())?;
        binio::write_u32(w, 2)?;
        binio::write_u32(w, p.value.nrows() as u32)?;
        binio::write_u32(w, p.value.ncols() as u32)?;
        binio::write_f32s(w, p.value.iter().map(|&v| v as f32))?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Model, NnetError> {
    binio::read_magic(r, b"PVC1")?;
    let version = binio::read_u32(r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(NnetError::Version(version));
    }
    let raw = binio::read_bytes(r, MAX_CONFIG_BYTES, "config")?;
    let config: ModelConfig =
        serde_json::from_slice(&raw).map_err(|e| BinError::Corrupt(format!("config: {e}")))?;
    let expected = Model::expected_shapes(&config)?;
    let n = binio::read_u32(r, "tensor count")? as usize;
    if n != expected.len() {
        return Err(BinError::Corrupt(format!("{n} tensors, config implies {}", expected.len())).into());
    }
    let mut params = Vec::with_capacity(n);
    for (name, shape) in expected {
        let found = binio::read_bytes(r, MAX_NAME_BYTES, "tensor name")?;
        if found != name.as_bytes() {
            return Err(BinError::Corrupt(format!(
                "tensor {:?} where {name} was expected",
                String::from_utf8_lossy(&found)
            ))
            .into());
        }
        let rank = binio::read_u32(r, "rank")?;
        let rows = binio::read_u32(r, "dims")? as usize;
        let cols = binio::read_u32(r, "dims")? as usize;
        if rank != 2 || (rows, cols) != shape {
            return Err(BinError::Corrupt(format!("{name} has shape {rows}x{cols}, expected {shape:?}")).into());
        }
        let data = binio::read_f32s(r, rows * cols, &name)?;
        let value = Array2::from_shape_vec(shape, data.into_iter().map(f64::from).collect())
            .expect("shape checked above");
        params.push(Param { name, value });
    }
    binio::expect_eof(r)?;
    Ok(Model { config, params })
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), NnetError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model, NnetError> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

/// Loads a checkpoint and insists on the model kind the caller runs.
pub fn load_checkpoint_as(path: &Path, kind: ModelKind) -> Result<Model, NnetError> {
    let model = load_checkpoint(path)?;
    if model.kind() != kind {
        return Err(NnetError::KindMismatch {
            expected: kind,
            found: model.kind(),
        });
    }
    Ok(model)
}

//! Binary model checkpoints plus a JSON sidecar with the training record.
//!
//! The checkpoint (magic `TCM1`) stores the three dimensions as `u32` and
//! the parameter blocks as row-major little-endian `f64`, so a reload is
//! bit-identical. The sidecar lives next to the checkpoint as
//! `<checkpoint>.json` and carries the config and loss history; it is
//! informational and never required to load weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{EmbedderParams, LossReport, ModelError, TrainConfig};

/// Magic bytes opening a checkpoint file.
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TCM1";

/// Provenance record written next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub train_config: TrainConfig,
    pub loss_history: Vec<LossReport>,
}

/// Path of the JSON sidecar belonging to `checkpoint_path`.
pub fn sidecar_path(checkpoint_path: &Path) -> PathBuf {
    let mut name = checkpoint_path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn save_checkpoint(path: &Path, params: &EmbedderParams) -> Result<(), ModelError> {
    let (d_in, d_embed, d_proj) = params.dims();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    for dim in [d_in, d_embed, d_proj] {
        let dim = u32::try_from(dim)
            .map_err(|_| ModelError::Parse("dimension exceeds u32::MAX".into()))?;
        w.write_u32::<LittleEndian>(dim)?;
    }
    for &v in params.w1().iter() {
        w.write_f64::<LittleEndian>(v)?;
    }
    for &v in params.b1().iter() {
        w.write_f64::<LittleEndian>(v)?;
    }
    for &v in params.w2().iter() {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EmbedderParams, ModelError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| ModelError::BadHeader("file shorter than magic".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(ModelError::BadHeader(format!(
            "magic {:02x?} is not TCM1",
            magic
        )));
    }
    let d_in = r.read_u32::<LittleEndian>()? as usize;
    let d_embed = r.read_u32::<LittleEndian>()? as usize;
    let d_proj = r.read_u32::<LittleEndian>()? as usize;

    let mut read_block = |len: usize, what: &'static str| -> Result<Vec<f64>, ModelError> {
        let mut block = vec![0f64; len];
        r.read_f64_into::<LittleEndian>(&mut block)
            .map_err(|_| ModelError::Parse(format!("truncated {what} block")))?;
        Ok(block)
    };
    let w1 = read_block(d_in * d_embed, "w1")?;
    let b1 = read_block(d_embed, "b1")?;
    let w2 = read_block(d_embed * d_proj, "w2")?;

    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(ModelError::Parse(
            "trailing bytes after declared parameter blocks".into(),
        ));
    }

    let w1 = Array2::from_shape_vec((d_in, d_embed), w1)
        .map_err(|e| ModelError::Parse(e.to_string()))?;
    let w2 = Array2::from_shape_vec((d_embed, d_proj), w2)
        .map_err(|e| ModelError::Parse(e.to_string()))?;
    EmbedderParams::new(w1, Array1::from_vec(b1), w2)
}

pub fn save_sidecar(checkpoint_path: &Path, sidecar: &Sidecar) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(sidecar_path(checkpoint_path))?);
    serde_json::to_writer_pretty(&mut w, sidecar)
        .map_err(|e| ModelError::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_sidecar(checkpoint_path: &Path) -> Result<Sidecar, ModelError> {
    let r = BufReader::new(File::open(sidecar_path(checkpoint_path))?);
    serde_json::from_reader(r).map_err(|e| ModelError::Parse(e.to_string()))
}

//! Model checkpoint, little-endian:
//!
//! ```text
//! "ILGM" | u32 version | u32 architecture (0 cnn, 1 linear) | u32 input size
//! 3 x f64 channel mean | 3 x f64 channel std
//! u32 tensor count | per tensor: u32 rank, rank x u32 dims
//! all parameters as f32, in shape-table order
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::model::{shapes, Architecture, Model};
use crate::datasets::NormalizationStats;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ILGM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("unknown architecture code {0}")]
    Architecture(u32),
    #[error("shape table does not match the architecture")]
    Shapes,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(CheckpointError::Truncated)?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn encode_checkpoint(model: &Model<f32>) -> Vec<u8> {
    let mut b = Vec::with_capacity(64 + model.params.len() * 4);
    b.extend_from_slice(&CHECKPOINT_MAGIC);
    b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let arch: u32 = match model.arch {
        Architecture::TinyCnn => 0,
        Architecture::Linear => 1,
    };
    b.extend_from_slice(&arch.to_le_bytes());
    b.extend_from_slice(&(model.input_size as u32).to_le_bytes());
    for v in model.norm.mean.iter().chain(&model.norm.std) {
        b.extend_from_slice(&v.to_le_bytes());
    }
    let table = shapes(model.arch, model.input_size);
    b.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for s in &table {
        b.extend_from_slice(&(s.len() as u32).to_le_bytes());
        for &d in s {
            b.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for p in &model.params {
        b.extend_from_slice(&p.to_le_bytes());
    }
    b
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model<f32>, CheckpointError> {
    let mut r = Reader { bytes, at: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let arch = match r.u32()? {
        0 => Architecture::TinyCnn,
        1 => Architecture::Linear,
        other => return Err(CheckpointError::Architecture(other)),
    };
    let input_size = r.u32()? as usize;
    let mut norm = [0.0; 6];
    for v in &mut norm {
        *v = r.f64()?;
    }
    let n_tensors = r.u32()? as usize;
    let mut table = Vec::with_capacity(n_tensors.min(16));
    for _ in 0..n_tensors {
        let rank = r.u32()? as usize;
        table.push((0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?);
    }
    if table != shapes(arch, input_size) {
        return Err(CheckpointError::Shapes);
    }
    let total: usize = table.iter().map(|s| s.iter().product::<usize>()).sum();
    let params = (0..total).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    if r.at != bytes.len() {
        return Err(CheckpointError::Shapes);
    }
    Ok(Model {
        arch,
        input_size,
        params,
        norm: NormalizationStats { mean: [norm[0], norm[1], norm[2]], std: [norm[3], norm[4], norm[5]] },
    })
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, encode_checkpoint(model)).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let norm = NormalizationStats { mean: [0.1, 0.2, 0.3], std: [0.4, 0.5, 0.6 + 1e-12] };
        for arch in [Architecture::TinyCnn, Architecture::Linear] {
            let m = Model::<f32>::new(arch, 16, norm, 5).unwrap();
            let bytes = encode_checkpoint(&m);
            let back = decode_checkpoint(&bytes).unwrap();
            assert!(m.params.iter().zip(&back.params).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert_eq!(back, m);
            assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let m = Model::<f32>::new(Architecture::TinyCnn, 16, NormalizationStats::identity(), 5).unwrap();
        let good = encode_checkpoint(&m);
        let mut bad = good.clone();
        bad[1] = b'x';
        assert!(matches!(decode_checkpoint(&bad), Err(CheckpointError::BadMagic(_))));
        assert!(matches!(decode_checkpoint(&good[..good.len() - 2]), Err(CheckpointError::Truncated)));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_checkpoint(&bad), Err(CheckpointError::Version(9))));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ilgm");
        save_checkpoint(&m, &p).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), m);
    }
}

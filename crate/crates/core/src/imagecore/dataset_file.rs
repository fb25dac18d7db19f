//! Binary dataset container plus JSON manifest sidecar.
//!
//! Layout, little-endian:
//!
//! ```text
//! "ILGD" | u32 version | u32 count | u16 height | u16 width | u8 channels (=3)
//! count label bytes
//! count*height*width*3 pixel bytes, q = round(v*255)
//! ```
//!
//! The manifest `<stem>.manifest.json` carries everything the binary does not:
//! seed, distribution descriptor, per-sample settings and pose seeds, and the
//! generator version.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Image, LabeledSample};
use crate::illumsim::{Distribution, IlluminationSetting};

pub const MAGIC: [u8; 4] = *b"ILGD";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 2 + 2 + 1;

pub const GENERATOR_VERSION: &str = concat!("illumgap ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum DatasetFileError {
    #[error("bad magic: expected ILGD, found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported channel count {0}")]
    Channels(u8),
    #[error("mixed image dimensions: {first:?} vs {other:?} at sample {index}")]
    MixedDimensions { first: (usize, usize), other: (usize, usize), index: usize },
    #[error("image dimension {0} does not fit in 16 bits")]
    TooLarge(usize),
    #[error("label {label} at sample {index} is out of range")]
    BadLabel { label: u8, index: usize },
    #[error("manifest does not match payload: {0}")]
    ManifestMismatch(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetFileError + '_ {
    move |source| DatasetFileError::Io { path: path.to_path_buf(), source }
}

/// The manifest sidecar document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator_version: String,
    pub kind: String,
    pub seed: u64,
    pub distribution: Distribution,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub settings: Vec<IlluminationSetting>,
    pub pose_seeds: Vec<u64>,
    /// Free-form provenance, e.g. illumination vectors and mapping ratios.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub samples: Vec<LabeledSample>,
    pub manifest: Manifest,
}

/// `data/fsid.ilgd` -> `data/fsid.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

fn encode(samples: &[LabeledSample]) -> Result<(Vec<u8>, usize, usize), DatasetFileError> {
    let (h, w) = samples.first().map(|s| s.image.dims()).unwrap_or((0, 0));
    for (index, s) in samples.iter().enumerate() {
        if s.image.dims() != (h, w) {
            return Err(DatasetFileError::MixedDimensions { first: (h, w), other: s.image.dims(), index });
        }
        if usize::from(s.label) >= crate::NUM_CLASSES {
            return Err(DatasetFileError::BadLabel { label: s.label, index });
        }
    }
    let h16 = u16::try_from(h).map_err(|_| DatasetFileError::TooLarge(h))?;
    let w16 = u16::try_from(w).map_err(|_| DatasetFileError::TooLarge(w))?;
    let count = u32::try_from(samples.len()).map_err(|_| DatasetFileError::TooLarge(samples.len()))?;

    let mut buf = Vec::with_capacity(HEADER_LEN + samples.len() * (1 + h * w * 3));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&h16.to_le_bytes());
    buf.extend_from_slice(&w16.to_le_bytes());
    buf.push(3);
    buf.extend(samples.iter().map(|s| s.label));
    for s in samples {
        buf.extend(s.image.to_bytes());
    }
    Ok((buf, h, w))
}

/// Writes the binary file at `path` and the manifest next to it.
pub fn save_dataset(
    samples: &[LabeledSample],
    kind: &str,
    seed: u64,
    distribution: &Distribution,
    provenance: serde_json::Value,
    path: &Path,
) -> Result<Manifest, DatasetFileError> {
    let (bytes, height, width) = encode(samples)?;
    let manifest = Manifest {
        generator_version: GENERATOR_VERSION.to_string(),
        kind: kind.to_string(),
        seed,
        distribution: distribution.clone(),
        count: samples.len(),
        height,
        width,
        settings: samples.iter().map(|s| s.setting).collect(),
        pose_seeds: samples.iter().map(|s| s.pose_seed).collect(),
        provenance,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&bytes).map_err(io_err(path))?;
    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&mpath, text + "\n").map_err(io_err(&mpath))?;
    Ok(manifest)
}

struct Header {
    count: usize,
    height: usize,
    width: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, DatasetFileError> {
    if bytes.len() < 4 {
        return Err(DatasetFileError::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(DatasetFileError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DatasetFileError::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(DatasetFileError::VersionMismatch { found: version });
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let height = u16::from_le_bytes(bytes[12..14].try_into().expect("2 bytes")) as usize;
    let width = u16::from_le_bytes(bytes[14..16].try_into().expect("2 bytes")) as usize;
    let channels = bytes[16];
    if channels != 3 {
        return Err(DatasetFileError::Channels(channels));
    }
    Ok(Header { count, height, width })
}

pub fn load_dataset(path: &Path) -> Result<LoadedDataset, DatasetFileError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let Header { count, height, width } = parse_header(&bytes)?;
    let image_len = height * width * 3;
    let expected = HEADER_LEN + count + count * image_len;
    if bytes.len() != expected {
        return Err(DatasetFileError::Truncated { expected, found: bytes.len() });
    }
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.count != count || manifest.settings.len() != count || manifest.pose_seeds.len() != count {
        return Err(DatasetFileError::ManifestMismatch(format!(
            "binary has {count} samples, manifest lists {} settings",
            manifest.settings.len()
        )));
    }
    if (manifest.height, manifest.width) != (height, width) {
        return Err(DatasetFileError::ManifestMismatch("image dimensions differ".into()));
    }
    let labels = &bytes[HEADER_LEN..HEADER_LEN + count];
    let payload = &bytes[HEADER_LEN + count..];
    let mut samples = Vec::with_capacity(count);
    for (index, &label) in labels.iter().enumerate() {
        if usize::from(label) >= crate::NUM_CLASSES {
            return Err(DatasetFileError::BadLabel { label, index });
        }
        let px = &payload[index * image_len..(index + 1) * image_len];
        samples.push(LabeledSample {
            image: Image::from_bytes(height, width, px),
            label,
            setting: manifest.settings[index],
            pose_seed: manifest.pose_seeds[index],
        });
    }
    Ok(LoadedDataset { samples, manifest })
}

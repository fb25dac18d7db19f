//! Pixel containers, color math and the on-disk dataset format.

mod color;
mod dataset_file;
mod image;

pub use color::{gamma_decode, gamma_encode, gamma_transfer, hsv_to_rgb, luma, rgb_to_hsv, Transfer, GAMMA};
pub use dataset_file::{
    load_dataset, manifest_path, save_dataset, DatasetFileError, LoadedDataset, Manifest, FORMAT_VERSION,
    MAGIC,
};
pub use image::{dequantize, quantize, Image};

use crate::illumsim::IlluminationSetting;

/// One rendered image with its ground truth and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: Image,
    pub label: u8,
    pub setting: IlluminationSetting,
    pub pose_seed: u64,
}

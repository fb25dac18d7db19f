//! Synthetic illumination rig: the 15-cell setting grid, a color-temperature
//! and intensity light model, and a procedural ten-class scene renderer.

mod grid;
mod light;
pub(crate) mod render;

pub use grid::{grid_setting, grid_table_csv, setting_grid, ColorClass, Distribution, IlluminationSetting, LEVELS};
pub use light::{kelvin_to_gain, lux_to_scale, KELVIN_MAX, KELVIN_MIN, REFERENCE_KELVIN, REFERENCE_LUX};
pub use render::{render_albedo, render_sample, AlbedoRender, RenderOptions, SceneSpec};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IllumError {
    #[error("kelvin {0} outside [1000, 40000]")]
    KelvinOutOfRange(f64),
    #[error("lux {0} must be positive and finite")]
    BadLux(f64),
    #[error("unknown class id {0}")]
    UnknownClass(usize),
    #[error("intensity level {0} not in -2..=2")]
    BadLevel(i8),
    #[error("noise sigma {0} must be non-negative")]
    BadNoise(f64),
}

//! Gray-card calibration: illumination vectors, mapping ratios, pixel-wise
//! vector mapping and color-temperature back-estimation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::illumsim::{kelvin_to_gain, setting_grid, render::expose, AlbedoRender, IllumError, IlluminationSetting, RenderOptions, KELVIN_MAX, KELVIN_MIN};
use crate::imagecore::{gamma_decode, Image};
use crate::par::{self, Exec};
use crate::seeding;

/// Reflectance of the reference card.
pub const GRAY_CARD_ALBEDO: f32 = 0.18;
pub const DEFAULT_FRAMES: usize = 100;
/// Smallest admissible source channel when forming a ratio.
pub const RATIO_EPSILON: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum GraycalError {
    #[error("no frames to average")]
    NoFrames,
    #[error("frame {0} has different dimensions")]
    MixedDimensions(usize),
    #[error("degenerate source vector for {setting}: channel {channel} = {value}")]
    DegenerateSource { setting: IlluminationSetting, channel: usize, value: f64 },
    #[error("degenerate illumination vector {0:?}")]
    DegenerateVector([f64; 3]),
    #[error("n_frames must be at least 1")]
    ZeroFrames,
    #[error(transparent)]
    Illum(#[from] IllumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminationVector {
    pub r_mean: f64,
    pub g_mean: f64,
    pub b_mean: f64,
    pub setting: IlluminationSetting,
    pub n_frames: usize,
}

impl IlluminationVector {
    pub fn rgb(&self) -> [f64; 3] {
        [self.r_mean, self.g_mean, self.b_mean]
    }
}

/// Per-channel multiplier taking `source` captures to `target` captures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingRatio {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub source: IlluminationSetting,
    pub target: IlluminationSetting,
}

impl MappingRatio {
    pub fn identity(setting: IlluminationSetting) -> Self {
        Self { r: 1.0, g: 1.0, b: 1.0, source: setting, target: setting }
    }

    pub fn rgb(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

/// Frames of a full-field 18% gray card under `setting`, flat shading.
pub fn render_gray_card(
    setting: &IlluminationSetting,
    n_frames: usize,
    size: usize,
    opts: &RenderOptions,
    rng: &mut seeding::Rng,
) -> Result<Vec<Image>, GraycalError> {
    if n_frames == 0 {
        return Err(GraycalError::ZeroFrames);
    }
    let card = AlbedoRender {
        albedo: Image::filled(size, size, [GRAY_CARD_ALBEDO; 3]),
        shading: vec![1.0; size * size],
    };
    let flat = RenderOptions { shading: false, ..*opts };
    (0..n_frames).map(|_| Ok(expose(&card, setting, &flat, rng)?)).collect()
}

/// Mean of each channel over every pixel of every frame.
pub fn estimate_illumination_vector(
    frames: &[Image],
    setting: IlluminationSetting,
) -> Result<IlluminationVector, GraycalError> {
    let first = frames.first().ok_or(GraycalError::NoFrames)?;
    let mut acc = [0.0f64; 3];
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != first.dims() {
            return Err(GraycalError::MixedDimensions(i));
        }
        for p in f.data().chunks_exact(3) {
            for c in 0..3 {
                acc[c] += f64::from(p[c]);
            }
        }
    }
    let n = (frames.len() * first.pixel_count()) as f64;
    Ok(IlluminationVector {
        r_mean: acc[0] / n,
        g_mean: acc[1] / n,
        b_mean: acc[2] / n,
        setting,
        n_frames: frames.len(),
    })
}

pub fn mapping_ratio(source: &IlluminationVector, target: &IlluminationVector) -> Result<MappingRatio, GraycalError> {
    let s = source.rgb();
    if let Some(channel) = (0..3).find(|&c| !(s[c] > RATIO_EPSILON)) {
        return Err(GraycalError::DegenerateSource { setting: source.setting, channel, value: s[channel] });
    }
    let t = target.rgb();
    Ok(MappingRatio {
        r: t[0] / s[0],
        g: t[1] / s[1],
        b: t[2] / s[2],
        source: source.setting,
        target: target.setting,
    })
}

/// Multiplies every stored pixel by the ratio, clamping to [0, 1].
pub fn apply_vector_mapping(image: &Image, ratio: &MappingRatio) -> Image {
    let k = ratio.rgb().map(|v| v as f32);
    image.map_pixels(|p| std::array::from_fn(|c| (p[c] * k[c]).clamp(0.0, 1.0)))
}

/// Illumination vectors for every grid setting, in grid order. Each
/// setting gets its own generator derived from `seed`.
pub fn calibrate_grid(
    n_frames: usize,
    size: usize,
    opts: &RenderOptions,
    seed: u64,
    exec: Exec,
) -> Result<Vec<IlluminationVector>, GraycalError> {
    let grid = setting_grid();
    par::map(exec, &grid, |s| {
        let mut rng = seeding::child_rng(seed, s.grid_index() as u64);
        let frames = render_gray_card(s, n_frames, size, opts, &mut rng)?;
        estimate_illumination_vector(&frames, *s)
    })
    .into_iter()
    .collect()
}

fn chroma_log(rgb: [f64; 3]) -> [f64; 2] {
    let floor = 1e-12;
    let g = rgb[1].max(floor);
    [(rgb[0].max(floor) / g).ln(), (rgb[2].max(floor) / g).ln()]
}

fn chroma_distance(target: [f64; 2], kelvin: f64) -> f64 {
    let gain = kelvin_to_gain(kelvin).expect("search stays in range");
    let c = chroma_log(gain);
    (c[0] - target[0]).powi(2) + (c[1] - target[1]).powi(2)
}

/// Color temperature whose gain chromaticity best matches a linear RGB
/// triple. Intensity is removed by normalizing to green.
pub fn estimate_kelvin_linear(rgb: [f64; 3]) -> Result<f64, GraycalError> {
    if rgb.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(GraycalError::DegenerateVector(rgb));
    }
    let target = chroma_log(rgb);
    // Coarse log-spaced scan, then golden-section refinement in the winning bracket.
    const STEPS: usize = 600;
    let (lo_ln, hi_ln) = (KELVIN_MIN.ln(), KELVIN_MAX.ln());
    let at = |i: usize| (lo_ln + (hi_ln - lo_ln) * i as f64 / STEPS as f64).exp().clamp(KELVIN_MIN, KELVIN_MAX);
    let best = (0..=STEPS)
        .min_by(|&a, &b| chroma_distance(target, at(a)).total_cmp(&chroma_distance(target, at(b))))
        .expect("non-empty scan");
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(STEPS)));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    while b - a > 0.5 {
        if chroma_distance(target, c) < chroma_distance(target, d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    Ok(0.5 * (a + b))
}

/// Kelvin estimate from a gray-card vector of gamma-encoded means.
pub fn estimate_kelvin(vector: &IlluminationVector) -> Result<f64, GraycalError> {
    estimate_kelvin_linear(vector.rgb().map(gamma_decode))
}

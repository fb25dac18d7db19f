//! Procedural ten-class scenes and the sensor pipeline.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{kelvin_to_gain, lux_to_scale, IlluminationSetting, IllumError};
use crate::imagecore::{gamma_encode, Image};
use crate::seeding;
use crate::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneSpec {
    pub class_id: usize,
    pub pose_seed: u64,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Std-dev of additive Gaussian sensor noise, in linear sensor units,
    /// added before clipping and gamma encoding.
    pub noise_sigma: f64,
    pub shading: bool,
    pub gamma: bool,
    pub clip: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { noise_sigma: 0.01, shading: true, gamma: true, clip: true }
    }
}

impl RenderOptions {
    /// Purely multiplicative pipeline: flat shading, no noise, no clipping,
    /// no gamma.
    pub fn ideal() -> Self {
        Self { noise_sigma: 0.0, shading: false, gamma: false, clip: false }
    }

    pub fn validate(&self) -> Result<(), IllumError> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(IllumError::BadNoise(self.noise_sigma));
        }
        Ok(())
    }
}

/// Linear-space reflectance plus the multiplicative shading field.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoRender {
    pub albedo: Image,
    /// Row-major, one value per pixel, in [0.4, 1.0].
    pub shading: Vec<f32>,
}

const SHADING_MIN: f64 = 0.4;
const SHADING_MAX: f64 = 1.0;
const SUPERSAMPLE: usize = 2;

/// Primary and secondary reflectance of each class.
const PALETTES: [([f64; 3], [f64; 3]); NUM_CLASSES] = [
    ([0.78, 0.14, 0.12], [0.78, 0.14, 0.12]), // disc
    ([0.16, 0.28, 0.78], [0.16, 0.28, 0.78]), // square
    ([0.82, 0.72, 0.14], [0.82, 0.72, 0.14]), // triangle
    ([0.14, 0.62, 0.22], [0.14, 0.62, 0.22]), // ring
    ([0.88, 0.42, 0.10], [0.88, 0.42, 0.10]), // cross
    ([0.52, 0.18, 0.68], [0.52, 0.18, 0.68]), // star
    ([0.12, 0.62, 0.72], [0.90, 0.90, 0.88]), // stripes
    ([0.80, 0.20, 0.52], [0.18, 0.18, 0.20]), // checker
    ([0.55, 0.34, 0.18], [0.92, 0.62, 0.66]), // two blobs
    ([0.10, 0.45, 0.42], [0.95, 0.92, 0.60]), // radial gradient
];

#[derive(Debug, Clone, Copy)]
struct Pose {
    cx: f64,
    cy: f64,
    scale: f64,
    cos_a: f64,
    sin_a: f64,
    tint: [f64; 3],
    background: [f64; 3],
    bg_freq: [f64; 2],
    bg_phase: f64,
    light_dir: [f64; 2],
    light_slope: f64,
    spot: [f64; 2],
}

impl Pose {
    fn draw(pose_seed: u64) -> Self {
        let mut rng = seeding::rng(pose_seed);
        let angle = rng.random_range(0.0..2.0 * PI);
        let gray = rng.random_range(0.36..0.52);
        let bg_tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.015..0.015));
        let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.04..0.04));
        let light_angle = rng.random_range(0.0..2.0 * PI);
        Pose {
            cx: rng.random_range(-0.2..0.2),
            cy: rng.random_range(-0.2..0.2),
            scale: rng.random_range(0.5..0.72),
            cos_a: angle.cos(),
            sin_a: angle.sin(),
            tint,
            background: bg_tint.map(|t| gray + t),
            bg_freq: [rng.random_range(2.0..6.0), rng.random_range(2.0..6.0)],
            bg_phase: rng.random_range(0.0..2.0 * PI),
            light_dir: [light_angle.cos(), light_angle.sin()],
            light_slope: rng.random_range(0.3..1.0),
            spot: [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)],
        }
    }

    fn to_local(&self, u: f64, v: f64) -> (f64, f64) {
        let (du, dv) = (u - self.cx, v - self.cy);
        ((self.cos_a * du + self.sin_a * dv) / self.scale, (-self.sin_a * du + self.cos_a * dv) / self.scale)
    }

    fn background_at(&self, u: f64, v: f64) -> [f64; 3] {
        let tex = 0.03 * (self.bg_freq[0] * u + self.bg_phase).sin() * (self.bg_freq[1] * v).cos();
        self.background.map(|c| c + tex)
    }

    fn shading_at(&self, u: f64, v: f64) -> f64 {
        let proj = (self.light_dir[0] * u + self.light_dir[1] * v) / SQRT_2;
        let d2 = (u - self.spot[0]).powi(2) + (v - self.spot[1]).powi(2);
        let s = 0.72 + 0.22 * self.light_slope * proj + 0.2 * (-d2 / 0.15).exp();
        s.clamp(SHADING_MIN, SHADING_MAX)
    }
}

enum Region {
    Background,
    Primary,
    Secondary,
    Blend(f64),
}

fn class_region(class_id: usize, x: f64, y: f64) -> Region {
    let r = x.hypot(y);
    let inside = |b: bool| if b { Region::Primary } else { Region::Background };
    match class_id {
        0 => inside(r < 1.0),
        1 => inside(x.abs() < 0.8 && y.abs() < 0.8),
        2 => inside(y > -0.55 && 3f64.sqrt() * x.abs() < 1.0 - y),
        3 => inside(r < 1.0 && r > 0.55),
        4 => inside((x.abs() < 0.3 && y.abs() < 0.95) || (y.abs() < 0.3 && x.abs() < 0.95)),
        5 => {
            let phi = y.atan2(x);
            let lobe = 0.5 * (1.0 + (5.0 * phi).cos());
            inside(r < 0.42 + 0.58 * lobe * lobe)
        }
        6 | 7 if x.abs() >= 0.85 || y.abs() >= 0.85 => Region::Background,
        6 => {
            if ((x + 0.85) / 0.34).floor() as i64 % 2 == 0 {
                Region::Primary
            } else {
                Region::Secondary
            }
        }
        7 => {
            let cx = ((x + 0.85) / 0.425).floor() as i64;
            let cy = ((y + 0.85) / 0.425).floor() as i64;
            if (cx + cy) % 2 == 0 {
                Region::Primary
            } else {
                Region::Secondary
            }
        }
        8 => {
            if (x - 0.48).hypot(y) < 0.5 {
                Region::Primary
            } else if (x + 0.48).hypot(y) < 0.5 {
                Region::Secondary
            } else {
                Region::Background
            }
        }
        _ => {
            if r < 1.0 {
                Region::Blend(r)
            } else {
                Region::Background
            }
        }
    }
}

/// Deterministic linear albedo and shading field for one scene.
pub fn render_albedo(spec: &SceneSpec) -> Result<AlbedoRender, IllumError> {
    if spec.class_id >= NUM_CLASSES {
        return Err(IllumError::UnknownClass(spec.class_id));
    }
    let pose = Pose::draw(spec.pose_seed);
    let (primary, secondary) = PALETTES[spec.class_id];
    let primary = std::array::from_fn::<f64, 3, _>(|c| (primary[c] + pose.tint[c]).clamp(0.0, 1.0));
    let secondary = std::array::from_fn::<f64, 3, _>(|c| (secondary[c] + pose.tint[c]).clamp(0.0, 1.0));
    let n = spec.size;
    let mut shading = Vec::with_capacity(n * n);
    let to_unit = |i: usize, sub: usize| -> f64 {
        let pos = i as f64 + (sub as f64 + 0.5) / SUPERSAMPLE as f64;
        2.0 * pos / n as f64 - 1.0
    };
    let albedo = Image::from_fn(n, n, |row, col| {
        let mut acc = [0.0f64; 3];
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let (u, v) = (to_unit(col, sx), to_unit(row, sy));
                let (x, y) = pose.to_local(u, v);
                let a = match class_region(spec.class_id, x, y) {
                    Region::Background => pose.background_at(u, v),
                    Region::Primary => primary,
                    Region::Secondary => secondary,
                    Region::Blend(t) => std::array::from_fn(|c| secondary[c] * (1.0 - t) + primary[c] * t),
                };
                for c in 0..3 {
                    acc[c] += a[c];
                }
            }
        }
        let centre = (2.0 * (col as f64 + 0.5) / n as f64 - 1.0, 2.0 * (row as f64 + 0.5) / n as f64 - 1.0);
        shading.push(pose.shading_at(centre.0, centre.1) as f32);
        let k = (SUPERSAMPLE * SUPERSAMPLE) as f64;
        acc.map(|s| (s / k).clamp(0.0, 1.0) as f32)
    });
    Ok(AlbedoRender { albedo, shading })
}

/// Pushes a precomputed albedo through the light and sensor model:
/// `albedo * shading * gain(kelvin) * lux/1000`, highlight clip, gamma
/// encode, additive noise, final clip.
pub(crate) fn expose(
    scene: &AlbedoRender,
    setting: &IlluminationSetting,
    opts: &RenderOptions,
    rng: &mut seeding::Rng,
) -> Result<Image, IllumError> {
    opts.validate()?;
    let gain = kelvin_to_gain(setting.kelvin)?;
    let scale = lux_to_scale(setting.lux);
    let factor = gain.map(|g| g * scale);
    let mut out = scene.albedo.clone();
    for (px, &s) in out.data_mut().chunks_exact_mut(3).zip(scene.shading.iter()) {
        let shade = if opts.shading { f64::from(s) } else { 1.0 };
        for c in 0..3 {
            let mut v = f64::from(px[c]) * shade * factor[c];
            if opts.noise_sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v += opts.noise_sigma * z;
            }
            if opts.clip {
                v = v.clamp(0.0, 1.0);
            }
            if opts.gamma {
                v = gamma_encode(v.max(0.0));
            }
            px[c] = v as f32;
        }
    }
    Ok(out)
}

/// Renders one scene under one illumination setting.
pub fn render_sample(
    spec: &SceneSpec,
    setting: &IlluminationSetting,
    opts: &RenderOptions,
    rng: &mut seeding::Rng,
) -> Result<Image, IllumError> {
    expose(&render_albedo(spec)?, setting, opts, rng)
}

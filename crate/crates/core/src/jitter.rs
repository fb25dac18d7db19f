//! Four-parameter color jitter on stored (gamma-space) pixels.
//!
//! Strength `s` for brightness, contrast and saturation draws a factor
//! uniformly from `[max(0, 1 - s), 1 + s]`; hue strength `h` draws a shift
//! from `[-h, h]` in fractions of the hue circle. The four adjustments run in
//! a fresh random order per image unless [`JitterOrder::Fixed`] is used.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{hsv_to_rgb, luma, rgb_to_hsv, Image};
use crate::seeding;

pub const MAX_HUE_STRENGTH: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum JitterError {
    #[error("{kind:?} factor {value} must be finite and non-negative")]
    NegativeFactor { kind: Adjustment, value: f64 },
    #[error("hue shift {0} outside [-0.5, 0.5]")]
    HueShift(f64),
    #[error("{name} strength {value} outside [0, {max}]")]
    Strength { name: &'static str, value: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Adjustment {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

impl Adjustment {
    pub const ALL: [Adjustment; 4] = [Adjustment::Brightness, Adjustment::Contrast, Adjustment::Saturation, Adjustment::Hue];
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JitterParams {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl JitterParams {
    pub const NAMES: [&'static str; 4] = ["brightness", "contrast", "saturation", "hue"];

    pub fn validate(&self) -> Result<(), JitterError> {
        for (i, value) in self.to_array().into_iter().enumerate() {
            let max = if i == 3 { MAX_HUE_STRENGTH } else { 1.0 };
            if !(0.0..=max).contains(&value) {
                return Err(JitterError::Strength { name: Self::NAMES[i], value, max });
            }
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.brightness, self.contrast, self.saturation, self.hue]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { brightness: a[0], contrast: a[1], saturation: a[2], hue: a[3] }
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|&v| v == 0.0)
    }
}

/// A realized jitter: concrete factors, shift and application order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterDraw {
    pub brightness_factor: f64,
    pub contrast_factor: f64,
    pub saturation_factor: f64,
    pub hue_shift: f64,
    pub order: [Adjustment; 4],
}

impl JitterDraw {
    pub fn identity() -> Self {
        Self { brightness_factor: 1.0, contrast_factor: 1.0, saturation_factor: 1.0, hue_shift: 0.0, order: Adjustment::ALL }
    }

    fn amount(&self, kind: Adjustment) -> f64 {
        match kind {
            Adjustment::Brightness => self.brightness_factor,
            Adjustment::Contrast => self.contrast_factor,
            Adjustment::Saturation => self.saturation_factor,
            Adjustment::Hue => self.hue_shift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum JitterOrder {
    #[default]
    Random,
    /// Brightness, contrast, saturation, hue.
    Fixed,
}

fn factor(strength: f64, rng: &mut seeding::Rng) -> f64 {
    if strength == 0.0 {
        1.0
    } else {
        rng.random_range((1.0 - strength).max(0.0)..=1.0 + strength)
    }
}

pub fn sample_jitter_draw(params: &JitterParams, order: JitterOrder, rng: &mut seeding::Rng) -> JitterDraw {
    let brightness_factor = factor(params.brightness, rng);
    let contrast_factor = factor(params.contrast, rng);
    let saturation_factor = factor(params.saturation, rng);
    let hue_shift = if params.hue == 0.0 { 0.0 } else { rng.random_range(-params.hue..=params.hue) };
    let mut seq = Adjustment::ALL;
    if order == JitterOrder::Random {
        seq.shuffle(rng);
    }
    JitterDraw { brightness_factor, contrast_factor, saturation_factor, hue_shift, order: seq }
}

fn image_mean_luma(image: &Image) -> f64 {
    let s: f64 = image.pixels().map(|p| luma(p.map(f64::from))).sum();
    s / image.pixel_count().max(1) as f64
}

/// Applies one adjustment. Factors of 1 and a hue shift of 0 return the
/// input unchanged.
pub fn adjust_color(image: &Image, kind: Adjustment, amount: f64) -> Result<Image, JitterError> {
    if kind == Adjustment::Hue {
        if !(-0.5..=0.5).contains(&amount) {
            return Err(JitterError::HueShift(amount));
        }
    } else if !(amount >= 0.0 && amount.is_finite()) {
        return Err(JitterError::NegativeFactor { kind, value: amount });
    }
    let neutral = if kind == Adjustment::Hue { 0.0 } else { 1.0 };
    if amount == neutral {
        return Ok(image.clone());
    }
    let unit = |v: f64| v.clamp(0.0, 1.0) as f32;
    let out = match kind {
        Adjustment::Brightness => image.map_pixels(|p| p.map(|v| unit(f64::from(v) * amount))),
        Adjustment::Contrast => {
            let m = image_mean_luma(image);
            image.map_pixels(|p| p.map(|v| unit(m + amount * (f64::from(v) - m))))
        }
        Adjustment::Saturation => image.map_pixels(|p| {
            let l = luma(p.map(f64::from));
            p.map(|v| unit(l + amount * (f64::from(v) - l)))
        }),
        Adjustment::Hue => image.map_pixels(|p| {
            let [h, s, v] = rgb_to_hsv(p.map(f64::from));
            hsv_to_rgb([(h + amount).rem_euclid(1.0), s, v]).map(unit)
        }),
    };
    Ok(out)
}

pub fn apply_draw(image: &Image, draw: &JitterDraw) -> Image {
    let mut out = image.clone();
    for kind in draw.order {
        out = adjust_color(&out, kind, draw.amount(kind)).expect("draw amounts are in range");
    }
    out
}

/// Draws a jitter from `params` and applies it.
pub fn apply_color_jitter(image: &Image, params: &JitterParams, order: JitterOrder, rng: &mut seeding::Rng) -> Image {
    let draw = sample_jitter_draw(params, order, rng);
    apply_draw(image, &draw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = seeding::rng(seed);
        Image::from_fn(h, w, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn zero_params_draw_is_neutral() {
        let mut rng = seeding::rng(3);
        let d = sample_jitter_draw(&JitterParams::default(), JitterOrder::Random, &mut rng);
        assert_eq!((d.brightness_factor, d.contrast_factor, d.saturation_factor, d.hue_shift), (1.0, 1.0, 1.0, 0.0));
        for seed in 0..20 {
            let img = random_image(seed, 5, 7);
            let out = apply_color_jitter(&img, &JitterParams::default(), JitterOrder::Random, &mut seeding::rng(seed));
            assert_eq!(out, img);
        }
    }

    #[test]
    fn brightness_interval_and_mean() {
        let p = JitterParams { brightness: 0.5, ..Default::default() };
        let mut rng = seeding::rng(11);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let d = sample_jitter_draw(&p, JitterOrder::Random, &mut rng);
            assert!((0.5..=1.5).contains(&d.brightness_factor));
            sum += d.brightness_factor;
        }
        // std of the mean is 1/sqrt(12)/100 ~ 0.0029
        assert!((sum / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn order_is_a_permutation() {
        let p = JitterParams { brightness: 0.2, contrast: 0.2, saturation: 0.2, hue: 0.1 };
        let mut rng = seeding::rng(5);
        let mut seen_non_default = false;
        for _ in 0..50 {
            let d = sample_jitter_draw(&p, JitterOrder::Random, &mut rng);
            let mut sorted = d.order;
            sorted.sort_by_key(|a| *a as u8);
            assert_eq!(sorted, Adjustment::ALL);
            seen_non_default |= d.order != Adjustment::ALL;
        }
        assert!(seen_non_default);
        assert_eq!(sample_jitter_draw(&p, JitterOrder::Fixed, &mut rng).order, Adjustment::ALL);
    }

    #[test]
    fn adjustment_reference_values() {
        let red = Image::filled(1, 1, [1.0, 0.0, 0.0]);
        let gray = adjust_color(&red, Adjustment::Saturation, 0.0).unwrap();
        for v in gray.pixel(0, 0) {
            assert!((v - 0.299).abs() < 1e-6);
        }
        let cyan = adjust_color(&red, Adjustment::Hue, 0.5).unwrap();
        let p = cyan.pixel(0, 0);
        assert!(p[0].abs() < 1e-6 && (p[1] - 1.0).abs() < 1e-6 && (p[2] - 1.0).abs() < 1e-6);

        let img = random_image(1, 4, 4);
        let flat = adjust_color(&img, Adjustment::Contrast, 0.0).unwrap();
        let m = image_mean_luma(&img) as f32;
        assert!(flat.data().iter().all(|&v| (v - m).abs() < 1e-6));
        for kind in Adjustment::ALL {
            let neutral = if kind == Adjustment::Hue { 0.0 } else { 1.0 };
            assert_eq!(adjust_color(&img, kind, neutral).unwrap(), img);
        }
        assert!(matches!(adjust_color(&img, Adjustment::Brightness, -0.1), Err(JitterError::NegativeFactor { .. })));
        assert!(adjust_color(&img, Adjustment::Hue, 0.7).is_err());
    }

    #[test]
    fn param_validation() {
        assert!(JitterParams { hue: 0.5, brightness: 1.0, ..Default::default() }.validate().is_ok());
        assert!(JitterParams { hue: 0.6, ..Default::default() }.validate().is_err());
        assert!(JitterParams { contrast: -0.1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn seeded_jitter_is_reproducible() {
        let p = JitterParams { brightness: 0.4, contrast: 0.3, saturation: 0.6, hue: 0.2 };
        let img = random_image(9, 6, 6);
        let a = apply_color_jitter(&img, &p, JitterOrder::Random, &mut seeding::rng(77));
        let b = apply_color_jitter(&img, &p, JitterOrder::Random, &mut seeding::rng(77));
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn jitter_stays_in_unit_range(seed in any::<u64>(), b in 0.0f64..=1.0, c in 0.0f64..=1.0, s in 0.0f64..=1.0, h in 0.0f64..=0.5) {
            let img = random_image(seed, 3, 3);
            let out = apply_color_jitter(&img, &JitterParams { brightness: b, contrast: c, saturation: s, hue: h }, JitterOrder::Random, &mut seeding::rng(seed));
            prop_assert!(out.is_unit());
        }

        #[test]
        fn saturation_commutes_with_brightness(seed in any::<u64>(), f in 0.2f64..1.0, s in 0.0f64..1.5) {
            // keep values small so neither adjustment clamps
            let img = random_image(seed, 3, 3).map_pixels(|p| p.map(|v| 0.25 + 0.1 * v));
            let a = adjust_color(&adjust_color(&img, Adjustment::Saturation, s).unwrap(), Adjustment::Brightness, f).unwrap();
            let b = adjust_color(&adjust_color(&img, Adjustment::Brightness, f).unwrap(), Adjustment::Saturation, s).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-6);
        }
    }
}

//! Light model: color temperature to per-channel gain, illuminance to scale.
//!
//! Gains use the Tanner Helland piecewise fit of blackbody display color
//! (t = kelvin / 100):
//!
//! ```text
//! t <= 66: r = 255
//!          g = 99.4708025861 ln(t) - 161.1195681661
//!          b = 138.5177312231 ln(t - 10) - 305.0447927307   (0 for t <= 19)
//! t >  66: r = 329.698727446 (t - 60)^-0.1332047592
//!          g = 288.1221695283 (t - 60)^-0.0755148492
//!          b = 255
//! ```
//!
//! Each branch is divided by its own value at t = 66, so both sides meet at
//! exactly (1, 1, 1) at 6600 K and the curve is continuous. Below the anchor
//! red is the maximal channel; above it blue is.

use super::IllumError;

pub const KELVIN_MIN: f64 = 1000.0;
pub const KELVIN_MAX: f64 = 40000.0;
pub const REFERENCE_KELVIN: f64 = 6600.0;
pub const REFERENCE_LUX: f64 = 1000.0;

const ANCHOR_T: f64 = REFERENCE_KELVIN / 100.0;

fn low_branch(t: f64) -> [f64; 3] {
    let r = 255.0;
    let g = 99.470_802_586_1 * t.ln() - 161.119_568_166_1;
    let b = if t <= 19.0 { 0.0 } else { 138.517_731_223_1 * (t - 10.0).ln() - 305.044_792_730_7 };
    [r, g.max(0.0), b.max(0.0)]
}

fn high_branch(t: f64) -> [f64; 3] {
    let x = t - 60.0;
    [329.698_727_446 * x.powf(-0.133_204_759_2), 288.122_169_528_3 * x.powf(-0.075_514_849_2), 255.0]
}

/// Multiplicative RGB gains of a light at `kelvin`, normalized to (1,1,1)
/// at 6600 K.
pub fn kelvin_to_gain(kelvin: f64) -> Result<[f64; 3], IllumError> {
    if !(KELVIN_MIN..=KELVIN_MAX).contains(&kelvin) {
        return Err(IllumError::KelvinOutOfRange(kelvin));
    }
    let t = kelvin / 100.0;
    let (raw, anchor) = if t <= ANCHOR_T {
        (low_branch(t), low_branch(ANCHOR_T))
    } else {
        (high_branch(t), high_branch(ANCHOR_T))
    };
    Ok([raw[0] / anchor[0], raw[1] / anchor[1], raw[2] / anchor[2]])
}

/// Linear exposure scale; 1000 lux maps to 1.
pub fn lux_to_scale(lux: f64) -> f64 {
    lux / REFERENCE_LUX
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent evaluation of the piecewise fit, written out per case.
    #[test]
    fn warm_light_is_red_dominant() {
        let g = kelvin_to_gain(3222.0).unwrap();
        let t: f64 = 32.22;
        let g_oracle = (99.4708025861 * t.ln() - 161.1195681661) / (99.4708025861 * 66f64.ln() - 161.1195681661);
        let b_oracle =
            (138.5177312231 * (t - 10.0).ln() - 305.0447927307) / (138.5177312231 * 56f64.ln() - 305.0447927307);
        assert_eq!(g[0], 1.0);
        assert!((g[1] - g_oracle).abs() < 1e-12);
        assert!((g[2] - b_oracle).abs() < 1e-12);
        assert!(g[1] < 1.0 && g[2] < g[1]);
        // frozen values of the closed form
        assert!((g[1] - 0.720_973).abs() < 1e-5, "{g:?}");
        assert!((g[2] - 0.492_986).abs() < 1e-5, "{g:?}");
    }

    #[test]
    fn cool_light_is_blue_dominant() {
        let g = kelvin_to_gain(12769.0).unwrap();
        let x: f64 = 127.69 - 60.0;
        let r_oracle = (x / 6.0).powf(-0.1332047592);
        let g_oracle = (x / 6.0).powf(-0.0755148492);
        assert_eq!(g[2], 1.0);
        assert!(g[0] < 1.0);
        assert!((g[0] - r_oracle).abs() < 1e-12);
        assert!((g[1] - g_oracle).abs() < 1e-12);
    }

    #[test]
    fn anchor_and_continuity() {
        assert_eq!(kelvin_to_gain(6600.0).unwrap(), [1.0, 1.0, 1.0]);
        let below = kelvin_to_gain(6599.999).unwrap();
        let above = kelvin_to_gain(6600.001).unwrap();
        for c in 0..3 {
            assert!((below[c] - above[c]).abs() < 1e-5);
        }
        let mut k = 1000.0;
        while k <= 40000.0 {
            let g = kelvin_to_gain(k).unwrap();
            let max = g.iter().cloned().fold(0.0, f64::max);
            assert!((max - 1.0).abs() < 1e-12, "max component at {k}");
            if k < 6600.0 {
                assert_eq!(g[0], 1.0);
            } else if k > 6600.0 {
                assert_eq!(g[2], 1.0);
            }
            k += 250.0;
        }
        assert!(kelvin_to_gain(999.0).is_err());
        assert!(kelvin_to_gain(40001.0).is_err());
    }

    #[test]
    fn lux_scale_is_linear() {
        assert_eq!(lux_to_scale(1000.0), 1.0);
        assert_eq!(lux_to_scale(500.0), 0.5);
        assert_eq!(lux_to_scale(0.0), 0.0);
    }
}

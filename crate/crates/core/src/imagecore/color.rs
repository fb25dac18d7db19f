/// Display gamma used by the sensor model.
pub const GAMMA: f64 = 2.2;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transfer {
    /// Linear to stored values, `v^(1/2.2)`.
    Encode,
    /// Stored to linear values, `v^2.2`.
    Decode,
}

pub fn gamma_transfer(value: f64, direction: Transfer) -> f64 {
    match direction {
        Transfer::Encode => gamma_encode(value),
        Transfer::Decode => gamma_decode(value),
    }
}

#[inline]
pub fn gamma_encode(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v.powf(1.0 / GAMMA)
    }
}

#[inline]
pub fn gamma_decode(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v.powf(GAMMA)
    }
}

#[inline]
pub fn luma(rgb: [f64; 3]) -> f64 {
    LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2]
}

/// Hexcone RGB to HSV. Hue is a fraction of the full circle in `[0, 1)`;
/// achromatic pixels get hue 0.
pub fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    if delta <= 0.0 || max <= 0.0 {
        return [0.0, 0.0, v];
    }
    let s = delta / max;
    let sector = if max == r {
        (g - b) / delta
    } else if max == g {
        2.0 + (b - r) / delta
    } else {
        4.0 + (r - g) / delta
    };
    let mut h = sector / 6.0;
    if h < 0.0 {
        h += 1.0;
    }
    if h >= 1.0 {
        h -= 1.0;
    }
    [h, s, v]
}

/// Inverse of [`rgb_to_hsv`]; hue is wrapped modulo 1.
pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    if s <= 0.0 {
        return [v, v, v];
    }
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as i64).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn hsv_reference_points() {
        assert_eq!(rgb_to_hsv([1.0, 0.0, 0.0]), [0.0, 1.0, 1.0]);
        assert_eq!(rgb_to_hsv([0.5, 0.5, 0.5]), [0.0, 0.0, 0.5]);
        // cyan: max is g (tie with b resolves to g), sector 2 + (1-0)/1 = 3, h = 3/6
        assert!(close(rgb_to_hsv([0.0, 1.0, 1.0]), [0.5, 1.0, 1.0], 1e-12));
        assert_eq!(hsv_to_rgb([0.3, 0.0, 0.7]), [0.7, 0.7, 0.7]);
        assert!(close(hsv_to_rgb([0.5, 1.0, 1.0]), [0.0, 1.0, 1.0], 1e-12));
        assert!(close(hsv_to_rgb([1.25, 1.0, 1.0]), hsv_to_rgb([0.25, 1.0, 1.0]), 1e-12));
    }

    #[test]
    fn gamma_reference_points() {
        assert_eq!(gamma_encode(0.0), 0.0);
        assert_eq!(gamma_encode(1.0), 1.0);
        assert!((gamma_transfer(0.18, Transfer::Encode) - 0.18f64.powf(1.0 / 2.2)).abs() < 1e-15);
        assert!((gamma_encode(0.18) - 0.4586).abs() < 1e-4);
        assert!((gamma_decode(gamma_encode(0.5)) - 0.5).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn hsv_round_trip(r in 0.0f64..=1.0, g in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let back = hsv_to_rgb(rgb_to_hsv([r, g, b]));
            prop_assert!(close(back, [r, g, b], 1e-6));
            let [h, s, v] = rgb_to_hsv([r, g, b]);
            prop_assert!((0.0..1.0).contains(&h));
            prop_assert!((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&v));
        }

        #[test]
        fn gamma_monotone_and_inverse(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(gamma_encode(lo) <= gamma_encode(hi));
            prop_assert!(gamma_decode(lo) <= gamma_decode(hi));
            prop_assert!((gamma_decode(gamma_encode(a)) - a).abs() < 1e-9);
            prop_assert!((gamma_encode(gamma_decode(a)) - a).abs() < 1e-9);
        }
    }
}

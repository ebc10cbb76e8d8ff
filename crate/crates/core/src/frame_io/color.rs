//! Color space conversions.
//!
//! YCbCr conversion uses the full-range BT.601 (JPEG) matrix, matching the
//! `C420jpeg` streams the engine writes. HSV follows the standard hexcone
//! formulas with hue fixed to 0 for achromatic pixels.

/// RGB (0..=255 per channel) to HSV with `h` in `[0, 360)`, `s` and `v` in
/// `[0, 1]`.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let rf = f64::from(r) / 255.0;
    let gf = f64::from(g) / 255.0;
    let bf = f64::from(b) / 255.0;
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;

    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == rf {
        60.0 * (((gf - bf) / delta).rem_euclid(6.0))
    } else if max == gf {
        60.0 * ((bf - rf) / delta + 2.0)
    } else {
        60.0 * ((rf - gf) / delta + 4.0)
    };
    let h = if h >= 360.0 { h - 360.0 } else { h };
    (h, s, v)
}

fn clamp_u8(x: f64) -> u8 {
    x.round().clamp(0.0, 255.0) as u8
}

/// Full-range BT.601 RGB → YCbCr.
pub fn rgb_to_yuv(r: u8, g: u8, b: u8) -> (u8, u8, u8) {
    let (r, g, b) = (f64::from(r), f64::from(g), f64::from(b));
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let u = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
    let v = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    (clamp_u8(y), clamp_u8(u), clamp_u8(v))
}

/// Full-range BT.601 YCbCr → RGB.
pub fn yuv_to_rgb(y: u8, u: u8, v: u8) -> (u8, u8, u8) {
    let yf = f64::from(y);
    let uf = f64::from(u) - 128.0;
    let vf = f64::from(v) - 128.0;
    let r = yf + 1.402 * vf;
    let g = yf - 0.344_136 * uf - 0.714_136 * vf;
    let b = yf + 1.772 * uf;
    (clamp_u8(r), clamp_u8(g), clamp_u8(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pure_red() {
        let (h, s, v) = rgb_to_hsv(255, 0, 0);
        assert_abs_diff_eq!(h, 0.0);
        assert_abs_diff_eq!(s, 1.0);
        assert_abs_diff_eq!(v, 1.0);
    }

    #[test]
    fn achromatic_gray_has_zero_hue_and_saturation() {
        let (h, s, v) = rgb_to_hsv(128, 128, 128);
        assert_abs_diff_eq!(h, 0.0);
        assert_abs_diff_eq!(s, 0.0);
        assert_abs_diff_eq!(v, 128.0 / 255.0);
    }

    #[test]
    fn cyan_is_180_degrees() {
        let (h, s, v) = rgb_to_hsv(0, 255, 255);
        assert_abs_diff_eq!(h, 180.0);
        assert_abs_diff_eq!(s, 1.0);
        assert_abs_diff_eq!(v, 1.0);
    }

    #[test]
    fn hue_always_in_range() {
        for r in (0..=255).step_by(17) {
            for g in (0..=255).step_by(17) {
                for b in (0..=255).step_by(17) {
                    let (h, s, v) = rgb_to_hsv(r, g, b);
                    assert!((0.0..360.0).contains(&h), "h={h} for {r},{g},{b}");
                    assert!((0.0..=1.0).contains(&s));
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn yuv_round_trip_is_close() {
        for &(r, g, b) in &[(255, 0, 0), (0, 255, 0), (0, 0, 255), (12, 200, 99)] {
            let (y, u, v) = rgb_to_yuv(r, g, b);
            let (r2, g2, b2) = yuv_to_rgb(y, u, v);
            assert!(i16::from(r).abs_diff(i16::from(r2)) <= 2);
            assert!(i16::from(g).abs_diff(i16::from(g2)) <= 2);
            assert!(i16::from(b).abs_diff(i16::from(b2)) <= 2);
        }
    }
}

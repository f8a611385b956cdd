//! CORDIC kernels for the rotation datapath: vectoring-mode arctangent and
//! rotation-mode sin/cos.
//!
//! The iterations run on widened fixed-point registers (the target format
//! plus [`GUARD_BITS`] extra fraction bits) so that angle-table quantization
//! and per-iteration shift truncation stay below the output rounding step.
//! Outputs are rounded to nearest in the target format.

use crate::fixed::{Fixed, QFormat};

/// Extra fraction bits carried by the internal x/y/z registers.
const GUARD_BITS: u32 = 16;

/// Configuration of the CORDIC pipeline: iteration depth, target format,
/// and the precomputed tables derived from them.
#[derive(Clone, Debug)]
pub struct CordicConfig {
    iterations: u32,
    format: QFormat,
    /// atan(2^-i) in widened raw units, one entry per iteration.
    atan_table: Vec<i128>,
    /// Gain compensation K = prod 1/sqrt(1 + 2^-2i) in widened raw units.
    gain_wide: i128,
}

impl CordicConfig {
    pub fn new(iterations: u32, format: QFormat) -> crate::Result<Self> {
        if !(4..=60).contains(&iterations) {
            return Err(crate::Error::InvalidConfig(format!(
                "cordic iterations must be in 4..=60, got {iterations}"
            )));
        }
        if format.int_bits() < 2 {
            return Err(crate::Error::InvalidConfig(format!(
                "cordic needs at least 2 integer bits to hold angles up to pi/2, got {format}"
            )));
        }
        let scale = (format.frac_bits() as u32 + GUARD_BITS) as i32;
        let atan_table = (0..iterations)
            .map(|i| quantize_wide(2f64.powi(-(i as i32)).atan(), scale))
            .collect();
        let mut gain = 1.0f64;
        for i in 0..iterations {
            gain /= (1.0 + (-2.0 * i as f64).exp2()).sqrt();
        }
        Ok(Self { iterations, format, atan_table, gain_wide: quantize_wide(gain, scale) })
    }

    /// Default depth: one iteration per fraction bit of the format.
    pub fn for_format(format: QFormat) -> crate::Result<Self> {
        Self::new(format.frac_bits() as u32, format)
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    /// Gain compensation constant quantized to the target format.
    pub fn gain_compensation(&self) -> Fixed {
        Fixed::from_raw(round_to_format(self.gain_wide, GUARD_BITS), self.format)
    }

    /// Residual-rotation error bound: atan(2^-(iterations-1)).
    pub fn angle_error_bound(&self) -> f64 {
        2f64.powi(-(self.iterations as i32 - 1)).atan()
    }
}

/// Result of a vectoring-mode arctangent.
#[derive(Clone, Copy, Debug)]
pub struct AtanResult {
    pub angle: Fixed,
    /// Set when both inputs were zero; the angle is defined as 0 so the
    /// pivot logic can treat the case as "nothing to rotate".
    pub degenerate: bool,
}

fn quantize_wide(x: f64, frac_bits: i32) -> i128 {
    (x * 2f64.powi(frac_bits)).round() as i128
}

/// Round a widened raw value to the target format: nearest, half away from zero.
fn round_to_format(wide: i128, guard: u32) -> i64 {
    let half = 1i128 << (guard - 1);
    let r = if wide >= 0 { (wide + half) >> guard } else { -((-wide + half) >> guard) };
    r as i64
}

/// Normalize so max(|x|,|y|) sits in [2^61, 2^62). Pure scaling: the angle
/// depends only on the ratio, and left shifts are exact.
fn normalize(x: i128, y: i128) -> (i128, i128) {
    let m = x.unsigned_abs().max(y.unsigned_abs());
    let bits = 128 - m.leading_zeros() as i32; // position of highest set bit
    let shift = 62 - bits;
    if shift >= 0 {
        (x << shift, y << shift)
    } else {
        (x >> -shift, y >> -shift)
    }
}

/// Vectoring-mode arctangent of `y/x`, restricted to (-pi/2, pi/2] by
/// pre-reflecting the inputs so x >= 0.
///
/// Absolute error is at most `atan(2^-(iterations-1))` plus 2 ULP of the
/// output format. `(0, 0)` yields angle 0 with the degenerate flag set.
pub fn cordic_atan(y: Fixed, x: Fixed, cfg: &CordicConfig) -> AtanResult {
    assert!(y.format() == cfg.format && x.format() == cfg.format, "format mismatch");
    if x.is_zero() && y.is_zero() {
        return AtanResult { angle: Fixed::zero(cfg.format), degenerate: true };
    }
    let (mut xr, mut yr) = (x.raw() as i128, y.raw() as i128);
    if xr < 0 {
        xr = -xr;
        yr = -yr;
    }
    let (mut xr, mut yr) = normalize(xr, yr);
    let mut z = 0i128;
    for i in 0..cfg.iterations {
        let d: i128 = if yr < 0 { 1 } else { -1 };
        let xs = xr >> i;
        let ys = yr >> i;
        xr -= d * ys;
        yr += d * xs;
        z -= d * cfg.atan_table[i as usize];
    }
    AtanResult {
        angle: Fixed::from_raw(round_to_format(z, GUARD_BITS), cfg.format),
        degenerate: false,
    }
}

/// Rotation-mode sin/cos with gain compensation folded into the start vector.
///
/// The caller range-reduces: `|theta| <= pi/2` is required. Each output is
/// within `atan(2^-(iterations-1))` plus 2 ULP of the true value.
pub fn cordic_sincos(theta: Fixed, cfg: &CordicConfig) -> crate::Result<(Fixed, Fixed)> {
    assert!(theta.format() == cfg.format, "format mismatch");
    let limit = Fixed::from_real(std::f64::consts::FRAC_PI_2, cfg.format).raw() + 1;
    if theta.raw().abs() > limit {
        return Err(crate::Error::InvalidConfig(format!(
            "cordic_sincos input {} outside [-pi/2, pi/2]",
            theta.to_real()
        )));
    }
    let mut x = cfg.gain_wide;
    let mut y = 0i128;
    let mut z = (theta.raw() as i128) << GUARD_BITS;
    for i in 0..cfg.iterations {
        let d: i128 = if z >= 0 { 1 } else { -1 };
        let xs = x >> i;
        let ys = y >> i;
        x -= d * ys;
        y += d * xs;
        z -= d * cfg.atan_table[i as usize];
    }
    let sin = Fixed::from_raw(round_to_format(y, GUARD_BITS), cfg.format);
    let cos = Fixed::from_raw(round_to_format(x, GUARD_BITS), cfg.format);
    Ok((sin, cos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn cfg16() -> CordicConfig {
        CordicConfig::for_format(QFormat::Q16_16).unwrap()
    }

    fn atan_bound(cfg: &CordicConfig) -> f64 {
        cfg.angle_error_bound() + 2.0 * cfg.format().ulp()
    }

    /// Double-precision oracle matching the pre-reflection convention.
    fn oracle_atan(y: f64, x: f64) -> f64 {
        if x < 0.0 { (-y).atan2(-x) } else { y.atan2(x) }
    }

    #[test]
    fn gain_in_expected_window() {
        for iters in [8, 12, 16, 24, 32] {
            let cfg = CordicConfig::new(iters, QFormat::Q16_16).unwrap();
            let k = cfg.gain_compensation().to_real();
            assert!(k > 0.6 && k < 0.61, "K = {k} at {iters} iterations");
        }
    }

    #[test]
    fn atan_zero_angle() {
        let cfg = cfg16();
        let r = cordic_atan(
            Fixed::zero(cfg.format()),
            Fixed::from_real(1.0, cfg.format()),
            &cfg,
        );
        assert!(!r.degenerate);
        assert!(r.angle.to_real().abs() <= atan_bound(&cfg));
    }

    #[test]
    fn atan_diagonal_is_quarter_pi() {
        let cfg = cfg16();
        let one = Fixed::from_real(1.0, cfg.format());
        let r = cordic_atan(one, one, &cfg);
        assert!((r.angle.to_real() - FRAC_PI_4).abs() <= atan_bound(&cfg));
    }

    #[test]
    fn atan_two_over_one() {
        let cfg = cfg16();
        let r = cordic_atan(
            Fixed::from_real(2.0, cfg.format()),
            Fixed::from_real(1.0, cfg.format()),
            &cfg,
        );
        // atan(2) = 1.1071487177940904 from the double-precision oracle.
        assert!((r.angle.to_real() - 1.1071487177940904).abs() <= atan_bound(&cfg));
    }

    #[test]
    fn atan_degenerate_origin() {
        let cfg = cfg16();
        let z = Fixed::zero(cfg.format());
        let r = cordic_atan(z, z, &cfg);
        assert!(r.degenerate);
        assert!(r.angle.is_zero());
    }

    #[test]
    fn atan_positive_y_axis() {
        let cfg = cfg16();
        let r = cordic_atan(
            Fixed::from_real(1.0, cfg.format()),
            Fixed::zero(cfg.format()),
            &cfg,
        );
        assert!((r.angle.to_real() - FRAC_PI_2).abs() <= atan_bound(&cfg));
    }

    #[test]
    fn atan_random_sweep_meets_bound() {
        let cfg = cfg16();
        let q = cfg.format();
        let bound = atan_bound(&cfg);
        let mut state = 0x9E37_79B9_7F4A_7C15u64;
        let mut unit = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10_000 {
            // |y|, |x| in [2^-8, 2^7], both signs.
            let mag = |u: f64| (-8.0 + 15.0 * u).exp2();
            let y = mag(unit()) * if unit() < 0.5 { -1.0 } else { 1.0 };
            let x = mag(unit()) * if unit() < 0.5 { -1.0 } else { 1.0 };
            let fy = Fixed::from_real(y, q);
            let fx = Fixed::from_real(x, q);
            let got = cordic_atan(fy, fx, &cfg).angle.to_real();
            let want = oracle_atan(fy.to_real(), fx.to_real());
            assert!(
                (got - want).abs() <= bound,
                "atan({y}, {x}): got {got}, want {want}"
            );
        }
    }

    #[test]
    fn atan_nondecreasing_in_y() {
        let cfg = cfg16();
        let q = cfg.format();
        let x = Fixed::from_real(1.0, q);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..1000 {
            let y = -4.0 + 8.0 * (i as f64) / 999.0;
            let a = cordic_atan(Fixed::from_real(y, q), x, &cfg).angle.to_real();
            assert!(a >= prev, "not monotone at y={y}: {a} < {prev}");
            prev = a;
        }
    }

    #[test]
    fn sincos_identity_rotation() {
        let cfg = cfg16();
        let (sin, cos) = cordic_sincos(Fixed::zero(cfg.format()), &cfg).unwrap();
        assert!(sin.to_real().abs() <= cfg.format().ulp());
        assert!((cos.to_real() - 1.0).abs() <= cfg.format().ulp());
    }

    #[test]
    fn sincos_quarter_pi() {
        let cfg = cfg16();
        let (sin, cos) = cordic_sincos(Fixed::from_real(FRAC_PI_4, cfg.format()), &cfg).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bound = atan_bound(&cfg);
        assert!((sin.to_real() - r).abs() <= bound);
        assert!((cos.to_real() - r).abs() <= bound);
    }

    #[test]
    fn sincos_reference_point() {
        let cfg = cfg16();
        let (sin, cos) = cordic_sincos(Fixed::from_real(0.3, cfg.format()), &cfg).unwrap();
        // sin(0.3) = 0.29552020666133955, cos(0.3) = 0.955336489125606.
        let bound = atan_bound(&cfg);
        assert!((sin.to_real() - 0.29552020666133955).abs() <= bound);
        assert!((cos.to_real() - 0.955336489125606).abs() <= bound);
    }

    #[test]
    fn sincos_rejects_out_of_range() {
        let cfg = cfg16();
        assert!(cordic_sincos(Fixed::from_real(2.0, cfg.format()), &cfg).is_err());
        assert!(cordic_sincos(Fixed::from_real(-2.0, cfg.format()), &cfg).is_err());
    }

    #[test]
    fn sincos_random_sweep_meets_bounds() {
        let cfg = cfg16();
        let q = cfg.format();
        let bound = atan_bound(&cfg);
        let pyth_bound = 2f64.powi(-(q.frac_bits() as i32 - 2));
        let mut state = 0xDEAD_BEEF_1234_5678u64;
        let mut unit = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10_000 {
            let theta = (unit() - 0.5) * std::f64::consts::PI;
            let ft = Fixed::from_real(theta, q);
            let (sin, cos) = cordic_sincos(ft, &cfg).unwrap();
            let t = ft.to_real();
            assert!((sin.to_real() - t.sin()).abs() <= bound, "sin({t})");
            assert!((cos.to_real() - t.cos()).abs() <= bound, "cos({t})");
            let residual = (sin.to_real().powi(2) + cos.to_real().powi(2) - 1.0).abs();
            assert!(residual <= pyth_bound, "pythagorean residual {residual} at {t}");
        }
    }

    #[test]
    fn deeper_pipelines_are_not_worse() {
        let q = QFormat::new(16, 32).unwrap();
        let theta = 0.7;
        let mut errs = Vec::new();
        for iters in [8, 16, 32] {
            let cfg = CordicConfig::new(iters, q).unwrap();
            let (sin, _) = cordic_sincos(Fixed::from_real(theta, q), &cfg).unwrap();
            errs.push((sin.to_real() - theta.sin()).abs());
        }
        assert!(errs[2] <= errs[0] + q.ulp());
    }
}

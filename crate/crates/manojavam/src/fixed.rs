//! Signed fixed-point scalars with a runtime-configurable Q format.
//!
//! This is the numeric substrate of the hardware path. All arithmetic
//! saturates at the format bounds (wraparound would silently corrupt the
//! eigensolver), multiplication truncates toward zero after the product,
//! and saturation events are countable through [`SatTracker`].

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

/// Q format descriptor: `int_bits` integer bits (sign included) plus
/// `frac_bits` fractional bits, total width at most 64.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub struct QFormat {
    int_bits: u8,
    frac_bits: u8,
}

impl QFormat {
    /// Build a format, validating `int_bits >= 1`, `frac_bits >= 1` and a
    /// total width of at most 64 bits.
    pub fn new(int_bits: u8, frac_bits: u8) -> crate::Result<Self> {
        if int_bits < 1 || frac_bits < 1 {
            return Err(crate::Error::InvalidConfig(format!(
                "Q{int_bits}.{frac_bits}: need at least 1 integer and 1 fraction bit"
            )));
        }
        if int_bits as u32 + frac_bits as u32 > 64 {
            return Err(crate::Error::InvalidConfig(format!(
                "Q{int_bits}.{frac_bits}: total width exceeds 64 bits"
            )));
        }
        Ok(Self { int_bits, frac_bits })
    }

    /// Default datapath format: Q16.16.
    pub const Q16_16: QFormat = QFormat { int_bits: 16, frac_bits: 16 };

    pub fn int_bits(&self) -> u8 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u8 {
        self.frac_bits
    }

    /// Total word width in bits.
    pub fn width(&self) -> u8 {
        self.int_bits + self.frac_bits
    }

    /// Smallest representable raw value (two's complement minimum).
    pub fn raw_min(&self) -> i64 {
        (-(1i128 << (self.width() - 1))) as i64
    }

    /// Largest representable raw value.
    pub fn raw_max(&self) -> i64 {
        ((1i128 << (self.width() - 1)) - 1) as i64
    }

    /// Value of one least significant bit, `2^-frac_bits`.
    pub fn ulp(&self) -> f64 {
        2f64.powi(-(self.frac_bits as i32))
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

/// Counter for saturation events, shared by reference across a datapath run.
///
/// The arithmetic functions themselves hold no state; callers that care about
/// overflow thread a tracker through the `*_tracked` variants.
#[derive(Debug, Default)]
pub struct SatTracker(AtomicU64);

impl SatTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// A fixed-point scalar: raw two's-complement integer plus its format.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Fixed {
    raw: i64,
    format: QFormat,
}

impl Fixed {
    pub fn zero(format: QFormat) -> Self {
        Self { raw: 0, format }
    }

    pub fn one(format: QFormat) -> Self {
        // 1.0 always fits: int_bits >= 1 plus at least one fraction bit.
        Self { raw: 1i64 << format.frac_bits(), format }
    }

    pub fn from_raw(raw: i64, format: QFormat) -> Self {
        debug_assert!(raw >= format.raw_min() && raw <= format.raw_max());
        Self { raw, format }
    }

    /// Quantize a real value: round to nearest, saturate at the format bounds.
    ///
    /// Round-trip error is at most half an ULP, within the `2^-frac_bits`
    /// contract. Non-finite inputs are a programming error.
    pub fn from_real(x: f64, format: QFormat) -> Self {
        assert!(x.is_finite(), "cannot quantize non-finite value {x}");
        let scaled = (x * 2f64.powi(format.frac_bits() as i32)).round();
        let raw = if scaled <= format.raw_min() as f64 {
            format.raw_min()
        } else if scaled >= format.raw_max() as f64 {
            format.raw_max()
        } else {
            scaled as i64
        };
        Self { raw, format }
    }

    pub fn to_real(self) -> f64 {
        self.raw as f64 * self.format.ulp()
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn format(self) -> QFormat {
        self.format
    }

    pub fn is_zero(self) -> bool {
        self.raw == 0
    }

    fn saturate(wide: i128, format: QFormat, sats: &SatTracker) -> Self {
        let min = format.raw_min() as i128;
        let max = format.raw_max() as i128;
        let raw = if wide < min {
            sats.record();
            min as i64
        } else if wide > max {
            sats.record();
            max as i64
        } else {
            wide as i64
        };
        Self { raw, format }
    }

    fn check_format(self, other: Self) {
        assert!(
            self.format == other.format,
            "fixed-point format mismatch: {} vs {}",
            self.format,
            other.format
        );
    }

    pub fn add_tracked(self, rhs: Self, sats: &SatTracker) -> Self {
        self.check_format(rhs);
        Self::saturate(self.raw as i128 + rhs.raw as i128, self.format, sats)
    }

    pub fn sub_tracked(self, rhs: Self, sats: &SatTracker) -> Self {
        self.check_format(rhs);
        Self::saturate(self.raw as i128 - rhs.raw as i128, self.format, sats)
    }

    /// Exact wide product, truncated toward zero after the multiply,
    /// saturated on overflow.
    pub fn mul_tracked(self, rhs: Self, sats: &SatTracker) -> Self {
        self.check_format(rhs);
        let wide = self.raw as i128 * rhs.raw as i128;
        // i128 division truncates toward zero, which is the datapath's
        // post-multiply rounding mode.
        let shifted = wide / (1i128 << self.format.frac_bits());
        Self::saturate(shifted, self.format, sats)
    }

    pub fn neg_tracked(self, sats: &SatTracker) -> Self {
        Self::saturate(-(self.raw as i128), self.format, sats)
    }

    pub fn abs_tracked(self, sats: &SatTracker) -> Self {
        if self.raw < 0 {
            self.neg_tracked(sats)
        } else {
            self
        }
    }

    /// Arithmetic right shift of the raw value (used by the angle halver).
    pub fn shr1(self) -> Self {
        Self { raw: self.raw >> 1, format: self.format }
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_real())
    }
}

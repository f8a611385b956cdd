//! Scalar abstraction over the two datapath element types.
//!
//! The engine, accumulators and eigensolver are generic over [`Scalar`] so
//! the float reference path and the fixed-point hardware path run through
//! identical scheduling and dataflow code. `f64` ignores the saturation
//! tracker; [`Fixed`] counts every clamping event into it.

use std::cmp::Ordering;
use std::fmt;

use crate::fixed::{Fixed, QFormat, SatTracker};

pub trait Scalar: Copy + PartialEq + fmt::Debug + Send + Sync + 'static {
    /// Additive identity carrying the same format as `self`.
    fn zero_like(&self) -> Self;
    /// Multiplicative identity carrying the same format as `self`.
    fn one_like(&self) -> Self;
    fn add_sat(self, rhs: Self, sats: &SatTracker) -> Self;
    fn sub_sat(self, rhs: Self, sats: &SatTracker) -> Self;
    fn mul_sat(self, rhs: Self, sats: &SatTracker) -> Self;
    fn neg_sat(self, sats: &SatTracker) -> Self;
    fn is_zero(self) -> bool;
    fn to_f64(self) -> f64;
    /// Exact magnitude comparison (no precision loss on either path).
    fn cmp_abs(self, other: Self) -> Ordering;
}

impl Scalar for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }

    fn one_like(&self) -> Self {
        1.0
    }

    fn add_sat(self, rhs: Self, _sats: &SatTracker) -> Self {
        self + rhs
    }

    fn sub_sat(self, rhs: Self, _sats: &SatTracker) -> Self {
        self - rhs
    }

    fn mul_sat(self, rhs: Self, _sats: &SatTracker) -> Self {
        self * rhs
    }

    fn neg_sat(self, _sats: &SatTracker) -> Self {
        -self
    }

    fn is_zero(self) -> bool {
        self == 0.0
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn cmp_abs(self, other: Self) -> Ordering {
        self.abs().total_cmp(&other.abs())
    }
}

impl Scalar for Fixed {
    fn zero_like(&self) -> Self {
        Fixed::zero(self.format())
    }

    fn one_like(&self) -> Self {
        Fixed::one(self.format())
    }

    fn add_sat(self, rhs: Self, sats: &SatTracker) -> Self {
        self.add_tracked(rhs, sats)
    }

    fn sub_sat(self, rhs: Self, sats: &SatTracker) -> Self {
        self.sub_tracked(rhs, sats)
    }

    fn mul_sat(self, rhs: Self, sats: &SatTracker) -> Self {
        self.mul_tracked(rhs, sats)
    }

    fn neg_sat(self, sats: &SatTracker) -> Self {
        self.neg_tracked(sats)
    }

    fn is_zero(self) -> bool {
        Fixed::is_zero(self)
    }

    fn to_f64(self) -> f64 {
        self.to_real()
    }

    fn cmp_abs(self, other: Self) -> Ordering {
        (self.raw() as i128).abs().cmp(&(other.raw() as i128).abs())
    }
}

/// Quantize a real-valued matrix onto the fixed-point path. Returns the
/// matrix together with the number of entries clamped at the format bounds.
pub fn quantize_matrix(
    m: &crate::matrix::Matrix<f64>,
    format: QFormat,
) -> (crate::matrix::Matrix<Fixed>, u64) {
    let mut clamps = 0u64;
    let data = m
        .as_slice()
        .iter()
        .map(|&x| {
            let f = Fixed::from_real(x, format);
            if f.raw() == format.raw_max() || f.raw() == format.raw_min() {
                clamps += 1;
            }
            f
        })
        .collect();
    (crate::matrix::Matrix::from_vec(m.rows(), m.cols(), data).expect("same shape"), clamps)
}

/// Project any scalar matrix onto the double-precision instrumentation path.
pub fn to_f64_matrix<S: Scalar>(m: &crate::matrix::Matrix<S>) -> crate::matrix::Matrix<f64> {
    let data = m.as_slice().iter().map(|s| s.to_f64()).collect();
    crate::matrix::Matrix::from_vec(m.rows(), m.cols(), data).expect("same shape")
}

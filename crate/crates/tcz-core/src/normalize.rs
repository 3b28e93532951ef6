//! Shared-exponent (block floating point) quantization.
//!
//! A block of doubles is stored as one radix-2 exponent `e` plus one signed
//! integer mantissa of `w` bits per value:
//!
//! ```text
//! mantissa_i = round_ties_even(value_i / 2^e * 2^(w-1))
//! value_i    ~ mantissa_i * 2^(e-w+1)
//! ```
//!
//! The exponent is the smallest integer for which every rounded mantissa
//! fits in `w` bits, which caps the absolute error at `2^(e-w)` (half a
//! quantization step) and guarantees at least one mantissa with magnitude
//! `2^(w-2)` or more. Because the usual choice, the smallest `e` with
//! `max |value| / 2^e < 1`, lets a value just below `2^e` round up to the
//! unrepresentable `+2^(w-1)`, the exponent is bumped by one in exactly that
//! edge case instead of clamping (clamping would break the half-step bound).

use crate::error::{Error, Result};

pub const MIN_MANTISSA_BITS: u8 = 4;
pub const MAX_MANTISSA_BITS: u8 = 32;

/// A quantized block: `values[i] ~ mantissas[i] * 2^(shared_exponent -
/// mantissa_bits + 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedBlock {
    pub shared_exponent: i32,
    pub mantissa_bits: u8,
    pub mantissas: Vec<i32>,
}

impl NormalizedBlock {
    pub fn len(&self) -> usize {
        self.mantissas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mantissas.is_empty()
    }

    /// Serialized size: one mantissa at `ceil(w / 8)` bytes per value plus
    /// the 4-byte shared exponent.
    pub fn size_bytes(&self) -> u64 {
        mantissa_byte_width(self.mantissa_bits) as u64 * self.mantissas.len() as u64 + 4
    }
}

/// Bytes used to store one mantissa of `bits` width.
pub fn mantissa_byte_width(bits: u8) -> usize {
    (bits as usize).div_ceil(8)
}

/// Exact `2^e` as an f64, saturating to infinity above the exponent range
/// and to zero below it.
pub(crate) fn pow2(e: i32) -> f64 {
    if e >= 1024 {
        f64::INFINITY
    } else if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else if e >= -1074 {
        // Subnormal range: a single significand bit.
        f64::from_bits(1u64 << (e + 1074))
    } else {
        0.0
    }
}

/// `x * 2^e` computed in power-of-two chunks so intermediate factors stay
/// representable for any i32 exponent.
pub(crate) fn scale_by_pow2(mut x: f64, mut e: i32) -> f64 {
    while e > 511 {
        x *= pow2(511);
        e -= 511;
    }
    while e < -511 {
        x *= pow2(-511);
        e += 511;
    }
    x * pow2(e)
}

/// Quantizes a block of finite doubles to `mantissa_bits`-wide signed
/// mantissas under one shared exponent.
pub fn normalize(values: &[f64], mantissa_bits: u8) -> Result<NormalizedBlock> {
    if !(MIN_MANTISSA_BITS..=MAX_MANTISSA_BITS).contains(&mantissa_bits) {
        return Err(Error::MantissaWidth {
            bits: mantissa_bits,
        });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }

    let w = mantissa_bits as i32;
    let max_abs = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut shared_exponent = 0i32;
    if max_abs > 0.0 {
        // Smallest e with max_abs < 2^e.
        let mut e = max_abs.log2().ceil() as i32;
        while pow2(e) <= max_abs {
            e += 1;
        }
        while e > -1074 && pow2(e - 1) > max_abs {
            e -= 1;
        }
        // Only positive values can round up past the two's-complement top;
        // the most negative mantissa -2^(w-1) is representable.
        let max_positive = values.iter().fold(0.0f64, |acc, v| acc.max(*v));
        let top = scale_by_pow2(max_positive, w - 1 - e).round_ties_even();
        if top >= pow2(w - 1) {
            e += 1;
        }
        shared_exponent = e;
    }

    let mantissas = values
        .iter()
        .map(|&v| {
            let scaled = scale_by_pow2(v, w - 1 - shared_exponent);
            let rounded = scaled.round_ties_even();
            debug_assert!(rounded >= -pow2(w - 1) && rounded < pow2(w - 1));
            rounded as i64 as i32
        })
        .collect();

    Ok(NormalizedBlock {
        shared_exponent,
        mantissa_bits,
        mantissas,
    })
}

/// Maps a quantized block back to doubles. Exact: each output is a mantissa
/// times a power of two.
pub fn denormalize(block: &NormalizedBlock) -> Vec<f64> {
    let shift = block.shared_exponent - block.mantissa_bits as i32 + 1;
    block
        .mantissas
        .iter()
        .map(|&m| scale_by_pow2(m as f64, shift))
        .collect()
}

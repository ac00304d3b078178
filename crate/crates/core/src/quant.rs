//! Integer tensors and the requantization rule shared by the digital
//! reference and the macro path.
//!
//! Quantization is symmetric per tensor with a zero point of 0: the real value
//! of an element is `integer * scale`. Rounding is half-away-from-zero
//! everywhere, followed by saturation to the target range.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive integer range of a `bits`-wide value.
pub fn int_range(bits: u8, signed: bool) -> (i64, i64) {
    if signed {
        let half = 1i64 << (bits - 1);
        (-half, half - 1)
    } else {
        (0, (1i64 << bits) - 1)
    }
}

/// Round half away from zero.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    libm::round(x)
}

pub fn saturate(v: f64, bits: u8, signed: bool) -> i32 {
    let (lo, hi) = int_range(bits, signed);
    if v <= lo as f64 {
        lo as i32
    } else if v >= hi as f64 {
        hi as i32
    } else {
        v as i32
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::Scale(scale))
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if (1..=8).contains(&bits) {
        Ok(())
    } else {
        Err(Error::Shape(format!("bit-width {bits} outside 1..=8")))
    }
}

/// N-dimensional integer tensor with a declared precision and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantTensor")]
pub struct QuantTensor {
    shape: Vec<usize>,
    data: Vec<i32>,
    bits: u8,
    signed: bool,
    scale: f64,
}

#[derive(Deserialize)]
struct RawQuantTensor {
    shape: Vec<usize>,
    data: Vec<i32>,
    bits: u8,
    signed: bool,
    scale: f64,
}

impl TryFrom<RawQuantTensor> for QuantTensor {
    type Error = Error;

    fn try_from(r: RawQuantTensor) -> Result<Self> {
        QuantTensor::new(r.shape, r.data, r.bits, r.signed, r.scale)
    }
}

impl QuantTensor {
    pub fn new(shape: Vec<usize>, data: Vec<i32>, bits: u8, signed: bool, scale: f64) -> Result<Self> {
        check_bits(bits)?;
        check_scale(scale)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} elements but {} were given",
                shape,
                n,
                data.len()
            )));
        }
        let (lo, hi) = int_range(bits, signed);
        if let Some(&bad) = data.iter().find(|&&v| (v as i64) < lo || (v as i64) > hi) {
            return Err(Error::BitWidth { value: bad as i64, bits, signed });
        }
        Ok(Self { shape, data, bits, signed, scale })
    }

    pub fn zeros(shape: Vec<usize>, bits: u8, signed: bool, scale: f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, alloc::vec![0; n], bits, signed, scale)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64 * self.scale).collect()
    }

    /// Same values, reinterpreted as unsigned. Fails if any element is negative.
    pub(crate) fn into_unsigned(self) -> Result<Self> {
        if self.signed {
            if let Some(&bad) = self.data.iter().find(|&&v| v < 0) {
                return Err(Error::BitWidth { value: bad as i64, bits: self.bits, signed: false });
            }
        }
        Ok(Self { signed: false, ..self })
    }
}

/// Wide accumulator tensor produced by the integer reference kernels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccTensor {
    pub shape: Vec<usize>,
    pub data: Vec<i64>,
}

impl AccTensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: alloc::vec![0; n] }
    }
}

/// `saturate(round(acc * in_scale / out_scale))` elementwise.
pub fn requantize(acc: &AccTensor, in_scale: f64, out_scale: f64, out_bits: u8, signed: bool) -> Result<QuantTensor> {
    check_scale(in_scale)?;
    check_scale(out_scale)?;
    check_bits(out_bits)?;
    let data = acc
        .data
        .iter()
        .map(|&a| saturate(round_half_away(a as f64 * in_scale / out_scale), out_bits, signed))
        .collect();
    QuantTensor::new(acc.shape.clone(), data, out_bits, signed, out_scale)
}

/// Symmetric per-tensor quantization of real values: `scale = max|x| / qmax`.
/// An all-zero input gets scale 1.
pub fn quantize_symmetric(shape: Vec<usize>, values: &[f64], bits: u8) -> Result<QuantTensor> {
    check_bits(bits)?;
    let (_, qmax) = int_range(bits, true);
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    if !max_abs.is_finite() {
        return Err(Error::NonFinite("weights to quantize".into()));
    }
    let scale = if max_abs == 0.0 { 1.0 } else { max_abs / qmax.max(1) as f64 };
    let data = values.iter().map(|&v| saturate(round_half_away(v / scale), bits, true)).collect();
    QuantTensor::new(shape, data, bits, true, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn zero_accumulator_stays_zero() {
        let acc = AccTensor { shape: vec![3], data: vec![0, 0, 0] };
        for (si, so) in [(1.0, 1.0), (0.003, 17.0), (9.5, 0.01)] {
            let q = requantize(&acc, si, so, 8, true).unwrap();
            assert_eq!(q.data(), &[0, 0, 0]);
        }
    }

    #[test]
    fn saturates_at_signed_bound() {
        let acc = AccTensor { shape: vec![2], data: vec![300, -300] };
        let q = requantize(&acc, 1.0, 1.0, 8, true).unwrap();
        assert_eq!(q.data(), &[127, -128]);
    }

    #[test]
    fn rounds_half_away_from_zero() {
        let acc = AccTensor { shape: vec![4], data: vec![5, -5, 3, -3] };
        let q = requantize(&acc, 1.0, 2.0, 8, true).unwrap();
        assert_eq!(q.data(), &[3, -3, 2, -2]);
    }

    #[test]
    fn rejects_bad_scales() {
        let acc = AccTensor { shape: vec![1], data: vec![1] };
        assert!(matches!(requantize(&acc, 1.0, 0.0, 8, true), Err(Error::Scale(_))));
        assert!(matches!(requantize(&acc, -1.0, 1.0, 8, true), Err(Error::Scale(_))));
    }

    #[test]
    fn construction_checks_invariants() {
        assert!(QuantTensor::new(vec![2], vec![1], 8, true, 1.0).is_err());
        assert!(matches!(QuantTensor::new(vec![1], vec![128], 8, true, 1.0), Err(Error::BitWidth { .. })));
        assert!(matches!(QuantTensor::new(vec![1], vec![-1], 4, false, 1.0), Err(Error::BitWidth { .. })));
        assert!(QuantTensor::new(vec![1], vec![255], 8, false, 1.0).is_ok());
        assert!(QuantTensor::new(vec![1], vec![1], 8, false, 0.0).is_err());
    }

    #[test]
    fn symmetric_quantization_hits_qmax() {
        let q = quantize_symmetric(vec![3], &[0.5, -1.0, 0.25], 8).unwrap();
        assert_eq!(q.data(), &[64, -127, 32]);
        assert!((q.scale() - 1.0 / 127.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn requantize_is_monotone(a in -1_000_000i64..1_000_000, b in -1_000_000i64..1_000_000,
                                  si in 1e-4f64..10.0, so in 1e-4f64..10.0, bits in 1u8..=8, signed: bool) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let acc = AccTensor { shape: vec![2], data: vec![lo, hi] };
            let q = requantize(&acc, si, so, bits, signed).unwrap();
            prop_assert!(q.data()[0] <= q.data()[1]);
        }
    }
}

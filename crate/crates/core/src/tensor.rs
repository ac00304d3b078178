//! Real-valued tensors for training and weight generation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{quantize_symmetric, QuantTensor};
use crate::reference::QuantWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFloatTensor")]
pub struct FloatTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawFloatTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawFloatTensor> for FloatTensor {
    type Error = Error;

    fn try_from(r: RawFloatTensor) -> Result<Self> {
        FloatTensor::new(r.shape, r.data)
    }
}

/// Float weights keyed by layer name.
pub type FloatWeights = BTreeMap<String, FloatTensor>;

impl FloatTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {:?} holds {n} elements but {} were given", shape, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor of shape {shape:?}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }

    pub fn quantize(&self, bits: u8) -> Result<QuantTensor> {
        quantize_symmetric(self.shape.clone(), &self.data, bits)
    }

    pub fn from_quant(q: &QuantTensor) -> Self {
        Self { shape: q.shape().to_vec(), data: q.dequantize() }
    }

    /// Little-endian bytes of every element, for hashing.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Quantizes every tensor with the bit-width returned by `bits_of`.
pub fn quantize_weights<F>(weights: &FloatWeights, mut bits_of: F) -> Result<QuantWeights>
where
    F: FnMut(&str) -> Option<u8>,
{
    let mut out = QuantWeights::new();
    for (name, w) in weights {
        let bits = bits_of(name).ok_or_else(|| Error::UnknownLayer(name.clone()))?;
        out.insert(name.clone(), w.quantize(bits)?);
    }
    Ok(out)
}

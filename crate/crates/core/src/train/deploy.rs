use alloc::vec;
use alloc::vec::Vec;

use super::{Dataset, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::graph::{LayerKind, NetworkGraph, Source};
use crate::quant::{int_range, round_half_away, saturate, QuantTensor};
use crate::reference::QuantWeights;
use crate::tensor::{FloatTensor, FloatWeights};

/// A network ready for the integer path.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployed {
    pub net: NetworkGraph,
    pub weights: QuantWeights,
    /// Scale of the signed 8-bit network input.
    pub input_scale: f64,
}

fn requantizes(kind: LayerKind) -> bool {
    !matches!(kind, LayerKind::Relu | LayerKind::MaxPool)
}

/// Sets each requantizing layer's `out_scale` to the largest magnitude it
/// produces on `data`, divided by the top of its integer range. Returns the
/// network and the input scale.
pub fn calibrate(net: &NetworkGraph, weights: &FloatWeights, data: &Dataset) -> Result<(NetworkGraph, f64)> {
    if data.is_empty() {
        return Err(Error::Dataset("calibration set is empty".into()));
    }
    let state = TrainState::new(net.clone(), weights.clone(), TrainConfig::default())?;
    let info = net.analyze()?;
    let mut peak = vec![0.0f64; net.layers.len()];
    let mut input_peak = 0.0f64;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(64) {
        let (x, _) = data.batch(chunk)?;
        input_peak = input_peak.max(x.max_abs());
        for (p, y) in peak.iter_mut().zip(state.activations(&x)?) {
            *p = p.max(y.max_abs());
        }
    }
    let mut signed = vec![true; net.layers.len()];
    let mut out = net.clone();
    for (i, l) in out.layers.iter_mut().enumerate() {
        let src_signed = match info.sources[i][0] {
            Source::Input => true,
            Source::Layer(j) => signed[j],
        };
        signed[i] = match l.kind {
            LayerKind::Relu => false,
            LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::ResidualAdd => src_signed,
            _ => true,
        };
        if requantizes(l.kind) && peak[i] > 0.0 {
            let (_, qmax) = int_range(l.act_bits, signed[i]);
            l.out_scale = peak[i] / qmax as f64;
        }
    }
    let input_scale = if input_peak > 0.0 { input_peak / 127.0 } else { 1.0 };
    Ok((out, input_scale))
}

/// Calibrates scales on `data` and quantizes every weight tensor to its
/// layer's `weight_bits`.
pub fn deploy(net: &NetworkGraph, weights: &FloatWeights, data: &Dataset) -> Result<Deployed> {
    let (net, input_scale) = calibrate(net, weights, data)?;
    let mut q = QuantWeights::new();
    for l in net.parametric() {
        let w = weights.get(&l.name).ok_or_else(|| Error::MissingWeights(l.name.clone()))?;
        q.insert(l.name.clone(), w.quantize(l.weight_bits)?);
    }
    Ok(Deployed { net, weights: q, input_scale })
}

/// Rounds a float batch onto the signed 8-bit grid of `scale`.
pub fn quantize_input(x: &FloatTensor, scale: f64) -> Result<QuantTensor> {
    let data = x.data().iter().map(|v| saturate(round_half_away(v / scale), 8, true)).collect();
    QuantTensor::new(x.shape().to_vec(), data, 8, true, scale)
}

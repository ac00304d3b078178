//! Bit-exact digital reference for every layer kind.
//!
//! Parametric layers produce wide integer accumulators which are requantized
//! to the layer's `act_bits` and `out_scale`. Signedness follows one rule:
//! ReLU outputs are unsigned, convolutions and fully-connected layers are
//! signed, and pooling and residual adds keep the signedness of their (first)
//! input.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{GraphInfo, LayerKind, LayerSpec, NetworkGraph, Source};
use crate::quant::{requantize, round_half_away, saturate, AccTensor, QuantTensor};

/// Quantized weights keyed by layer name.
pub type QuantWeights = BTreeMap<String, QuantTensor>;

fn check_weight_bits(weights: &QuantTensor, layer: &LayerSpec) -> Result<()> {
    if weights.bits() > layer.weight_bits {
        return Err(Error::BitWidth {
            value: weights.bits() as i64,
            bits: layer.weight_bits,
            signed: weights.signed(),
        });
    }
    if weights.shape() != layer.weight_shape().as_slice() {
        return Err(Error::Shape(format!(
            "`{}` needs weights {:?}, got {:?}",
            layer.name,
            layer.weight_shape(),
            weights.shape()
        )));
    }
    Ok(())
}

fn nchw(t: &QuantTensor) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::Shape(format!("expected an NCHW tensor, got shape {:?}", t.shape()))),
    }
}

fn out_dim(size: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = size + 2 * pad;
    if padded < kernel || stride == 0 {
        return Err(Error::Shape(format!("kernel {kernel} does not fit size {size} with pad {pad}")));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Exact integer convolution (also covers pointwise layers).
pub fn conv2d_ref(input: &QuantTensor, weights: &QuantTensor, layer: &LayerSpec) -> Result<AccTensor> {
    if !layer.kind.is_conv() {
        return Err(Error::Shape(format!("`{}` is not a convolution", layer.name)));
    }
    check_weight_bits(weights, layer)?;
    let [n, c, h, w] = nchw(input)?;
    if c != layer.in_ch {
        return Err(Error::Shape(format!("`{}` expects {} channels, input has {c}", layer.name, layer.in_ch)));
    }
    let (k, s, p) = (layer.kernel, layer.stride, layer.pad as isize);
    let oh = out_dim(h, k, s, layer.pad)?;
    let ow = out_dim(w, k, s, layer.pad)?;
    let o = layer.out_ch;
    let x = input.data();
    let wt = weights.data();
    let mut out = AccTensor::zeros(vec![n, o, oh, ow]);
    for b in 0..n {
        for oc in 0..o {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc: i64 = 0;
                    for ic in 0..c {
                        for ky in 0..k {
                            let iy = (y * s + ky) as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = ((b * c + ic) * h + iy as usize) * w;
                            let wrow = ((oc * c + ic) * k + ky) * k;
                            for kx in 0..k {
                                let ix = (xo * s + kx) as isize - p;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += x[row + ix as usize] as i64 * wt[wrow + kx] as i64;
                            }
                        }
                    }
                    out.data[((b * o + oc) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Fully-connected layer over the flattened per-sample input. Output shape is
/// `[N, out, 1, 1]`.
pub fn fc_ref(input: &QuantTensor, weights: &QuantTensor, layer: &LayerSpec) -> Result<AccTensor> {
    check_weight_bits(weights, layer)?;
    let n = *input.shape().first().ok_or_else(|| Error::Shape("empty input shape".into()))?;
    let features = if n == 0 { 0 } else { input.len() / n };
    if features != layer.in_ch {
        return Err(Error::Shape(format!("`{}` expects {} features, input has {features}", layer.name, layer.in_ch)));
    }
    let o = layer.out_ch;
    let mut out = AccTensor::zeros(vec![n, o, 1, 1]);
    for b in 0..n {
        let xs = &input.data()[b * features..(b + 1) * features];
        for oc in 0..o {
            let ws = &weights.data()[oc * features..(oc + 1) * features];
            out.data[b * o + oc] = xs.iter().zip(ws).map(|(&a, &w)| a as i64 * w as i64).sum();
        }
    }
    Ok(out)
}

pub fn relu_ref(input: &QuantTensor) -> Result<QuantTensor> {
    let data = input.data().iter().map(|&v| v.max(0)).collect();
    QuantTensor::new(input.shape().to_vec(), data, input.bits(), input.signed(), input.scale())?.into_unsigned()
}

pub fn max_pool_ref(input: &QuantTensor, layer: &LayerSpec) -> Result<QuantTensor> {
    let [n, c, h, w] = nchw(input)?;
    let (k, s, p) = (layer.kernel, layer.stride, layer.pad as isize);
    let oh = out_dim(h, k, s, layer.pad)?;
    let ow = out_dim(w, k, s, layer.pad)?;
    let x = input.data();
    let mut data = vec![0; n * c * oh * ow];
    for plane in 0..n * c {
        for y in 0..oh {
            for xo in 0..ow {
                let mut best: Option<i32> = None;
                for ky in 0..k {
                    let iy = (y * s + ky) as isize - p;
                    for kx in 0..k {
                        let ix = (xo * s + kx) as isize - p;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        let v = x[(plane * h + iy as usize) * w + ix as usize];
                        best = Some(best.map_or(v, |b| b.max(v)));
                    }
                }
                data[(plane * oh + y) * ow + xo] = best.unwrap_or(0);
            }
        }
    }
    QuantTensor::new(vec![n, c, oh, ow], data, input.bits(), input.signed(), input.scale())
}

/// Window sum divided by kernel² (padding counts as zeros), requantized.
pub fn avg_pool_ref(input: &QuantTensor, layer: &LayerSpec) -> Result<QuantTensor> {
    let [n, c, h, w] = nchw(input)?;
    let (k, s, p) = (layer.kernel, layer.stride, layer.pad as isize);
    let oh = out_dim(h, k, s, layer.pad)?;
    let ow = out_dim(w, k, s, layer.pad)?;
    let x = input.data();
    let mut acc = AccTensor::zeros(vec![n, c, oh, ow]);
    for plane in 0..n * c {
        for y in 0..oh {
            for xo in 0..ow {
                let mut sum = 0i64;
                for ky in 0..k {
                    let iy = (y * s + ky) as isize - p;
                    for kx in 0..k {
                        let ix = (xo * s + kx) as isize - p;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        sum += x[(plane * h + iy as usize) * w + ix as usize] as i64;
                    }
                }
                acc.data[(plane * oh + y) * ow + xo] = sum;
            }
        }
    }
    requantize(&acc, input.scale() / (k * k) as f64, layer.out_scale, layer.act_bits, input.signed())
}

/// `saturate(round((a·sa + b·sb) / out_scale))` in the signedness of `a`.
pub fn residual_add_ref(a: &QuantTensor, b: &QuantTensor, layer: &LayerSpec) -> Result<QuantTensor> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("`{}` adds {:?} and {:?}", layer.name, a.shape(), b.shape())));
    }
    let (sa, sb, so) = (a.scale(), b.scale(), layer.out_scale);
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| saturate(round_half_away((x as f64 * sa + y as f64 * sb) / so), layer.act_bits, a.signed()))
        .collect();
    QuantTensor::new(a.shape().to_vec(), data, layer.act_bits, a.signed(), so)
}

/// Runs one layer on already-computed inputs.
pub fn layer_ref(layer: &LayerSpec, inputs: &[&QuantTensor], weights: Option<&QuantTensor>) -> Result<QuantTensor> {
    let x = inputs[0];
    match layer.kind {
        LayerKind::Conv2d | LayerKind::Pointwise | LayerKind::FullyConnected => {
            let w = weights.ok_or_else(|| Error::MissingWeights(layer.name.clone()))?;
            let acc = if layer.kind == LayerKind::FullyConnected {
                fc_ref(x, w, layer)?
            } else {
                conv2d_ref(x, w, layer)?
            };
            requantize(&acc, x.scale() * w.scale(), layer.out_scale, layer.act_bits, true)
        }
        LayerKind::Relu => relu_ref(x),
        LayerKind::MaxPool => max_pool_ref(x, layer),
        LayerKind::AvgPool => avg_pool_ref(x, layer),
        LayerKind::ResidualAdd => residual_add_ref(x, inputs[1], layer),
    }
}

fn check_input(net: &NetworkGraph, input: &QuantTensor) -> Result<()> {
    let [_, c, h, w] = nchw(input)?;
    if [c, h, w] != net.input_shape {
        return Err(Error::Shape(format!("network expects input {:?}, got {:?}", net.input_shape, [c, h, w])));
    }
    Ok(())
}

/// Runs the whole network and returns every layer's output, in layer order.
pub fn forward_ref_all(net: &NetworkGraph, input: &QuantTensor, weights: &QuantWeights) -> Result<Vec<QuantTensor>> {
    let info = net.analyze()?;
    forward_with(net, &info, input, |layer, ins| layer_ref(layer, ins, weights.get(&layer.name)))
}

/// Runs the whole network and returns the last layer's output.
pub fn forward_ref(net: &NetworkGraph, input: &QuantTensor, weights: &QuantWeights) -> Result<QuantTensor> {
    let mut outs = forward_ref_all(net, input, weights)?;
    Ok(outs.pop().expect("analyze rejects empty networks"))
}

/// Shared driver: evaluates layers in order with a caller-supplied kernel.
pub(crate) fn forward_with<F>(net: &NetworkGraph, info: &GraphInfo, input: &QuantTensor, mut eval: F) -> Result<Vec<QuantTensor>>
where
    F: FnMut(&LayerSpec, &[&QuantTensor]) -> Result<QuantTensor>,
{
    check_input(net, input)?;
    let mut outs: Vec<QuantTensor> = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let ins: Vec<&QuantTensor> = info.sources[i]
            .iter()
            .map(|s| match s {
                Source::Input => input,
                Source::Layer(j) => &outs[*j],
            })
            .collect();
        let out = eval(layer, &ins)?;
        outs.push(out);
    }
    Ok(outs)
}

/// Checks that every parametric layer has weights of the right shape.
pub fn check_weights(net: &NetworkGraph, weights: &QuantWeights) -> Result<()> {
    for l in net.parametric() {
        let w = weights.get(&l.name).ok_or_else(|| Error::MissingWeights(l.name.clone()))?;
        check_weight_bits(w, l)?;
    }
    Ok(())
}

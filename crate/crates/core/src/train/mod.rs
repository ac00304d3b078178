//! Float training of the trainable subset of a network.
//!
//! Every parametric layer carries float weights; only layers marked
//! `trainable` receive gradients and updates. Input gradients still flow
//! through frozen layers so a trainable layer early in the network can learn.

mod data;
mod deploy;
pub mod ops;
mod transfer;

pub use data::{Dataset, TransferTask, TransferTaskConfig};
pub use deploy::{calibrate, deploy, quantize_input, Deployed};
pub use transfer::{he_init, run_transfer, transfer_network, MethodResult, TransferConfig, TransferReport};

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{GraphInfo, LayerKind, NetworkGraph, Source};
use crate::rng::derived;
use crate::tensor::{FloatTensor, FloatWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, batch_size: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    net: NetworkGraph,
    info: GraphInfo,
    weights: FloatWeights,
    velocity: FloatWeights,
    trainable: BTreeSet<String>,
    /// Layers whose output gradient must be computed.
    needs_grad: Vec<bool>,
    pub config: TrainConfig,
    pub step: u64,
}

/// Loss, gradients and hit count for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub loss: f64,
    pub grads: FloatWeights,
    pub correct: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub acc: f64,
}

/// Cached forward values needed by the backward pass.
enum Saved {
    None,
    Argmax(Vec<Option<usize>>),
}

impl TrainState {
    pub fn new(net: NetworkGraph, weights: FloatWeights, config: TrainConfig) -> Result<Self> {
        let info = net.analyze()?;
        if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::NonFinite(format!("learning rate {}", config.learning_rate)));
        }
        if config.batch_size == 0 {
            return Err(Error::Dataset("batch size must be positive".into()));
        }
        for l in net.parametric() {
            let w = weights.get(&l.name).ok_or_else(|| Error::MissingWeights(l.name.clone()))?;
            if w.shape() != l.weight_shape().as_slice() {
                return Err(Error::Shape(format!(
                    "`{}` needs weights {:?}, got {:?}",
                    l.name,
                    l.weight_shape(),
                    w.shape()
                )));
            }
        }
        let trainable: BTreeSet<String> =
            net.parametric().filter(|l| l.trainable).map(|l| l.name.clone()).collect();
        let mut needs_grad = vec![false; net.layers.len()];
        for (i, l) in net.layers.iter().enumerate() {
            let upstream = info.sources[i].iter().any(|s| matches!(s, Source::Layer(j) if needs_grad[*j]));
            needs_grad[i] = upstream || trainable.contains(&l.name);
        }
        let velocity = trainable.iter().map(|n| (n.clone(), FloatTensor::zeros(weights[n].shape().to_vec()))).collect();
        // Keep only weights the network uses.
        let weights = weights.into_iter().filter(|(n, _)| net.index_of(n).is_some()).collect();
        Ok(Self { net, info, weights, velocity, trainable, needs_grad, config, step: 0 })
    }

    pub fn net(&self) -> &NetworkGraph {
        &self.net
    }

    pub fn weights(&self) -> &FloatWeights {
        &self.weights
    }

    pub fn trainable(&self) -> &BTreeSet<String> {
        &self.trainable
    }

    pub fn into_parts(self) -> (NetworkGraph, FloatWeights) {
        (self.net, self.weights)
    }

    /// SHA-256 over the names and bytes of every frozen layer's weights.
    pub fn frozen_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, w) in &self.weights {
            if !self.trainable.contains(name) {
                h.update(name.as_bytes());
                h.update([0]);
                h.update(w.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    fn forward_all(&self, x: &FloatTensor) -> Result<(Vec<FloatTensor>, Vec<Saved>)> {
        let expect = self.net.input_shape;
        if x.shape().len() != 4 || x.shape()[1..] != expect[..] {
            return Err(Error::Shape(format!("network expects [N, {:?}] input, got {:?}", expect, x.shape())));
        }
        let mut outs: Vec<FloatTensor> = Vec::with_capacity(self.net.layers.len());
        let mut saved = Vec::with_capacity(self.net.layers.len());
        for (i, l) in self.net.layers.iter().enumerate() {
            let src = |k: usize| match self.info.sources[i][k] {
                Source::Input => x,
                Source::Layer(j) => &outs[j],
            };
            let (y, s) = match l.kind {
                LayerKind::Conv2d | LayerKind::Pointwise => (ops::conv_forward(src(0), &self.weights[&l.name], l), Saved::None),
                LayerKind::FullyConnected => (ops::fc_forward(src(0), &self.weights[&l.name], l), Saved::None),
                LayerKind::Relu => (ops::relu_forward(src(0)), Saved::None),
                LayerKind::MaxPool => {
                    let (y, arg) = ops::max_pool_forward(src(0), l);
                    (y, Saved::Argmax(arg))
                }
                LayerKind::AvgPool => (ops::avg_pool_forward(src(0), l), Saved::None),
                LayerKind::ResidualAdd => (ops::add_forward(src(0), src(1)), Saved::None),
            };
            outs.push(y);
            saved.push(s);
        }
        Ok((outs, saved))
    }

    /// Every layer's float output for a batch.
    pub fn activations(&self, x: &FloatTensor) -> Result<Vec<FloatTensor>> {
        Ok(self.forward_all(x)?.0)
    }

    /// Final-layer outputs flattened to `[N, K]`.
    pub fn logits(&self, x: &FloatTensor) -> Result<(Vec<f64>, usize)> {
        let mut outs = self.forward_all(x)?.0;
        let last = outs.pop().expect("analyze rejects empty networks");
        let n = last.shape()[0];
        let k = if n == 0 { 0 } else { last.len() / n };
        Ok((last.data().to_vec(), k))
    }

    /// Mean softmax cross-entropy and gradients for the trainable layers.
    pub fn forward_backward(&self, x: &FloatTensor, labels: &[usize]) -> Result<BatchResult> {
        let (outs, saved) = self.forward_all(x)?;
        let last = outs.last().expect("nonempty");
        let n = last.shape()[0];
        if labels.len() != n || n == 0 {
            return Err(Error::Dataset(format!("{} labels for a batch of {n}", labels.len())));
        }
        let k = last.len() / n;
        if let Some(&bad) = labels.iter().find(|&&c| c >= k) {
            return Err(Error::Dataset(format!("label {bad} outside {k} classes")));
        }
        let (loss, g, correct) = ops::softmax_xent(last.data(), k, labels);
        if !loss.is_finite() {
            let peak = last.max_abs();
            return Err(Error::NonFinite(format!("loss {loss} at step {} (largest |logit| {peak:e})", self.step)));
        }

        let nl = self.net.layers.len();
        let mut grads_out: Vec<Option<FloatTensor>> = vec![None; nl];
        let mut gl = FloatTensor::zeros(last.shape().to_vec());
        gl.data_mut().copy_from_slice(&g);
        grads_out[nl - 1] = Some(gl);
        let mut grads = FloatWeights::new();
        for i in (0..nl).rev() {
            if !self.needs_grad[i] {
                continue;
            }
            let Some(gy) = grads_out[i].take() else { continue };
            let l = &self.net.layers[i];
            let srcs = &self.info.sources[i];
            let input = |k: usize| match srcs[k] {
                Source::Input => x,
                Source::Layer(j) => &outs[j],
            };
            let want_dx = |k: usize| matches!(srcs[k], Source::Layer(j) if self.needs_grad[j]);
            let mut dxs: Vec<(usize, FloatTensor)> = Vec::new();
            match l.kind {
                LayerKind::Conv2d | LayerKind::Pointwise | LayerKind::FullyConnected => {
                    let w = &self.weights[&l.name];
                    let train = self.trainable.contains(&l.name);
                    let (dw, dx) = if l.kind == LayerKind::FullyConnected {
                        ops::fc_backward(input(0), w, &gy, l, train, want_dx(0))
                    } else {
                        ops::conv_backward(input(0), w, &gy, l, train, want_dx(0))
                    };
                    if let Some(dw) = dw {
                        grads.insert(l.name.clone(), dw);
                    }
                    if let Some(dx) = dx {
                        dxs.push((0, dx));
                    }
                }
                LayerKind::Relu => {
                    if want_dx(0) {
                        dxs.push((0, ops::relu_backward(input(0), &gy)));
                    }
                }
                LayerKind::MaxPool => {
                    if let (true, Saved::Argmax(arg)) = (want_dx(0), &saved[i]) {
                        dxs.push((0, ops::max_pool_backward(input(0), arg, &gy)));
                    }
                }
                LayerKind::AvgPool => {
                    if want_dx(0) {
                        dxs.push((0, ops::avg_pool_backward(input(0), &gy, l)));
                    }
                }
                LayerKind::ResidualAdd => {
                    for k in 0..2 {
                        if want_dx(k) {
                            dxs.push((k, gy.clone()));
                        }
                    }
                }
            }
            for (k, dx) in dxs {
                let Source::Layer(j) = srcs[k] else { continue };
                match grads_out[j].as_mut() {
                    Some(acc) => acc.data_mut().iter_mut().zip(dx.data()).for_each(|(a, d)| *a += d),
                    None => grads_out[j] = Some(dx),
                }
            }
        }
        // Trainable layers the loss does not reach get zero gradients.
        for name in &self.trainable {
            if !grads.contains_key(name) {
                grads.insert(name.clone(), FloatTensor::zeros(self.weights[name].shape().to_vec()));
            }
        }
        Ok(BatchResult { loss, grads, correct })
    }

    /// `v ← μv + g; w ← w − lr·v` on exactly the trainable set.
    pub fn sgd_step(&mut self, grads: &FloatWeights) -> Result<()> {
        let keys: BTreeSet<&String> = grads.keys().collect();
        if keys.len() != self.trainable.len() || !self.trainable.iter().all(|n| keys.contains(n)) {
            return Err(Error::GradientSet(format!(
                "gradients for {:?}, trainable layers are {:?}",
                keys,
                self.trainable
            )));
        }
        let (lr, mu) = (self.config.learning_rate, self.config.momentum);
        for (name, g) in grads {
            if g.shape() != self.weights[name].shape() {
                return Err(Error::GradientSet(format!("gradient for `{name}` has shape {:?}", g.shape())));
            }
            let v = self.velocity.get_mut(name).expect("velocity per trainable layer");
            let w = self.weights.get_mut(name).expect("weights per trainable layer");
            for ((vi, wi), gi) in v.data_mut().iter_mut().zip(w.data_mut().iter_mut()).zip(g.data()) {
                *vi = mu * *vi + gi;
                *wi -= lr * *vi;
            }
        }
        self.step += 1;
        Ok(())
    }

    /// Mean loss and accuracy over a dataset without updating anything.
    pub fn evaluate(&self, data: &Dataset) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Err(Error::Dataset("dataset is empty".into()));
        }
        let mut loss = 0.0;
        let mut correct = 0;
        let idx: Vec<usize> = (0..data.len()).collect();
        for chunk in idx.chunks(self.config.batch_size.max(64)) {
            let (x, y) = data.batch(chunk)?;
            let (logits, k) = self.logits(&x)?;
            let (l, _, c) = ops::softmax_xent(&logits, k, &y);
            loss += l * chunk.len() as f64;
            correct += c;
        }
        Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
    }

    /// Mini-batch SGD for `epochs` passes. The curve holds the mean training
    /// loss and the training accuracy seen during each epoch. Training aborts
    /// once the epoch loss exceeds ten times the initial loss three epochs
    /// running.
    pub fn fine_tune(&mut self, data: &Dataset, epochs: usize) -> Result<Vec<EpochRecord>> {
        if data.is_empty() {
            return Err(Error::Dataset("dataset is empty".into()));
        }
        if epochs == 0 {
            return Ok(Vec::new());
        }
        let frozen = self.frozen_digest();
        let (initial, _) = self.evaluate(data)?;
        let mut curve = Vec::with_capacity(epochs);
        let mut bad_run = 0;
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 1..=epochs {
            let mut rng = derived(self.config.seed, &format!("epoch-{epoch}"));
            order.shuffle(&mut rng);
            let (mut loss, mut correct) = (0.0, 0);
            for chunk in order.chunks(self.config.batch_size) {
                let (x, y) = data.batch(chunk)?;
                let r = self.forward_backward(&x, &y)?;
                loss += r.loss * chunk.len() as f64;
                correct += r.correct;
                self.sgd_step(&r.grads)?;
            }
            let rec = EpochRecord { epoch, loss: loss / data.len() as f64, acc: correct as f64 / data.len() as f64 };
            curve.push(rec);
            bad_run = if rec.loss > 10.0 * initial { bad_run + 1 } else { 0 };
            if bad_run >= 3 {
                return Err(Error::Diverged { epoch, loss: rec.loss, initial });
            }
        }
        if self.frozen_digest() != frozen {
            return Err(Error::GradientSet("frozen weights changed during training".into()));
        }
        Ok(curve)
    }
}

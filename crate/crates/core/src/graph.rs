//! Layer descriptions and network graphs.
//!
//! A [`NetworkGraph`] is an ordered list of layers. Each layer names its
//! inputs; an empty input list means "the previous layer" (or the network
//! input for the first layer). Inputs must refer to layers that appear earlier
//! in the list, so list order is always a valid execution order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name under which layers refer to the network input.
pub const INPUT: &str = "input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    /// 1x1 convolution.
    Pointwise,
    Relu,
    MaxPool,
    AvgPool,
    ResidualAdd,
    FullyConnected,
}

impl LayerKind {
    pub fn is_parametric(self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::Pointwise | LayerKind::FullyConnected)
    }

    pub fn is_conv(self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::Pointwise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Rom,
    Sram,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Rom => "rom",
            Placement::Sram => "sram",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Rebranch,
    Spwd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchRole {
    Compress,
    ResConv,
    Decompress,
    Decoration,
    Merge,
}

/// Marks a layer inserted by a graph transform. Layers without an origin make
/// up the base workload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub transform: TransformKind,
    pub role: BranchRole,
    /// Last layer of the trunk this branch belongs to.
    pub trunk: String,
}

fn default_one() -> usize {
    1
}

fn default_bits() -> u8 {
    8
}

fn default_scale() -> f64 {
    1.0
}

fn is_default_one(v: &usize) -> bool {
    *v == 1
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub in_ch: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub out_ch: usize,
    #[serde(default = "default_one", skip_serializing_if = "is_default_one")]
    pub kernel: usize,
    #[serde(default = "default_one", skip_serializing_if = "is_default_one")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub pad: usize,
    #[serde(default = "default_bits")]
    pub weight_bits: u8,
    #[serde(default = "default_bits")]
    pub act_bits: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub trainable: bool,
    /// Output activation scale used when this layer requantizes.
    #[serde(default = "default_scale")]
    pub out_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl LayerSpec {
    fn bare(name: &str, kind: LayerKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            inputs: Vec::new(),
            in_ch: 0,
            out_ch: 0,
            kernel: 1,
            stride: 1,
            pad: 0,
            weight_bits: 8,
            act_bits: 8,
            placement: None,
            trainable: false,
            out_scale: 1.0,
            origin: None,
        }
    }

    pub fn conv(name: &str, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        let kind = if kernel == 1 && pad == 0 { LayerKind::Pointwise } else { LayerKind::Conv2d };
        Self { in_ch, out_ch, kernel, stride, pad, ..Self::bare(name, kind) }
    }

    pub fn pointwise(name: &str, in_ch: usize, out_ch: usize) -> Self {
        Self { in_ch, out_ch, ..Self::bare(name, LayerKind::Pointwise) }
    }

    pub fn fc(name: &str, in_features: usize, out_features: usize) -> Self {
        Self { in_ch: in_features, out_ch: out_features, ..Self::bare(name, LayerKind::FullyConnected) }
    }

    pub fn relu(name: &str) -> Self {
        Self::bare(name, LayerKind::Relu)
    }

    pub fn max_pool(name: &str, kernel: usize, stride: usize) -> Self {
        Self { kernel, stride, ..Self::bare(name, LayerKind::MaxPool) }
    }

    pub fn avg_pool(name: &str, kernel: usize, stride: usize) -> Self {
        Self { kernel, stride, ..Self::bare(name, LayerKind::AvgPool) }
    }

    pub fn add(name: &str, a: &str, b: &str) -> Self {
        Self { inputs: vec![a.to_string(), b.to_string()], ..Self::bare(name, LayerKind::ResidualAdd) }
    }

    pub fn with_inputs(mut self, inputs: &[&str]) -> Self {
        self.inputs = inputs.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn placed(mut self, placement: Placement, trainable: bool) -> Self {
        self.placement = Some(placement);
        self.trainable = trainable;
        self
    }

    pub fn with_scale(mut self, out_scale: f64) -> Self {
        self.out_scale = out_scale;
        self
    }

    /// Number of weights, 0 for non-parametric layers.
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv2d | LayerKind::Pointwise => self.out_ch * self.in_ch * self.kernel * self.kernel,
            LayerKind::FullyConnected => self.out_ch * self.in_ch,
            _ => 0,
        }
    }

    /// Shape of the weight tensor: `[out, in, k, k]` for convolutions and
    /// `[out, in]` for fully-connected layers.
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv2d | LayerKind::Pointwise => vec![self.out_ch, self.in_ch, self.kernel, self.kernel],
            LayerKind::FullyConnected => vec![self.out_ch, self.in_ch],
            _ => Vec::new(),
        }
    }

    /// Rows of the lowered weight matrix (kernel² × in_ch for convolutions).
    pub fn matrix_rows(&self) -> usize {
        match self.kind {
            LayerKind::Conv2d | LayerKind::Pointwise => self.kernel * self.kernel * self.in_ch,
            LayerKind::FullyConnected => self.in_ch,
            _ => 0,
        }
    }

    pub fn is_branch(&self) -> bool {
        self.origin.is_some()
    }
}

/// Per-sample activation shape `[channels, height, width]`.
pub type Shape3 = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Layer(usize),
}

/// Result of validating a graph: resolved input edges and output shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInfo {
    pub sources: Vec<Vec<Source>>,
    pub in_shapes: Vec<Vec<Shape3>>,
    pub out_shapes: Vec<Shape3>,
}

impl GraphInfo {
    /// Output positions (H × W) of layer `i`, i.e. matrix-vector products per
    /// sample for a parametric layer.
    pub fn positions(&self, i: usize) -> usize {
        let [_, h, w] = self.out_shapes[i];
        h * w
    }

    pub fn macs(&self, net: &NetworkGraph, i: usize) -> u64 {
        let l = &net.layers[i];
        if !l.kind.is_parametric() {
            return 0;
        }
        (self.positions(i) * l.matrix_rows() * l.out_ch) as u64
    }

    /// Indices of layers that consume the output of layer `i`.
    pub fn consumers(&self, i: usize) -> Vec<usize> {
        self.sources
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(&Source::Layer(i)))
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkGraph {
    #[serde(default)]
    pub name: String,
    pub input_shape: Shape3,
    pub layers: Vec<LayerSpec>,
}

fn conv_out(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if padded < kernel || stride == 0 {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

impl NetworkGraph {
    pub fn new(name: &str, input_shape: Shape3, layers: Vec<LayerSpec>) -> Self {
        Self { name: name.to_string(), input_shape, layers }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn layer(&self, name: &str) -> Result<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name).ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn parametric(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.kind.is_parametric())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Checks every structural invariant and infers shapes.
    pub fn analyze(&self) -> Result<GraphInfo> {
        let bad = |msg: String| Err(Error::Network(msg));
        if self.layers.is_empty() {
            return bad("network has no layers".into());
        }
        if self.input_shape.iter().any(|&d| d == 0) {
            return bad(format!("input shape {:?} has a zero dimension", self.input_shape));
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut sources = Vec::with_capacity(self.layers.len());
        let mut in_shapes = Vec::with_capacity(self.layers.len());
        let mut out_shapes: Vec<Shape3> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            if l.name.is_empty() || l.name == INPUT {
                return bad(format!("layer {i} has reserved or empty name `{}`", l.name));
            }
            if index.contains_key(l.name.as_str()) {
                return bad(format!("duplicate layer name `{}`", l.name));
            }
            if l.placement == Some(Placement::Rom) && l.trainable {
                return bad(format!("`{}` is ROM-placed but marked trainable", l.name));
            }
            if !(1..=8).contains(&l.weight_bits) || !(1..=8).contains(&l.act_bits) {
                return bad(format!("`{}` has bit-widths outside 1..=8", l.name));
            }
            if !(l.out_scale > 0.0 && l.out_scale.is_finite()) {
                return bad(format!("`{}` has non-positive out_scale {}", l.name, l.out_scale));
            }
            let srcs: Vec<Source> = if l.inputs.is_empty() {
                vec![if i == 0 { Source::Input } else { Source::Layer(i - 1) }]
            } else {
                let mut v = Vec::with_capacity(l.inputs.len());
                for name in &l.inputs {
                    if name == INPUT {
                        v.push(Source::Input);
                    } else if let Some(&j) = index.get(name.as_str()) {
                        v.push(Source::Layer(j));
                    } else {
                        return bad(format!("`{}` reads `{name}`, which is not an earlier layer", l.name));
                    }
                }
                v
            };
            let expected = if l.kind == LayerKind::ResidualAdd { 2 } else { 1 };
            if srcs.len() != expected {
                return bad(format!("`{}` takes {expected} input(s), got {}", l.name, srcs.len()));
            }
            let ins: Vec<Shape3> = srcs
                .iter()
                .map(|s| match s {
                    Source::Input => self.input_shape,
                    Source::Layer(j) => out_shapes[*j],
                })
                .collect();
            let [c, h, w] = ins[0];
            let out = match l.kind {
                LayerKind::Conv2d | LayerKind::Pointwise => {
                    if l.kind == LayerKind::Pointwise && (l.kernel != 1 || l.pad != 0) {
                        return bad(format!("pointwise `{}` must have kernel 1 and pad 0", l.name));
                    }
                    if l.in_ch != c {
                        return bad(format!("`{}` expects {} input channels, gets {c}", l.name, l.in_ch));
                    }
                    if l.out_ch == 0 || l.kernel == 0 {
                        return bad(format!("`{}` has zero output channels or kernel", l.name));
                    }
                    match (conv_out(h, l.kernel, l.stride, l.pad), conv_out(w, l.kernel, l.stride, l.pad)) {
                        (Some(oh), Some(ow)) => [l.out_ch, oh, ow],
                        _ => return bad(format!("`{}` kernel does not fit its {h}x{w} input", l.name)),
                    }
                }
                LayerKind::FullyConnected => {
                    if l.in_ch != c * h * w {
                        return bad(format!("`{}` expects {} input features, gets {}", l.name, l.in_ch, c * h * w));
                    }
                    if l.out_ch == 0 {
                        return bad(format!("`{}` has zero outputs", l.name));
                    }
                    [l.out_ch, 1, 1]
                }
                LayerKind::MaxPool | LayerKind::AvgPool => {
                    if l.kernel == 0 {
                        return bad(format!("`{}` has zero kernel", l.name));
                    }
                    match (conv_out(h, l.kernel, l.stride, l.pad), conv_out(w, l.kernel, l.stride, l.pad)) {
                        (Some(oh), Some(ow)) => [c, oh, ow],
                        _ => return bad(format!("`{}` window does not fit its {h}x{w} input", l.name)),
                    }
                }
                LayerKind::Relu => ins[0],
                LayerKind::ResidualAdd => {
                    if ins[0] != ins[1] {
                        return bad(format!("`{}` adds mismatched shapes {:?} and {:?}", l.name, ins[0], ins[1]));
                    }
                    ins[0]
                }
            };
            if !l.kind.is_parametric() {
                if l.in_ch != 0 && l.in_ch != c {
                    return bad(format!("`{}` declares {} channels, gets {c}", l.name, l.in_ch));
                }
                if l.out_ch != 0 && l.out_ch != out[0] {
                    return bad(format!("`{}` declares {} output channels, produces {}", l.name, l.out_ch, out[0]));
                }
            }
            index.insert(l.name.as_str(), i);
            sources.push(srcs);
            in_shapes.push(ins);
            out_shapes.push(out);
        }
        Ok(GraphInfo { sources, in_shapes, out_shapes })
    }

    /// Replaces implicit "previous layer" inputs with explicit names, which
    /// keeps edges stable when layers are inserted.
    pub fn with_explicit_inputs(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.layers.len() {
            if out.layers[i].inputs.is_empty() {
                let prev = if i == 0 { INPUT.to_string() } else { out.layers[i - 1].name.clone() };
                out.layers[i].inputs = vec![prev];
            }
        }
        out
    }

    /// The network with every transform-inserted layer removed and the
    /// original edges restored.
    pub fn base(&self) -> Self {
        let explicit = self.with_explicit_inputs();
        let mut rename: BTreeMap<String, String> = BTreeMap::new();
        for l in &explicit.layers {
            if let Some(o) = &l.origin {
                if matches!(o.role, BranchRole::Merge) {
                    // The merge's first input is the trunk path.
                    rename.insert(l.name.clone(), l.inputs[0].clone());
                }
            }
        }
        let resolve = |mut n: String| {
            while let Some(r) = rename.get(&n) {
                n = r.clone();
            }
            n
        };
        let layers = explicit
            .layers
            .into_iter()
            .filter(|l| l.origin.is_none())
            .map(|mut l| {
                l.inputs = l.inputs.into_iter().map(&resolve).collect();
                l
            })
            .collect();
        Self { name: self.name.clone(), input_shape: self.input_shape, layers }
    }

    /// Fingerprint of the base workload: geometry and edges of the layers not
    /// inserted by transforms. Placement, trainability and scales are ignored.
    pub fn workload_digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let base = self.base();
        let mut h = Sha256::new();
        h.update(b"workload-v1");
        for d in base.input_shape {
            h.update((d as u64).to_le_bytes());
        }
        for l in &base.layers {
            h.update(l.name.as_bytes());
            h.update([0u8, l.kind as u8]);
            for d in [l.in_ch, l.out_ch, l.kernel, l.stride, l.pad] {
                h.update((d as u64).to_le_bytes());
            }
            h.update([l.weight_bits, l.act_bits]);
            for i in &l.inputs {
                h.update(i.as_bytes());
                h.update([0xff]);
            }
        }
        h.finalize().into()
    }
}

/// Transitive reachability between layers: `reach[a][b]` iff `b` depends on `a`.
pub fn reachability(info: &GraphInfo) -> Vec<Vec<bool>> {
    let n = info.sources.len();
    let mut reach = vec![vec![false; n]; n];
    for b in 0..n {
        for s in &info.sources[b] {
            if let Source::Layer(a) = *s {
                reach[a][b] = true;
                for x in 0..a {
                    if reach[x][a] {
                        reach[x][b] = true;
                    }
                }
            }
        }
    }
    reach
}

//! Graph transforms that give fixed ROM weights room to adapt: the trunk and
//! branch rewrite, first-k freezing, and low-bit parallel weight decoration,
//! plus parameter and area accounting by placement.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BranchRole, LayerKind, LayerSpec, NetworkGraph, Origin, Placement, TransformKind};
use crate::rng::derived;
use crate::tensor::{FloatTensor, FloatWeights};

/// Where the branch output joins the trunk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumPoint {
    /// After the last trunk convolution, before its activation.
    #[default]
    BeforeActivation,
    /// After the activation that follows the last trunk convolution.
    AfterActivation,
}

fn default_ratio() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReBranchConfig {
    #[serde(rename = "D", default = "default_ratio")]
    pub d: usize,
    #[serde(rename = "U", default = "default_ratio")]
    pub u: usize,
    /// Trunk convolutions in dataflow order. A ReLU may sit between two of
    /// them; it is mirrored in the branch.
    pub trunk_group: Vec<String>,
    #[serde(default)]
    pub sum_point: SumPoint,
    #[serde(default)]
    pub seed: u64,
}

impl ReBranchConfig {
    pub fn new(trunk_group: &[&str], d: usize, u: usize) -> Self {
        Self {
            d,
            u,
            trunk_group: trunk_group.iter().map(|s| s.to_string()).collect(),
            sum_point: SumPoint::default(),
            seed: 0,
        }
    }
}

/// Names of the layers making up one inserted branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchGroup {
    pub trunk: Vec<String>,
    pub compress: String,
    pub res_conv: Vec<String>,
    /// ReLUs between consecutive `res_conv` layers.
    pub res_act: Vec<String>,
    pub decompress: String,
    pub merge: String,
    pub d: usize,
    pub u: usize,
}

/// A rewritten network with float weights for the layers the rewrite added.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub net: NetworkGraph,
    pub weights: FloatWeights,
    pub branches: Vec<BranchGroup>,
}

fn gaussian(shape: Vec<usize>, std: f64, seed: u64, label: &str) -> FloatTensor {
    let n: usize = shape.iter().product();
    let mut rng = derived(seed, label);
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..n).map(|_| normal.sample(&mut rng)).collect();
    FloatTensor::new(shape, data).expect("gaussian samples are finite")
}

fn origin(transform: TransformKind, role: BranchRole, trunk: &str) -> Option<Origin> {
    Some(Origin { transform, role, trunk: trunk.to_string() })
}

/// Single consumer `Relu` of layer `idx`, if any.
fn relu_after(net: &NetworkGraph, idx: usize) -> Option<usize> {
    let name = &net.layers[idx].name;
    net.layers
        .iter()
        .enumerate()
        .skip(idx + 1)
        .find(|(_, l)| l.kind == LayerKind::Relu && l.inputs.len() == 1 && &l.inputs[0] == name)
        .map(|(j, _)| j)
}

/// Splices `new_layers` in right after `anchor` and reroutes every later
/// reader of `anchor` to `merge`.
fn splice(net: &mut NetworkGraph, anchor: usize, new_layers: Vec<LayerSpec>, merge: &str) {
    let anchor_name = net.layers[anchor].name.clone();
    let tail_start = anchor + 1;
    let added = new_layers.len();
    let tail: Vec<LayerSpec> = net.layers.split_off(tail_start);
    net.layers.extend(new_layers);
    net.layers.extend(tail);
    for l in net.layers.iter_mut().skip(tail_start + added) {
        for i in l.inputs.iter_mut() {
            if *i == anchor_name {
                *i = merge.to_string();
            }
        }
    }
}

/// Channel divisor applied at each trunk boundary: `D` at the group input,
/// then alternating so each branch layer carries exactly `1/(D·U)` of the
/// parameters of its trunk counterpart. The group output uses `U`.
pub fn boundary_ratios(depth: usize, d: usize, u: usize) -> Result<Vec<usize>> {
    if d == 0 || u == 0 {
        return Err(Error::Transform("compression ratios must be at least 1".into()));
    }
    if depth == 0 {
        return Err(Error::Transform("trunk group is empty".into()));
    }
    if depth % 2 == 0 && d != u {
        return Err(Error::Transform(format!(
            "a {depth}-layer branch cannot end on U={u} when alternating from D={d}; use an odd depth or D = U"
        )));
    }
    Ok((0..=depth).map(|j| if j % 2 == 0 { d } else { u }).collect())
}

/// Adds a trunk/branch pair around `cfg.trunk_group`. The trunk becomes
/// ROM-resident and frozen; the branch's compress and decompress layers are
/// seeded and frozen in ROM, its residual convolutions are trainable in SRAM.
/// The last residual convolution starts at zero, so the rewritten network
/// computes exactly what the original did.
pub fn build_rebranch(net: &NetworkGraph, cfg: &ReBranchConfig) -> Result<Transformed> {
    let mut net = net.with_explicit_inputs();
    net.analyze()?;
    let group = &cfg.trunk_group;
    if group.is_empty() {
        return Err(Error::Transform("trunk group is empty".into()));
    }
    let mut idx = Vec::with_capacity(group.len());
    for name in group {
        let i = net.index_of(name).ok_or_else(|| Error::UnknownLayer(name.clone()))?;
        if !net.layers[i].kind.is_conv() {
            return Err(Error::Transform(format!("trunk group spans non-convolution layer `{name}`")));
        }
        if net.layers[i].is_branch() {
            return Err(Error::Transform(format!("`{name}` belongs to an existing branch")));
        }
        idx.push(i);
    }
    // Consecutive trunk convolutions are linked directly or through one ReLU.
    let mut between: Vec<Option<usize>> = Vec::new();
    for w in idx.windows(2) {
        let (prev, next) = (&net.layers[w[0]], &net.layers[w[1]]);
        let src = &next.inputs[0];
        if *src == prev.name {
            between.push(None);
            continue;
        }
        match net.index_of(src) {
            Some(j) if net.layers[j].kind == LayerKind::Relu && net.layers[j].inputs[0] == prev.name => {
                between.push(Some(j))
            }
            Some(j) => {
                return Err(Error::Transform(format!(
                    "trunk group spans non-convolution layer `{}` between `{}` and `{}`",
                    net.layers[j].name, prev.name, next.name
                )))
            }
            None => return Err(Error::Transform(format!("`{}` does not follow `{}`", next.name, prev.name))),
        }
    }

    let depth = idx.len();
    let ratios = boundary_ratios(depth, cfg.d, cfg.u)?;
    let trunk: Vec<LayerSpec> = idx.iter().map(|&i| net.layers[i].clone()).collect();
    let mut chans: Vec<usize> = trunk.iter().map(|l| l.in_ch).collect();
    chans.push(trunk[depth - 1].out_ch);
    for (j, (&c, &r)) in chans.iter().zip(&ratios).enumerate() {
        if c % r != 0 {
            let layer = if j < depth { trunk[j].name.clone() } else { trunk[depth - 1].name.clone() };
            return Err(Error::Divisibility { layer, channels: c, ratio: r });
        }
    }

    let last = trunk[depth - 1].clone();
    let anchor = match cfg.sum_point {
        SumPoint::BeforeActivation => idx[depth - 1],
        SumPoint::AfterActivation => relu_after(&net, idx[depth - 1]).ok_or_else(|| {
            Error::Transform(format!("`{}` has no following activation to sum after", last.name))
        })?,
    };
    let anchor_name = net.layers[anchor].name.clone();
    let prefix = format!("{}.rb", last.name);
    let tk = TransformKind::Rebranch;
    let scale = last.out_scale;
    let mut weights = FloatWeights::new();
    let mut layers = Vec::new();

    let c_in = chans[0];
    let compress_name = format!("{prefix}.compress");
    let mut compress = LayerSpec::pointwise(&compress_name, c_in, c_in / cfg.d)
        .with_inputs(&[trunk[0].inputs[0].as_str()])
        .placed(Placement::Rom, false)
        .with_scale(scale);
    compress.weight_bits = trunk[0].weight_bits;
    compress.act_bits = trunk[0].act_bits;
    compress.origin = origin(tk, BranchRole::Compress, &last.name);
    weights.insert(
        compress_name.clone(),
        gaussian(compress.weight_shape(), libm::sqrt(1.0 / c_in as f64), cfg.seed, &compress_name),
    );
    layers.push(compress);

    let mut prev = compress_name.clone();
    let mut res_names = Vec::new();
    let mut act_names = Vec::new();
    for j in 0..depth {
        let t = &trunk[j];
        let name = format!("{prefix}.res{j}");
        let mut l = LayerSpec::conv(&name, chans[j] / ratios[j], chans[j + 1] / ratios[j + 1], t.kernel, t.stride, t.pad)
            .with_inputs(&[prev.as_str()])
            .placed(Placement::Sram, true)
            .with_scale(scale);
        l.kind = t.kind;
        l.weight_bits = t.weight_bits;
        l.act_bits = t.act_bits;
        l.origin = origin(tk, BranchRole::ResConv, &last.name);
        let w = if j + 1 == depth {
            FloatTensor::zeros(l.weight_shape())
        } else {
            let fan_in = l.in_ch * l.kernel * l.kernel;
            gaussian(l.weight_shape(), libm::sqrt(2.0 / fan_in as f64), cfg.seed, &name)
        };
        weights.insert(name.clone(), w);
        layers.push(l);
        res_names.push(name.clone());
        prev = name;
        if let Some(Some(_)) = between.get(j) {
            let act = format!("{prefix}.act{j}");
            let mut r = LayerSpec::relu(&act).with_inputs(&[prev.as_str()]);
            r.act_bits = t.act_bits;
            r.origin = origin(tk, BranchRole::ResConv, &last.name);
            layers.push(r);
            act_names.push(act.clone());
            prev = act;
        }
    }

    let c_out = chans[depth];
    let decompress_name = format!("{prefix}.decompress");
    let mut decompress = LayerSpec::pointwise(&decompress_name, c_out / cfg.u, c_out)
        .with_inputs(&[prev.as_str()])
        .placed(Placement::Rom, false)
        .with_scale(scale);
    decompress.weight_bits = last.weight_bits;
    decompress.act_bits = last.act_bits;
    decompress.origin = origin(tk, BranchRole::Decompress, &last.name);
    weights.insert(
        decompress_name.clone(),
        gaussian(decompress.weight_shape(), libm::sqrt(1.0 / (c_out / cfg.u) as f64), cfg.seed, &decompress_name),
    );
    layers.push(decompress);

    let merge_name = format!("{prefix}.merge");
    let mut merge = LayerSpec::add(&merge_name, &anchor_name, &decompress_name).with_scale(scale);
    merge.act_bits = last.act_bits;
    merge.origin = origin(tk, BranchRole::Merge, &last.name);
    layers.push(merge);

    for &i in &idx {
        net.layers[i].placement = Some(Placement::Rom);
        net.layers[i].trainable = false;
    }
    splice(&mut net, anchor, layers, &merge_name);
    net.analyze()?;
    let branch = BranchGroup {
        trunk: group.clone(),
        compress: compress_name,
        res_conv: res_names,
        res_act: act_names,
        decompress: decompress_name,
        merge: merge_name,
        d: cfg.d,
        u: cfg.u,
    };
    Ok(Transformed { net, weights, branches: vec![branch] })
}

/// Base convolutions whose channels accept single-layer branches at `(d, u)`.
pub fn eligible_convs(net: &NetworkGraph, d: usize, u: usize) -> Vec<String> {
    net.layers
        .iter()
        .filter(|l| l.kind.is_conv() && !l.is_branch() && d > 0 && u > 0 && l.in_ch % d == 0 && l.out_ch % u == 0)
        .map(|l| l.name.clone())
        .collect()
}

/// One single-layer branch per listed convolution; every base parametric layer
/// not already placed goes to ROM, frozen.
pub fn rebranch_each(net: &NetworkGraph, convs: &[String], d: usize, u: usize, seed: u64) -> Result<Transformed> {
    let mut out = Transformed { net: net.with_explicit_inputs(), weights: FloatWeights::new(), branches: Vec::new() };
    for l in out.net.layers.iter_mut().filter(|l| l.kind.is_parametric() && !l.is_branch()) {
        if l.placement.is_none() {
            l.placement = Some(Placement::Rom);
            l.trainable = false;
        }
    }
    for name in convs {
        let cfg = ReBranchConfig { d, u, trunk_group: vec![name.clone()], sum_point: SumPoint::default(), seed };
        let t = build_rebranch(&out.net, &cfg)?;
        out.net = t.net;
        out.weights.extend(t.weights);
        out.branches.extend(t.branches);
    }
    Ok(out)
}

/// Folds compress → residual convolution → decompress into one convolution:
/// `W[o,i,h,w] = Σ_{a,b} Dec[o,a] · Res[a,b,h,w] · Comp[b,i]`.
pub fn compose_branch(compress: &FloatTensor, res: &FloatTensor, decompress: &FloatTensor) -> Result<FloatTensor> {
    let (&[cb, ci, 1, 1], &[ca, cb2, kh, kw], &[co, ca2, 1, 1]) = (compress.shape(), res.shape(), decompress.shape())
    else {
        return Err(Error::Shape(format!(
            "cannot compose compress {:?}, residual {:?}, decompress {:?}",
            compress.shape(),
            res.shape(),
            decompress.shape()
        )));
    };
    if cb != cb2 || ca != ca2 {
        return Err(Error::Shape(format!(
            "branch channels disagree: compress gives {cb}, residual takes {cb2} and gives {ca}, decompress takes {ca2}"
        )));
    }
    let (comp, wres, dec) = (compress.data(), res.data(), decompress.data());
    // First contract the compress side: T[a,i,h,w] = Σ_b Res[a,b,h,w]·Comp[b,i].
    let mut t = vec![0.0; ca * ci * kh * kw];
    for a in 0..ca {
        for b in 0..cb {
            for i in 0..ci {
                let c = comp[b * ci + i];
                if c == 0.0 {
                    continue;
                }
                for s in 0..kh * kw {
                    t[(a * ci + i) * kh * kw + s] += wres[(a * cb + b) * kh * kw + s] * c;
                }
            }
        }
    }
    let mut out = vec![0.0; co * ci * kh * kw];
    for o in 0..co {
        for a in 0..ca {
            let dv = dec[o * ca + a];
            if dv == 0.0 {
                continue;
            }
            let src = &t[a * ci * kh * kw..(a + 1) * ci * kh * kw];
            for (d, s) in out[o * ci * kh * kw..(o + 1) * ci * kh * kw].iter_mut().zip(src) {
                *d += dv * s;
            }
        }
    }
    FloatTensor::new(vec![co, ci, kh, kw], out)
}

/// The single convolution equivalent to `branch` in the linear regime.
pub fn equivalent_conv(branch: &BranchGroup, weights: &FloatWeights) -> Result<FloatTensor> {
    if branch.res_conv.len() != 1 {
        return Err(Error::Transform(format!(
            "equivalent convolution needs a single residual layer, branch has {}",
            branch.res_conv.len()
        )));
    }
    let get = |n: &String| weights.get(n).ok_or_else(|| Error::MissingWeights(n.clone()));
    compose_branch(get(&branch.compress)?, get(&branch.res_conv[0])?, get(&branch.decompress)?)
}

/// Freezes the first `k` parametric layers in ROM and makes the rest
/// trainable in SRAM. `k` beyond the layer count freezes everything.
pub fn atl_split(net: &NetworkGraph, k: usize) -> NetworkGraph {
    let mut out = net.clone();
    for (n, l) in out.layers.iter_mut().filter(|l| l.kind.is_parametric()).enumerate() {
        if n < k {
            l.placement = Some(Placement::Rom);
            l.trainable = false;
        } else {
            l.placement = Some(Placement::Sram);
            l.trainable = true;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decorated {
    pub net: NetworkGraph,
    pub weights: FloatWeights,
    pub decoration: String,
    pub merge: String,
    /// `rom_bits / sram_bits`: the area saving over storing the whole
    /// trainable copy at full precision in SRAM.
    pub area_saving_bound: f64,
}

/// Adds a zero-initialized low-bit convolution of identical geometry in
/// parallel with `layer`, summed into its output.
pub fn spwd_decorate(net: &NetworkGraph, layer: &str, sram_bits: u8) -> Result<Decorated> {
    let mut net = net.with_explicit_inputs();
    net.analyze()?;
    let i = net.index_of(layer).ok_or_else(|| Error::UnknownLayer(layer.to_owned()))?;
    let trunk = net.layers[i].clone();
    if !trunk.kind.is_conv() {
        return Err(Error::Transform(format!("`{layer}` is not a convolution and cannot be decorated")));
    }
    if sram_bits == 0 || sram_bits >= trunk.weight_bits {
        return Err(Error::Transform(format!(
            "decoration needs fewer bits than the {}-bit trunk, got {sram_bits}",
            trunk.weight_bits
        )));
    }
    let deco_name = format!("{layer}.spwd");
    let merge_name = format!("{layer}.spwd.merge");
    let mut deco = trunk.clone();
    deco.name = deco_name.clone();
    deco.weight_bits = sram_bits;
    deco.placement = Some(Placement::Sram);
    deco.trainable = true;
    deco.origin = origin(TransformKind::Spwd, BranchRole::Decoration, layer);
    let mut merge = LayerSpec::add(&merge_name, layer, &deco_name).with_scale(trunk.out_scale);
    merge.act_bits = trunk.act_bits;
    merge.origin = origin(TransformKind::Spwd, BranchRole::Merge, layer);
    let mut weights = FloatWeights::new();
    weights.insert(deco_name.clone(), FloatTensor::zeros(deco.weight_shape()));
    net.layers[i].placement = Some(Placement::Rom);
    net.layers[i].trainable = false;
    splice(&mut net, i, vec![deco, merge], &merge_name);
    net.analyze()?;
    Ok(Decorated {
        net,
        weights,
        decoration: deco_name,
        merge: merge_name,
        area_saving_bound: trunk.weight_bits as f64 / sram_bits as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub rom_params: u64,
    pub sram_params: u64,
    pub rom_bits: u64,
    pub sram_bits: u64,
    pub rom_area_mm2: f64,
    pub sram_area_mm2: f64,
    pub sram_fraction: f64,
}

impl MemoryReport {
    pub fn total_area_mm2(&self) -> f64 {
        self.rom_area_mm2 + self.sram_area_mm2
    }
}

/// Weight bits and cell area by placement. Cell areas are µm² per bit.
pub fn memory_report(net: &NetworkGraph, rom_cell_um2: f64, sram_cell_um2: f64) -> Result<MemoryReport> {
    let (mut rp, mut sp, mut rb, mut sb) = (0u64, 0u64, 0u64, 0u64);
    for l in net.parametric() {
        let params = l.param_count() as u64;
        let bits = params * l.weight_bits as u64;
        match l.placement {
            Some(Placement::Rom) => {
                rp += params;
                rb += bits;
            }
            Some(Placement::Sram) => {
                sp += params;
                sb += bits;
            }
            None => return Err(Error::Unplaced(l.name.clone())),
        }
    }
    let total = rp + sp;
    Ok(MemoryReport {
        rom_params: rp,
        sram_params: sp,
        rom_bits: rb,
        sram_bits: sb,
        rom_area_mm2: rb as f64 * rom_cell_um2 * 1e-6,
        sram_area_mm2: sb as f64 * sram_cell_um2 * 1e-6,
        sram_fraction: if total == 0 { 0.0 } else { sp as f64 / total as f64 },
    })
}

/// A transform as written in a network file's `transforms` list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum TransformSpec {
    /// An empty `group` branches every eligible convolution individually.
    Rebranch {
        #[serde(rename = "D", default = "default_ratio")]
        d: usize,
        #[serde(rename = "U", default = "default_ratio")]
        u: usize,
        #[serde(default)]
        group: Vec<String>,
        #[serde(default)]
        sum_point: SumPoint,
    },
    Atl {
        k: usize,
    },
    Spwd {
        layer: String,
        #[serde(default = "default_sram_bits")]
        sram_bits: u8,
    },
}

fn default_sram_bits() -> u8 {
    2
}

/// Applies `specs` in order. New float weights are collected for every layer
/// a transform added.
pub fn apply_transforms(net: &NetworkGraph, specs: &[TransformSpec], seed: u64) -> Result<Transformed> {
    let mut out = Transformed { net: net.clone(), weights: FloatWeights::new(), branches: Vec::new() };
    for spec in specs {
        match spec {
            TransformSpec::Rebranch { d, u, group, sum_point } => {
                let t = if group.is_empty() {
                    rebranch_each(&out.net, &eligible_convs(&out.net, *d, *u), *d, *u, seed)?
                } else {
                    let cfg = ReBranchConfig { d: *d, u: *u, trunk_group: group.clone(), sum_point: *sum_point, seed };
                    build_rebranch(&out.net, &cfg)?
                };
                out.net = t.net;
                out.weights.extend(t.weights);
                out.branches.extend(t.branches);
            }
            TransformSpec::Atl { k } => out.net = atl_split(&out.net, *k),
            TransformSpec::Spwd { layer, sram_bits } => {
                let t = spwd_decorate(&out.net, layer, *sram_bits)?;
                out.net = t.net;
                out.weights.extend(t.weights);
            }
        }
    }
    Ok(out)
}

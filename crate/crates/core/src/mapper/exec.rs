use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{lower_weights, tile_weights, Assignment, MappingPlan};
use crate::cim::{MacroConfig, MacroImage};
use crate::error::{Error, Result};
use crate::graph::{LayerKind, LayerSpec, NetworkGraph};
use crate::quant::{requantize, AccTensor, QuantTensor};
use crate::reference::{check_weights, forward_with, layer_ref, QuantWeights};

/// Counters summed over every matrix-vector product of an execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecStats {
    pub mvms: u64,
    pub steps: u64,
    pub conversions: u64,
    pub clipped: u64,
    pub cycles: u64,
}

/// Per-position input vectors of a parametric layer, one `matrix_rows` long
/// slice per output position, sample-major.
fn patches(x: &QuantTensor, layer: &LayerSpec) -> Result<(Vec<i32>, [usize; 3])> {
    let [n, c, h, w] = match *x.shape() {
        [n, c, h, w] => [n, c, h, w],
        _ => return Err(Error::Shape(format!("`{}` expects an NCHW input", layer.name))),
    };
    let rows = layer.matrix_rows();
    if layer.kind == LayerKind::FullyConnected {
        if c * h * w != rows {
            return Err(Error::Shape(format!("`{}` expects {rows} features, input has {}", layer.name, c * h * w)));
        }
        return Ok((x.data().to_vec(), [n, 1, 1]));
    }
    if c != layer.in_ch {
        return Err(Error::Shape(format!("`{}` expects {} channels, input has {c}", layer.name, layer.in_ch)));
    }
    let (k, s, p) = (layer.kernel, layer.stride, layer.pad);
    if h + 2 * p < k || w + 2 * p < k || s == 0 {
        return Err(Error::Shape(format!("kernel of `{}` does not fit its input", layer.name)));
    }
    let (oh, ow) = ((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1);
    let mut out = vec![0i32; n * oh * ow * rows];
    let data = x.data();
    for b in 0..n {
        for y in 0..oh {
            for xo in 0..ow {
                let base = ((b * oh + y) * ow + xo) * rows;
                for ic in 0..c {
                    for ky in 0..k {
                        let iy = (y * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (xo * s + kx) as isize - p as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            out[base + (ic * k + ky) * k + kx] = data[((b * c + ic) * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    Ok((out, [n, oh, ow]))
}

struct ProgrammedTile<'a> {
    assignment: &'a Assignment,
    image: MacroImage,
    /// Σ_r w[r][c] per logical column, for the signed-input offset.
    col_sums: Vec<i64>,
}

fn run_layer(
    layer: &LayerSpec,
    x: &QuantTensor,
    w: &QuantTensor,
    tiles: &[&Assignment],
    cfg: &MacroConfig,
    stats: &mut ExecStats,
) -> Result<QuantTensor> {
    let act_max = (1i64 << cfg.act_bits) - 1;
    // Signed inputs are shifted into the unsigned range and corrected digitally.
    let offset = if x.signed() { 1i64 << (cfg.act_bits - 1) } else { 0 };
    let (lo, hi) = if x.signed() { (-offset, offset - 1) } else { (0, act_max) };
    if let Some(&v) = x.data().iter().find(|&&v| (v as i64) < lo || (v as i64) > hi) {
        return Err(Error::BitWidth { value: v as i64, bits: cfg.act_bits, signed: x.signed() });
    }
    let matrix = lower_weights(layer, w)?;
    let mut programmed = Vec::with_capacity(tiles.len());
    for a in tiles {
        let block = tile_weights(&matrix, &a.tile);
        let col_sums = (0..block.cols).map(|c| (0..block.rows).map(|r| block.get(r, c) as i64).sum()).collect();
        let tcfg = MacroConfig { weight_bits: a.tile.weight_bits, ..cfg.clone() };
        programmed.push(ProgrammedTile { assignment: a, image: MacroImage::program(&block, &tcfg)?, col_sums });
    }

    let (cols, rows) = (layer.out_ch, layer.matrix_rows());
    let (patch, [n, oh, ow]) = patches(x, layer)?;
    let mut acc = AccTensor::zeros(vec![n, cols, oh, ow]);
    let mut acts: Vec<u8> = Vec::new();
    for (pos, vec_in) in patch.chunks(rows).enumerate() {
        let (b, yx) = (pos / (oh * ow), pos % (oh * ow));
        for t in programmed.iter().filter(|t| t.assignment.tile.serves(pos)) {
            let tile = &t.assignment.tile;
            acts.clear();
            acts.extend(vec_in[tile.row_start..tile.row_start + tile.rows].iter().map(|&v| (v as i64 + offset) as u8));
            let run = t.image.run_mvm(&acts, None)?;
            stats.mvms += 1;
            stats.steps += run.steps;
            stats.conversions += run.conversions;
            stats.clipped += run.clipped;
            stats.cycles += run.cycles;
            for (c, &y) in run.outputs.iter().enumerate() {
                acc.data[(b * cols + tile.col_start + c) * oh * ow + yx] += y - offset * t.col_sums[c];
            }
        }
    }
    requantize(&acc, x.scale() * w.scale(), layer.out_scale, layer.act_bits, true)
}

/// Runs `net` with every parametric layer computed through the macro model on
/// the tiles of `plan`, partial sums accumulated digitally. Returns every
/// layer's output in layer order.
///
/// Activations must fit `cfg.act_bits` (unsigned, or signed via a
/// `2^(act_bits-1)` offset whose contribution is subtracted after readout).
pub fn execute(
    net: &NetworkGraph,
    weights: &QuantWeights,
    plan: &MappingPlan,
    input: &QuantTensor,
    cfg: &MacroConfig,
) -> Result<(Vec<QuantTensor>, ExecStats)> {
    plan.validate(net)?;
    check_weights(net, weights)?;
    let info = net.analyze()?;
    let mut by_layer: Vec<Vec<&Assignment>> = vec![Vec::new(); net.layers.len()];
    for a in &plan.assignments {
        by_layer[a.tile.layer_index].push(a);
    }
    let mut stats = ExecStats::default();
    let mut index = 0;
    let outs = forward_with(net, &info, input, |layer, ins| {
        let i = index;
        index += 1;
        if !layer.kind.is_parametric() {
            return layer_ref(layer, ins, None);
        }
        let w = weights.get(&layer.name).ok_or_else(|| Error::MissingWeights(layer.name.clone()))?;
        run_layer(layer, ins[0], w, &by_layer[i], cfg, &mut stats)
    })?;
    Ok((outs, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Placement;
    use crate::mapper::{pack_greedy, tile_network, Inventory};
    use crate::reference::forward_ref_all;

    #[test]
    fn signed_input_through_double_height_tile() {
        let l = LayerSpec::fc("f", 200, 3).placed(Placement::Rom, false);
        let net = NetworkGraph::new("fc", [200, 1, 1], vec![l]);
        let cfg = MacroConfig::rom();
        let plan = pack_greedy(&tile_network(&net, &cfg).unwrap(), &Inventory::uniform(1, 2, 0, 1), &net, &cfg).unwrap();
        let x: Vec<i32> = (0..200).map(|i| (i * 37 % 256) - 128).collect();
        let w: Vec<i32> = (0..600).map(|i| (i * 53 % 255) - 127).collect();
        let input = QuantTensor::new(vec![1, 200, 1, 1], x, 8, true, 0.5).unwrap();
        let mut weights = QuantWeights::new();
        weights.insert("f".into(), QuantTensor::new(vec![3, 200], w, 8, true, 0.01).unwrap());
        let (got, stats) = execute(&net, &weights, &plan, &input, &cfg).unwrap();
        assert_eq!(got, forward_ref_all(&net, &input, &weights).unwrap());
        assert_eq!(stats.mvms, 2);
        assert_eq!(stats.clipped, 0);
    }

    #[test]
    fn copies_split_positions_without_changing_outputs() {
        let l = LayerSpec::conv("c", 4, 5, 3, 1, 1).placed(Placement::Rom, false);
        let net = NetworkGraph::new("c", [4, 5, 5], vec![l]);
        let cfg = MacroConfig::rom();
        let tiles = crate::mapper::replicate(&tile_network(&net, &cfg).unwrap(), |_| 3);
        let plan = pack_greedy(&tiles, &Inventory::uniform(1, 3, 0, 1), &net, &cfg).unwrap();
        assert_eq!(plan.inventory.macro_count(), plan.assignments.iter().map(|a| a.macro_id).collect::<alloc::collections::BTreeSet<_>>().len());
        let x: Vec<i32> = (0..100).map(|i| i * 29 % 256).collect();
        let w: Vec<i32> = (0..180).map(|i| (i * 41 % 255) - 127).collect();
        let input = QuantTensor::new(vec![1, 4, 5, 5], x, 8, false, 0.25).unwrap();
        let mut weights = QuantWeights::new();
        weights.insert("c".into(), QuantTensor::new(vec![5, 4, 3, 3], w, 8, true, 0.02).unwrap());
        let (got, stats) = execute(&net, &weights, &plan, &input, &cfg).unwrap();
        assert_eq!(got, forward_ref_all(&net, &input, &weights).unwrap());
        assert_eq!(stats.mvms, 25);
    }
}

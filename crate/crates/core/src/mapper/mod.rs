//! Placement of layer weight matrices onto CiM subarrays, schedule
//! evaluation, and a functional executor that runs a network through the
//! placed tiles.
//!
//! Convolutions are lowered im2col-style: matrix row `(c·k + kh)·k + kw`,
//! matrix column = output channel. Fully-connected layers use the flattened
//! `c·h·w` feature index as the row.

mod eval;
mod exec;
mod pack;

pub use eval::{evaluate_plan, EvalOptions, LayerTiming, SchedulePolicy, UtilizationReport};
pub use exec::{execute, ExecStats};
pub use pack::{pack_greedy, pack_naive};


use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cim::{MacroConfig, WeightMatrix};
use crate::error::{Error, Result};
use crate::graph::{LayerSpec, NetworkGraph, Placement};
use crate::quant::QuantTensor;

/// A rectangular block of one layer's weight matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub layer: String,
    pub layer_index: usize,
    pub kind: Placement,
    pub weight_bits: u8,
    pub row_start: usize,
    pub rows: usize,
    /// First logical column (output channel).
    pub col_start: usize,
    pub cols: usize,
    /// Copy index when a layer is stored more than once; copy `r` of `n`
    /// serves the output positions `p` with `p % n == r`.
    #[serde(default)]
    pub replica: usize,
    #[serde(default = "one")]
    pub replicas: usize,
}

fn one() -> usize {
    1
}

impl Tile {
    /// Physical bitline columns occupied.
    pub fn width(&self) -> usize {
        self.cols * self.weight_bits as usize
    }

    pub fn cells(&self) -> usize {
        self.rows * self.width()
    }

    pub fn bits(&self) -> u64 {
        (self.rows * self.cols * self.weight_bits as usize) as u64
    }

    /// Output positions out of `total` this copy computes.
    pub fn positions(&self, total: usize) -> usize {
        (total + self.replicas - 1 - self.replica.min(self.replicas - 1)) / self.replicas
    }

    /// Whether this copy serves output position `p`.
    pub fn serves(&self, p: usize) -> bool {
        p % self.replicas == self.replica
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subarray {
    pub chip: usize,
    /// Macro this subarray belongs to. Subarrays of one macro share its
    /// drivers and ADCs, so at most one of them computes at a time.
    pub macro_id: usize,
    pub kind: Placement,
}

/// The subarrays available to a packer, in allocation order, grouped into
/// macros of consecutive subarrays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    pub subarrays: Vec<Subarray>,
}

impl Inventory {
    /// `chips` identical chips, each with the given macro counts; ROM macros
    /// precede SRAM ones on every chip.
    pub fn uniform(chips: usize, rom_macros: usize, sram_macros: usize, subarrays_per_macro: usize) -> Self {
        let mut subarrays = Vec::new();
        let mut macro_id = 0;
        for chip in 0..chips {
            for (n, kind) in [(rom_macros, Placement::Rom), (sram_macros, Placement::Sram)] {
                for _ in 0..n {
                    subarrays.extend((0..subarrays_per_macro).map(|_| Subarray { chip, macro_id, kind }));
                    macro_id += 1;
                }
            }
        }
        Self { subarrays }
    }

    /// Inventory of the given macros, listed as `(chip, kind)`.
    pub fn from_macros(macros: &[(usize, Placement)], subarrays_per_macro: usize) -> Self {
        let subarrays = macros
            .iter()
            .enumerate()
            .flat_map(|(macro_id, &(chip, kind))| (0..subarrays_per_macro).map(move |_| Subarray { chip, macro_id, kind }))
            .collect();
        Self { subarrays }
    }

    pub fn count(&self, kind: Placement) -> usize {
        self.subarrays.iter().filter(|s| s.kind == kind).count()
    }

    pub fn macro_count(&self) -> usize {
        self.subarrays.iter().map(|s| s.macro_id + 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub tile: Tile,
    pub chip: usize,
    pub macro_id: usize,
    pub subarray: usize,
    pub row_offset: usize,
    /// Physical column of the tile's first bit slice.
    pub col_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub rows: usize,
    /// Physical columns per subarray.
    pub cols: usize,
    pub inventory: Inventory,
    pub assignments: Vec<Assignment>,
}

impl MappingPlan {
    pub fn empty(cfg: &MacroConfig, inventory: Inventory) -> Self {
        Self { rows: cfg.rows, cols: cfg.cols, inventory, assignments: Vec::new() }
    }

    /// Occupied cells of `subarray` as a row-major `rows × cols` mask.
    pub fn occupancy_mask(&self, subarray: usize) -> Vec<bool> {
        let mut mask = vec![false; self.rows * self.cols];
        for a in self.assignments.iter().filter(|a| a.subarray == subarray) {
            for r in a.row_offset..a.row_offset + a.tile.rows {
                for c in a.col_offset..a.col_offset + a.tile.width() {
                    mask[r * self.cols + c] = true;
                }
            }
        }
        mask
    }

    /// Occupied fraction of every subarray in the inventory.
    pub fn occupancy(&self) -> Vec<f64> {
        let mut used = vec![0usize; self.inventory.subarrays.len()];
        for a in &self.assignments {
            used[a.subarray] += a.tile.cells();
        }
        let cap = (self.rows * self.cols) as f64;
        used.into_iter().map(|u| u as f64 / cap).collect()
    }

    pub fn used_subarrays(&self) -> BTreeSet<usize> {
        self.assignments.iter().map(|a| a.subarray).collect()
    }

    /// Checks bounds, kinds, overlap and exact coverage of every parametric
    /// layer of `net`.
    pub fn validate(&self, net: &NetworkGraph) -> Result<()> {
        let bad = |m: String| Err(Error::Plan(m));
        let mut masks: alloc::collections::BTreeMap<usize, Vec<bool>> = Default::default();
        for a in &self.assignments {
            let Some(sub) = self.inventory.subarrays.get(a.subarray) else {
                return bad(format!("subarray {} is not in the inventory", a.subarray));
            };
            if sub.kind != a.tile.kind || sub.chip != a.chip || sub.macro_id != a.macro_id {
                return bad(format!("tile of `{}` placed on a mismatched subarray {}", a.tile.layer, a.subarray));
            }
            if a.row_offset + a.tile.rows > self.rows || a.col_offset + a.tile.width() > self.cols {
                return bad(format!("tile of `{}` overflows subarray {}", a.tile.layer, a.subarray));
            }
            let mask = masks.entry(a.subarray).or_insert_with(|| vec![false; self.rows * self.cols]);
            for r in a.row_offset..a.row_offset + a.tile.rows {
                for c in a.col_offset..a.col_offset + a.tile.width() {
                    if core::mem::replace(&mut mask[r * self.cols + c], true) {
                        return bad(format!("tiles overlap at ({r}, {c}) of subarray {}", a.subarray));
                    }
                }
            }
        }
        for (i, l) in net.layers.iter().enumerate().filter(|(_, l)| l.kind.is_parametric()) {
            let (rows, cols) = (l.matrix_rows(), l.out_ch);
            let copies = self.assignments.iter().find(|a| a.tile.layer_index == i).map_or(1, |a| a.tile.replicas);
            let mut cover = vec![0u8; copies * rows * cols];
            for a in self.assignments.iter().filter(|a| a.tile.layer_index == i) {
                let t = &a.tile;
                if t.layer != l.name || t.row_start + t.rows > rows || t.col_start + t.cols > cols {
                    return bad(format!("tile does not fit layer `{}`", l.name));
                }
                if t.replicas != copies || t.replica >= copies {
                    return bad(format!("inconsistent copies of layer `{}`", l.name));
                }
                let base = t.replica * rows * cols;
                if t.weight_bits != l.weight_bits {
                    return bad(format!("tile of `{}` stored at {} bits, layer has {}", l.name, t.weight_bits, l.weight_bits));
                }
                for r in t.row_start..t.row_start + t.rows {
                    for c in t.col_start..t.col_start + t.cols {
                        cover[base + r * cols + c] += 1;
                    }
                }
            }
            if cover.iter().any(|&n| n != 1) {
                return bad(format!("layer `{}` is not covered exactly once", l.name));
            }
        }
        if let Some(a) = self.assignments.iter().find(|a| a.tile.layer_index >= net.layers.len()) {
            return bad(format!("tile references missing layer `{}`", a.tile.layer));
        }
        Ok(())
    }
}

/// Splits a layer's matrix into tiles of at most `cfg.rows` rows and
/// `cfg.cols / weight_bits` logical columns, row-major.
pub fn tile_layer(layer_index: usize, layer: &LayerSpec, cfg: &MacroConfig) -> Result<Vec<Tile>> {
    if !layer.kind.is_parametric() {
        return Ok(Vec::new());
    }
    let kind = layer.placement.ok_or_else(|| Error::Unplaced(layer.name.clone()))?;
    let max_cols = cfg.cols / layer.weight_bits as usize;
    if max_cols == 0 || cfg.rows == 0 {
        return Err(Error::MacroConfig(format!("subarray cannot hold a {}-bit weight", layer.weight_bits)));
    }
    let (rows, cols) = (layer.matrix_rows(), layer.out_ch);
    let mut tiles = Vec::new();
    for row_start in (0..rows).step_by(cfg.rows) {
        for col_start in (0..cols).step_by(max_cols) {
            tiles.push(Tile {
                layer: layer.name.clone(),
                layer_index,
                kind,
                weight_bits: layer.weight_bits,
                row_start,
                rows: cfg.rows.min(rows - row_start),
                col_start,
                cols: max_cols.min(cols - col_start),
                replica: 0,
                replicas: 1,
            });
        }
    }
    Ok(tiles)
}

/// Tiles of every parametric layer, in layer order.
pub fn tile_network(net: &NetworkGraph, cfg: &MacroConfig) -> Result<Vec<Tile>> {
    let mut out = Vec::new();
    for (i, l) in net.layers.iter().enumerate() {
        out.extend(tile_layer(i, l, cfg)?);
    }
    Ok(out)
}

/// Tiles with every layer selected by `copies` stored that many times over.
/// Copies of one layer split its output positions between them.
pub fn replicate(tiles: &[Tile], mut copies: impl FnMut(usize) -> usize) -> Vec<Tile> {
    let mut out = Vec::with_capacity(tiles.len());
    for t in tiles {
        let n = copies(t.layer_index).max(1);
        out.extend((0..n).map(|replica| Tile { replica, replicas: n, ..t.clone() }));
    }
    out
}

/// The lowered `matrix_rows × out_ch` weight matrix of a layer.
pub fn lower_weights(layer: &LayerSpec, weights: &QuantTensor) -> Result<WeightMatrix> {
    if weights.shape() != layer.weight_shape().as_slice() {
        return Err(Error::Shape(format!(
            "`{}` needs weights {:?}, got {:?}",
            layer.name,
            layer.weight_shape(),
            weights.shape()
        )));
    }
    let (rows, cols) = (layer.matrix_rows(), layer.out_ch);
    let mut m = WeightMatrix::zeros(rows, cols);
    // Weight tensors are `[out, rows...]` row-major, so output `o` owns the
    // contiguous slice `o*rows..(o+1)*rows` in lowered-row order.
    for (o, chunk) in weights.data().chunks(rows).enumerate() {
        for (r, &w) in chunk.iter().enumerate() {
            m.data[r * cols + o] = w;
        }
    }
    Ok(m)
}

pub fn tile_weights(matrix: &WeightMatrix, tile: &Tile) -> WeightMatrix {
    let mut m = WeightMatrix::zeros(tile.rows, tile.cols);
    for r in 0..tile.rows {
        for c in 0..tile.cols {
            m.data[r * tile.cols + c] = matrix.get(tile.row_start + r, tile.col_start + c);
        }
    }
    m
}

/// Inverse of tiling: writes every tile block back into a `rows × cols` matrix.
pub fn reassemble(rows: usize, cols: usize, blocks: &[(Tile, WeightMatrix)]) -> Result<WeightMatrix> {
    let mut m = WeightMatrix::zeros(rows, cols);
    for (t, b) in blocks {
        if t.row_start + t.rows > rows || t.col_start + t.cols > cols || b.rows != t.rows || b.cols != t.cols {
            return Err(Error::Shape(format!("tile of `{}` does not fit {rows}x{cols}", t.layer)));
        }
        for r in 0..t.rows {
            for c in 0..t.cols {
                m.data[(t.row_start + r) * cols + t.col_start + c] = b.get(r, c);
            }
        }
    }
    Ok(m)
}

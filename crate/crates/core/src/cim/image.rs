use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::MacroConfig;
use crate::error::{Error, Result};
use crate::quant::{int_range, round_half_away};

/// Row-major signed weight matrix: `rows` inputs by `cols` logical outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i32>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}x{cols} matrix given {} values", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.cols + c]
    }

    /// Reference product `Wᵀ a` with exact integer arithmetic.
    pub fn mvm(&self, activations: &[i64]) -> Vec<i64> {
        let mut out = vec![0i64; self.cols];
        for (r, &a) in activations.iter().enumerate().take(self.rows) {
            if a == 0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += a * self.data[r * self.cols + c] as i64;
            }
        }
        out
    }
}

/// One physical column holding bit `significance` of a logical weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitSlice {
    pub physical: usize,
    /// `2^j` for magnitude bits, `-2^(bits-1)` for the two's-complement MSB.
    pub significance: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalColumn {
    pub slices: Vec<BitSlice>,
}

/// A programmed macro. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroImage {
    config: MacroConfig,
    programmed_rows: usize,
    /// Column-major bitcells, one row bitmask per physical column.
    columns: Vec<Vec<u64>>,
    column_map: Vec<LogicalColumn>,
}

fn words(rows: usize) -> usize {
    rows.div_ceil(64)
}

impl MacroImage {
    /// Bit-slices `weights` into the array. Logical column `c` occupies
    /// physical columns `c*bits .. (c+1)*bits`, bit `j` of the two's-complement
    /// code in column `c*bits + j`.
    pub fn program(weights: &WeightMatrix, config: &MacroConfig) -> Result<Self> {
        config.validate()?;
        let bits = config.weight_bits;
        if weights.rows > config.rows || weights.cols * bits as usize > config.cols {
            return Err(Error::Geometry(format!(
                "{}x{} weights of {bits} bits need {} rows and {} columns, macro has {}x{}",
                weights.rows,
                weights.cols,
                weights.rows,
                weights.cols * bits as usize,
                config.rows,
                config.cols
            )));
        }
        let (lo, hi) = int_range(bits, true);
        if let Some(&bad) = weights.data.iter().find(|&&w| (w as i64) < lo || (w as i64) > hi) {
            return Err(Error::BitWidth { value: bad as i64, bits, signed: true });
        }
        let nw = words(config.rows);
        let mut columns = vec![vec![0u64; nw]; config.cols];
        let mut column_map = Vec::with_capacity(weights.cols);
        let mask = (1u32 << bits) - 1;
        for c in 0..weights.cols {
            let mut slices = Vec::with_capacity(bits as usize);
            for j in 0..bits {
                let physical = c * bits as usize + j as usize;
                let significance = if j == bits - 1 { -(1i64 << j) } else { 1i64 << j };
                slices.push(BitSlice { physical, significance });
                for r in 0..weights.rows {
                    let code = (weights.get(r, c) as u32) & mask;
                    if (code >> j) & 1 == 1 {
                        columns[physical][r / 64] |= 1 << (r % 64);
                    }
                }
            }
            column_map.push(LogicalColumn { slices });
        }
        Ok(Self { config: config.clone(), programmed_rows: weights.rows, columns, column_map })
    }

    pub fn config(&self) -> &MacroConfig {
        &self.config
    }

    pub fn programmed_rows(&self) -> usize {
        self.programmed_rows
    }

    pub fn logical_cols(&self) -> usize {
        self.column_map.len()
    }

    /// Physical columns carrying weight bits.
    pub fn cols_used(&self) -> usize {
        self.column_map.len() * self.config.weight_bits as usize
    }

    pub fn column_map(&self) -> &[LogicalColumn] {
        &self.column_map
    }

    #[inline]
    pub fn bit(&self, row: usize, col: usize) -> bool {
        (self.columns[col][row / 64] >> (row % 64)) & 1 == 1
    }

    /// Dense `rows × cols` view of the bitcells, row-major, entries 0/1.
    pub fn bitcells(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.config.rows * self.config.cols];
        for r in 0..self.config.rows {
            for c in 0..self.config.cols {
                out[r * self.config.cols + c] = self.bit(r, c) as u8;
            }
        }
        out
    }

    /// Reconstructs the programmed weights from the bitcells and column map.
    pub fn decode(&self) -> WeightMatrix {
        let mut m = WeightMatrix::zeros(self.programmed_rows, self.column_map.len());
        for (c, col) in self.column_map.iter().enumerate() {
            for r in 0..self.programmed_rows {
                let v: i64 = col.slices.iter().filter(|s| self.bit(r, s.physical)).map(|s| s.significance).sum();
                m.data[r * m.cols + c] = v as i32;
            }
        }
        m
    }

    pub(crate) fn column_words(&self, col: usize) -> &[u64] {
        &self.columns[col]
    }

    /// Number of turned-on cells on bitline `col` when the rows in
    /// `active_rows` whose `wl_high` flag is set receive a pulse.
    pub fn bitline_count<R: Rng + ?Sized>(
        &self,
        active_rows: &[usize],
        wl_high: &[bool],
        col: usize,
        noise: Option<&mut R>,
    ) -> Result<u32> {
        if active_rows.len() > self.config.rows_per_step {
            return Err(Error::RowBudget { active: active_rows.len(), budget: self.config.rows_per_step });
        }
        if wl_high.len() != active_rows.len() {
            return Err(Error::Shape(format!("{} pulse flags for {} rows", wl_high.len(), active_rows.len())));
        }
        if col >= self.config.cols {
            return Err(Error::Geometry(format!("column {col} outside {} columns", self.config.cols)));
        }
        if let Some(&r) = active_rows.iter().find(|&&r| r >= self.programmed_rows) {
            return Err(Error::Geometry(format!("row {r} is not programmed ({} rows)", self.programmed_rows)));
        }
        let count = active_rows.iter().zip(wl_high).filter(|(&r, &hi)| hi && self.bit(r, col)).count() as u32;
        Ok(self.perturb(count, active_rows.len(), noise))
    }

    pub(crate) fn perturb<R: Rng + ?Sized>(&self, count: u32, active: usize, noise: Option<&mut R>) -> u32 {
        match noise {
            Some(rng) if self.config.noise_sigma > 0.0 => {
                let normal = Normal::new(0.0, self.config.noise_sigma).expect("sigma validated");
                let v = count as f64 + round_half_away(normal.sample(rng));
                v.clamp(0.0, active as f64) as u32
            }
            _ => count,
        }
    }
}

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Rom,
    Sram,
}

/// Geometry, precision and headline figures of one macro.
///
/// `rows`/`cols`/`adc_count` describe the compute subarray; `capacity_mb`,
/// `macro_area_mm2` and the timing/energy figures describe the full macro used
/// for the density and throughput arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroConfig {
    pub rows: usize,
    pub cols: usize,
    pub adc_count: usize,
    pub adc_bits: u8,
    /// Rows activated together in one pulse step.
    pub rows_per_step: usize,
    /// Activation bits applied per chunk (1 or 2).
    pub act_chunk_bits: u8,
    pub act_bits: u8,
    pub weight_bits: u8,
    pub cell_kind: CellKind,
    /// µm² per bit cell.
    pub cell_area_um2: f64,
    pub macro_area_mm2: f64,
    /// Macro capacity in Mb (10⁶ bits).
    pub capacity_mb: f64,
    pub inference_time_ns: f64,
    pub ops_per_inference: f64,
    /// MAC energy efficiency in TOPS/W.
    pub mac_energy_eff_tops_w: f64,
    /// Leakage of volatile cells, W per Mb. Ignored for ROM.
    pub standby_w_per_mb: f64,
    /// Standard deviation of the Gaussian noise added to bitline counts.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

/// SRAM-CiM cells are this many times larger than the ROM cell.
pub const SRAM_TO_ROM_CELL_RATIO: f64 = 25.6;

impl Default for MacroConfig {
    fn default() -> Self {
        Self::rom()
    }
}

impl MacroConfig {
    pub fn rom() -> Self {
        Self {
            rows: 128,
            cols: 256,
            adc_count: 16,
            adc_bits: 5,
            rows_per_step: 31,
            act_chunk_bits: 2,
            act_bits: 8,
            weight_bits: 8,
            cell_kind: CellKind::Rom,
            cell_area_um2: 0.014,
            macro_area_mm2: 0.24,
            capacity_mb: 1.2,
            inference_time_ns: 8.9,
            ops_per_inference: 256.0,
            mac_energy_eff_tops_w: 11.5,
            standby_w_per_mb: 5.0e-5,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }

    /// SRAM-CiM counterpart: same compute model, cells and macro area scaled by
    /// the cell-size ratio, nonzero leakage.
    pub fn sram() -> Self {
        let rom = Self::rom();
        Self {
            cell_kind: CellKind::Sram,
            cell_area_um2: rom.cell_area_um2 * SRAM_TO_ROM_CELL_RATIO,
            macro_area_mm2: rom.macro_area_mm2 * SRAM_TO_ROM_CELL_RATIO,
            ..rom
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::MacroConfig(m));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("empty array {}x{}", self.rows, self.cols));
        }
        if self.adc_count == 0 || self.adc_count > self.cols || self.cols % self.adc_count != 0 {
            return bad(format!("{} ADCs cannot evenly share {} columns", self.adc_count, self.cols));
        }
        if !(1..=16).contains(&self.adc_bits) {
            return bad(format!("adc_bits {} outside 1..=16", self.adc_bits));
        }
        if self.rows_per_step == 0 {
            return bad("rows_per_step must be at least 1".into());
        }
        if !matches!(self.act_chunk_bits, 1 | 2) {
            return bad(format!("act_chunk_bits {} must be 1 or 2", self.act_chunk_bits));
        }
        if !(1..=8).contains(&self.act_bits) || self.act_bits % self.act_chunk_bits != 0 {
            return bad(format!("act_bits {} must be a multiple of the chunk size", self.act_bits));
        }
        if !(1..=8).contains(&self.weight_bits) || self.cols % self.weight_bits as usize != 0 {
            return bad(format!("weight_bits {} must divide {} columns", self.weight_bits, self.cols));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and non-negative", self.noise_sigma));
        }
        Ok(())
    }

    pub fn logical_cols(&self) -> usize {
        self.cols / self.weight_bits as usize
    }

    pub fn adc_max_code(&self) -> u32 {
        (1u32 << self.adc_bits) - 1
    }

    pub fn chunks(&self) -> usize {
        (self.act_bits / self.act_chunk_bits) as usize
    }

    /// ADC conversion slots needed to read `cols_used` columns once.
    pub fn conversion_slots(&self, cols_used: usize) -> usize {
        cols_used.div_ceil(self.adc_count)
    }

    pub fn row_groups(&self, rows_used: usize) -> usize {
        rows_used.div_ceil(self.rows_per_step)
    }

    pub fn adc_quantize(&self, count: u32) -> AdcCode {
        let max = self.adc_max_code();
        AdcCode { code: count.min(max), clipped: count > max }
    }

    pub fn stats(&self) -> Result<MacroStats> {
        if !(self.macro_area_mm2 > 0.0) || !(self.inference_time_ns > 0.0) || !(self.mac_energy_eff_tops_w > 0.0) {
            return Err(Error::MacroConfig("macro area, inference time and energy efficiency must be positive".into()));
        }
        let gops = self.ops_per_inference / self.inference_time_ns;
        Ok(MacroStats {
            capacity_mb: self.capacity_mb,
            density_mb_per_mm2: self.capacity_mb / self.macro_area_mm2,
            gops,
            area_eff_gops_per_mm2: gops / self.macro_area_mm2,
            energy_per_op_j: 1.0 / (self.mac_energy_eff_tops_w * 1e12),
            standby_power_w: match self.cell_kind {
                CellKind::Rom => 0.0,
                CellKind::Sram => self.capacity_mb * self.standby_w_per_mb,
            },
        })
    }
}

/// Output of one ADC conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdcCode {
    pub code: u32,
    /// The bitline count exceeded the ADC full scale.
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroStats {
    pub capacity_mb: f64,
    pub density_mb_per_mm2: f64,
    pub gops: f64,
    pub area_eff_gops_per_mm2: f64,
    pub energy_per_op_j: f64,
    pub standby_power_w: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adc_saturates() {
        let c = MacroConfig::rom();
        assert_eq!(c.adc_quantize(0), AdcCode { code: 0, clipped: false });
        assert_eq!(c.adc_quantize(31), AdcCode { code: 31, clipped: false });
        assert_eq!(c.adc_quantize(40), AdcCode { code: 31, clipped: true });
    }

    #[test]
    fn table_figures() {
        let s = MacroConfig::rom().stats().unwrap();
        assert!((s.density_mb_per_mm2 - 5.0).abs() < 1e-12);
        assert!((s.gops - 28.8).abs() / 28.8 < 0.005);
        assert!((s.area_eff_gops_per_mm2 - 119.4).abs() / 119.4 < 0.01);
        assert_eq!(s.standby_power_w, 0.0);
        assert!(MacroConfig::sram().stats().unwrap().standby_power_w > 0.0);
    }

    #[test]
    fn sram_density_ratio() {
        let r = MacroConfig::rom().stats().unwrap().density_mb_per_mm2;
        let s = MacroConfig::sram().stats().unwrap().density_mb_per_mm2;
        assert!((r / s - SRAM_TO_ROM_CELL_RATIO).abs() < 1e-9);
    }

    #[test]
    fn stats_reject_zero_area_or_time() {
        let mut c = MacroConfig::rom();
        c.macro_area_mm2 = 0.0;
        assert!(c.stats().is_err());
        let mut c = MacroConfig::rom();
        c.inference_time_ns = 0.0;
        assert!(c.stats().is_err());
    }

    #[test]
    fn validation() {
        assert!(MacroConfig::rom().validate().is_ok());
        let mut c = MacroConfig::rom();
        c.adc_count = 15;
        assert!(c.validate().is_err());
        let mut c = MacroConfig::rom();
        c.act_chunk_bits = 3;
        assert!(c.validate().is_err());
        let mut c = MacroConfig::rom();
        c.rows_per_step = 0;
        assert!(c.validate().is_err());
    }
}

//! System-level energy, latency and area of three ways to run a network:
//! a hybrid ROM+SRAM CiM chip, an iso-area single SRAM-CiM chip that reloads
//! non-resident weights from DRAM, and SRAM-CiM chiplets holding every weight.
//!
//! Energy is pure event accounting: MAC ops, ADC conversions, activation
//! buffer bytes, DRAM bytes and link bits, each times a per-event constant,
//! plus SRAM leakage over the inference latency.

mod plan;
mod sim;
mod study;

pub use plan::{deploy_hybrid, deploy_rom_plain, deploy_sram, plan_system, size_chiplets, size_hybrid};
pub use sim::{compare, latency_overhead, simulate_inference, Breakdown, Comparison, LayerEnergy, SimOptions, SimReport};
pub use study::{dram_sensitivity, run_study, Prepared, SensitivityRow, Study, StudyConfig};

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::cim::{MacroConfig, MvmJob};
use crate::error::{Error, Result};
use crate::graph::Placement;

/// Per-event costs and technology constants. Every field name carries its unit.
///
/// The MAC and ADC defaults split the macro efficiency of 11.5 TOPS/W between
/// the array and its ADCs; the buffer, DRAM and standby defaults are generic
/// 28 nm-class figures, not measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub rom_mac_energy_j_per_op: f64,
    pub sram_mac_energy_j_per_op: f64,
    pub adc_energy_j_per_conversion: f64,
    pub sram_buffer_energy_j_per_byte: f64,
    pub dram_energy_j_per_byte: f64,
    pub dram_bandwidth_bytes_per_s: f64,
    pub chiplet_link_energy_j_per_bit: f64,
    pub chiplet_link_bandwidth_bits_per_s: f64,
    pub sram_standby_w_per_mb: f64,
    pub rom_cell_area_um2: f64,
    pub sram_cell_area_um2: f64,
    /// Fraction of a macro's area outside the cell array.
    pub rom_periphery_fraction: f64,
    pub sram_periphery_fraction: f64,
    /// Nominal bits per macro, in Mb.
    pub macro_capacity_mb: f64,
    /// Bytes per partial sum sent between chips.
    pub psum_bytes: f64,
}

/// Full-scale conversions per op of a fully used 128×32 tile at 8-bit
/// activations (`5 groups × 12 steps × 256 columns / 8192 ops`).
const CONVERSIONS_PER_OP: f64 = 15360.0 / 8192.0;
const ADC_ENERGY: f64 = 20e-15;

impl Default for CostModel {
    fn default() -> Self {
        let macro_op = 1.0 / 11.5e12;
        let mac = macro_op - ADC_ENERGY * CONVERSIONS_PER_OP;
        Self {
            rom_mac_energy_j_per_op: mac,
            sram_mac_energy_j_per_op: mac,
            adc_energy_j_per_conversion: ADC_ENERGY,
            sram_buffer_energy_j_per_byte: 2e-12,
            // 20 pJ/bit.
            dram_energy_j_per_byte: 160e-12,
            dram_bandwidth_bytes_per_s: 25.6e9,
            chiplet_link_energy_j_per_bit: 1.17e-12,
            // 16 lanes at 25 Gb/s.
            chiplet_link_bandwidth_bits_per_s: 400e9,
            sram_standby_w_per_mb: 5e-5,
            rom_cell_area_um2: 0.014,
            sram_cell_area_um2: 0.014 * crate::cim::SRAM_TO_ROM_CELL_RATIO,
            // 1.2 Mb of 0.014 µm² cells in a 0.24 mm² macro.
            rom_periphery_fraction: 0.93,
            sram_periphery_fraction: 0.93,
            macro_capacity_mb: 1.2,
            psum_bytes: 4.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("rom_mac_energy_j_per_op", self.rom_mac_energy_j_per_op),
            ("sram_mac_energy_j_per_op", self.sram_mac_energy_j_per_op),
            ("adc_energy_j_per_conversion", self.adc_energy_j_per_conversion),
            ("sram_buffer_energy_j_per_byte", self.sram_buffer_energy_j_per_byte),
            ("dram_energy_j_per_byte", self.dram_energy_j_per_byte),
            ("chiplet_link_energy_j_per_bit", self.chiplet_link_energy_j_per_bit),
            ("sram_standby_w_per_mb", self.sram_standby_w_per_mb),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::System(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        let positive = [
            ("dram_bandwidth_bytes_per_s", self.dram_bandwidth_bytes_per_s),
            ("chiplet_link_bandwidth_bits_per_s", self.chiplet_link_bandwidth_bits_per_s),
            ("rom_cell_area_um2", self.rom_cell_area_um2),
            ("sram_cell_area_um2", self.sram_cell_area_um2),
            ("macro_capacity_mb", self.macro_capacity_mb),
            ("psum_bytes", self.psum_bytes),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::System(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, f) in [("rom_periphery_fraction", self.rom_periphery_fraction), ("sram_periphery_fraction", self.sram_periphery_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::System(format!("{name} must be in [0, 1), got {f}")));
            }
        }
        if self.rom_cell_area_um2 >= self.sram_cell_area_um2 {
            return Err(Error::System("ROM cells must be smaller than SRAM cells".into()));
        }
        Ok(())
    }

    /// Area of one macro of `kind` in mm².
    pub fn macro_area_mm2(&self, kind: Placement) -> f64 {
        let (cell, periphery) = match kind {
            Placement::Rom => (self.rom_cell_area_um2, self.rom_periphery_fraction),
            Placement::Sram => (self.sram_cell_area_um2, self.sram_periphery_fraction),
        };
        self.macro_capacity_mb * 1e6 * cell * 1e-6 / (1.0 - periphery)
    }

    /// Every energy (and the leakage power) multiplied by `c`.
    pub fn scale_energies(&self, c: f64) -> Self {
        Self {
            rom_mac_energy_j_per_op: self.rom_mac_energy_j_per_op * c,
            sram_mac_energy_j_per_op: self.sram_mac_energy_j_per_op * c,
            adc_energy_j_per_conversion: self.adc_energy_j_per_conversion * c,
            sram_buffer_energy_j_per_byte: self.sram_buffer_energy_j_per_byte * c,
            dram_energy_j_per_byte: self.dram_energy_j_per_byte * c,
            chiplet_link_energy_j_per_bit: self.chiplet_link_energy_j_per_bit * c,
            sram_standby_w_per_mb: self.sram_standby_w_per_mb * c,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Hybrid,
    SramSingleChip,
    SramChiplets,
}

impl SystemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hybrid => "hybrid",
            Self::SramSingleChip => "sram_single_chip",
            Self::SramChiplets => "sram_chiplets",
        }
    }
}

/// One system: `chips` identical chips of `rom_macros + sram_macros` macros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    /// Per-chip area budget the macro counts were derived from, mm².
    pub area_budget_mm2: f64,
    pub chips: usize,
    pub rom_macros: usize,
    pub sram_macros: usize,
    pub dram: bool,
    /// Nominal Mb per macro, copied from the cost model.
    pub macro_capacity_mb: f64,
}

impl SystemConfig {
    /// Silicon actually occupied by macros, all chips, mm².
    pub fn macro_area_mm2(&self, cost: &CostModel) -> f64 {
        self.chips as f64
            * (self.rom_macros as f64 * cost.macro_area_mm2(Placement::Rom)
                + self.sram_macros as f64 * cost.macro_area_mm2(Placement::Sram))
    }

    pub fn rom_capacity_mb(&self) -> f64 {
        (self.chips * self.rom_macros) as f64 * self.macro_capacity_mb
    }

    pub fn sram_capacity_mb(&self) -> f64 {
        (self.chips * self.sram_macros) as f64 * self.macro_capacity_mb
    }
}

/// Subarrays per macro: as many `rows × cols` arrays as fit the nominal
/// capacity.
pub fn subarrays_per_macro(cost: &CostModel, cfg: &MacroConfig) -> usize {
    ((cost.macro_capacity_mb * 1e6) as usize / (cfg.rows * cfg.cols)).max(1)
}

/// Bits one macro holds for packing purposes.
pub fn macro_bits(cost: &CostModel, cfg: &MacroConfig) -> u64 {
    (subarrays_per_macro(cost, cfg) * cfg.rows * cfg.cols) as u64
}

/// Seconds per schedule cycle, chosen so a macro running full-scale full
/// tiles back to back delivers the configured throughput
/// (`ops_per_inference / inference_time`).
pub fn cycle_time_s(cfg: &MacroConfig) -> Result<f64> {
    let stats = cfg.stats()?;
    let (rows, cols) = (cfg.rows, cfg.logical_cols() * cfg.weight_bits as usize);
    let ops = 2.0 * (rows * cfg.logical_cols()) as f64;
    let cycles = MvmJob::worst_case(rows, cols, cfg).cycles(cfg) as f64;
    Ok(ops / cycles / (stats.gops * 1e9))
}

/// Macro counts for one chip of `budget_mm2`. A hybrid chip gives
/// `rom_fraction` of the budget to ROM macros and the rest to SRAM macros;
/// SRAM-only kinds ignore `rom_fraction`.
pub fn size_iso_area(kind: SystemKind, budget_mm2: f64, rom_fraction: f64, cost: &CostModel) -> Result<SystemConfig> {
    cost.validate()?;
    if !(budget_mm2 > 0.0 && budget_mm2.is_finite()) {
        return Err(Error::System(format!("area budget must be positive, got {budget_mm2}")));
    }
    if !(0.0..=1.0).contains(&rom_fraction) {
        return Err(Error::System(format!("rom_fraction must be in [0, 1], got {rom_fraction}")));
    }
    let fit = |area: f64, kind: Placement| {
        // Guard against 0.24/0.24 landing a hair under 1.
        libm::floor(area / cost.macro_area_mm2(kind) * (1.0 + 1e-12)) as usize
    };
    let (rom, sram) = match kind {
        SystemKind::Hybrid => (fit(budget_mm2 * rom_fraction, Placement::Rom), fit(budget_mm2 * (1.0 - rom_fraction), Placement::Sram)),
        SystemKind::SramSingleChip | SystemKind::SramChiplets => (0, fit(budget_mm2, Placement::Sram)),
    };
    if rom + sram == 0 {
        return Err(Error::System(format!("a {budget_mm2} mm² budget holds no {} macro", kind.as_str())));
    }
    Ok(SystemConfig {
        kind,
        area_budget_mm2: budget_mm2,
        chips: 1,
        rom_macros: rom,
        sram_macros: sram,
        dram: kind == SystemKind::SramSingleChip,
        macro_capacity_mb: cost.macro_capacity_mb,
    })
}

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{
    compare, deploy_hybrid, deploy_rom_plain, deploy_sram, latency_overhead, plan_system, simulate_inference, size_chiplets,
    size_hybrid, size_iso_area, Comparison, CostModel, SimOptions, SimReport, SystemConfig, SystemKind,
};
use crate::cim::MacroConfig;
use crate::error::Result;
use crate::graph::NetworkGraph;
use crate::mapper::{MappingPlan, SchedulePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "U")]
    pub u: usize,
    pub seed: u64,
    /// Copies of every branch layer in the hybrid, each on its own macros.
    pub branch_copies: usize,
    pub options: SimOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { d: 4, u: 4, seed: 0, branch_copies: 2, options: SimOptions::default() }
    }
}

/// The three systems of one workload, sized and mapped. Plans depend on areas
/// only, so one `Prepared` serves every energy cost model.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub hybrid_net: NetworkGraph,
    pub plain_net: NetworkGraph,
    pub sram_net: NetworkGraph,
    pub hybrid: (SystemConfig, MappingPlan),
    pub plain: MappingPlan,
    pub sram: (SystemConfig, MappingPlan),
    pub chiplets: (SystemConfig, MappingPlan),
    pub config: StudyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub systems: Vec<SystemConfig>,
    pub hybrid: SimReport,
    pub sram_single_chip: SimReport,
    pub sram_chiplets: SimReport,
    pub hybrid_vs_sram: Comparison,
    pub hybrid_vs_chiplets: Comparison,
    /// Branch latency overhead with branches free to run beside the trunk.
    pub latency_overhead: f64,
    /// Same, with every layer forced to run alone.
    pub latency_overhead_serial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub dram_scale: f64,
    pub dram_energy_j_per_byte: f64,
    pub hybrid_vs_sram: f64,
    pub hybrid_vs_chiplets: f64,
}

impl Prepared {
    /// Sizes the hybrid chip to fit the branched network, then gives the
    /// single SRAM chip the same area and each chiplet the same area.
    pub fn new(net: &NetworkGraph, cost: &CostModel, cfg: &MacroConfig, config: StudyConfig) -> Result<Self> {
        let hybrid_net = deploy_hybrid(net, config.d, config.u, config.seed)?;
        let hybrid = size_hybrid(&hybrid_net, config.branch_copies, cost, cfg)?;
        let plain_net = deploy_rom_plain(net);
        let plain = plan_system(&hybrid.0, &plain_net, cost, cfg)?;
        let sram_net = deploy_sram(net);
        let budget = hybrid.0.area_budget_mm2;
        let sram_sys = size_iso_area(SystemKind::SramSingleChip, budget, 0.0, cost)?;
        let sram_plan = plan_system(&sram_sys, &sram_net, cost, cfg)?;
        let chiplets = size_chiplets(&sram_net, budget, cost, cfg)?;
        Ok(Self { hybrid_net, plain_net, sram_net, hybrid, plain, sram: (sram_sys, sram_plan), chiplets, config })
    }

    pub fn simulate(&self, cost: &CostModel, cfg: &MacroConfig) -> Result<Study> {
        let opts = self.config.options;
        let serial = SimOptions { eval: crate::mapper::EvalOptions { policy: SchedulePolicy::Serial, ..opts.eval }, ..opts };
        let hybrid = simulate_inference(&self.hybrid.0, &self.hybrid_net, &self.hybrid.1, cost, cfg, &opts)?;
        let hybrid_serial = simulate_inference(&self.hybrid.0, &self.hybrid_net, &self.hybrid.1, cost, cfg, &serial)?;
        let plain = simulate_inference(&self.hybrid.0, &self.plain_net, &self.plain, cost, cfg, &opts)?;
        let sram = simulate_inference(&self.sram.0, &self.sram_net, &self.sram.1, cost, cfg, &opts)?;
        let chiplets = simulate_inference(&self.chiplets.0, &self.sram_net, &self.chiplets.1, cost, cfg, &opts)?;
        Ok(Study {
            systems: alloc::vec![self.hybrid.0.clone(), self.sram.0.clone(), self.chiplets.0.clone()],
            hybrid_vs_sram: compare(&hybrid, &sram)?,
            hybrid_vs_chiplets: compare(&hybrid, &chiplets)?,
            latency_overhead: latency_overhead(&hybrid, &plain)?,
            latency_overhead_serial: latency_overhead(&hybrid_serial, &plain)?,
            hybrid,
            sram_single_chip: sram,
            sram_chiplets: chiplets,
        })
    }
}

pub fn run_study(net: &NetworkGraph, cost: &CostModel, cfg: &MacroConfig, config: StudyConfig) -> Result<Study> {
    Prepared::new(net, cost, cfg, config)?.simulate(cost, cfg)
}

/// Efficiency ratios with the DRAM energy multiplied by each of `scales`.
pub fn dram_sensitivity(prepared: &Prepared, cost: &CostModel, cfg: &MacroConfig, scales: &[f64]) -> Result<Vec<SensitivityRow>> {
    scales
        .iter()
        .map(|&s| {
            let c = CostModel { dram_energy_j_per_byte: cost.dram_energy_j_per_byte * s, ..cost.clone() };
            let study = prepared.simulate(&c, cfg)?;
            Ok(SensitivityRow {
                dram_scale: s,
                dram_energy_j_per_byte: c.dram_energy_j_per_byte,
                hybrid_vs_sram: study.hybrid_vs_sram.energy_eff_ratio,
                hybrid_vs_chiplets: study.hybrid_vs_chiplets.energy_eff_ratio,
            })
        })
        .collect()
}

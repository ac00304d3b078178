use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{cycle_time_s, macro_bits, CostModel, SystemConfig, SystemKind};
use crate::cim::{MacroConfig, MvmJob};
use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, Placement, Source};
use crate::mapper::{evaluate_plan, EvalOptions, MappingPlan};

/// Energy per component, J.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Breakdown {
    pub cim_compute: f64,
    pub adc: f64,
    pub sram_buffer: f64,
    pub dram: f64,
    pub chiplet_link: f64,
    pub standby: f64,
}

impl Breakdown {
    pub const COMPONENTS: [&'static str; 6] = ["cim_compute", "adc", "sram_buffer", "dram", "chiplet_link", "standby"];

    pub fn values(&self) -> [f64; 6] {
        [self.cim_compute, self.adc, self.sram_buffer, self.dram, self.chiplet_link, self.standby]
    }

    pub fn total(&self) -> f64 {
        self.values().iter().sum()
    }

    fn add(&mut self, o: &Breakdown) {
        self.cim_compute += o.cim_compute;
        self.adc += o.adc;
        self.sram_buffer += o.sram_buffer;
        self.dram += o.dram;
        self.chiplet_link += o.chiplet_link;
        self.standby += o.standby;
    }
}

/// One row of the per-layer table. Leakage is reported on a row named
/// `(standby)` since it belongs to the chip rather than a layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEnergy {
    pub layer: String,
    pub energy: Breakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub eval: EvalOptions,
    /// Charge the power-on load of SRAM weights to this inference.
    pub include_boot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub kind: SystemKind,
    pub workload: String,
    /// Hex digest of the untransformed network shape.
    pub workload_digest: String,
    /// `2 × MACs` of the untransformed network.
    pub ops: u64,
    /// Ops actually executed, branches included.
    pub executed_ops: u64,
    pub conversions: u64,
    pub buffer_bytes: u64,
    pub dram_bytes: u64,
    pub link_bits: u64,
    pub compute_latency_s: f64,
    pub transfer_latency_s: f64,
    /// `max(compute, transfer)`: transfers are double-buffered behind compute.
    pub latency_s: f64,
    pub area_mm2: f64,
    pub energy_j: f64,
    pub breakdown: Breakdown,
    /// `ops / energy_j`; 0 when the energy is 0.
    pub energy_efficiency_ops_per_j: f64,
    pub layers: Vec<LayerEnergy>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Weight bits of each layer that do not fit `capacity` bits, filling the
/// chip in layer order.
fn reload_bits(net: &NetworkGraph, capacity: u64) -> Vec<u64> {
    let mut left = capacity;
    net.layers
        .iter()
        .map(|l| {
            let bits = (l.param_count() * l.weight_bits as usize) as u64;
            let resident = bits.min(left);
            left -= resident;
            bits - resident
        })
        .collect()
}

/// Event-count energy and latency of one inference of `net` on `sys`.
pub fn simulate_inference(
    sys: &SystemConfig,
    net: &NetworkGraph,
    plan: &MappingPlan,
    cost: &CostModel,
    cfg: &MacroConfig,
    opts: &SimOptions,
) -> Result<SimReport> {
    cost.validate()?;
    if sys.chips == 0 {
        return Err(Error::System("a system needs at least one chip".into()));
    }
    if sys.kind != SystemKind::Hybrid {
        if let Some(l) = net.parametric().find(|l| l.placement == Some(Placement::Rom)) {
            return Err(Error::System(format!("`{}` is placed in ROM but {} has no ROM", l.name, sys.kind.as_str())));
        }
    }
    if let Some(a) = plan.assignments.iter().find(|a| a.chip >= sys.chips) {
        return Err(Error::Capacity { kind: "chip".into(), needed: a.chip as u64 + 1, available: sys.chips as u64 });
    }
    let eval = evaluate_plan(plan, net, cfg, &opts.eval)?;
    let info = net.analyze()?;
    let base = net.base();
    let base_info = base.analyze()?;
    let ops: u64 = (0..base.layers.len()).map(|i| 2 * base_info.macs(&base, i)).sum();

    let mut conv_of = vec![0u64; net.layers.len()];
    let mut cells_on: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); net.layers.len()];
    let mut cols_on: Vec<BTreeMap<usize, BTreeSet<usize>>> = vec![BTreeMap::new(); net.layers.len()];
    for a in &plan.assignments {
        let t = &a.tile;
        let job = MvmJob::worst_case(t.rows, t.width(), cfg);
        conv_of[t.layer_index] += t.positions(info.positions(t.layer_index)) as u64 * job.conversions(cfg);
        *cells_on[t.layer_index].entry(a.chip).or_insert(0) += t.cells() as u64;
        cols_on[t.layer_index].entry(a.chip).or_default().extend(t.col_start..t.col_start + t.cols);
    }

    let reload = match sys.kind {
        SystemKind::SramSingleChip if sys.dram => {
            reload_bits(net, (sys.chips * sys.sram_macros) as u64 * macro_bits(cost, cfg))
        }
        SystemKind::Hybrid if opts.include_boot => net
            .layers
            .iter()
            .map(|l| if l.placement == Some(Placement::Sram) { (l.param_count() * l.weight_bits as usize) as u64 } else { 0 })
            .collect(),
        _ => vec![0; net.layers.len()],
    };

    let bytes_of = |shape: [usize; 3], bits: u8| ((shape[0] * shape[1] * shape[2]) as u64 * bits as u64).div_ceil(8);
    let mut home = vec![0usize; net.layers.len()];
    let mut layers = Vec::with_capacity(net.layers.len() + 1);
    let mut total = Breakdown::default();
    let (mut executed, mut conversions, mut buffer, mut dram, mut link) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for (i, l) in net.layers.iter().enumerate() {
        let sources: Vec<(u64, usize)> = info.sources[i]
            .iter()
            .map(|s| match *s {
                Source::Input => (bytes_of(net.input_shape, 8), 0),
                Source::Layer(j) => (bytes_of(info.out_shapes[j], net.layers[j].act_bits), home[j]),
            })
            .collect();
        let out_bytes = bytes_of(info.out_shapes[i], l.act_bits);
        let mut e = Breakdown::default();
        let mut bytes = out_bytes + sources.iter().map(|s| s.0).sum::<u64>();
        let mut lbytes = 0.0;
        if l.kind.is_parametric() {
            let layer_ops = 2 * info.macs(net, i);
            executed += layer_ops;
            e.cim_compute = layer_ops as f64
                * match l.placement {
                    Some(Placement::Rom) => cost.rom_mac_energy_j_per_op,
                    Some(Placement::Sram) => cost.sram_mac_energy_j_per_op,
                    None => return Err(Error::Unplaced(l.name.clone())),
                };
            conversions += conv_of[i];
            e.adc = conv_of[i] as f64 * cost.adc_energy_j_per_conversion;
            home[i] = cells_on[i].iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&c, _)| c).unwrap_or(0);
            for (&c, cols) in &cols_on[i] {
                lbytes += sources.iter().filter(|s| s.1 != c).map(|s| s.0 as f64).sum::<f64>();
                if c != home[i] {
                    lbytes += (info.positions(i) * cols.len()) as f64 * cost.psum_bytes;
                }
            }
        } else {
            home[i] = sources.first().map(|s| s.1).unwrap_or(0);
            lbytes += sources.iter().filter(|s| s.1 != home[i]).map(|s| s.0 as f64).sum::<f64>();
        }
        if sys.kind != SystemKind::SramChiplets {
            lbytes = 0.0;
        }
        let lbits = libm::ceil(lbytes * 8.0) as u64;
        link += lbits;
        e.chiplet_link = lbits as f64 * cost.chiplet_link_energy_j_per_bit;
        let reload_bytes = reload[i].div_ceil(8);
        dram += reload_bytes;
        e.dram = reload_bytes as f64 * cost.dram_energy_j_per_byte;
        // Reloaded weights pass through the buffer on their way in.
        bytes += reload_bytes;
        buffer += bytes;
        e.sram_buffer = bytes as f64 * cost.sram_buffer_energy_j_per_byte;
        total.add(&e);
        layers.push(LayerEnergy { layer: l.name.clone(), energy: e });
    }

    let compute_latency_s = eval.latency_cycles as f64 * cycle_time_s(cfg)?;
    let transfer_latency_s = dram as f64 / cost.dram_bandwidth_bytes_per_s + link as f64 / cost.chiplet_link_bandwidth_bits_per_s;
    let latency_s = compute_latency_s.max(transfer_latency_s);
    let standby = Breakdown { standby: cost.sram_standby_w_per_mb * sys.sram_capacity_mb() * latency_s, ..Default::default() };
    total.add(&standby);
    layers.push(LayerEnergy { layer: "(standby)".into(), energy: standby });

    let energy_j = total.total();
    Ok(SimReport {
        kind: sys.kind,
        workload: base.name.clone(),
        workload_digest: hex(&net.workload_digest()),
        ops,
        executed_ops: executed,
        conversions,
        buffer_bytes: buffer,
        dram_bytes: dram,
        link_bits: link,
        compute_latency_s,
        transfer_latency_s,
        latency_s,
        area_mm2: sys.macro_area_mm2(cost),
        energy_j,
        breakdown: total,
        energy_efficiency_ops_per_j: if energy_j > 0.0 { ops as f64 / energy_j } else { 0.0 },
        layers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: SystemKind,
    pub b: SystemKind,
    pub workload: String,
    /// Efficiency of `a` over efficiency of `b`.
    pub energy_eff_ratio: f64,
    pub latency_ratio: f64,
    pub area_ratio: f64,
}

/// Ratios of `a` to `b`. Both reports must describe the same workload.
pub fn compare(a: &SimReport, b: &SimReport) -> Result<Comparison> {
    if a.workload_digest != b.workload_digest {
        return Err(Error::WorkloadMismatch(a.workload.clone(), b.workload.clone()));
    }
    let ratio = |x: f64, y: f64| if x == y { 1.0 } else { x / y };
    Ok(Comparison {
        a: a.kind,
        b: b.kind,
        workload: a.workload.clone(),
        energy_eff_ratio: ratio(a.energy_efficiency_ops_per_j, b.energy_efficiency_ops_per_j),
        latency_ratio: ratio(a.latency_s, b.latency_s),
        area_ratio: ratio(a.area_mm2, b.area_mm2),
    })
}

/// `(latency_with − latency_without) / latency_without` for the same workload.
pub fn latency_overhead(with_branch: &SimReport, without_branch: &SimReport) -> Result<f64> {
    if with_branch.workload_digest != without_branch.workload_digest {
        return Err(Error::WorkloadMismatch(with_branch.workload.clone(), without_branch.workload.clone()));
    }
    Ok((with_branch.latency_s - without_branch.latency_s) / without_branch.latency_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{deploy_sram, plan_system, size_chiplets, size_iso_area};
    use crate::workloads::vgg8;

    fn zero_cost() -> CostModel {
        CostModel::default().scale_energies(0.0)
    }

    #[test]
    fn zero_cost_zero_energy() {
        let net = deploy_sram(&vgg8(10));
        let cfg = MacroConfig::rom();
        let cost = zero_cost();
        let sys = size_iso_area(SystemKind::SramSingleChip, 20.0, 0.0, &cost).unwrap();
        let plan = plan_system(&sys, &net, &cost, &cfg).unwrap();
        let r = simulate_inference(&sys, &net, &plan, &cost, &cfg, &SimOptions::default()).unwrap();
        assert_eq!(r.energy_j, 0.0);
        assert!(r.dram_bytes > 0);
        let c = compare(&r, &r).unwrap();
        assert_eq!((c.energy_eff_ratio, c.latency_ratio, c.area_ratio), (1.0, 1.0, 1.0));
    }

    #[test]
    fn link_energy_is_bits_times_constant() {
        let net = deploy_sram(&vgg8(10));
        let cfg = MacroConfig::rom();
        let cost = CostModel::default();
        let (sys, plan) = size_chiplets(&net, 30.0, &cost, &cfg).unwrap();
        let r = simulate_inference(&sys, &net, &plan, &cost, &cfg, &SimOptions::default()).unwrap();
        assert!(r.link_bits > 0);
        assert_eq!(r.breakdown.chiplet_link, {
            let per: f64 = r.layers.iter().map(|l| l.energy.chiplet_link).sum();
            per
        });
        assert!((r.breakdown.chiplet_link - r.link_bits as f64 * 1.17e-12).abs() <= 1e-12 * r.breakdown.chiplet_link);
        assert_eq!(r.dram_bytes, 0);
    }
}

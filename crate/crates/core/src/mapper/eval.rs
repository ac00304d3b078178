use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{MappingPlan, Tile};
use crate::cim::{MacroConfig, MvmJob};
use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, Source};

/// Cycles for one matrix-vector product through `tile` at full-scale
/// activations.
pub(crate) fn tile_cycles(tile: &Tile, cfg: &MacroConfig) -> u64 {
    MvmJob::worst_case(tile.rows, tile.width(), cfg).cycles(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePolicy {
    /// A layer starts once its inputs are ready and its macros are free, so
    /// independent layers on disjoint macros overlap.
    #[default]
    Overlap,
    /// One layer at a time, in layer order.
    Serial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub policy: SchedulePolicy,
    /// Elements per cycle processed by the digital unit (activations,
    /// pooling, residual adds).
    pub digital_lanes: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { policy: SchedulePolicy::Overlap, digital_lanes: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTiming {
    pub layer: String,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationReport {
    /// Useful conversions over conversion slots (`slots × adc_count`).
    pub adc_utilization: f64,
    /// Occupied fraction of every subarray in the inventory.
    pub occupancy: Vec<f64>,
    pub latency_cycles: u64,
    pub useful_conversions: u64,
    pub conversion_slots: u64,
    pub layers: Vec<LayerTiming>,
}

/// Per-sample schedule of `plan` at full-scale activations.
///
/// Tiles in one macro share its ADCs and run one after another; each tile
/// performs one matrix-vector product per output position it serves. Digital layers
/// take `ceil(elements / digital_lanes)` cycles and never contend for macros.
pub fn evaluate_plan(plan: &MappingPlan, net: &NetworkGraph, cfg: &MacroConfig, opts: &EvalOptions) -> Result<UtilizationReport> {
    if opts.digital_lanes == 0 {
        return Err(Error::Plan("digital_lanes must be positive".into()));
    }
    plan.validate(net)?;
    let info = net.analyze()?;
    let mut per_layer: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); net.layers.len()];
    let (mut useful, mut slots) = (0u64, 0u64);
    for a in &plan.assignments {
        let t = &a.tile;
        let positions = t.positions(info.positions(t.layer_index)) as u64;
        let job = MvmJob::worst_case(t.rows, t.width(), cfg);
        *per_layer[t.layer_index].entry(a.macro_id).or_insert(0) += positions * job.cycles(cfg);
        useful += positions * job.conversions(cfg);
        slots += positions * job.cycles(cfg) * cfg.adc_count as u64;
    }

    let mut macro_free = vec![0u64; plan.inventory.macro_count()];
    let mut ends = vec![0u64; net.layers.len()];
    let mut clock = 0u64;
    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, l) in net.layers.iter().enumerate() {
        let mut ready = info.sources[i]
            .iter()
            .map(|s| match *s {
                Source::Input => 0,
                Source::Layer(j) => ends[j],
            })
            .max()
            .unwrap_or(0);
        if opts.policy == SchedulePolicy::Serial {
            ready = ready.max(clock);
        }
        let (start, end) = if l.kind.is_parametric() {
            let mut span = (u64::MAX, ready);
            for (&m, &work) in &per_layer[i] {
                let s = ready.max(macro_free[m]);
                macro_free[m] = s + work;
                span = (span.0.min(s), span.1.max(s + work));
            }
            (span.0.min(span.1), span.1)
        } else {
            let [c, h, w] = info.out_shapes[i];
            (ready, ready + (c * h * w).div_ceil(opts.digital_lanes) as u64)
        };
        ends[i] = end;
        clock = clock.max(end);
        layers.push(LayerTiming { layer: l.name.clone(), start, end });
    }

    Ok(UtilizationReport {
        adc_utilization: if slots == 0 { 0.0 } else { useful as f64 / slots as f64 },
        occupancy: plan.occupancy(),
        latency_cycles: clock,
        useful_conversions: useful,
        conversion_slots: slots,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{LayerSpec, Placement};
    use crate::mapper::{pack_greedy, pack_naive, tile_network, Inventory};

    fn placed(l: LayerSpec) -> LayerSpec {
        l.placed(Placement::Rom, false)
    }

    #[test]
    fn full_subarray_uses_every_slot() {
        let net = NetworkGraph::new("one", [128, 1, 1], vec![placed(LayerSpec::pointwise("p", 128, 32))]);
        let cfg = MacroConfig::rom();
        let tiles = tile_network(&net, &cfg).unwrap();
        let plan = pack_greedy(&tiles, &Inventory::uniform(1, 1, 0, 1), &net, &cfg).unwrap();
        let r = evaluate_plan(&plan, &net, &cfg, &EvalOptions::default()).unwrap();
        assert_eq!(r.adc_utilization, 1.0);
        assert_eq!(r.occupancy, vec![1.0]);
        // 5 row groups × 4 chunks × 3 steps × 16 conversion slots.
        assert_eq!(r.latency_cycles, 5 * 12 * 16);
    }

    #[test]
    fn partial_adc_group_lowers_utilization() {
        // 3 logical columns of 8 bits: 24 physical columns, 2 slots of 16.
        let net = NetworkGraph::new("one", [16, 1, 1], vec![placed(LayerSpec::pointwise("p", 16, 3))]);
        let cfg = MacroConfig::rom();
        let tiles = tile_network(&net, &cfg).unwrap();
        let plan = pack_greedy(&tiles, &Inventory::uniform(1, 1, 0, 1), &net, &cfg).unwrap();
        let r = evaluate_plan(&plan, &net, &cfg, &EvalOptions::default()).unwrap();
        assert_eq!(r.adc_utilization, 0.75);
    }

    #[test]
    fn independent_layers_overlap_only_on_separate_macros() {
        let net = NetworkGraph::new(
            "fork",
            [128, 2, 2],
            vec![
                placed(LayerSpec::pointwise("a", 128, 32)),
                placed(LayerSpec::pointwise("b", 128, 32).with_inputs(&["input"])),
                LayerSpec::add("s", "a", "b"),
            ],
        );
        let cfg = MacroConfig::rom();
        let tiles = tile_network(&net, &cfg).unwrap();
        let one = 4 * 5 * 12 * 16;
        let spread = pack_greedy(&tiles, &Inventory::uniform(1, 2, 0, 1), &net, &cfg).unwrap();
        let r = evaluate_plan(&spread, &net, &cfg, &EvalOptions::default()).unwrap();
        assert_eq!(r.layers[1].start, 0);
        assert_eq!(r.layers[2].start, one);
        let shared = pack_naive(&tiles, &Inventory::uniform(1, 1, 0, 2), &cfg).unwrap();
        let r = evaluate_plan(&shared, &net, &cfg, &EvalOptions::default()).unwrap();
        assert_eq!(r.layers[2].start, 2 * one);
        let serial = EvalOptions { policy: SchedulePolicy::Serial, ..Default::default() };
        let r = evaluate_plan(&spread, &net, &cfg, &serial).unwrap();
        assert_eq!(r.layers[2].start, 2 * one);
    }

    #[test]
    fn copies_divide_layer_time() {
        let net = NetworkGraph::new("one", [128, 2, 2], vec![placed(LayerSpec::pointwise("p", 128, 32))]);
        let cfg = MacroConfig::rom();
        let tiles = crate::mapper::replicate(&tile_network(&net, &cfg).unwrap(), |_| 2);
        let plan = pack_greedy(&tiles, &Inventory::uniform(1, 2, 0, 1), &net, &cfg).unwrap();
        let r = evaluate_plan(&plan, &net, &cfg, &EvalOptions::default()).unwrap();
        assert_eq!(r.latency_cycles, 2 * 5 * 12 * 16);
        assert_eq!(r.useful_conversions, 4 * 5 * 12 * 16 * cfg.adc_count as u64);
    }
}


use alloc::format;
use alloc::vec::Vec;

use super::{macro_bits, size_iso_area, subarrays_per_macro, CostModel, SystemConfig, SystemKind};
use crate::cim::MacroConfig;
use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, Placement};
use crate::mapper::{pack_greedy, replicate, tile_network, Inventory, MappingPlan, Tile};
use crate::rebranch::{eligible_convs, rebranch_each};

fn place(net: &NetworkGraph, f: impl Fn(usize, bool) -> Placement) -> NetworkGraph {
    let mut out = net.with_explicit_inputs();
    let last = out.layers.iter().rposition(|l| l.kind.is_parametric());
    for (i, l) in out.layers.iter_mut().enumerate() {
        if l.kind.is_parametric() {
            let p = f(i, Some(i) == last);
            l.placement = Some(p);
            l.trainable = p == Placement::Sram;
        }
    }
    out
}

/// Every weight in SRAM.
pub fn deploy_sram(net: &NetworkGraph) -> NetworkGraph {
    place(net, |_, _| Placement::Sram)
}

/// Frozen ROM trunk with only the output layer in SRAM, no branches.
pub fn deploy_rom_plain(net: &NetworkGraph) -> NetworkGraph {
    place(net, |_, last| if last { Placement::Sram } else { Placement::Rom })
}

/// The hybrid deployment: output layer in SRAM, every other weight in ROM, and
/// a single-layer branch on each eligible convolution with a kernel larger
/// than 1×1 (a branch on a pointwise layer would add more ROM than it saves).
pub fn deploy_hybrid(net: &NetworkGraph, d: usize, u: usize, seed: u64) -> Result<NetworkGraph> {
    let plain = deploy_rom_plain(net);
    let last = plain.layers.iter().rposition(|l| l.kind.is_parametric());
    let convs: Vec<_> = eligible_convs(&plain, d, u)
        .into_iter()
        .filter(|n| {
            let i = plain.index_of(n).expect("listed by eligible_convs");
            plain.layers[i].kernel > 1 && Some(i) != last
        })
        .collect();
    Ok(rebranch_each(&plain, &convs, d, u, seed)?.net)
}

fn cells(tiles: &[Tile], kind: Placement) -> u64 {
    tiles.iter().filter(|t| t.kind == kind).map(|t| t.cells() as u64).sum()
}

fn grow(n: usize) -> usize {
    n + (n / 20).max(1)
}

const MAX_ATTEMPTS: usize = 64;

/// Smallest hybrid chip (in macro counts, grown 5% at a time from the bit
/// count) on which the greedy packer places every tile of `net`, and the plan.
/// Branch layers are stored `branch_copies` times on spare macros.
pub fn size_hybrid(net: &NetworkGraph, branch_copies: usize, cost: &CostModel, cfg: &MacroConfig) -> Result<(SystemConfig, MappingPlan)> {
    cost.validate()?;
    let tiles = replicate(&tile_network(net, cfg)?, |i| if net.layers[i].origin.is_some() { branch_copies } else { 1 });
    let per = macro_bits(cost, cfg);
    let mut rom = cells(&tiles, Placement::Rom).div_ceil(per) as usize;
    let mut sram = cells(&tiles, Placement::Sram).div_ceil(per) as usize;
    let spm = subarrays_per_macro(cost, cfg);
    for _ in 0..MAX_ATTEMPTS {
        match pack_greedy(&tiles, &Inventory::uniform(1, rom, sram, spm), net, cfg) {
            Ok(plan) => {
                let area = rom as f64 * cost.macro_area_mm2(Placement::Rom) + sram as f64 * cost.macro_area_mm2(Placement::Sram);
                let sys = SystemConfig {
                    kind: SystemKind::Hybrid,
                    area_budget_mm2: area,
                    chips: 1,
                    rom_macros: rom,
                    sram_macros: sram,
                    dram: false,
                    macro_capacity_mb: cost.macro_capacity_mb,
                };
                return Ok((sys, plan));
            }
            Err(Error::Plan(_) | Error::Capacity { .. }) => {
                rom = if cells(&tiles, Placement::Rom) > 0 { grow(rom) } else { 0 };
                sram = if cells(&tiles, Placement::Sram) > 0 { grow(sram) } else { 0 };
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Plan(format!("could not size a hybrid chip for `{}`", net.name)))
}

/// Each SRAM macro of the chip is given as many virtual subarrays as the
/// network needs, standing for the weight sets it holds one after another
/// during an inference. The schedule then serializes everything a macro does.
fn plan_streaming(sys: &SystemConfig, net: &NetworkGraph, tiles: &[Tile], cost: &CostModel, cfg: &MacroConfig) -> Result<MappingPlan> {
    let sub = (cfg.rows * cfg.cols) as u64;
    let macros = sys.sram_macros * sys.chips;
    let mut per = (cells(tiles, Placement::Sram).div_ceil(sub * macros as u64) as usize).max(subarrays_per_macro(cost, cfg));
    for _ in 0..MAX_ATTEMPTS {
        match pack_greedy(tiles, &Inventory::uniform(1, 0, macros, per), net, cfg) {
            Ok(plan) => return Ok(plan),
            Err(Error::Plan(_) | Error::Capacity { .. }) => per = grow(per),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Plan(format!("could not stream `{}` through {macros} macros", net.name)))
}

/// Tiles are dealt to chips in layer order up to 90% of each chip's cells,
/// then packed greedily inside each chip.
fn plan_chiplets(sys: &SystemConfig, net: &NetworkGraph, tiles: &[Tile], cost: &CostModel, cfg: &MacroConfig) -> Result<MappingPlan> {
    let spm = subarrays_per_macro(cost, cfg);
    let chip_cells = (sys.sram_macros * spm * cfg.rows * cfg.cols) as f64;
    let target = 0.9 * chip_cells;
    let mut per_chip: Vec<Vec<Tile>> = alloc::vec![Vec::new(); sys.chips];
    let mut used = 0.0;
    for t in tiles {
        let c = ((used / target) as usize).min(sys.chips - 1);
        per_chip[c].push(t.clone());
        used += t.cells() as f64;
    }
    let mut plan = MappingPlan::empty(cfg, Inventory::uniform(sys.chips, 0, sys.sram_macros, spm));
    for (c, chip_tiles) in per_chip.iter().enumerate() {
        let local = pack_greedy(chip_tiles, &Inventory::uniform(1, 0, sys.sram_macros, spm), net, cfg)?;
        for mut a in local.assignments {
            a.chip = c;
            a.macro_id += c * sys.sram_macros;
            a.subarray += c * sys.sram_macros * spm;
            plan.assignments.push(a);
        }
    }
    Ok(plan)
}

/// Mapping plan of `net` on `sys`. The network's placements must suit the
/// system kind: SRAM-only systems take an all-SRAM network.
pub fn plan_system(sys: &SystemConfig, net: &NetworkGraph, cost: &CostModel, cfg: &MacroConfig) -> Result<MappingPlan> {
    if sys.kind != SystemKind::Hybrid {
        if let Some(l) = net.parametric().find(|l| l.placement == Some(Placement::Rom)) {
            return Err(Error::System(format!("`{}` is placed in ROM but {} has no ROM", l.name, sys.kind.as_str())));
        }
    }
    let tiles = tile_network(net, cfg)?;
    match sys.kind {
        SystemKind::Hybrid => {
            pack_greedy(&tiles, &Inventory::uniform(sys.chips, sys.rom_macros, sys.sram_macros, subarrays_per_macro(cost, cfg)), net, cfg)
        }
        SystemKind::SramSingleChip => plan_streaming(sys, net, &tiles, cost, cfg),
        SystemKind::SramChiplets => plan_chiplets(sys, net, &tiles, cost, cfg),
    }
}

/// Fewest chips of `per_chip_budget_mm2` that hold every weight of an
/// all-SRAM `net`, and the plan.
pub fn size_chiplets(net: &NetworkGraph, per_chip_budget_mm2: f64, cost: &CostModel, cfg: &MacroConfig) -> Result<(SystemConfig, MappingPlan)> {
    let mut sys = size_iso_area(SystemKind::SramChiplets, per_chip_budget_mm2, 0.0, cost)?;
    let tiles = tile_network(net, cfg)?;
    let chip_cells = (sys.sram_macros as u64 * macro_bits(cost, cfg)) as f64;
    sys.chips = (libm::ceil(cells(&tiles, Placement::Sram) as f64 / (0.9 * chip_cells)) as usize).max(1);
    for _ in 0..MAX_ATTEMPTS {
        match plan_system(&sys, net, cost, cfg) {
            Ok(plan) => return Ok((sys, plan)),
            Err(Error::Plan(_) | Error::Capacity { .. }) => sys.chips += 1,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Plan(format!("could not split `{}` across chiplets", net.name)))
}

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::eval::tile_cycles;
use super::{Assignment, Inventory, MappingPlan, Tile};
use crate::cim::MacroConfig;
use crate::error::{Error, Result};
use crate::graph::{reachability, NetworkGraph, Placement};

/// Free space of one subarray, tracked as a skyline of used rows per
/// physical column.
#[derive(Debug, Clone)]
struct Bin {
    sky: Vec<usize>,
    used: usize,
}

impl Bin {
    fn new(cols: usize) -> Self {
        Self { sky: vec![0; cols], used: 0 }
    }

    /// Lowest, then leftmost, position where a `rows × width` block fits.
    fn fit(&self, rows: usize, width: usize, max_rows: usize) -> Option<(usize, usize)> {
        let cols = self.sky.len();
        if width > cols {
            return None;
        }
        let mut best: Option<(usize, usize)> = None;
        let mut x = 0;
        while x + width <= cols {
            let y = self.sky[x..x + width].iter().copied().max().unwrap_or(0);
            if y + rows <= max_rows && best.is_none_or(|(by, _)| y < by) {
                best = Some((y, x));
            }
            // Next candidate: the start of the next skyline segment.
            let h = self.sky[x];
            x += 1;
            while x < cols && self.sky[x] == h {
                x += 1;
            }
        }
        best
    }

    fn place(&mut self, row: usize, col: usize, rows: usize, width: usize) {
        for h in &mut self.sky[col..col + width] {
            *h = row + rows;
        }
        self.used += rows * width;
    }
}

/// Packing state of one macro.
#[derive(Debug, Clone)]
struct MacroSlot {
    kind: Placement,
    subarrays: Vec<usize>,
    /// Subarrays `subarrays[..opened]` have been written to.
    opened: usize,
    free: usize,
    /// Scheduled work per layer, sorted by layer index.
    loads: Vec<(usize, u64)>,
}

struct Packer<'a> {
    plan: MappingPlan,
    bins: Vec<Bin>,
    macros: Vec<MacroSlot>,
    cap: usize,
    cfg: &'a MacroConfig,
}

impl<'a> Packer<'a> {
    fn new(inventory: &Inventory, cfg: &'a MacroConfig) -> Self {
        let cap = cfg.rows * cfg.cols;
        let mut macros: Vec<MacroSlot> = (0..inventory.macro_count())
            .map(|_| MacroSlot { kind: Placement::Rom, subarrays: Vec::new(), opened: 0, free: 0, loads: Vec::new() })
            .collect();
        for (i, s) in inventory.subarrays.iter().enumerate() {
            let m = &mut macros[s.macro_id];
            m.kind = s.kind;
            m.subarrays.push(i);
            m.free += cap;
        }
        macros.retain(|m| !m.subarrays.is_empty());
        Self {
            plan: MappingPlan::empty(cfg, inventory.clone()),
            bins: vec![Bin::new(cfg.cols); inventory.subarrays.len()],
            macros,
            cap,
            cfg,
        }
    }

    fn check_capacity(&self, tiles: &[Tile]) -> Result<()> {
        for kind in [Placement::Rom, Placement::Sram] {
            let needed: usize = tiles.iter().filter(|t| t.kind == kind).map(Tile::cells).sum();
            let available = self.plan.inventory.count(kind) * self.cap;
            if needed > available {
                return Err(Error::Capacity { kind: kind.as_str().into(), needed: needed as u64, available: available as u64 });
            }
        }
        Ok(())
    }

    /// Best-fitting opened subarray of macro `m`, else its next fresh one.
    fn slot_in(&self, m: usize, tile: &Tile) -> Option<(usize, usize, usize)> {
        let mac = &self.macros[m];
        if mac.free < tile.cells() {
            return None;
        }
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for &b in &mac.subarrays[..mac.opened] {
            let bin = &self.bins[b];
            if self.cap - bin.used < tile.cells() {
                continue;
            }
            if let Some((r, c)) = bin.fit(tile.rows, tile.width(), self.cfg.rows) {
                let left = self.cap - bin.used - tile.cells();
                if best.is_none_or(|(l, _, _, _)| left < l) {
                    best = Some((left, b, r, c));
                }
            }
        }
        match best {
            Some((_, b, r, c)) => Some((b, r, c)),
            None => mac.subarrays.get(mac.opened).map(|&b| (b, 0, 0)),
        }
    }

    fn place(&mut self, tile: &Tile, m: usize, bin: usize, row: usize, col: usize, work: u64) {
        self.bins[bin].place(row, col, tile.rows, tile.width());
        let mac = &mut self.macros[m];
        if mac.subarrays.get(mac.opened) == Some(&bin) {
            mac.opened += 1;
        }
        mac.free -= tile.cells();
        match mac.loads.binary_search_by_key(&tile.layer_index, |&(l, _)| l) {
            Ok(i) => mac.loads[i].1 += work,
            Err(i) => mac.loads.insert(i, (tile.layer_index, work)),
        }
        let sub = self.plan.inventory.subarrays[bin];
        self.plan.assignments.push(Assignment {
            tile: tile.clone(),
            chip: sub.chip,
            macro_id: sub.macro_id,
            subarray: bin,
            row_offset: row,
            col_offset: col,
        });
    }

    fn stuck(&self, tile: &Tile) -> Error {
        Error::Plan(format!(
            "no subarray has room for a {}x{} tile of `{}` after fragmentation",
            tile.rows,
            tile.width(),
            tile.layer
        ))
    }

    fn finish(mut self) -> MappingPlan {
        self.plan.assignments.sort_by_key(|a| (a.subarray, a.row_offset, a.col_offset));
        self.plan
    }
}

/// Largest tile first (ties by ascending layer index). Each tile goes to the
/// macro carrying the least work that could run at the same time as it (tiles
/// of the same layer, or of a layer independent of it), lowest macro first on
/// ties. Inside the macro it takes the best-fitting partly used subarray,
/// sharing it with other layers' tiles where columns remain.
pub fn pack_greedy(tiles: &[Tile], inventory: &Inventory, net: &NetworkGraph, cfg: &MacroConfig) -> Result<MappingPlan> {
    let info = net.analyze()?;
    let reach = reachability(&info);
    let mut p = Packer::new(inventory, cfg);
    p.check_capacity(tiles)?;
    let mut order: Vec<&Tile> = tiles.iter().collect();
    order.sort_by(|a, b| {
        b.cells().cmp(&a.cells()).then(a.layer_index.cmp(&b.layer_index)).then(a.row_start.cmp(&b.row_start)).then(a.col_start.cmp(&b.col_start)).then(a.replica.cmp(&b.replica))
    });
    for tile in order {
        let li = tile.layer_index;
        let work = tile.positions(info.positions(li)) as u64 * tile_cycles(tile, cfg);
        let mut best: Option<(u64, usize, (usize, usize, usize))> = None;
        for (m, mac) in p.macros.iter().enumerate() {
            if mac.kind != tile.kind || mac.free < tile.cells() {
                continue;
            }
            let clash: u64 =
                mac.loads.iter().filter(|&&(l, _)| l == li || (!reach[l][li] && !reach[li][l])).map(|&(_, w)| w).sum();
            if best.as_ref().is_some_and(|&(c, _, _)| c <= clash) {
                continue;
            }
            if let Some(slot) = p.slot_in(m, tile) {
                best = Some((clash, m, slot));
            }
        }
        let Some((_, m, (bin, row, col))) = best else {
            return Err(p.stuck(tile));
        };
        p.place(tile, m, bin, row, col, work);
    }
    Ok(p.finish())
}

/// Baseline: each layer gets its own subarrays, taken in inventory order and
/// filled first-fit in tile order.
pub fn pack_naive(tiles: &[Tile], inventory: &Inventory, cfg: &MacroConfig) -> Result<MappingPlan> {
    let mut p = Packer::new(inventory, cfg);
    p.check_capacity(tiles)?;
    let mut fresh: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in inventory.subarrays.iter().enumerate().rev() {
        fresh[(s.kind == Placement::Sram) as usize].push(i);
    }
    let macro_of: Vec<usize> = {
        let mut v = vec![0; inventory.subarrays.len()];
        for (m, mac) in p.macros.iter().enumerate() {
            for &b in &mac.subarrays {
                v[b] = m;
            }
        }
        v
    };
    let mut current: Option<(usize, usize)> = None;
    for tile in tiles {
        let slot = match current {
            Some((layer, b)) if layer == tile.layer_index => p.bins[b].fit(tile.rows, tile.width(), cfg.rows).map(|rc| (b, rc)),
            _ => None,
        };
        let (bin, (row, col)) = match slot {
            Some(s) => s,
            None => {
                let b = fresh[(tile.kind == Placement::Sram) as usize].pop().ok_or_else(|| p.stuck(tile))?;
                (b, (0, 0))
            }
        };
        current = Some((tile.layer_index, bin));
        p.place(tile, macro_of[bin], bin, row, col, 0);
    }
    Ok(p.finish())
}

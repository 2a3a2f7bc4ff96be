//! Variation-aware quadratic global placement.
//!
//! Successive phases of convex QP optimization and area-balanced
//! bipartitioning, with center-of-gravity equality constraints per region.
//! Connection weights shrink for soft-error-sensitive cells so their nets pull
//! less, and an iterative penalty pass anchors sensitive cells that landed in
//! LVT blocks toward the nearest HVT block. The final positions are legalized
//! onto a uniform row/slot grid.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{CellIdx, NetDriver, NetIdx, Netlist};
use crate::sermodel::SerReport;
use crate::solver::{solve_eq_qp, EqConstrainedQp, SolverError, SparseSymmetric};
use crate::variation::{RMap, RegionBlock, RegionClass, VariationGrid};

#[derive(Debug, Error)]
pub enum PlaceError {
    #[error("infeasible: {cells} cells need {needed} slots but the die provides {available}")]
    Infeasible {
        cells: usize,
        needed: usize,
        available: usize,
    },
    #[error("empty partition node")]
    EmptyPartition,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("malformed placement file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed I/O anchor on the die boundary.
#[derive(Debug, Clone, Copy)]
pub struct IoPad {
    pub net: NetIdx,
    pub x: f64,
    pub y: f64,
}

/// Row-based die. Dimensions are in site units; rows are one site tall.
#[derive(Debug, Clone)]
pub struct Die {
    pub width: f64,
    pub height: f64,
    pub rows: u32,
    pub row_height: f64,
    pub io_pads: Vec<IoPad>,
}

impl Die {
    /// Size a die for a netlist at the given slot utilization: roughly square
    /// in sites, primary-input pads on the left edge, output pads on the
    /// right.
    pub fn for_netlist(net: &Netlist, pitch: f64, utilization: f64) -> Die {
        assert!(utilization > 0.0 && utilization <= 1.0);
        let slots_needed = ((net.num_cells() as f64 / utilization).ceil() as usize).max(2);
        let rows = ((slots_needed as f64 * pitch).sqrt().ceil() as u32).max(2);
        let cols = (slots_needed as u32).div_ceil(rows).max(2);
        let width = cols as f64 * pitch;
        let height = rows as f64;
        let mut io_pads = Vec::new();
        let pis = net.primary_inputs();
        for (k, &n) in pis.iter().enumerate() {
            io_pads.push(IoPad {
                net: n,
                x: 0.0,
                y: (k as f64 + 0.5) / pis.len() as f64 * height,
            });
        }
        let pos = net.primary_outputs();
        for (k, &n) in pos.iter().enumerate() {
            io_pads.push(IoPad {
                net: n,
                x: width,
                y: (k as f64 + 0.5) / pos.len() as f64 * height,
            });
        }
        Die {
            width,
            height,
            rows,
            row_height: 1.0,
            io_pads,
        }
    }

    pub fn row_center_y(&self, row: u32) -> f64 {
        row as f64 * self.row_height + 0.5 * self.row_height
    }

    pub fn pad_positions(&self) -> HashMap<NetIdx, (f64, f64)> {
        self.io_pads.iter().map(|p| (p.net, (p.x, p.y))).collect()
    }
}

/// Uniform slot pitch: the widest cell in the library the netlist uses.
pub fn slot_pitch(net: &Netlist) -> f64 {
    net.cells()
        .iter()
        .map(|c| net.library()[c.kind.0 as usize].area)
        .fold(1.0f64, f64::max)
}

/// Legalized placement: every cell owns one slot of a rows × cols grid.
#[derive(Debug, Clone)]
pub struct Placement {
    pub die: Die,
    pub pitch: f64,
    pub cols: u32,
    /// Per cell: (row, col).
    pub slots: Vec<(u32, u32)>,
}

impl Placement {
    pub fn x(&self, c: CellIdx) -> f64 {
        self.slots[c.usize()].1 as f64 * self.pitch + 0.5 * self.pitch
    }

    pub fn y(&self, c: CellIdx) -> f64 {
        self.die.row_center_y(self.slots[c.usize()].0)
    }

    pub fn pos(&self, c: CellIdx) -> (f64, f64) {
        (self.x(c), self.y(c))
    }

    pub fn row_of(&self, c: CellIdx) -> u32 {
        self.slots[c.usize()].0
    }

    /// Slot occupancy grid, row-major rows × cols.
    pub fn occupancy(&self) -> Vec<Option<CellIdx>> {
        let mut occ = vec![None; self.die.rows as usize * self.cols as usize];
        for (i, &(r, c)) in self.slots.iter().enumerate() {
            let k = r as usize * self.cols as usize + c as usize;
            debug_assert!(occ[k].is_none());
            occ[k] = Some(CellIdx(i as u32));
        }
        occ
    }

    /// Exhaustive legality check: one cell per slot, all slots in bounds.
    pub fn check_legal(&self, net: &Netlist) -> Result<(), PlaceError> {
        if self.slots.len() != net.num_cells() {
            return Err(PlaceError::MalformedFile("cell count mismatch".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &(r, c) in &self.slots {
            if r >= self.die.rows || c >= self.cols {
                return Err(PlaceError::MalformedFile(format!(
                    "slot ({r},{c}) outside {}x{} grid",
                    self.die.rows, self.cols
                )));
            }
            if !seen.insert((r, c)) {
                return Err(PlaceError::MalformedFile(format!(
                    "slot ({r},{c}) assigned twice"
                )));
            }
        }
        Ok(())
    }
}

/// Half-perimeter wirelength over all nets, pads included.
pub fn hpwl(net: &Netlist, p: &Placement) -> f64 {
    let pads = p.die.pad_positions();
    hpwl_with(net, &pads, |c| p.pos(c))
}

fn hpwl_with(
    net: &Netlist,
    pads: &HashMap<NetIdx, (f64, f64)>,
    pos: impl Fn(CellIdx) -> (f64, f64),
) -> f64 {
    let mut total = 0.0;
    for (ni, n) in net.nets().iter().enumerate() {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut pins = 0;
        let mut extend = |(x, y): (f64, f64)| {
            lo.0 = lo.0.min(x);
            lo.1 = lo.1.min(y);
            hi.0 = hi.0.max(x);
            hi.1 = hi.1.max(y);
        };
        if let NetDriver::Cell(c) = n.driver {
            extend(pos(c));
            pins += 1;
        }
        for &(s, _) in &n.sinks {
            extend(pos(s));
            pins += 1;
        }
        if let Some(&p) = pads.get(&NetIdx(ni as u32)) {
            extend(p);
            pins += 1;
        }
        if pins >= 2 {
            total += (hi.0 - lo.0) + (hi.1 - lo.1);
        }
    }
    total
}

/// Per-cell V_th resolved from the fragment under each cell's center.
/// Cells share the fragment's value.
pub fn resolve_vth(net: &Netlist, p: &Placement, g: &VariationGrid) -> Vec<f64> {
    (0..net.num_cells())
        .map(|i| {
            let c = CellIdx(i as u32);
            let (fx, fy) =
                g.fragment_of_unit(p.x(c) / p.die.width, p.y(c) / p.die.height);
            g.at(fx, fy)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// One region of the bipartition tree with its member cells.
#[derive(Debug, Clone)]
pub struct PartitionNode {
    pub lx: f64,
    pub ux: f64,
    pub ly: f64,
    pub uy: f64,
    pub members: Vec<CellIdx>,
    pub level: u32,
    pub cut: Axis,
}

impl PartitionNode {
    pub fn center(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => 0.5 * (self.lx + self.ux),
            Axis::Y => 0.5 * (self.ly + self.uy),
        }
    }
}

/// Spring anchor pulling one sensitive cell toward an HVT target point.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyAnchor {
    pub cell: CellIdx,
    pub target: (f64, f64),
    pub weight: f64,
}

/// Raw LVT-occupancy penalty weight e^((SER' + 1)^K).
pub fn raw_penalty_weight(ser_norm: f64, k: f64) -> f64 {
    ((ser_norm + 1.0).powf(k)).exp()
}

/// Pairwise connection weight: 1 shrunk by the mean normalized SER of the
/// endpoints, clamped away from zero so no net fully disconnects.
fn ser_pair_weight(sa: f64, sb: f64) -> f64 {
    (1.0 - 0.5 * (sa + sb)).clamp(0.05, 1.0)
}

/// A pin participating in the clique expansion of one net.
enum CliquePin {
    Cell(CellIdx, f64),
    Fixed(f64, f64, f64), // x, y, ser_norm (pads and pinned cells)
}

/// Median clique-edge weight of the netlist under the current report; anchors
/// are normalized against this so penalties and wirelength stay comparable.
pub fn median_connection_weight(net: &Netlist, r: &SerReport, ser_aware: bool) -> f64 {
    let mut weights = Vec::new();
    for ni in 0..net.num_nets() {
        let pins = net.net_pin_count(NetIdx(ni as u32));
        if pins < 2 {
            continue;
        }
        let scale = 2.0 / pins as f64;
        let n = net.net(NetIdx(ni as u32));
        let mut ids: Vec<Option<CellIdx>> = Vec::new();
        if let NetDriver::Cell(c) = n.driver {
            ids.push(Some(c));
        } else {
            ids.push(None);
        }
        for &(s, _) in &n.sinks {
            ids.push(Some(s));
        }
        if n.is_primary_output {
            ids.push(None);
        }
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let sa = ids[i].map_or(0.0, |c| r.ser_norm_of(c));
                let sb = ids[j].map_or(0.0, |c| r.ser_norm_of(c));
                let w = if ser_aware { ser_pair_weight(sa, sb) } else { 1.0 };
                weights.push(w * scale);
            }
        }
    }
    if weights.is_empty() {
        return 1.0;
    }
    weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    weights[(weights.len() - 1) / 2]
}

/// Assemble the per-axis QP: clique-expanded connectivity with SER-dependent
/// weights, anchor springs, and one center-of-gravity row per multi-member
/// region. Cells with a pinned coordinate contribute fixed-point terms.
#[allow(clippy::too_many_arguments)]
fn assemble_axis_qp(
    net: &Netlist,
    r: &SerReport,
    ser_aware: bool,
    regions: &[PartitionNode],
    anchors: &[PenaltyAnchor],
    axis: Axis,
    die: &Die,
    pinned: &[Option<(f64, f64)>],
) -> Option<(EqConstrainedQp, Vec<CellIdx>)> {
    let ncells = net.num_cells();
    let mut free_of: Vec<Option<usize>> = vec![None; ncells];
    let mut free_cells: Vec<CellIdx> = Vec::new();
    for i in 0..ncells {
        if pinned[i].is_none() {
            free_of[i] = Some(free_cells.len());
            free_cells.push(CellIdx(i as u32));
        }
    }
    if free_cells.is_empty() {
        return None;
    }
    let nfree = free_cells.len();
    let mut q = SparseSymmetric::new(nfree);
    let mut c = vec![0.0f64; nfree];
    let pads = die.pad_positions();

    let coord = |x: f64, y: f64| match axis {
        Axis::X => x,
        Axis::Y => y,
    };

    for ni in 0..net.num_nets() {
        let pin_count = net.net_pin_count(NetIdx(ni as u32));
        if pin_count < 2 {
            continue;
        }
        let scale = 2.0 / pin_count as f64;
        let n = net.net(NetIdx(ni as u32));
        let mut pins: Vec<CliquePin> = Vec::with_capacity(pin_count);
        let push_cell = |c: CellIdx, pins: &mut Vec<CliquePin>| {
            let s = r.ser_norm_of(c);
            match pinned[c.usize()] {
                None => pins.push(CliquePin::Cell(c, s)),
                Some((px, py)) => pins.push(CliquePin::Fixed(px, py, s)),
            }
        };
        match n.driver {
            NetDriver::Cell(dc) => push_cell(dc, &mut pins),
            NetDriver::PrimaryInput => {
                if let Some(&(px, py)) = pads.get(&NetIdx(ni as u32)) {
                    pins.push(CliquePin::Fixed(px, py, 0.0));
                }
            }
        }
        for &(s, _) in &n.sinks {
            push_cell(s, &mut pins);
        }
        if n.is_primary_output {
            if let Some(&(px, py)) = pads.get(&NetIdx(ni as u32)) {
                pins.push(CliquePin::Fixed(px, py, 0.0));
            }
        }
        for i in 0..pins.len() {
            for j in i + 1..pins.len() {
                let (sa, sb) = (
                    match pins[i] {
                        CliquePin::Cell(_, s) | CliquePin::Fixed(_, _, s) => s,
                    },
                    match pins[j] {
                        CliquePin::Cell(_, s) | CliquePin::Fixed(_, _, s) => s,
                    },
                );
                let w = scale * if ser_aware { ser_pair_weight(sa, sb) } else { 1.0 };
                match (&pins[i], &pins[j]) {
                    (CliquePin::Cell(a, _), CliquePin::Cell(b, _)) => {
                        let (fa, fb) = (free_of[a.usize()].unwrap(), free_of[b.usize()].unwrap());
                        q.add(fa, fa, 2.0 * w);
                        q.add(fb, fb, 2.0 * w);
                        q.add(fa, fb, -2.0 * w);
                    }
                    (CliquePin::Cell(a, _), CliquePin::Fixed(px, py, _))
                    | (CliquePin::Fixed(px, py, _), CliquePin::Cell(a, _)) => {
                        let fa = free_of[a.usize()].unwrap();
                        q.add(fa, fa, 2.0 * w);
                        c[fa] -= 2.0 * w * coord(*px, *py);
                    }
                    (CliquePin::Fixed(..), CliquePin::Fixed(..)) => {}
                }
            }
        }
    }

    for a in anchors {
        if let Some(fa) = free_of[a.cell.usize()] {
            q.add(fa, fa, 2.0 * a.weight);
            c[fa] -= 2.0 * a.weight * coord(a.target.0, a.target.1);
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    for region in regions {
        let has_free = region.members.iter().any(|m| free_of[m.usize()].is_some());
        if !has_free {
            continue;
        }
        let total: f64 = region
            .members
            .iter()
            .filter(|m| free_of[m.usize()].is_some())
            .map(|&m| net.kind_of(m).area)
            .sum();
        let mut row = vec![0.0f64; nfree];
        for &m in &region.members {
            if let Some(f) = free_of[m.usize()] {
                row[f] = net.kind_of(m).area / total;
            }
        }
        rows.push(row);
        u.push(region.center(axis));
    }

    Some((EqConstrainedQp { q, c, a: rows, u }, free_cells))
}

/// Build the axis QP over all cells (no pinning); the public entry point for
/// direct use and tests.
pub fn build_qp(
    net: &Netlist,
    r: &SerReport,
    regions: &[PartitionNode],
    anchors: &[PenaltyAnchor],
    axis: Axis,
    die: &Die,
) -> Result<EqConstrainedQp, PlaceError> {
    if regions.iter().any(|p| p.members.is_empty()) {
        return Err(PlaceError::EmptyPartition);
    }
    let pinned = vec![None; net.num_cells()];
    let (qp, _) = assemble_axis_qp(net, r, true, regions, anchors, axis, die, &pinned)
        .expect("netlist has cells");
    Ok(qp)
}

/// Sensitive cells geometrically inside LVT blocks of the R-map scaled onto
/// the die. Fragment bounds are half-open, so a cell exactly on a shared edge
/// belongs to the upper block.
pub fn lvt_membership(
    xs: &[f64],
    ys: &[f64],
    die: &Die,
    rmap: &RMap,
    sensitive: &std::collections::BTreeSet<CellIdx>,
) -> Vec<(CellIdx, usize)> {
    let n = rmap.n;
    // fragment -> block index lookup
    let mut frag_block = vec![usize::MAX; n * n];
    for (bi, b) in rmap.blocks.iter().enumerate() {
        for y in b.ly..=b.uy {
            for x in b.lx..=b.ux {
                frag_block[y * n + x] = bi;
            }
        }
    }
    let mut out = Vec::new();
    for &c in sensitive {
        let fx = ((xs[c.usize()] / die.width * n as f64).floor() as isize).clamp(0, n as isize - 1)
            as usize;
        let fy = ((ys[c.usize()] / die.height * n as f64).floor() as isize)
            .clamp(0, n as isize - 1) as usize;
        let bi = frag_block[fy * n + fx];
        if bi != usize::MAX && rmap.blocks[bi].cls == RegionClass::Lvt {
            out.push((c, bi));
        }
    }
    out
}

/// Anchors for sensitive cells found inside LVT blocks: each cell targets the
/// nearest point (one fragment inward) of the nearest HVT block that still
/// has slot capacity, strongest cells served first, so anchored cells do not
/// pile onto a patch that cannot hold them. The raw e^((SER'+1)^K) weight is
/// scaled so its median matches the median net weight. Returns no anchors
/// (with a warning) when the map has no HVT block.
#[allow(clippy::too_many_arguments)]
pub fn penalty_pass(
    xs: &[f64],
    ys: &[f64],
    incidences: &[(CellIdx, usize)],
    r: &SerReport,
    rmap: &RMap,
    die: &Die,
    pitch: f64,
    k: f64,
    median_net_weight: f64,
    penalty_scale: f64,
) -> Vec<PenaltyAnchor> {
    assert!(k > 0.0);
    if incidences.is_empty() {
        return Vec::new();
    }
    let hvt: Vec<&RegionBlock> = rmap
        .blocks
        .iter()
        .filter(|b| b.cls == RegionClass::Hvt)
        .collect();
    if hvt.is_empty() {
        log::warn!("variation map has no HVT block: placing without penalties");
        return Vec::new();
    }
    let fw = die.width / rmap.n as f64;
    let fh = die.height / rmap.n as f64;

    // Approximate slot capacity of each HVT block on this die.
    let mut cap: Vec<usize> = hvt
        .iter()
        .map(|b| {
            let w_sites = (b.ux - b.lx + 1) as f64 * fw;
            let h_rows = (b.uy - b.ly + 1) as f64 * fh / die.row_height;
            ((w_sites / pitch).floor() * h_rows.floor()).max(0.0) as usize
        })
        .collect();

    let raw: Vec<f64> = incidences
        .iter()
        .map(|&(c, _)| raw_penalty_weight(r.ser_norm_of(c), k))
        .collect();
    let mut sorted = raw.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_raw = sorted[(sorted.len() - 1) / 2];
    let beta = median_net_weight / median_raw;

    // Strongest (highest SER') cells pick their blocks first.
    let mut order: Vec<usize> = (0..incidences.len()).collect();
    order.sort_by(|&a, &b| {
        raw[b]
            .partial_cmp(&raw[a])
            .unwrap()
            .then(incidences[a].0.cmp(&incidences[b].0))
    });

    let mut anchors = Vec::with_capacity(incidences.len());
    for idx in order {
        let (cell, _) = incidences[idx];
        let weight = beta * raw[idx] * penalty_scale;
        if weight <= 0.0 {
            continue;
        }
        let (cx, cy) = (xs[cell.usize()], ys[cell.usize()]);
        let mut best: Option<(f64, usize)> = None;
        for (bi, b) in hvt.iter().enumerate() {
            if cap[bi] == 0 {
                continue;
            }
            let rlx = b.lx as f64 * fw;
            let rux = (b.ux + 1) as f64 * fw;
            let rly = b.ly as f64 * fh;
            let ruy = (b.uy + 1) as f64 * fh;
            let dx = (rlx - cx).max(0.0).max(cx - rux);
            let dy = (rly - cy).max(0.0).max(cy - ruy);
            let d2 = dx * dx + dy * dy;
            if best.map_or(true, |(bd, _)| d2 < bd) {
                best = Some((d2, bi));
            }
        }
        let Some((_, bi)) = best else {
            continue; // all blocks full: the weakest cells go unanchored
        };
        cap[bi] -= 1;
        let b = hvt[bi];
        let rlx = b.lx as f64 * fw;
        let rux = (b.ux + 1) as f64 * fw;
        let rly = b.ly as f64 * fh;
        let ruy = (b.uy + 1) as f64 * fh;
        // Nearest boundary point, then one fragment inward per clamped axis.
        let inward = |v: f64, lo: f64, hi: f64, step: f64| {
            let center = 0.5 * (lo + hi);
            if v < lo {
                (lo + step).min(center)
            } else if v > hi {
                (hi - step).max(center)
            } else {
                v
            }
        };
        let tx = inward(cx, rlx, rux, fw);
        let ty = inward(cy, rly, ruy, fh);
        anchors.push(PenaltyAnchor {
            cell,
            target: (tx, ty),
            weight,
        });
    }
    anchors.sort_by_key(|a| a.cell);
    anchors
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalConfig {
    /// Penalty exponent K.
    pub k: f64,
    /// Penalty re-solves per bipartition level.
    pub penalty_iters: u32,
    /// Recursion stops once every region holds this many cells or fewer.
    pub leaf_size: usize,
    /// LVT blocks smaller than this are dropped from penalty generation.
    pub min_area: usize,
    /// HVT blocks smaller than this, mostly surrounded by LVT, count as LVT.
    pub bridge_area: usize,
    /// False gives the plain wirelength placement (uniform weights, no
    /// penalties).
    pub ser_aware: bool,
    /// Extra multiplier on anchor weights; zero disables anchors exactly.
    pub penalty_scale: f64,
    pub seed: u64,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            k: 2.5,
            penalty_iters: 3,
            leaf_size: 1,
            min_area: 4,
            bridge_area: 4,
            ser_aware: true,
            penalty_scale: 1.0,
            seed: 1,
        }
    }
}

/// Split a region at the area-balanced point along its cut axis. Members are
/// ordered by solved coordinate (ties by cell index) and the child rectangles
/// get area-proportional shares of the parent.
pub fn split_partition(
    net: &Netlist,
    node: &PartitionNode,
    xs: &[f64],
    ys: &[f64],
) -> (PartitionNode, PartitionNode) {
    assert!(node.members.len() >= 2);
    let axis = node.cut;
    let mut members = node.members.clone();
    members.sort_by(|&a, &b| {
        let ca = match axis {
            Axis::X => xs[a.usize()],
            Axis::Y => ys[a.usize()],
        };
        let cb = match axis {
            Axis::X => xs[b.usize()],
            Axis::Y => ys[b.usize()],
        };
        ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
    });
    let areas: Vec<f64> = members.iter().map(|&m| net.kind_of(m).area).collect();
    let total: f64 = areas.iter().sum();
    let mut best_k = 1usize;
    let mut best_diff = f64::INFINITY;
    let mut prefix = 0.0;
    for k in 1..members.len() {
        prefix += areas[k - 1];
        let diff = (prefix - 0.5 * total).abs();
        if diff < best_diff {
            best_diff = diff;
            best_k = k;
        }
    }
    let left_area: f64 = areas[..best_k].iter().sum();
    let frac = left_area / total;
    let next_cut = match axis {
        Axis::X => Axis::Y,
        Axis::Y => Axis::X,
    };
    let (left_rect, right_rect) = match axis {
        Axis::X => {
            let mx = node.lx + (node.ux - node.lx) * frac;
            (
                (node.lx, mx, node.ly, node.uy),
                (mx, node.ux, node.ly, node.uy),
            )
        }
        Axis::Y => {
            let my = node.ly + (node.uy - node.ly) * frac;
            (
                (node.lx, node.ux, node.ly, my),
                (node.lx, node.ux, my, node.uy),
            )
        }
    };
    let mk = |rect: (f64, f64, f64, f64), cells: Vec<CellIdx>| PartitionNode {
        lx: rect.0,
        ux: rect.1,
        ly: rect.2,
        uy: rect.3,
        members: cells,
        level: node.level + 1,
        cut: next_cut,
    };
    let right_members = members.split_off(best_k);
    (mk(left_rect, members), mk(right_rect, right_members))
}

/// Snap continuous positions to rows, spill overloaded rows to their nearest
/// neighbors, and assign order-preserving columns near each cell's x.
fn legalize(
    net: &Netlist,
    xs: &[f64],
    ys: &[f64],
    die: &Die,
    pitch: f64,
    cols: u32,
) -> Result<Placement, PlaceError> {
    let ncells = net.num_cells();
    let capacity = die.rows as usize * cols as usize;
    if ncells > capacity {
        return Err(PlaceError::Infeasible {
            cells: ncells,
            needed: ncells,
            available: capacity,
        });
    }
    let desired_row = |i: usize| -> u32 {
        let r = ((ys[i] - 0.5 * die.row_height) / die.row_height).round();
        (r as i64).clamp(0, die.rows as i64 - 1) as u32
    };
    let mut per_row: Vec<Vec<CellIdx>> = vec![Vec::new(); die.rows as usize];
    for i in 0..ncells {
        per_row[desired_row(i) as usize].push(CellIdx(i as u32));
    }
    // Spill: cells farthest from an overloaded row's center leave first,
    // walking outward to the nearest row with space.
    let rows = die.rows as usize;
    for r in 0..rows {
        while per_row[r].len() > cols as usize {
            let row_y = die.row_center_y(r as u32);
            let (pos, _) = per_row[r]
                .iter()
                .enumerate()
                .map(|(k, &c)| (k, ((ys[c.usize()] - row_y).abs(), c)))
                .max_by(|a, b| {
                    a.1 .0
                        .partial_cmp(&b.1 .0)
                        .unwrap()
                        .then(a.1 .1.cmp(&b.1 .1))
                })
                .unwrap();
            let cell = per_row[r].remove(pos);
            let mut placed = false;
            for d in 1..rows {
                for cand in [r as i64 - d as i64, r as i64 + d as i64] {
                    if cand >= 0 && (cand as usize) < rows && per_row[cand as usize].len() < cols as usize
                    {
                        per_row[cand as usize].push(cell);
                        placed = true;
                        break;
                    }
                }
                if placed {
                    break;
                }
            }
            if !placed {
                return Err(PlaceError::Infeasible {
                    cells: ncells,
                    needed: ncells,
                    available: capacity,
                });
            }
        }
    }
    // Columns: order-preserving nearest-slot assignment per row.
    let mut slots = vec![(0u32, 0u32); ncells];
    for (r, row_cells) in per_row.iter_mut().enumerate() {
        row_cells.sort_by(|&a, &b| {
            xs[a.usize()]
                .partial_cmp(&xs[b.usize()])
                .unwrap()
                .then(a.cmp(&b))
        });
        let k = row_cells.len();
        let mut prev: i64 = -1;
        for (i, &c) in row_cells.iter().enumerate() {
            let ideal = (xs[c.usize()] / pitch - 0.5).round() as i64;
            let lo = prev + 1;
            let hi = cols as i64 - (k - i) as i64;
            let col = ideal.clamp(lo, hi);
            prev = col;
            slots[c.usize()] = (r as u32, col as u32);
        }
    }
    Ok(Placement {
        die: die.clone(),
        pitch,
        cols,
        slots,
    })
}

/// Run the global placement flow: QP + bipartition levels with penalty
/// re-solves, then legalization. Deterministic for a fixed config.
pub fn run_global(
    net: &Netlist,
    report: &SerReport,
    rmap: &RMap,
    die: &Die,
    cfg: &GlobalConfig,
) -> Result<Placement, PlaceError> {
    let ncells = net.num_cells();
    let pitch = slot_pitch(net);
    let cols = (die.width / pitch).floor() as u32;
    let capacity = die.rows as usize * cols as usize;
    if ncells > capacity {
        return Err(PlaceError::Infeasible {
            cells: ncells,
            needed: ncells,
            available: capacity,
        });
    }

    let rmap_f = crate::variation::filter_blocks(rmap, cfg.min_area, cfg.bridge_area);
    let sensitive = if cfg.ser_aware {
        report.sensitive.clone()
    } else {
        Default::default()
    };
    let median_w = median_connection_weight(net, report, cfg.ser_aware);

    let mut regions = vec![PartitionNode {
        lx: 0.0,
        ux: die.width,
        ly: 0.0,
        uy: die.height,
        members: (0..ncells).map(|i| CellIdx(i as u32)).collect(),
        level: 0,
        cut: Axis::X,
    }];
    let mut xs = vec![0.5 * die.width; ncells];
    let mut ys = vec![0.5 * die.height; ncells];
    let mut anchors: Vec<PenaltyAnchor> = Vec::new();

    loop {
        // Pin cells in singleton regions to the region center.
        let mut pinned: Vec<Option<(f64, f64)>> = vec![None; ncells];
        for region in &regions {
            if region.members.len() == 1 {
                pinned[region.members[0].usize()] =
                    Some((region.center(Axis::X), region.center(Axis::Y)));
            }
        }

        for it in 0..=cfg.penalty_iters {
            for axis in [Axis::X, Axis::Y] {
                match assemble_axis_qp(
                    net, report, cfg.ser_aware, &regions, &anchors, axis, die, &pinned,
                ) {
                    Some((qp, free_cells)) => {
                        let (sol, _) = solve_eq_qp(&qp)?;
                        let out = match axis {
                            Axis::X => &mut xs,
                            Axis::Y => &mut ys,
                        };
                        for (f, &cell) in free_cells.iter().enumerate() {
                            out[cell.usize()] = sol[f];
                        }
                    }
                    None => {}
                }
            }
            for (i, p) in pinned.iter().enumerate() {
                if let Some((px, py)) = p {
                    xs[i] = *px;
                    ys[i] = *py;
                }
            }
            if !cfg.ser_aware || it == cfg.penalty_iters {
                break;
            }
            // Cells currently inside LVT blocks plus everything anchored
            // before: anchors persist so escaped cells do not snap back, but
            // their targets are refreshed from current positions to keep the
            // induced wirelength low.
            let incidences = lvt_membership(&xs, &ys, die, &rmap_f, &sensitive);
            let mut union: std::collections::BTreeSet<CellIdx> =
                anchors.iter().map(|a| a.cell).collect();
            union.extend(incidences.iter().map(|&(c, _)| c));
            let union_inc: Vec<(CellIdx, usize)> = union.into_iter().map(|c| (c, 0)).collect();
            let refreshed = penalty_pass(
                &xs,
                &ys,
                &union_inc,
                report,
                &rmap_f,
                die,
                pitch,
                cfg.k,
                median_w,
                cfg.penalty_scale,
            );
            if refreshed == anchors {
                break;
            }
            anchors = refreshed;
        }

        if regions.iter().all(|r| r.members.len() <= cfg.leaf_size) {
            break;
        }
        let mut next = Vec::with_capacity(regions.len() * 2);
        for region in &regions {
            if region.members.len() <= cfg.leaf_size {
                let mut keep = region.clone();
                keep.level += 1;
                keep.cut = match keep.cut {
                    Axis::X => Axis::Y,
                    Axis::Y => Axis::X,
                };
                next.push(keep);
            } else {
                let (l, r) = split_partition(net, region, &xs, &ys);
                next.push(l);
                next.push(r);
            }
        }
        regions = next;
    }

    legalize(net, &xs, &ys, die, pitch, cols)
}

/// Sensitive cells sitting in LVT fragments of a legalized placement.
pub fn count_sensitive_in_lvt(
    p: &Placement,
    rmap: &RMap,
    sensitive: &std::collections::BTreeSet<CellIdx>,
) -> usize {
    let classes = rmap.class_grid();
    let n = rmap.n;
    sensitive
        .iter()
        .filter(|&&c| {
            let fx = ((p.x(c) / p.die.width * n as f64).floor() as isize).clamp(0, n as isize - 1)
                as usize;
            let fy = ((p.y(c) / p.die.height * n as f64).floor() as isize)
                .clamp(0, n as isize - 1) as usize;
            classes.at(fx, fy) == RegionClass::Lvt
        })
        .count()
}

/// Write a placement as CSV `cell_id,x,y,row` with a reproducibility header.
pub fn write_placement<W: Write>(
    w: &mut W,
    net: &Netlist,
    p: &Placement,
    extra_comments: &[String],
) -> Result<(), PlaceError> {
    for c in extra_comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(
        w,
        "# die=width:{},height:{},rows:{},row_height:{} pitch={} cols={}",
        p.die.width, p.die.height, p.die.rows, p.die.row_height, p.pitch, p.cols
    )?;
    writeln!(w, "cell_id,x,y,row")?;
    for i in 0..net.num_cells() {
        let c = CellIdx(i as u32);
        writeln!(
            w,
            "{},{},{},{}",
            net.cell(c).id,
            p.x(c),
            p.y(c),
            p.row_of(c)
        )?;
    }
    Ok(())
}

/// Read a placement written by `write_placement`, validating against the
/// provided netlist and die.
pub fn read_placement<R: BufRead>(
    r: &mut R,
    net: &Netlist,
    die: &Die,
    pitch: f64,
    cols: u32,
) -> Result<Placement, PlaceError> {
    let mut slots = vec![None; net.num_cells()];
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("cell_id") {
            continue;
        }
        let parts: Vec<&str> = t.split(',').collect();
        if parts.len() != 4 {
            return Err(PlaceError::MalformedFile(format!("bad row: {t}")));
        }
        let cell = net
            .cell_idx(parts[0].trim())
            .map_err(|e| PlaceError::MalformedFile(e.to_string()))?;
        let x: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|e| PlaceError::MalformedFile(format!("bad x in `{t}`: {e}")))?;
        let row: u32 = parts[3]
            .trim()
            .parse()
            .map_err(|e| PlaceError::MalformedFile(format!("bad row in `{t}`: {e}")))?;
        let col = ((x - 0.5 * pitch) / pitch).round() as i64;
        if col < 0 || col >= cols as i64 || row >= die.rows {
            return Err(PlaceError::MalformedFile(format!("slot out of range: {t}")));
        }
        slots[cell.usize()] = Some((row, col as u32));
    }
    let slots: Option<Vec<(u32, u32)>> = slots.into_iter().collect();
    let slots = slots.ok_or_else(|| PlaceError::MalformedFile("missing cells".into()))?;
    let p = Placement {
        die: die.clone(),
        pitch,
        cols,
        slots,
    };
    p.check_legal(net)?;
    Ok(p)
}

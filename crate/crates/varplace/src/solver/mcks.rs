//! Budgeted multiple-choice selection: pick exactly one option per group,
//! maximizing total gain under two cumulative cost budgets. Every group must
//! contain a null option (gain 0, costs 0), which keeps the all-null
//! selection feasible for any budgets.
//!
//! The exact mode is a depth-first branch and bound whose bound comes from a
//! Lagrangian relaxation of the two budget rows; the relaxed mode rounds the
//! same Lagrangian solution and repairs it greedily to feasibility. Both are
//! deterministic.

/// One selectable option. Costs must be nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McksOption {
    pub gain: f64,
    pub ser_cost: f64,
    pub wl_cost: f64,
}

impl McksOption {
    pub const NULL: McksOption = McksOption {
        gain: 0.0,
        ser_cost: 0.0,
        wl_cost: 0.0,
    };

    fn is_null(&self) -> bool {
        self.gain == 0.0 && self.ser_cost == 0.0 && self.wl_cost == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct McksInstance {
    pub groups: Vec<Vec<McksOption>>,
    pub ser_budget: f64,
    pub wl_budget: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McksMode {
    Exact,
    Relaxed,
}

impl McksInstance {
    fn validate(&self) {
        assert!(self.ser_budget >= 0.0 && self.wl_budget >= 0.0);
        for (gi, g) in self.groups.iter().enumerate() {
            assert!(!g.is_empty(), "group {gi} is empty");
            assert!(
                g.iter().any(|o| o.is_null()),
                "group {gi} lacks a null option"
            );
            for o in g {
                assert!(
                    o.ser_cost >= 0.0 && o.wl_cost >= 0.0,
                    "group {gi} has a negative cost"
                );
            }
        }
    }

    fn null_index(&self, gi: usize) -> usize {
        self.groups[gi].iter().position(|o| o.is_null()).unwrap()
    }
}

/// Total gain of a selection.
pub fn selection_gain(i: &McksInstance, sel: &[usize]) -> f64 {
    sel.iter()
        .enumerate()
        .map(|(gi, &oi)| i.groups[gi][oi].gain)
        .sum()
}

/// Total (ser, wl) costs of a selection.
pub fn selection_costs(i: &McksInstance, sel: &[usize]) -> (f64, f64) {
    let mut s = 0.0;
    let mut w = 0.0;
    for (gi, &oi) in sel.iter().enumerate() {
        s += i.groups[gi][oi].ser_cost;
        w += i.groups[gi][oi].wl_cost;
    }
    (s, w)
}

fn feasible(i: &McksInstance, sel: &[usize]) -> bool {
    let (s, w) = selection_costs(i, sel);
    s <= i.ser_budget + 1e-12 && w <= i.wl_budget + 1e-12
}

/// Projected subgradient search for budget multipliers. Returns (λ_ser, λ_wl).
fn lagrangian_multipliers(i: &McksInstance) -> (f64, f64) {
    let mut l1 = 0.0f64;
    let mut l2 = 0.0f64;
    let scale1 = i.ser_budget.max(1e-9);
    let scale2 = i.wl_budget.max(1e-9);
    for t in 1..=60 {
        let mut c1 = 0.0;
        let mut c2 = 0.0;
        for g in &i.groups {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for (oi, o) in g.iter().enumerate() {
                let v = o.gain - l1 * o.ser_cost - l2 * o.wl_cost;
                if v > best_v {
                    best_v = v;
                    best = oi;
                }
            }
            c1 += g[best].ser_cost;
            c2 += g[best].wl_cost;
        }
        let step = 1.0 / t as f64;
        l1 = (l1 + step * (c1 - i.ser_budget) / scale1).max(0.0);
        l2 = (l2 + step * (c2 - i.wl_budget) / scale2).max(0.0);
    }
    (l1, l2)
}

/// Per-group maximum reduced gain under fixed multipliers, as a suffix sum.
/// `suffix[k]` bounds the reduced gain obtainable from groups k.. onward.
fn reduced_gain_suffix(i: &McksInstance, l1: f64, l2: f64) -> Vec<f64> {
    let n = i.groups.len();
    let mut suffix = vec![0.0f64; n + 1];
    for k in (0..n).rev() {
        let best = i.groups[k]
            .iter()
            .map(|o| o.gain - l1 * o.ser_cost - l2 * o.wl_cost)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        suffix[k] = suffix[k + 1] + best;
    }
    suffix
}

fn solve_exact(i: &McksInstance) -> Vec<usize> {
    let n = i.groups.len();
    let (l1, l2) = lagrangian_multipliers(i);
    let suffix = reduced_gain_suffix(i, l1, l2);

    // Options tried in descending gain so good incumbents appear early.
    let order: Vec<Vec<usize>> = i
        .groups
        .iter()
        .map(|g| {
            let mut idx: Vec<usize> = (0..g.len()).collect();
            idx.sort_by(|&a, &b| {
                g[b].gain
                    .partial_cmp(&g[a].gain)
                    .unwrap()
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut best_sel: Vec<usize> = (0..n).map(|gi| i.null_index(gi)).collect();
    let mut best_gain = 0.0f64;
    let mut cur = best_sel.clone();

    fn dfs(
        i: &McksInstance,
        order: &[Vec<usize>],
        suffix: &[f64],
        (l1, l2): (f64, f64),
        k: usize,
        gain: f64,
        rem_ser: f64,
        rem_wl: f64,
        cur: &mut Vec<usize>,
        best_sel: &mut Vec<usize>,
        best_gain: &mut f64,
    ) {
        if k == i.groups.len() {
            if gain > *best_gain + 1e-12 {
                *best_gain = gain;
                best_sel.copy_from_slice(cur);
            }
            return;
        }
        // Lagrangian bound on the best completion from group k.
        let bound = gain + suffix[k] + l1 * rem_ser + l2 * rem_wl;
        if bound <= *best_gain + 1e-12 {
            return;
        }
        for &oi in &order[k] {
            let o = &i.groups[k][oi];
            if o.ser_cost > rem_ser + 1e-12 || o.wl_cost > rem_wl + 1e-12 {
                continue;
            }
            cur[k] = oi;
            dfs(
                i,
                order,
                suffix,
                (l1, l2),
                k + 1,
                gain + o.gain,
                rem_ser - o.ser_cost,
                rem_wl - o.wl_cost,
                cur,
                best_sel,
                best_gain,
            );
        }
        cur[k] = i.null_index(k);
    }

    dfs(
        i,
        &order,
        &suffix,
        (l1, l2),
        0,
        0.0,
        i.ser_budget,
        i.wl_budget,
        &mut cur,
        &mut best_sel,
        &mut best_gain,
    );
    best_sel
}

fn solve_relaxed(i: &McksInstance) -> Vec<usize> {
    let n = i.groups.len();
    let (l1, l2) = lagrangian_multipliers(i);

    // Round: per group take the best reduced gain; null wins ties.
    let mut sel: Vec<usize> = Vec::with_capacity(n);
    for (gi, g) in i.groups.iter().enumerate() {
        let null = i.null_index(gi);
        let mut best = null;
        let mut best_v = 0.0f64;
        for (oi, o) in g.iter().enumerate() {
            let v = o.gain - l1 * o.ser_cost - l2 * o.wl_cost;
            if v > best_v + 1e-12 {
                best_v = v;
                best = oi;
            }
        }
        sel.push(best);
    }

    // Greedy repair: while over budget, downgrade the selection with the
    // worst gain per unit of violating cost to null.
    loop {
        let (cs, cw) = selection_costs(i, &sel);
        let over_s = cs > i.ser_budget + 1e-12;
        let over_w = cw > i.wl_budget + 1e-12;
        if !over_s && !over_w {
            break;
        }
        let s_scale = i.ser_budget.max(1e-9);
        let w_scale = i.wl_budget.max(1e-9);
        let mut victim: Option<(usize, f64)> = None;
        for (gi, &oi) in sel.iter().enumerate() {
            let o = &i.groups[gi][oi];
            if o.is_null() {
                continue;
            }
            let saved = if over_s { o.ser_cost / s_scale } else { 0.0 }
                + if over_w { o.wl_cost / w_scale } else { 0.0 };
            if saved <= 0.0 {
                continue;
            }
            let score = o.gain / saved;
            match victim {
                Some((_, s)) if score >= s => {}
                _ => victim = Some((gi, score)),
            }
        }
        match victim {
            Some((gi, _)) => sel[gi] = i.null_index(gi),
            // Over budget but nothing contributes to the violated dimension:
            // cannot happen with nonnegative costs, but bail out safely.
            None => break,
        }
    }
    debug_assert!(feasible(i, &sel));
    sel
}

/// Solve the instance: one option index per group. `Exact` is gain-maximal
/// (branch and bound, intended for small group counts); `Relaxed` rounds the
/// Lagrangian relaxation and repairs to feasibility, never below the all-null
/// gain of zero.
pub fn solve_mcks(i: &McksInstance, mode: McksMode) -> Vec<usize> {
    i.validate();
    match mode {
        McksMode::Exact => solve_exact(i),
        McksMode::Relaxed => solve_relaxed(i),
    }
}

//! Soft-error model: variation-dependent gate delay, per-cell and circuit
//! SET failure probabilities, normalized SER, sensitive-cell classification,
//! and pairwise joint failure probabilities.
//!
//! A cell's failure probability combines three factors, evaluated along the
//! best (least masked) path to a primary output:
//!
//! * generation: strike capture proportional to cell area,
//! * logical masking: the probability side inputs sensitize each traversed
//!   gate, from the static signal probabilities,
//! * electrical masking: min(1, w0 / delay(g)) per traversed gate (and for
//!   the struck gate itself), so pulses fade through slow, high-V_th gates.
//!
//! Joint failure probabilities of electrically related pairs are estimated by
//! seeded Monte Carlo logic simulation with transient markers injected at both
//! cells (opposite polarity labels). Marker interaction is evaluated through
//! the gate truth tables, so reconvergent flips cancel exactly the way pulse
//! quenching does; per-gate electrical survival is a common-random-number
//! Bernoulli draw shared across the single- and double-injection variants.
//! The raw double-injection survival fraction is rescaled by the independent
//! composition of the single-injection fractions, so the returned value is
//! comparable with Eq.-18-style independent composition of the analytic
//! per-cell probabilities: quenching pairs land strictly below it.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::netlist::{CellIdx, GateKind, NetDriver, NetIdx, Netlist};
use crate::stream::{self, domain};

/// Alpha-power-law delay parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayModel {
    pub vdd: f64,
    pub alpha: f64,
    /// Nominal threshold voltage V_th^0.
    pub vth_nominal: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            vdd: 1.1,
            alpha: 1.3,
            vth_nominal: 0.22,
        }
    }
}

/// Normalized inverter intrinsic delay V_DD (1 + V_th/V_th^0) / (V_DD − V_th)^α.
pub fn t_inv(vth: f64, m: &DelayModel) -> f64 {
    assert!(
        vth > 0.0 && vth < m.vdd,
        "vth {vth} outside (0, vdd = {}): singular delay",
        m.vdd
    );
    m.vdd * (1.0 + vth / m.vth_nominal) / (m.vdd - vth).powf(m.alpha)
}

/// Gate delay T_inv(V_th) · (LE_g + FO_g + P_g) in normalized units.
pub fn gate_delay(kind: &GateKind, fanout_effort: f64, vth: f64, m: &DelayModel) -> f64 {
    t_inv(vth, m) * (kind.logical_effort + fanout_effort + kind.parasitic_delay)
}

/// How sensitive cells are selected relative to the mean-SER threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensitiveMode {
    /// Cells at or above the mean per-cell SER (default).
    High,
    /// Cells at or below the mean per-cell SER.
    PaperLiteral,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SerConfig {
    pub delay: DelayModel,
    /// Pulse generation probability per unit cell area.
    pub strike_rate_const: f64,
    /// Initial pulse width in normalized delay units.
    pub w0: f64,
    /// Logic-1 probability applied to every primary input.
    pub pi_prob: f64,
    /// Monte Carlo trials per joint-failure estimate.
    pub jfp_trials: usize,
    pub seed: u64,
    pub sensitive_mode: SensitiveMode,
}

impl Default for SerConfig {
    fn default() -> Self {
        SerConfig {
            delay: DelayModel::default(),
            strike_rate_const: 1e-3,
            w0: 3.0,
            pi_prob: 0.5,
            jfp_trials: 2000,
            seed: 1,
            sensitive_mode: SensitiveMode::High,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CellSer {
    pub cell: CellIdx,
    pub ser: f64,
    /// Min-max normalized SER in [0, 1]; zero when all cells are equal.
    pub ser_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SerReport {
    pub per_cell: Vec<CellSer>,
    pub circuit_ser: f64,
    pub sensitive: BTreeSet<CellIdx>,
}

impl SerReport {
    pub fn ser_norm_of(&self, c: CellIdx) -> f64 {
        self.per_cell[c.usize()].ser_norm
    }
}

/// Joint failure probability of a cell pair under a shared strike.
#[derive(Debug, Clone, Copy)]
pub struct PairFp {
    pub a: CellIdx,
    pub b: CellIdx,
    pub fp: f64,
    /// True when the forward cones intersect and Monte Carlo was used.
    pub dependent: bool,
}

/// Eq.-18 composition for independently propagating cells.
pub fn pair_fp_independent(fa: f64, fb: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&fa) && (0.0..=1.0).contains(&fb));
    fa + fb - fa * fb
}

/// A pair is a candidate pair exactly when its joint failure probability is
/// strictly below the independent composition.
pub fn is_cap(jfp: &PairFp, ind: f64) -> bool {
    jfp.fp < ind
}

/// Select sensitive cells against the mean per-cell SER. Boundary cells are
/// included under both modes.
pub fn classify_sensitive(r: &SerReport, mode: SensitiveMode) -> BTreeSet<CellIdx> {
    if r.per_cell.is_empty() {
        return BTreeSet::new();
    }
    let t = r.circuit_ser / r.per_cell.len() as f64;
    r.per_cell
        .iter()
        .filter(|cs| match mode {
            SensitiveMode::High => cs.ser >= t,
            SensitiveMode::PaperLiteral => cs.ser <= t,
        })
        .map(|cs| cs.cell)
        .collect()
}

/// Evaluation model bound to one netlist. Signal probabilities and per-pin
/// sensitization probabilities are static; V_th assignments are passed per
/// query so placement passes can move cells without rebuilding.
pub struct SerModel<'n> {
    net: &'n Netlist,
    pub cfg: SerConfig,
    net_probs: Vec<f64>,
    /// Per cell, per input pin: logical-masking transparency.
    sens_prob: Vec<Vec<f64>>,
}

impl<'n> SerModel<'n> {
    pub fn new(net: &'n Netlist, cfg: SerConfig) -> Self {
        let pi_probs: BTreeMap<NetIdx, f64> = net.uniform_pi_probs(cfg.pi_prob);
        let net_probs = net.signal_probabilities(&pi_probs);
        let sens_prob = net
            .cells()
            .iter()
            .map(|cell| {
                let kind = &net.library()[cell.kind.0 as usize];
                let side: Vec<f64> = cell.fanin.iter().map(|f| net_probs[f.usize()]).collect();
                (0..kind.inputs)
                    .map(|pin| kind.sensitization_prob(pin, &side))
                    .collect()
            })
            .collect();
        SerModel {
            net,
            cfg,
            net_probs,
            sens_prob,
        }
    }

    pub fn netlist(&self) -> &'n Netlist {
        self.net
    }

    pub fn net_probs(&self) -> &[f64] {
        &self.net_probs
    }

    /// All-nominal V_th vector (unplaced cells).
    pub fn nominal_vth(&self) -> Vec<f64> {
        vec![self.cfg.delay.vth_nominal; self.net.num_cells()]
    }

    pub fn gate_delay_of(&self, c: CellIdx, vth_c: f64) -> f64 {
        gate_delay(
            self.net.kind_of(c),
            self.net.fanout_effort(c),
            vth_c,
            &self.cfg.delay,
        )
    }

    /// Electrical transparency of one gate: min(1, w0 / delay).
    pub fn m_el(&self, c: CellIdx, vth_c: f64) -> f64 {
        (self.cfg.w0 / self.gate_delay_of(c, vth_c)).min(1.0)
    }

    fn p_gen(&self, c: CellIdx) -> f64 {
        (self.net.kind_of(c).area * self.cfg.strike_rate_const).min(1.0)
    }

    /// Failure probability of every cell: generation × own electrical factor
    /// × best downstream masking product, in one reverse-topological pass.
    pub fn cell_fp_all(&self, vth: &[f64]) -> Vec<f64> {
        assert_eq!(vth.len(), self.net.num_cells());
        let mut prop = vec![0.0f64; self.net.num_nets()];
        let mut fp = vec![0.0f64; self.net.num_cells()];
        for &c in self.net.topo_order().iter().rev() {
            let cell = self.net.cell(c);
            let out = cell.fanout;
            let net = self.net.net(out);
            let mut best: f64 = if net.is_primary_output { 1.0 } else { 0.0 };
            for &(sink, pin) in &net.sinks {
                let through = self.sens_prob[sink.usize()][pin]
                    * self.m_el(sink, vth[sink.usize()])
                    * prop[self.net.cell(sink).fanout.usize()];
                best = best.max(through);
            }
            prop[out.usize()] = best;
            fp[c.usize()] = self.p_gen(c) * self.m_el(c, vth[c.usize()]) * best;
        }
        fp
    }

    pub fn cell_fp(&self, vth: &[f64], c: CellIdx) -> f64 {
        self.cell_fp_all(vth)[c.usize()]
    }

    /// Per-cell and circuit SER with min-max normalization and the sensitive
    /// set under the configured mode.
    pub fn circuit_ser(&self, vth: &[f64]) -> SerReport {
        let fp = self.cell_fp_all(vth);
        let lo = fp.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = fp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let per_cell: Vec<CellSer> = fp
            .iter()
            .enumerate()
            .map(|(i, &ser)| CellSer {
                cell: CellIdx(i as u32),
                ser,
                ser_norm: if span > 0.0 { (ser - lo) / span } else { 0.0 },
            })
            .collect();
        let circuit_ser = fp.iter().sum();
        let mut report = SerReport {
            per_cell,
            circuit_ser,
            sensitive: BTreeSet::new(),
        };
        report.sensitive = classify_sensitive(&report, self.cfg.sensitive_mode);
        report
    }

    /// Independent Eq.-18 composition of the two analytic cell probabilities,
    /// under the pair-local V_th convention (only a and b deviate from the
    /// baseline vector).
    pub fn pair_ind_fp(&self, vth_base: &[f64], a: CellIdx, va: f64, b: CellIdx, vb: f64) -> f64 {
        let fp = self.cell_fp_overridden(vth_base, &[(a, va), (b, vb)]);
        pair_fp_independent(fp[a.usize()], fp[b.usize()])
    }

    fn cell_fp_overridden(&self, vth_base: &[f64], over: &[(CellIdx, f64)]) -> Vec<f64> {
        let mut vth = vth_base.to_vec();
        for &(c, v) in over {
            vth[c.usize()] = v;
        }
        self.cell_fp_all(&vth)
    }

    /// Joint failure probability with both cells at their baseline V_th.
    pub fn pair_jfp(&self, vth: &[f64], a: CellIdx, b: CellIdx) -> PairFp {
        self.pair_jfp_pairlocal(vth, a, vth[a.usize()], b, vth[b.usize()])
    }

    /// Joint failure probability under the pair-local V_th convention: `a`
    /// and `b` take the given values, every other gate stays at `vth_base`.
    /// Deterministic in (config seed, netlist, pair, V_th values); trials use
    /// counter-based randomness so chunking cannot change the result.
    pub fn pair_jfp_pairlocal(
        &self,
        vth_base: &[f64],
        a: CellIdx,
        va: f64,
        b: CellIdx,
        vb: f64,
    ) -> PairFp {
        assert_ne!(a, b, "joint failure probability needs two distinct cells");
        let ind = self.pair_ind_fp(vth_base, a, va, b, vb);
        if self.net.cones_disjoint(a, b) {
            return PairFp {
                a,
                b,
                fp: ind,
                dependent: false,
            };
        }

        let (m_a, m_b, m_ab) = self.mc_masking_fractions(vth_base, a, va, b, vb);
        let denom = m_a + m_b - m_a * m_b;
        let fp = if denom > 1e-12 {
            (ind * (m_ab / denom)).clamp(0.0, 1.0)
        } else if m_ab > 1e-12 {
            ind
        } else {
            0.0
        };
        PairFp {
            a,
            b,
            fp,
            dependent: true,
        }
    }

    /// Monte Carlo survival fractions for a alone, b alone, and both injected,
    /// under common random numbers (shared input vectors and per-gate
    /// electrical survival draws).
    fn mc_masking_fractions(
        &self,
        vth_base: &[f64],
        a: CellIdx,
        va: f64,
        b: CellIdx,
        vb: f64,
    ) -> (f64, f64, f64) {
        let vth_of = |c: CellIdx| {
            if c == a {
                va
            } else if c == b {
                vb
            } else {
                vth_base[c.usize()]
            }
        };

        // Evaluation support: forward cones of a and b, closed over fanins so
        // every side input has a value, in topological order.
        let mut marked: Vec<bool> = vec![false; self.net.num_cells()];
        marked[a.usize()] = true;
        marked[b.usize()] = true;
        for &c in self.net.forward_cone(a).iter().chain(self.net.forward_cone(b).iter()) {
            marked[c.usize()] = true;
        }
        let mut in_eval = marked.clone();
        // Fanin closure, walking reverse topological order once.
        let topo = self.net.topo_order();
        for &c in topo.iter().rev() {
            if !in_eval[c.usize()] {
                continue;
            }
            for &f in &self.net.cell(c).fanin {
                if let NetDriver::Cell(d) = self.net.net(f).driver {
                    in_eval[d.usize()] = true;
                }
            }
        }
        let eval_order: Vec<CellIdx> = topo
            .iter()
            .copied()
            .filter(|c| in_eval[c.usize()])
            .collect();
        let pos_of_pi: BTreeMap<NetIdx, u64> = self
            .net
            .primary_inputs()
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, i as u64))
            .collect();
        // Per-gate electrical survival probabilities (marker still wide
        // enough after this gate).
        let p_el: Vec<f64> = eval_order
            .iter()
            .map(|&c| self.m_el(c, vth_of(c)))
            .collect();

        let seed = self.cfg.seed;
        let trials = self.cfg.jfp_trials.max(1);
        let mut value = vec![false; self.net.num_nets()];
        let mut flip = vec![false; self.net.num_nets()];
        let mut surv = [0usize; 3];

        for t in 0..trials as u64 {
            // Nominal values on the support.
            for &c in &eval_order {
                let cell = self.net.cell(c);
                let kind = self.net.kind_of(c);
                let mut row = 0usize;
                for (k, &f) in cell.fanin.iter().enumerate() {
                    let v = match self.net.net(f).driver {
                        NetDriver::PrimaryInput => {
                            stream::bernoulli(seed, t, domain::PI_VALUE, pos_of_pi[&f], self.cfg.pi_prob)
                        }
                        NetDriver::Cell(_) => value[f.usize()],
                    };
                    if v {
                        row |= 1 << k;
                    }
                }
                value[cell.fanout.usize()] = kind.eval(row);
            }

            for (variant, inject) in [(0usize, (true, false)), (1, (false, true)), (2, (true, true))]
            {
                let mut any_po_flip = false;
                for (ei, &c) in eval_order.iter().enumerate() {
                    let cell = self.net.cell(c);
                    let kind = self.net.kind_of(c);
                    let mut row = 0usize;
                    let mut any_in_flip = false;
                    for (k, &f) in cell.fanin.iter().enumerate() {
                        let base = match self.net.net(f).driver {
                            NetDriver::PrimaryInput => stream::bernoulli(
                                seed,
                                t,
                                domain::PI_VALUE,
                                pos_of_pi[&f],
                                self.cfg.pi_prob,
                            ),
                            NetDriver::Cell(_) => value[f.usize()],
                        };
                        let fl = match self.net.net(f).driver {
                            NetDriver::Cell(_) => flip[f.usize()],
                            NetDriver::PrimaryInput => false,
                        };
                        any_in_flip |= fl;
                        if base ^ fl {
                            row |= 1 << k;
                        }
                    }
                    let nominal = value[cell.fanout.usize()];
                    let mut prop = any_in_flip && kind.eval(row) != nominal;
                    if prop {
                        // Electrical masking: one survival draw per gate per
                        // trial, shared across variants.
                        prop = stream::bernoulli(
                            seed,
                            t,
                            domain::GATE_SURVIVAL,
                            c.0 as u64,
                            p_el[ei],
                        );
                    }
                    let injected = (c == a && inject.0) || (c == b && inject.1);
                    let inj = injected
                        && stream::bernoulli(seed, t, domain::INJECT, c.0 as u64, p_el[ei]);
                    // Opposite-polarity markers superpose through the logic:
                    // coincident flips cancel.
                    let out_flip = prop ^ inj;
                    flip[cell.fanout.usize()] = out_flip;
                    if out_flip && self.net.net(cell.fanout).is_primary_output {
                        any_po_flip = true;
                    }
                }
                if any_po_flip {
                    surv[variant] += 1;
                }
                for &c in &eval_order {
                    flip[self.net.cell(c).fanout.usize()] = false;
                }
            }
        }
        let tf = trials as f64;
        (
            surv[0] as f64 / tf,
            surv[1] as f64 / tf,
            surv[2] as f64 / tf,
        )
    }
}

/// Export a report as CSV rows `cell_id,ser,ser_norm,sensitive`.
pub fn write_ser_report_csv<W: Write>(
    w: &mut W,
    net: &Netlist,
    r: &SerReport,
) -> std::io::Result<()> {
    writeln!(w, "cell_id,ser,ser_norm,sensitive")?;
    for cs in &r.per_cell {
        writeln!(
            w,
            "{},{},{},{}",
            net.cell(cs.cell).id,
            cs.ser,
            cs.ser_norm,
            u8::from(r.sensitive.contains(&cs.cell))
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    #[test]
    fn t_inv_reference_value() {
        let m = DelayModel::default();
        // 1.1 * 2 / 0.88^1.3
        assert!((t_inv(0.22, &m) - 2.5977).abs() < 1e-3);
    }

    #[test]
    fn gate_delay_monotone_and_linear() {
        let m = DelayModel::default();
        let net = parse_netlist(
            r#"{"cells":[{"id":"c","kind":"INV","fanin":["a"],"fanout":"y"}],
                "primary_inputs":["a"],"primary_outputs":["y"]}"#,
        )
        .unwrap();
        let kind = net.kind_of(CellIdx(0));
        let d1 = gate_delay(kind, 1.0, 0.22, &m);
        let d2 = gate_delay(kind, 1.0, 0.264, &m);
        assert!(d2 > d1, "delay must rise with vth");
        // Effort linearity: LE + FO + P doubles when FO makes the sum double.
        let base_sum = kind.logical_effort + 1.0 + kind.parasitic_delay;
        let d_double = gate_delay(kind, base_sum + 1.0, 0.22, &m);
        assert!((d_double / d1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gate_delay_matches_finite_differences() {
        let m = DelayModel::default();
        // Independent analytic derivative of the delay expression.
        let dt = |v: f64| {
            m.vdd * (m.vdd - v).powf(-m.alpha)
                * (1.0 / m.vth_nominal + m.alpha * (1.0 + v / m.vth_nominal) / (m.vdd - v))
        };
        let h = 1e-6;
        for k in 0..20 {
            let v = 0.1 + 0.3 * k as f64 / 19.0;
            let num = (t_inv(v + h, &m) - t_inv(v - h, &m)) / (2.0 * h);
            let ana = dt(v);
            assert!(ana > 0.0, "delay must be strictly increasing");
            assert!(
                ((num - ana) / ana).abs() < 1e-6,
                "v={v}: numeric {num} vs analytic {ana}"
            );
        }
    }

    fn chain3() -> Netlist {
        parse_netlist(
            r#"{"cells":[
            {"id":"c0","kind":"INV","fanin":["a"],"fanout":"n1"},
            {"id":"c1","kind":"INV","fanin":["n1"],"fanout":"n2"},
            {"id":"c2","kind":"INV","fanin":["n2"],"fanout":"y"}],
            "primary_inputs":["a"],"primary_outputs":["y"]}"#,
        )
        .unwrap()
    }

    use crate::netlist::Netlist;

    #[test]
    fn cell_fp_po_drive_is_generation_times_own_m_el() {
        let net = parse_netlist(
            r#"{"cells":[{"id":"c","kind":"INV","fanin":["a"],"fanout":"y"}],
                "primary_inputs":["a"],"primary_outputs":["y"]}"#,
        )
        .unwrap();
        // Large w0 makes the cell's own electrical factor exactly 1.
        let cfg = SerConfig {
            w0: 1e6,
            ..SerConfig::default()
        };
        let model = SerModel::new(&net, cfg);
        let vth = model.nominal_vth();
        let fp = model.cell_fp(&vth, CellIdx(0));
        let p_gen = net.kind_of(CellIdx(0)).area * model.cfg.strike_rate_const;
        assert!((fp - p_gen).abs() < 1e-15);
    }

    #[test]
    fn cell_fp_chain_matches_hand_product() {
        let net = chain3();
        let model = SerModel::new(&net, SerConfig::default());
        let vth = model.nominal_vth();
        let fp = model.cell_fp_all(&vth);
        let c0 = net.cell_idx("c0").unwrap();
        let c1 = net.cell_idx("c1").unwrap();
        let c2 = net.cell_idx("c2").unwrap();
        // Inverters always sensitize, so only electrical factors survive.
        let me = |c: CellIdx| model.m_el(c, model.cfg.delay.vth_nominal);
        let pg = |c: CellIdx| net.kind_of(c).area * model.cfg.strike_rate_const;
        let expect0 = pg(c0) * me(c0) * (me(c1) * me(c2));
        let expect1 = pg(c1) * me(c1) * me(c2);
        let expect2 = pg(c2) * me(c2);
        assert!((fp[c0.usize()] - expect0).abs() < 1e-15);
        assert!((fp[c1.usize()] - expect1).abs() < 1e-15);
        assert!((fp[c2.usize()] - expect2).abs() < 1e-15);
    }

    #[test]
    fn cell_fp_nonincreasing_in_downstream_vth() {
        let net = chain3();
        let model = SerModel::new(&net, SerConfig::default());
        let c0 = net.cell_idx("c0").unwrap();
        let c1 = net.cell_idx("c1").unwrap();
        let mut vth = model.nominal_vth();
        let fp_before = model.cell_fp(&vth, c0);
        vth[c1.usize()] = 0.3; // slow the downstream gate
        let fp_after = model.cell_fp(&vth, c0);
        assert!(fp_after <= fp_before);
    }

    #[test]
    fn circuit_ser_chain_sums_cells() {
        let net = chain3();
        let model = SerModel::new(&net, SerConfig::default());
        let vth = model.nominal_vth();
        let fp = model.cell_fp_all(&vth);
        let r = model.circuit_ser(&vth);
        let total: f64 = fp.iter().sum();
        assert!((r.circuit_ser - total).abs() <= 1e-12 * total.abs());
        for cs in &r.per_cell {
            assert!((0.0..=1.0).contains(&cs.ser_norm));
        }
    }

    #[test]
    fn degenerate_normalization_single_cell() {
        let net = parse_netlist(
            r#"{"cells":[{"id":"c","kind":"INV","fanin":["a"],"fanout":"y"}],
                "primary_inputs":["a"],"primary_outputs":["y"]}"#,
        )
        .unwrap();
        let model = SerModel::new(&net, SerConfig::default());
        let r = model.circuit_ser(&model.nominal_vth());
        assert_eq!(r.per_cell[0].ser_norm, 0.0);
    }

    #[test]
    fn symmetric_cells_all_norm_zero_and_sensitive() {
        // Two identical inverter chains: every cell's SER matches its twin.
        let net = parse_netlist(
            r#"{"cells":[
            {"id":"u","kind":"INV","fanin":["a"],"fanout":"y1"},
            {"id":"v","kind":"INV","fanin":["b"],"fanout":"y2"}],
            "primary_inputs":["a","b"],"primary_outputs":["y1","y2"]}"#,
        )
        .unwrap();
        let model = SerModel::new(&net, SerConfig::default());
        let r = model.circuit_ser(&model.nominal_vth());
        assert!(r.per_cell.iter().all(|cs| cs.ser_norm == 0.0));
        assert_eq!(
            classify_sensitive(&r, SensitiveMode::High).len(),
            2,
            "boundary-inclusive"
        );
        assert_eq!(classify_sensitive(&r, SensitiveMode::PaperLiteral).len(), 2);
    }

    #[test]
    fn sensitive_threshold_modes() {
        // Synthetic report: 10 cells, total 1.0, one cell holds 0.25.
        let mut per_cell: Vec<CellSer> = (0..10)
            .map(|i| CellSer {
                cell: CellIdx(i),
                ser: 0.75 / 9.0,
                ser_norm: 0.0,
            })
            .collect();
        per_cell[3].ser = 0.25;
        let r = SerReport {
            per_cell,
            circuit_ser: 1.0,
            sensitive: BTreeSet::new(),
        };
        let high = classify_sensitive(&r, SensitiveMode::High);
        assert!(high.contains(&CellIdx(3)));
        let literal = classify_sensitive(&r, SensitiveMode::PaperLiteral);
        assert!(!literal.contains(&CellIdx(3)));
        assert_eq!(high.len() + literal.len(), 10);
    }

    #[test]
    fn pair_fp_independent_values() {
        assert!((pair_fp_independent(0.1, 0.2) - 0.28).abs() < 1e-15);
        assert_eq!(pair_fp_independent(0.0, 0.37), 0.37);
        assert_eq!(pair_fp_independent(1.0, 0.5), 1.0);
    }

    #[test]
    fn pair_fp_independent_symmetric_monotone_bounded() {
        for i in 0..10 {
            for j in 0..10 {
                let fa = i as f64 / 9.0;
                let fb = j as f64 / 9.0;
                let v = pair_fp_independent(fa, fb);
                assert!((v - pair_fp_independent(fb, fa)).abs() < 1e-15);
                assert!(v >= fa.max(fb) - 1e-15 && v <= 1.0 + 1e-15);
                if fa < 1.0 {
                    assert!(pair_fp_independent(fa + 0.1, fb.min(1.0)) >= v - 1e-15);
                }
            }
        }
    }

    /// Disjoint-cone fixture: two branches that never reconverge.
    fn disjoint_pair_net() -> Netlist {
        parse_netlist(
            r#"{"cells":[
            {"id":"a","kind":"INV","fanin":["p"],"fanout":"na"},
            {"id":"b","kind":"INV","fanin":["q"],"fanout":"nb"},
            {"id":"oa","kind":"BUF","fanin":["na"],"fanout":"ya"},
            {"id":"ob","kind":"BUF","fanin":["nb"],"fanout":"yb"}],
            "primary_inputs":["p","q"],"primary_outputs":["ya","yb"]}"#,
        )
        .unwrap()
    }

    #[test]
    fn disjoint_cones_use_closed_form() {
        let net = disjoint_pair_net();
        let model = SerModel::new(&net, SerConfig::default());
        let vth = model.nominal_vth();
        let a = net.cell_idx("a").unwrap();
        let b = net.cell_idx("b").unwrap();
        let jfp = model.pair_jfp(&vth, a, b);
        assert!(!jfp.dependent);
        let fp = model.cell_fp_all(&vth);
        let ind = pair_fp_independent(fp[a.usize()], fp[b.usize()]);
        assert_eq!(jfp.fp, ind);
        assert!(!is_cap(&jfp, ind), "strict inequality excludes equals");
    }

    /// Quenching fixture: INV and BUF of the same input reconverging at an
    /// XOR. When both markers arrive they flip both XOR inputs and the output
    /// is unchanged, so the joint survival collapses.
    fn xor_quench_net() -> Netlist {
        parse_netlist(
            r#"{"cells":[
            {"id":"a","kind":"INV","fanin":["x"],"fanout":"n1"},
            {"id":"b","kind":"BUF","fanin":["x"],"fanout":"n2"},
            {"id":"m","kind":"XOR2","fanin":["n1","n2"],"fanout":"y"}],
            "primary_inputs":["x"],"primary_outputs":["y"]}"#,
        )
        .unwrap()
    }

    #[test]
    fn quenching_pair_beats_independent_bound() {
        let net = xor_quench_net();
        // Huge w0: no electrical deaths, isolating the logical cancellation.
        let cfg = SerConfig {
            w0: 1e6,
            ..SerConfig::default()
        };
        let model = SerModel::new(&net, cfg);
        let vth = model.nominal_vth();
        let a = net.cell_idx("a").unwrap();
        let b = net.cell_idx("b").unwrap();
        let jfp = model.pair_jfp(&vth, a, b);
        assert!(jfp.dependent);
        let ind = model.pair_ind_fp(&vth, a, vth[a.usize()], b, vth[b.usize()]);
        // Exhaustive oracle: with no electrical masking, a single marker
        // always reaches y through the XOR while double markers always
        // cancel, so the joint survival fraction is exactly zero.
        assert_eq!(jfp.fp, 0.0);
        assert!(jfp.fp < ind);
        assert!(is_cap(&jfp, ind));
    }

    /// AND-reconvergence oracle: flips cancel for every input value, checked
    /// exhaustively, while single markers survive half the time.
    #[test]
    fn and_reconvergence_matches_exhaustive_oracle() {
        let net = parse_netlist(
            r#"{"cells":[
            {"id":"a","kind":"INV","fanin":["x"],"fanout":"n1"},
            {"id":"b","kind":"BUF","fanin":["x"],"fanout":"n2"},
            {"id":"m","kind":"AND2","fanin":["n1","n2"],"fanout":"y"}],
            "primary_inputs":["x"],"primary_outputs":["y"]}"#,
        )
        .unwrap();
        let cfg = SerConfig {
            w0: 1e6,
            jfp_trials: 4000,
            ..SerConfig::default()
        };
        let model = SerModel::new(&net, cfg);
        let vth = model.nominal_vth();
        let a = net.cell_idx("a").unwrap();
        let b = net.cell_idx("b").unwrap();
        // Oracle by hand over x in {0, 1}:
        //   x=0: n1=1, n2=0, y=0. flip a: AND(0,0)=0 masked; flip b: AND(1,1)=1
        //        survives; both: AND(0,1)=0 = nominal, canceled.
        //   x=1: n1=0, n2=1, y=0. flip a survives, flip b masked, both cancel.
        // With markers reaching y directly from m only via its inputs:
        // m_a = m_b = 1/2, m_ab = 0.
        let (ma, mb, mab) = model.mc_masking_fractions(
            &vth,
            a,
            vth[a.usize()],
            b,
            vth[b.usize()],
        );
        assert!((ma - 0.5).abs() < 0.05, "m_a {ma}");
        assert!((mb - 0.5).abs() < 0.05, "m_b {mb}");
        assert_eq!(mab, 0.0);
        let jfp = model.pair_jfp(&vth, a, b);
        assert_eq!(jfp.fp, 0.0);
    }

    #[test]
    fn jfp_deterministic() {
        let net = xor_quench_net();
        let model = SerModel::new(&net, SerConfig::default());
        let vth = model.nominal_vth();
        let a = net.cell_idx("a").unwrap();
        let b = net.cell_idx("b").unwrap();
        let j1 = model.pair_jfp(&vth, a, b);
        let j2 = model.pair_jfp(&vth, a, b);
        assert_eq!(j1.fp, j2.fp);
    }

    #[test]
    fn circuit_ser_invariant_under_relabeling() {
        // Same circuit, cell ids permuted; per-id SER values must agree.
        let doc_a = r#"{"cells":[
            {"id":"p","kind":"INV","fanin":["a"],"fanout":"n1"},
            {"id":"q","kind":"NAND2","fanin":["n1","b"],"fanout":"y"}],
            "primary_inputs":["a","b"],"primary_outputs":["y"]}"#;
        let doc_b = r#"{"cells":[
            {"id":"q","kind":"NAND2","fanin":["n1","b"],"fanout":"y"},
            {"id":"p","kind":"INV","fanin":["a"],"fanout":"n1"}],
            "primary_inputs":["a","b"],"primary_outputs":["y"]}"#;
        let na = parse_netlist(doc_a).unwrap();
        let nb = parse_netlist(doc_b).unwrap();
        let ma = SerModel::new(&na, SerConfig::default());
        let mb = SerModel::new(&nb, SerConfig::default());
        let ra = ma.circuit_ser(&ma.nominal_vth());
        let rb = mb.circuit_ser(&mb.nominal_vth());
        assert!((ra.circuit_ser - rb.circuit_ser).abs() < 1e-15);
        for id in ["p", "q"] {
            let ca = na.cell_idx(id).unwrap();
            let cb = nb.cell_idx(id).unwrap();
            assert_eq!(
                ra.per_cell[ca.usize()].ser,
                rb.per_cell[cb.usize()].ser,
                "{id}"
            );
        }
    }

    #[test]
    fn ser_report_csv_format() {
        let net = chain3();
        let model = SerModel::new(&net, SerConfig::default());
        let r = model.circuit_ser(&model.nominal_vth());
        let mut buf = Vec::new();
        write_ser_report_csv(&mut buf, &net, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cell_id,ser,ser_norm,sensitive\n"));
        assert_eq!(text.lines().count(), 4);
    }
}

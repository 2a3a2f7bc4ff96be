//! Gate-level combinational netlist: parsing, structural queries and
//! signal-probability analysis.
//!
//! Netlists are loaded from a JSON document (see `parse_netlist`). Gate kinds
//! are data, not code: each kind carries a truth table plus logical-effort
//! numbers, and a bundled default library covers the common primitives.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Deserialize;
use thiserror::Error;

/// Bundled gate library used when a netlist document has no `library` key.
pub const DEFAULT_LIBRARY_JSON: &str = include_str!("../assets/default_library.json");

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("netlist syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("gate kind `{kind}`: {reason}")]
    BadKind { kind: String, reason: String },
    #[error("duplicate cell id `{0}`")]
    DuplicateCell(String),
    #[error("cell `{cell}` references unknown gate kind `{kind}`")]
    UnknownKind { cell: String, kind: String },
    #[error("cell `{cell}` has {got} fanin nets but kind `{kind}` takes {expected}")]
    FaninArity {
        cell: String,
        kind: String,
        expected: usize,
        got: usize,
    },
    #[error("net `{net}` has two drivers: `{first}` and `{second}`")]
    MultipleDrivers {
        net: String,
        first: String,
        second: String,
    },
    #[error("dangling net `{net}`: used as fanin of `{cell}` but never driven")]
    DanglingNet { net: String, cell: String },
    #[error("net `{net}` driven by `{driver}` has no sink and is not a primary output")]
    UnusedNet { net: String, driver: String },
    #[error("primary output `{0}` is not driven by any cell or primary input")]
    UndrivenOutput(String),
    #[error("combinational cycle through cells: {}", .0.join(" -> "))]
    CombinationalCycle(Vec<String>),
    #[error("unknown cell id `{0}`")]
    UnknownCell(String),
}

/// A gate type from the library: truth table plus logical-effort numbers.
#[derive(Debug, Clone)]
pub struct GateKind {
    pub name: String,
    /// Cell area in site units; also the footprint width, one row tall.
    pub area: f64,
    /// Logical effort LE_g.
    pub logical_effort: f64,
    /// Parasitic delay P_g.
    pub parasitic_delay: f64,
    pub inputs: usize,
    /// Output value per input assignment; bit k of the row index is fanin[k].
    truth_table: Vec<bool>,
}

impl GateKind {
    /// Output for the input assignment encoded in the low `inputs` bits of `row`.
    #[inline]
    pub fn eval(&self, row: usize) -> bool {
        self.truth_table[row]
    }

    /// Output for an explicit input bit vector.
    pub fn eval_bits(&self, bits: &[bool]) -> bool {
        debug_assert_eq!(bits.len(), self.inputs);
        let mut row = 0usize;
        for (k, &b) in bits.iter().enumerate() {
            if b {
                row |= 1 << k;
            }
        }
        self.truth_table[row]
    }

    /// Probability that flipping input `pin` flips the output, with the other
    /// inputs distributed independently per `side_probs` (entry at `pin` is
    /// ignored). This is the logical-masking transparency of the pin.
    pub fn sensitization_prob(&self, pin: usize, side_probs: &[f64]) -> f64 {
        debug_assert!(pin < self.inputs);
        debug_assert_eq!(side_probs.len(), self.inputs);
        let mut prob = 0.0;
        for row in 0..(1usize << self.inputs) {
            if row & (1 << pin) != 0 {
                continue;
            }
            if self.truth_table[row] == self.truth_table[row | (1 << pin)] {
                continue;
            }
            let mut w = 1.0;
            for (k, &p) in side_probs.iter().enumerate() {
                if k == pin {
                    continue;
                }
                w *= if row & (1 << k) != 0 { p } else { 1.0 - p };
            }
            prob += w;
        }
        prob
    }

    /// Probability of a logic-1 output given independent input probabilities.
    pub fn output_prob(&self, input_probs: &[f64]) -> f64 {
        debug_assert_eq!(input_probs.len(), self.inputs);
        let mut prob = 0.0;
        for row in 0..(1usize << self.inputs) {
            if !self.truth_table[row] {
                continue;
            }
            let mut w = 1.0;
            for (k, &p) in input_probs.iter().enumerate() {
                w *= if row & (1 << k) != 0 { p } else { 1.0 - p };
            }
            prob += w;
        }
        prob.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KindIdx(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIdx(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NetIdx(pub u32);

impl CellIdx {
    #[inline]
    pub fn usize(self) -> usize {
        self.0 as usize
    }
}

impl NetIdx {
    #[inline]
    pub fn usize(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub id: String,
    pub kind: KindIdx,
    pub fanin: Vec<NetIdx>,
    pub fanout: NetIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetDriver {
    Cell(CellIdx),
    PrimaryInput,
}

#[derive(Debug, Clone)]
pub struct Net {
    pub id: String,
    pub driver: NetDriver,
    /// Consuming cell pins as (cell, fanin position).
    pub sinks: Vec<(CellIdx, usize)>,
    pub is_primary_output: bool,
}

/// Immutable gate-level netlist. All structural queries are deterministic.
#[derive(Debug, Clone)]
pub struct Netlist {
    library: Vec<GateKind>,
    cells: Vec<Cell>,
    nets: Vec<Net>,
    primary_inputs: Vec<NetIdx>,
    primary_outputs: Vec<NetIdx>,
    cell_by_id: HashMap<String, CellIdx>,
    net_by_id: HashMap<String, NetIdx>,
    topo: Vec<CellIdx>,
}

#[derive(Debug, Deserialize)]
struct GateKindDoc {
    name: String,
    area: f64,
    logical_effort: f64,
    parasitic_delay: f64,
    inputs: usize,
    truth_table: Vec<u8>,
    #[serde(default)]
    #[allow(dead_code)]
    description: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LibraryDoc {
    #[serde(default)]
    #[allow(dead_code)]
    notes: Option<String>,
    library: Vec<GateKindDoc>,
}

#[derive(Debug, Deserialize)]
struct CellDoc {
    id: String,
    kind: String,
    fanin: Vec<String>,
    fanout: String,
}

#[derive(Debug, Deserialize)]
struct NetlistDoc {
    #[serde(default)]
    library: Option<Vec<GateKindDoc>>,
    cells: Vec<CellDoc>,
    primary_inputs: Vec<String>,
    primary_outputs: Vec<String>,
}

fn syntax_error(e: serde_json::Error) -> NetlistError {
    NetlistError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn build_kinds(docs: Vec<GateKindDoc>) -> Result<Vec<GateKind>, NetlistError> {
    let mut kinds = Vec::with_capacity(docs.len());
    for d in docs {
        if d.inputs == 0 {
            return Err(NetlistError::BadKind {
                kind: d.name,
                reason: "logic gates need at least one input".into(),
            });
        }
        if d.truth_table.len() != (1 << d.inputs) {
            return Err(NetlistError::BadKind {
                kind: d.name,
                reason: format!(
                    "truth table has {} entries, expected {}",
                    d.truth_table.len(),
                    1 << d.inputs
                ),
            });
        }
        if d.area < 1.0 {
            return Err(NetlistError::BadKind {
                kind: d.name,
                reason: format!("area {} is below one site", d.area),
            });
        }
        kinds.push(GateKind {
            name: d.name,
            area: d.area,
            logical_effort: d.logical_effort,
            parasitic_delay: d.parasitic_delay,
            inputs: d.inputs,
            truth_table: d.truth_table.into_iter().map(|b| b != 0).collect(),
        });
    }
    Ok(kinds)
}

/// Parse the bundled default gate library.
pub fn default_library() -> Vec<GateKind> {
    let doc: LibraryDoc =
        serde_json::from_str(DEFAULT_LIBRARY_JSON).expect("bundled library is valid");
    build_kinds(doc.library).expect("bundled library is consistent")
}

/// Parse a standalone library document (`{"library": [...]}`).
pub fn parse_library(text: &str) -> Result<Vec<GateKind>, NetlistError> {
    let doc: LibraryDoc = serde_json::from_str(text).map_err(syntax_error)?;
    build_kinds(doc.library)
}

/// Parse and validate a netlist document. Uses the document's embedded
/// library when present, otherwise the bundled default library.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    parse_netlist_with_library(text, None)
}

/// Parse a netlist with an explicit gate library overriding the default.
pub fn parse_netlist_with_library(
    text: &str,
    library: Option<Vec<GateKind>>,
) -> Result<Netlist, NetlistError> {
    let mut doc: NetlistDoc = serde_json::from_str(text).map_err(syntax_error)?;
    let kinds = match doc.library.take() {
        Some(lib) => build_kinds(lib)?,
        None => library.unwrap_or_else(default_library),
    };
    Netlist::build(kinds, doc)
}

impl Netlist {
    fn build(library: Vec<GateKind>, doc: NetlistDoc) -> Result<Self, NetlistError> {
        let kind_by_name: HashMap<&str, KindIdx> = library
            .iter()
            .enumerate()
            .map(|(i, k)| (k.name.as_str(), KindIdx(i as u32)))
            .collect();

        let mut nets: Vec<Net> = Vec::new();
        let mut net_by_id: HashMap<String, NetIdx> = HashMap::new();
        let mut intern_net = |id: &str, nets: &mut Vec<Net>| -> NetIdx {
            if let Some(&n) = net_by_id.get(id) {
                return n;
            }
            let n = NetIdx(nets.len() as u32);
            nets.push(Net {
                id: id.to_string(),
                driver: NetDriver::PrimaryInput, // placeholder until resolved
                sinks: Vec::new(),
                is_primary_output: false,
            });
            net_by_id.insert(id.to_string(), n);
            n
        };

        // Driver bookkeeping: None = undriven so far.
        let mut driver_name: Vec<Option<String>> = Vec::new();
        let mut driver_kind: Vec<Option<NetDriver>> = Vec::new();
        let ensure_slot = |v: &mut Vec<Option<String>>, w: &mut Vec<Option<NetDriver>>, n: usize| {
            while v.len() <= n {
                v.push(None);
                w.push(None);
            }
        };

        let mut primary_inputs = Vec::new();
        for id in &doc.primary_inputs {
            let n = intern_net(id, &mut nets);
            ensure_slot(&mut driver_name, &mut driver_kind, n.usize());
            if let Some(first) = &driver_name[n.usize()] {
                return Err(NetlistError::MultipleDrivers {
                    net: id.clone(),
                    first: first.clone(),
                    second: format!("primary input {id}"),
                });
            }
            driver_name[n.usize()] = Some(format!("primary input {id}"));
            driver_kind[n.usize()] = Some(NetDriver::PrimaryInput);
            primary_inputs.push(n);
        }

        let mut cells: Vec<Cell> = Vec::with_capacity(doc.cells.len());
        let mut cell_by_id: HashMap<String, CellIdx> = HashMap::new();
        for cd in &doc.cells {
            let &kind = kind_by_name
                .get(cd.kind.as_str())
                .ok_or_else(|| NetlistError::UnknownKind {
                    cell: cd.id.clone(),
                    kind: cd.kind.clone(),
                })?;
            let expected = library[kind.0 as usize].inputs;
            if cd.fanin.len() != expected {
                return Err(NetlistError::FaninArity {
                    cell: cd.id.clone(),
                    kind: cd.kind.clone(),
                    expected,
                    got: cd.fanin.len(),
                });
            }
            let idx = CellIdx(cells.len() as u32);
            if cell_by_id.insert(cd.id.clone(), idx).is_some() {
                return Err(NetlistError::DuplicateCell(cd.id.clone()));
            }
            let fanin: Vec<NetIdx> = cd.fanin.iter().map(|f| intern_net(f, &mut nets)).collect();
            let fanout = intern_net(&cd.fanout, &mut nets);
            ensure_slot(&mut driver_name, &mut driver_kind, fanout.usize());
            if let Some(first) = &driver_name[fanout.usize()] {
                return Err(NetlistError::MultipleDrivers {
                    net: cd.fanout.clone(),
                    first: first.clone(),
                    second: cd.id.clone(),
                });
            }
            driver_name[fanout.usize()] = Some(cd.id.clone());
            driver_kind[fanout.usize()] = Some(NetDriver::Cell(idx));
            cells.push(Cell {
                id: cd.id.clone(),
                kind,
                fanin,
                fanout,
            });
        }

        ensure_slot(&mut driver_name, &mut driver_kind, nets.len().saturating_sub(1));

        // Resolve sinks and check every consumed net has a driver.
        for (ci, cell) in cells.iter().enumerate() {
            for (pin, &n) in cell.fanin.iter().enumerate() {
                if driver_kind[n.usize()].is_none() {
                    return Err(NetlistError::DanglingNet {
                        net: nets[n.usize()].id.clone(),
                        cell: cell.id.clone(),
                    });
                }
                nets[n.usize()].sinks.push((CellIdx(ci as u32), pin));
            }
        }
        for (ni, d) in driver_kind.iter().enumerate() {
            if let Some(d) = d {
                nets[ni].driver = *d;
            }
        }

        let mut primary_outputs = Vec::new();
        for id in &doc.primary_outputs {
            let n = match net_by_id.get(id) {
                Some(&n) if driver_kind[n.usize()].is_some() => n,
                _ => return Err(NetlistError::UndrivenOutput(id.clone())),
            };
            nets[n.usize()].is_primary_output = true;
            primary_outputs.push(n);
        }

        // Every net must feed something: a cell pin or the output pad.
        for net in &nets {
            if net.sinks.is_empty() && !net.is_primary_output {
                return Err(NetlistError::UnusedNet {
                    net: net.id.clone(),
                    driver: driver_name[net_by_id[&net.id].usize()]
                        .clone()
                        .unwrap_or_default(),
                });
            }
        }

        let mut netlist = Netlist {
            library,
            cells,
            nets,
            primary_inputs,
            primary_outputs,
            cell_by_id,
            net_by_id,
            topo: Vec::new(),
        };
        netlist.topo = netlist.compute_topo()?;
        Ok(netlist)
    }

    /// Kahn topological sort; ready cells are released in lexicographic id
    /// order so the result is unique. A nonempty remainder is a cycle.
    fn compute_topo(&self) -> Result<Vec<CellIdx>, NetlistError> {
        let n = self.cells.len();
        let mut indegree = vec![0usize; n];
        for (ci, cell) in self.cells.iter().enumerate() {
            for &f in &cell.fanin {
                if let NetDriver::Cell(_) = self.nets[f.usize()].driver {
                    indegree[ci] += 1;
                }
            }
        }

        let mut ready: BTreeSet<(&str, CellIdx)> = BTreeSet::new();
        for (ci, cell) in self.cells.iter().enumerate() {
            if indegree[ci] == 0 {
                ready.insert((cell.id.as_str(), CellIdx(ci as u32)));
            }
        }
        let mut order = Vec::with_capacity(n);
        while let Some(&entry) = ready.iter().next() {
            ready.remove(&entry);
            let (_, c) = entry;
            order.push(c);
            for &(sink, _) in &self.nets[self.cells[c.usize()].fanout.usize()].sinks {
                indegree[sink.usize()] -= 1;
                if indegree[sink.usize()] == 0 {
                    ready.insert((self.cells[sink.usize()].id.as_str(), sink));
                }
            }
        }
        if order.len() != n {
            let mut cycle: Vec<String> = self
                .cells
                .iter()
                .enumerate()
                .filter(|(ci, _)| indegree[*ci] > 0)
                .map(|(_, c)| c.id.clone())
                .collect();
            cycle.sort();
            return Err(NetlistError::CombinationalCycle(cycle));
        }
        Ok(order)
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_nets(&self) -> usize {
        self.nets.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn library(&self) -> &[GateKind] {
        &self.library
    }

    pub fn cell(&self, c: CellIdx) -> &Cell {
        &self.cells[c.usize()]
    }

    pub fn net(&self, n: NetIdx) -> &Net {
        &self.nets[n.usize()]
    }

    pub fn kind_of(&self, c: CellIdx) -> &GateKind {
        &self.library[self.cells[c.usize()].kind.0 as usize]
    }

    pub fn primary_inputs(&self) -> &[NetIdx] {
        &self.primary_inputs
    }

    pub fn primary_outputs(&self) -> &[NetIdx] {
        &self.primary_outputs
    }

    pub fn cell_idx(&self, id: &str) -> Result<CellIdx, NetlistError> {
        self.cell_by_id
            .get(id)
            .copied()
            .ok_or_else(|| NetlistError::UnknownCell(id.to_string()))
    }

    pub fn net_idx(&self, id: &str) -> Option<NetIdx> {
        self.net_by_id.get(id).copied()
    }

    /// Pin count of a net: its driver, its cell sinks, plus the output pad
    /// when the net is a primary output.
    pub fn net_pin_count(&self, n: NetIdx) -> usize {
        let net = &self.nets[n.usize()];
        1 + net.sinks.len() + usize::from(net.is_primary_output)
    }

    /// Number of loads on a cell's output net (cell sinks plus output pad).
    /// Used as the electrical fanout effort FO_g; at least 1.
    pub fn fanout_effort(&self, c: CellIdx) -> f64 {
        let net = &self.nets[self.cells[c.usize()].fanout.usize()];
        (net.sinks.len() + usize::from(net.is_primary_output)).max(1) as f64
    }

    /// Cells in dependency order: every cell appears after its entire fanin
    /// cone, ties broken by lexicographic cell id.
    pub fn topo_order(&self) -> &[CellIdx] {
        &self.topo
    }

    /// All cells reachable from `c`'s output, excluding `c` itself.
    pub fn forward_cone(&self, c: CellIdx) -> BTreeSet<CellIdx> {
        let mut cone = BTreeSet::new();
        let mut stack = vec![c];
        while let Some(cur) = stack.pop() {
            for &(sink, _) in &self.nets[self.cells[cur.usize()].fanout.usize()].sinks {
                if sink != c && cone.insert(sink) {
                    stack.push(sink);
                }
            }
        }
        cone
    }

    /// True when the forward cones of `a` and `b` share no cell.
    pub fn cones_disjoint(&self, a: CellIdx, b: CellIdx) -> bool {
        let ca = self.forward_cone(a);
        let cb = self.forward_cone(b);
        ca.intersection(&cb).next().is_none()
    }

    /// Per-net probability of logic 1, computed in topological order under
    /// the fanin-independence approximation. Exact on reconvergence-free
    /// netlists. Panics if a primary input is missing from `pi_probs`
    /// (contract precondition).
    pub fn signal_probabilities(&self, pi_probs: &BTreeMap<NetIdx, f64>) -> Vec<f64> {
        let mut probs = vec![0.5f64; self.nets.len()];
        for &pi in &self.primary_inputs {
            let p = *pi_probs
                .get(&pi)
                .unwrap_or_else(|| panic!("missing probability for primary input {}", self.nets[pi.usize()].id));
            assert!((0.0..=1.0).contains(&p), "probability out of range");
            probs[pi.usize()] = p;
        }
        for &c in &self.topo {
            let cell = &self.cells[c.usize()];
            let kind = &self.library[cell.kind.0 as usize];
            let input_probs: Vec<f64> = cell.fanin.iter().map(|f| probs[f.usize()]).collect();
            probs[cell.fanout.usize()] = kind.output_prob(&input_probs);
        }
        probs
    }

    /// Uniform 0.5 probability on every primary input.
    pub fn uniform_pi_probs(&self, p: f64) -> BTreeMap<NetIdx, f64> {
        self.primary_inputs.iter().map(|&n| (n, p)).collect()
    }

    /// Evaluate the whole netlist for one primary-input assignment, returning
    /// a value per net. Input order matches `primary_inputs()`.
    pub fn evaluate(&self, pi_values: &[bool]) -> Vec<bool> {
        assert_eq!(pi_values.len(), self.primary_inputs.len());
        let mut values = vec![false; self.nets.len()];
        for (i, &pi) in self.primary_inputs.iter().enumerate() {
            values[pi.usize()] = pi_values[i];
        }
        for &c in &self.topo {
            let cell = &self.cells[c.usize()];
            let kind = &self.library[cell.kind.0 as usize];
            let mut row = 0usize;
            for (k, &f) in cell.fanin.iter().enumerate() {
                if values[f.usize()] {
                    row |= 1 << k;
                }
            }
            values[cell.fanout.usize()] = kind.eval(row);
        }
        values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv_chain(n: usize) -> String {
        let mut cells = String::new();
        for i in 0..n {
            let fi = if i == 0 {
                "a".to_string()
            } else {
                format!("n{i}")
            };
            let fo = if i == n - 1 {
                "y".to_string()
            } else {
                format!("n{}", i + 1)
            };
            cells.push_str(&format!(
                r#"{{"id":"c{i}","kind":"INV","fanin":["{fi}"],"fanout":"{fo}"}},"#
            ));
        }
        cells.pop();
        format!(
            r#"{{"cells":[{cells}],"primary_inputs":["a"],"primary_outputs":["y"]}}"#
        )
    }

    #[test]
    fn parses_single_inverter() {
        let n = parse_netlist(&inv_chain(1)).unwrap();
        assert_eq!(n.num_cells(), 1);
        assert_eq!(n.num_nets(), 2);
    }

    #[test]
    fn rejects_self_driving_cell() {
        let doc = r#"{"cells":[{"id":"c0","kind":"INV","fanin":["x"],"fanout":"x"}],
                      "primary_inputs":[],"primary_outputs":["x"]}"#;
        match parse_netlist(doc) {
            Err(NetlistError::CombinationalCycle(cells)) => assert_eq!(cells, vec!["c0"]),
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn nand_chain_depth_three() {
        // Depth oracle: independent longest-path traversal over fanin edges.
        let doc = r#"{"cells":[
            {"id":"g0","kind":"NAND2","fanin":["a","b"],"fanout":"n1"},
            {"id":"g1","kind":"NAND2","fanin":["n1","b"],"fanout":"n2"},
            {"id":"g2","kind":"NAND2","fanin":["n2","a"],"fanout":"y"}],
            "primary_inputs":["a","b"],"primary_outputs":["y"]}"#;
        let n = parse_netlist(doc).unwrap();
        assert_eq!(n.num_cells(), 3);
        let mut depth: HashMap<CellIdx, usize> = HashMap::new();
        for &c in n.topo_order() {
            let d = n
                .cell(c)
                .fanin
                .iter()
                .filter_map(|&f| match n.net(f).driver {
                    NetDriver::Cell(p) => Some(depth[&p] + 1),
                    NetDriver::PrimaryInput => Some(1),
                })
                .max()
                .unwrap();
            depth.insert(c, d);
        }
        assert_eq!(depth.values().copied().max().unwrap(), 3);
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse_netlist("{\n  \"cells\": [,]\n}") {
            Err(NetlistError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_net_rejected() {
        let doc = r#"{"cells":[{"id":"c0","kind":"INV","fanin":["ghost"],"fanout":"y"}],
                      "primary_inputs":[],"primary_outputs":["y"]}"#;
        assert!(matches!(
            parse_netlist(doc),
            Err(NetlistError::DanglingNet { .. })
        ));
    }

    #[test]
    fn unknown_kind_rejected() {
        let doc = r#"{"cells":[{"id":"c0","kind":"FLUX","fanin":["a"],"fanout":"y"}],
                      "primary_inputs":["a"],"primary_outputs":["y"]}"#;
        assert!(matches!(
            parse_netlist(doc),
            Err(NetlistError::UnknownKind { .. })
        ));
    }

    #[test]
    fn topo_single_cell() {
        let n = parse_netlist(&inv_chain(1)).unwrap();
        assert_eq!(n.topo_order(), &[CellIdx(0)]);
    }

    #[test]
    fn topo_chain_in_order() {
        let n = parse_netlist(&inv_chain(3)).unwrap();
        let ids: Vec<&str> = n.topo_order().iter().map(|&c| n.cell(c).id.as_str()).collect();
        assert_eq!(ids, vec!["c0", "c1", "c2"]);
    }

    #[test]
    fn topo_diamond_partial_order() {
        let doc = r#"{"cells":[
            {"id":"a","kind":"BUF","fanin":["pi"],"fanout":"na"},
            {"id":"b","kind":"INV","fanin":["na"],"fanout":"nb"},
            {"id":"c","kind":"INV","fanin":["na"],"fanout":"nc"},
            {"id":"d","kind":"NAND2","fanin":["nb","nc"],"fanout":"y"}],
            "primary_inputs":["pi"],"primary_outputs":["y"]}"#;
        let n = parse_netlist(doc).unwrap();
        let ids: Vec<&str> = n.topo_order().iter().map(|&c| n.cell(c).id.as_str()).collect();
        assert_eq!(ids.first(), Some(&"a"));
        assert_eq!(ids.last(), Some(&"d"));
    }

    #[test]
    fn forward_cone_sink_cell_empty() {
        let n = parse_netlist(&inv_chain(1)).unwrap();
        assert!(n.forward_cone(CellIdx(0)).is_empty());
    }

    #[test]
    fn forward_cone_chain() {
        let n = parse_netlist(&inv_chain(3)).unwrap();
        let c0 = n.cell_idx("c0").unwrap();
        let cone = n.forward_cone(c0);
        let ids: Vec<&str> = cone.iter().map(|&c| n.cell(c).id.as_str()).collect();
        assert_eq!(ids, vec!["c1", "c2"]);
    }

    /// Three parallel branches where a and c reconverge but a and b do not:
    /// cones of (a, b) are disjoint, cones of (a, c) intersect.
    #[test]
    fn forward_cone_dependence_pattern() {
        let doc = r#"{"cells":[
            {"id":"a","kind":"INV","fanin":["p"],"fanout":"na"},
            {"id":"b","kind":"INV","fanin":["q"],"fanout":"nb"},
            {"id":"c","kind":"INV","fanin":["p"],"fanout":"nc"},
            {"id":"ob","kind":"BUF","fanin":["nb"],"fanout":"yb"},
            {"id":"m","kind":"NAND2","fanin":["na","nc"],"fanout":"y"}],
            "primary_inputs":["p","q"],"primary_outputs":["y","yb"]}"#;
        let n = parse_netlist(doc).unwrap();
        let a = n.cell_idx("a").unwrap();
        let b = n.cell_idx("b").unwrap();
        let c = n.cell_idx("c").unwrap();
        assert!(n.cones_disjoint(a, b));
        assert!(!n.cones_disjoint(a, c));
    }

    #[test]
    fn signal_prob_inverter() {
        let n = parse_netlist(&inv_chain(1)).unwrap();
        let probs = n.signal_probabilities(&n.uniform_pi_probs(0.5));
        let y = n.net_idx("y").unwrap();
        assert!((probs[y.usize()] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn signal_prob_and2() {
        let doc = r#"{"cells":[{"id":"g","kind":"AND2","fanin":["a","b"],"fanout":"y"}],
                      "primary_inputs":["a","b"],"primary_outputs":["y"]}"#;
        let n = parse_netlist(doc).unwrap();
        let probs = n.signal_probabilities(&n.uniform_pi_probs(0.5));
        let y = n.net_idx("y").unwrap();
        assert!((probs[y.usize()] - 0.25).abs() < 1e-12);
    }

    /// Exhaustive-enumeration oracle for signal probabilities on small inputs.
    fn exact_net_probs(n: &Netlist, pi_probs: &BTreeMap<NetIdx, f64>) -> Vec<f64> {
        let pis = n.primary_inputs();
        let mut acc = vec![0.0f64; n.num_nets()];
        for assign in 0..(1usize << pis.len()) {
            let bits: Vec<bool> = (0..pis.len()).map(|k| assign & (1 << k) != 0).collect();
            let mut w = 1.0;
            for (k, &pi) in pis.iter().enumerate() {
                let p = pi_probs[&pi];
                w *= if bits[k] { p } else { 1.0 - p };
            }
            let values = n.evaluate(&bits);
            for (ni, &v) in values.iter().enumerate() {
                if v {
                    acc[ni] += w;
                }
            }
        }
        acc
    }

    #[test]
    fn signal_prob_reconvergent_within_tolerance() {
        // Reconvergent fanout: the independence approximation deviates from
        // the exhaustive oracle (0.4375 vs 0.375 at y) but stays within 0.15.
        let doc = r#"{"cells":[
            {"id":"g1","kind":"AND2","fanin":["a","b"],"fanout":"n1"},
            {"id":"g2","kind":"AND2","fanin":["a","c"],"fanout":"n2"},
            {"id":"o","kind":"OR2","fanin":["n1","n2"],"fanout":"y"}],
            "primary_inputs":["a","b","c"],"primary_outputs":["y"]}"#;
        let n = parse_netlist(doc).unwrap();
        let pi = n.uniform_pi_probs(0.5);
        let approx = n.signal_probabilities(&pi);
        let exact = exact_net_probs(&n, &pi);
        for ni in 0..n.num_nets() {
            assert!((0.0..=1.0).contains(&approx[ni]));
            assert!(
                (approx[ni] - exact[ni]).abs() <= 0.15,
                "net {} approx {} exact {}",
                n.nets()[ni].id,
                approx[ni],
                exact[ni]
            );
        }
    }

    #[test]
    fn signal_prob_exact_on_trees() {
        let doc = r#"{"cells":[
            {"id":"g1","kind":"NAND2","fanin":["a","b"],"fanout":"n1"},
            {"id":"g2","kind":"NOR2","fanin":["c","d"],"fanout":"n2"},
            {"id":"g3","kind":"OR2","fanin":["n1","n2"],"fanout":"y"}],
            "primary_inputs":["a","b","c","d"],"primary_outputs":["y"]}"#;
        let n = parse_netlist(doc).unwrap();
        let mut pi = BTreeMap::new();
        for (k, &net) in n.primary_inputs().iter().enumerate() {
            pi.insert(net, 0.2 + 0.15 * k as f64);
        }
        let approx = n.signal_probabilities(&pi);
        let exact = exact_net_probs(&n, &pi);
        for ni in 0..n.num_nets() {
            assert!(
                (approx[ni] - exact[ni]).abs() < 1e-12,
                "tree netlists must be exact"
            );
        }
    }

    #[test]
    fn topo_is_permutation_respecting_edges() {
        let doc = r#"{"cells":[
            {"id":"z","kind":"NAND2","fanin":["a","b"],"fanout":"n1"},
            {"id":"m","kind":"INV","fanin":["n1"],"fanout":"n2"},
            {"id":"k","kind":"NOR2","fanin":["n2","n1"],"fanout":"y"}],
            "primary_inputs":["a","b"],"primary_outputs":["y"]}"#;
        let n = parse_netlist(doc).unwrap();
        let order = n.topo_order();
        assert_eq!(order.len(), n.num_cells());
        let pos: HashMap<CellIdx, usize> =
            order.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        assert_eq!(pos.len(), n.num_cells());
        for (ci, cell) in n.cells().iter().enumerate() {
            for &f in &cell.fanin {
                if let NetDriver::Cell(p) = n.net(f).driver {
                    assert!(pos[&p] < pos[&CellIdx(ci as u32)]);
                }
            }
        }
    }

    #[test]
    fn forward_cone_bfs_dfs_agree() {
        let doc = r#"{"cells":[
            {"id":"a","kind":"BUF","fanin":["p"],"fanout":"n1"},
            {"id":"b","kind":"INV","fanin":["n1"],"fanout":"n2"},
            {"id":"c","kind":"NAND2","fanin":["n1","n2"],"fanout":"n3"},
            {"id":"d","kind":"INV","fanin":["n3"],"fanout":"y"}],
            "primary_inputs":["p"],"primary_outputs":["y"]}"#;
        let n = parse_netlist(doc).unwrap();
        for ci in 0..n.num_cells() {
            let c = CellIdx(ci as u32);
            // BFS oracle against the DFS implementation.
            let mut bfs = BTreeSet::new();
            let mut queue = std::collections::VecDeque::from([c]);
            while let Some(cur) = queue.pop_front() {
                for &(s, _) in &n.net(n.cell(cur).fanout).sinks {
                    if s != c && bfs.insert(s) {
                        queue.push_back(s);
                    }
                }
            }
            assert_eq!(bfs, n.forward_cone(c));
        }
    }
}

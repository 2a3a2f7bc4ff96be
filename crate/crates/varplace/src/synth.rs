//! Seeded synthetic combinational circuits for benchmarks and tests.
//!
//! Circuits are layered DAGs over the default gate library, emitted as a
//! netlist document and fed through the regular parser, so generated fixtures
//! exercise the same validation path as user input. Generation is a pure
//! function of the config.

use crate::netlist::{parse_netlist, Netlist};
use crate::stream::{hash3, unit_f64};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub cells: usize,
    pub seed: u64,
    /// Primary input count; capped by the first layer's width.
    pub pi_count: usize,
    /// Target logic depth.
    pub layers: usize,
}

impl SynthConfig {
    pub fn sized(cells: usize, seed: u64) -> Self {
        let layers = ((cells as f64).sqrt() * 0.7).round().clamp(3.0, 12.0) as usize;
        SynthConfig {
            cells,
            seed,
            pi_count: (cells / 10).clamp(4, 64),
            layers,
        }
    }
}

const KIND_WEIGHTS: &[(&str, f64, usize)] = &[
    ("INV", 0.22, 1),
    ("BUF", 0.10, 1),
    ("NAND2", 0.24, 2),
    ("NOR2", 0.14, 2),
    ("AND2", 0.10, 2),
    ("OR2", 0.10, 2),
    ("XOR2", 0.10, 2),
];

fn pick_kind(u: f64) -> (&'static str, usize) {
    let mut acc = 0.0;
    for &(name, w, inputs) in KIND_WEIGHTS {
        acc += w;
        if u < acc {
            return (name, inputs);
        }
    }
    let &(name, _, inputs) = KIND_WEIGHTS.last().unwrap();
    (name, inputs)
}

/// Emit the netlist JSON document for the config.
pub fn synth_circuit_doc(cfg: &SynthConfig) -> String {
    assert!(cfg.cells >= 2 && cfg.layers >= 2);
    let seed = cfg.seed;
    let layers = cfg.layers.min(cfg.cells);
    // Spread cells across layers, wider at the front.
    let mut layer_sizes = vec![cfg.cells / layers; layers];
    for extra in 0..cfg.cells % layers {
        layer_sizes[extra % layers] += 1;
    }
    let pi_count = cfg.pi_count.min(layer_sizes[0]).max(1);

    // net name per cell output; PIs are named separately.
    let pi_name = |k: usize| format!("pi{k}");
    let out_name = |c: usize| format!("w{c}");

    let mut cells_json: Vec<String> = Vec::with_capacity(cfg.cells);
    // Output nets of all previous layers, flat, for fanin selection.
    let mut layer_nets: Vec<Vec<String>> = Vec::with_capacity(layers + 1);
    layer_nets.push((0..pi_count).map(pi_name).collect());
    let mut consumed: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();

    let mut cell_counter = 0usize;
    for (li, &size) in layer_sizes.iter().enumerate() {
        let mut this_layer = Vec::with_capacity(size);
        for s in 0..size {
            let c = cell_counter;
            cell_counter += 1;
            let (kind, inputs) = pick_kind(unit_f64(seed, c as u64, 0, 10));
            let mut fanin = Vec::with_capacity(inputs);
            for pin in 0..inputs {
                let net = if li == 0 {
                    // Round-robin the first pins so every PI is consumed.
                    if pin == 0 {
                        pi_name(s % pi_count)
                    } else {
                        let k = (hash3(seed, c as u64, pin as u64, 11) as usize) % pi_count;
                        pi_name(k)
                    }
                } else {
                    // Mostly the previous layer, occasionally deeper back.
                    let back = if unit_f64(seed, c as u64, pin as u64, 12) < 0.75 || li == 1 {
                        1
                    } else {
                        2 + (hash3(seed, c as u64, pin as u64, 13) as usize) % (li - 1).max(1)
                    };
                    let src = &layer_nets[li - back.min(li)];
                    let k = (hash3(seed, c as u64, pin as u64, 14) as usize) % src.len();
                    src[k].clone()
                };
                consumed.insert(net.clone());
                fanin.push(net);
            }
            let fanin_json: Vec<String> = fanin.iter().map(|f| format!("\"{f}\"")).collect();
            cells_json.push(format!(
                "{{\"id\":\"c{c:05}\",\"kind\":\"{kind}\",\"fanin\":[{}],\"fanout\":\"{}\"}}",
                fanin_json.join(","),
                out_name(c)
            ));
            this_layer.push(out_name(c));
        }
        layer_nets.push(this_layer);
    }

    // Primary outputs: every cell output without a consumer.
    let pos: Vec<String> = (0..cfg.cells)
        .map(out_name)
        .filter(|n| !consumed.contains(n))
        .map(|n| format!("\"{n}\""))
        .collect();

    format!(
        "{{\"cells\":[{}],\"primary_inputs\":[{}],\"primary_outputs\":[{}]}}",
        cells_json.join(","),
        (0..pi_count)
            .map(|k| format!("\"{}\"", pi_name(k)))
            .collect::<Vec<_>>()
            .join(","),
        pos.join(",")
    )
}

/// Generate and parse a synthetic circuit.
pub fn synth_circuit(cfg: &SynthConfig) -> Netlist {
    parse_netlist(&synth_circuit_doc(cfg)).expect("generated circuit must validate")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_circuits_validate() {
        for seed in 0..5u64 {
            let net = synth_circuit(&SynthConfig::sized(120, seed));
            assert_eq!(net.num_cells(), 120);
            assert!(!net.primary_outputs().is_empty());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synth_circuit_doc(&SynthConfig::sized(80, 7));
        let b = synth_circuit_doc(&SynthConfig::sized(80, 7));
        assert_eq!(a, b);
        let c = synth_circuit_doc(&SynthConfig::sized(80, 8));
        assert_ne!(a, c);
    }

    #[test]
    fn larger_sizes_parse() {
        let net = synth_circuit(&SynthConfig::sized(600, 3));
        assert_eq!(net.num_cells(), 600);
    }
}

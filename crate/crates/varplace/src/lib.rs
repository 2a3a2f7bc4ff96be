//! Variation-aware placement toolkit for combinational gate-level netlists.
//!
//! The library builds within-die threshold-voltage variation maps, estimates
//! soft-error rates under those maps, and produces hardened placements in two
//! stages: a quadratic global placer that steers soft-error-sensitive cells
//! away from low-V_th regions, and a detailed placer that pulls electrically
//! related cell pairs within mutual masking distance to exploit pulse
//! quenching against double event transients. An independent Monte Carlo
//! evaluation kit scores placements.

pub mod detailed;
pub mod evalkit;
pub mod global;
pub mod netlist;
pub mod sermodel;
pub mod solver;
pub mod stream;
pub mod synth;
pub mod variation;

//! Repeated stochastic congestion games: mirror-descent flow learning over
//! a road network, informational flow-disturbance attacks on the learned
//! state, and the recovery metrics that quantify how fast and how surely
//! the flow returns toward the mean Wardrop equilibrium.
//!
//! The modules mirror the pipeline: [`network`] holds the graph, demands
//! and enumerated path sets; [`latency`] evaluates the perturbed BPR
//! latencies and Beckmann potentials; [`mirror`] implements the mirror
//! maps and the population update; [`equilibrium`] computes the reference
//! optimum by Frank-Wolfe; [`attack`] generates and quantifies the
//! poisoned flows; [`harness`] runs seeded replications and evaluates
//! verdicts and theory-side constants; [`io`] parses TNTP inputs and
//! writes trajectory/summary outputs.

// Validation guards use `!(x >= 0.0)` so NaN inputs are rejected along
// with negative ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod io;
pub mod latency;
pub mod mirror;
pub mod network;
pub mod numerics;

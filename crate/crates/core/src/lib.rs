//! Proactive traffic-incident management as a distributed constraint
//! optimisation problem.
//!
//! A fleet of emergency response vehicles (ERVs) and UAVs on a grid road
//! network is reassigned at every decision stage by MGM or DSA local search.
//! ERVs minimise expected incident delay with a two-stage look-ahead; UAVs
//! maximise a priority-matrix utility and shorten cooperating ERVs' response
//! times. The [`scenarios`] module runs whole scenarios under three policies
//! (conventional nearest-vehicle dispatch, the DCOP policy, and a clairvoyant
//! optimum) so they can be compared.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dcop;
pub mod erv;
pub mod error;
pub mod forecast;
pub mod incidents;
pub mod network;
pub mod rng;
pub mod scenarios;
pub mod solvers;
pub mod stats;
pub mod uav;

pub use dcop::{brute_force_optimum, AgentId, Assignment, DcopProblem, Sense};
pub use error::{Error, Result};
pub use network::{CellId, GridNetwork, TimeRange};
pub use solvers::{solve, Algorithm, SolveTrace, SolverConfig};

//! Distributed Nash equilibrium seeking under partial-decision information.
//!
//! Agents only talk to their neighbours on a communication graph and keep
//! estimates of everybody else's decision. The main solver is a
//! preconditioned proximal-point iteration: one message exchange per round,
//! a consensus half-step on the estimates and a proximal best response on the
//! agent's own decision. Around it the crate provides
//!
//! * [`game`]: quadratic games with box constraints and an exact equilibrium oracle,
//! * [`network`]: graphs, Metropolis mixing matrices and the block preconditioner,
//! * [`tuning`]: the admissible step bound, restricted monotonicity modulus and rates,
//! * [`solvers`]: the proximal-point iteration and an augmented gradient baseline,
//! * [`diagnostics`]: numerical probes of the monotonicity and contraction properties,
//! * [`harness`]: experiment configs, CSV traces and SVG plots.

pub mod diagnostics;
pub mod error;
pub mod game;
pub mod harness;
pub mod io;
pub mod network;
pub mod solvers;
pub mod tuning;

pub use error::{NepError, Result};

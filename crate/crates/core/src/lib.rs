//! Inexact and stochastic FISTA for composite convex problems `F = f + g`.
//!
//! - [`params`]: admissible acceleration parameters `t_k`.
//! - [`problems`]: test problems with oracles and reference optima.
//! - [`inexact`]: certified inexact proximity steps, gradient errors and
//!   stochastic gradient oracles.
//! - [`solvers`]: inexact FISTA, inexact stochastic FISTA, the proximal
//!   gradient baseline, energies and convergence-bound right-hand sides.
//! - [`analysis`]: numeric oracles for the sequence lemmas, rate fits and
//!   schedule feasibility.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod inexact;
pub mod params;
pub mod problems;
pub mod solvers;

pub use problems::{CompositeProblem, Point};

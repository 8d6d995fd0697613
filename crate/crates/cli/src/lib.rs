//! Batch front-end for inexact FISTA experiments: config loading, runs,
//! parameter sweeps, and verification of stored traces and oracle suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod config;
pub mod error;
pub mod run;
pub mod sweep;
pub mod trace;
pub mod verify;

pub use error::CliError;

//! Experiment driver for the `sigprop` binary: configuration, the CSV
//! producing subcommands and the verification suite.

// NaN-rejecting checks are written as `!(x <= bound)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

//! Config-driven experiment runner for the `cdac` binary.

// Negated comparisons reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use commands::run;
pub use config::{Config, Scope};
pub use error::CliError;

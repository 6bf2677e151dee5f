//! Pipeline stages for the `stormsafe` command: fit, select, returns,
//! reliability, decompose, sweep and report.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod data;

//! Experiment runner for `pathwise`: TOML configs, seeded replication, CSV and JSON
//! output, and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod run;

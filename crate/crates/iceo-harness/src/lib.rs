//! Experiment harness for the contextual-optimization library: config
//! files, seeded sweeps, baseline comparisons, and figure tables.

pub mod config;
pub mod plotdata;
pub mod runner;
pub mod seeds;

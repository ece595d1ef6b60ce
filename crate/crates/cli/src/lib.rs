//! Experiment harness for the bistatic ISAC toolkit: plans, Monte Carlo
//! drivers and CSV/plot-data emission. The `bisar` binary wires these to
//! subcommands.

pub mod experiments;
pub mod output;
pub mod plan;

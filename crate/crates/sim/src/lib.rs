//! Scenario files, trace/result IO and parameter sweeps for the switched
//! visual tracker.

#![forbid(unsafe_code)]

pub mod checks;
pub mod io;
pub mod sweep;

pub use io::{
    load_scenario, parse_scenario, read_trace, write_result, write_scenario, write_trace, IoError,
    RunRecord,
};
pub use sweep::{run_sweep, SweepParam, SweepRow};

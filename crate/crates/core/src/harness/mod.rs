//! Configuration, single runs, sweeps, and file output.

pub mod config;
pub mod io;
pub mod report;
pub mod run;
pub mod stats;
pub mod sweep;

pub use config::RunConfig;
pub use run::{execute, write_artifacts, RunOutcome};
pub use sweep::{run_sweep, SweepAxis, SweepResult, SweepSpec};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "RECTIFY_OUTPUT_ROOT";

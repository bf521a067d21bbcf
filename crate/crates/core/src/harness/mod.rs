//! Experiment configuration, runs, sweeps and property suites.

mod config;
mod record;
mod run;
pub mod verify;

pub use config::{parse_optimizer, ExperimentConfig, ExperimentKind, GridSpec, Job, SweepGrid, TransferJob};
pub use record::{fmt_f64, EpochRow, RunRecord, RunSummary};
pub use run::{exit_code, execute, frozen_stack, output_dir, run, sweep, write_output, ConfigResult, RunOutput, SeedResult, SweepReport};

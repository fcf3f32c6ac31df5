//! Experiment runner behind the `multistop` binary.
//!
//! Verbs: `run <config>`, `selftest`, `print-config <name>`. Artifacts go to
//! `$MULTISTOP_OUT/<experiment.name>/` (default root `./out`).
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numeric
//! or contract failure (including a failing self-test).

pub mod config;
pub mod experiment;
pub mod selftest;
pub mod svg;

pub use config::ExperimentConfig;
pub use experiment::{output_root, run_experiment, Summary, OUTPUT_ROOT_VAR};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Dimension { .. } | Error::Format(_) => EXIT_CONFIG,
        Error::Numeric(_) | Error::Contract(_) | Error::Guard(_) => EXIT_NUMERIC,
        Error::Io(_) => EXIT_IO,
    }
}

//! Library half of the `lavamap` command-line tool: config parsing, the
//! synthetic demo fixture, and the subcommand implementations. The binary
//! in `main.rs` only parses arguments and maps errors to exit codes.

use std::fmt;

pub mod commands;
pub mod config;
pub mod demo;

pub use commands::{
    cmd_build_field, cmd_demo, cmd_exhaustive, cmd_fit, cmd_simulate, with_thread_cap,
    BuildFieldSummary, FitSummary, HazardFiles,
};
pub use config::{FieldParams, RunConfig, ScenarioSpec};

/// Which stage an error belongs to; decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Bad invocation, config, or input files: exit code 1.
    Setup,
    /// Failure while simulating or writing results: exit code 2.
    Run,
}

#[derive(Debug)]
pub struct CliError {
    pub phase: Phase,
    pub error: lavamap::Error,
}

impl CliError {
    pub fn setup(error: impl Into<lavamap::Error>) -> CliError {
        CliError {
            phase: Phase::Setup,
            error: error.into(),
        }
    }

    pub fn run(error: impl Into<lavamap::Error>) -> CliError {
        CliError {
            phase: Phase::Run,
            error: error.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.phase {
            Phase::Setup => 1,
            Phase::Run => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for CliError {}

/// Tags every error in a fallible block with one phase.
pub(crate) trait PhaseExt<T> {
    fn setup_phase(self) -> Result<T, CliError>;
    fn run_phase(self) -> Result<T, CliError>;
}

impl<T, E: Into<lavamap::Error>> PhaseExt<T> for Result<T, E> {
    fn setup_phase(self) -> Result<T, CliError> {
        self.map_err(CliError::setup)
    }

    fn run_phase(self) -> Result<T, CliError> {
        self.map_err(CliError::run)
    }
}

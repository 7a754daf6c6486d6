//! Benchmark, diagnostics and replay commands over the strategies in
//! [`pie_core`]. The `pie` binary is a thin CLI over this library.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use commands::{cmd_bench, cmd_diagnose, cmd_simulate};
pub use config::{BenchConfig, ReportFormat};
pub use error::{CliError, CliResult, ExitKind};

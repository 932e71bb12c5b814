//! Experiment harness for the inexact Bregman solver: figure data, order
//! studies, stopping indices and a consolidated validation report.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{run, Command, Hooks};
pub use config::{resolve, Overrides, RunConfig};
pub use error::{CliError, Result};
pub use report::{Check, RunReport};

//! Command-line driver for capsim: run configuration, an expression language
//! for source terms and initial data, experiment pipelines with CSV output,
//! and the verification suite.

pub mod acceptance;
pub mod config;
mod error;
pub mod expr;
pub mod run;
pub mod verify;

pub use error::CliError;

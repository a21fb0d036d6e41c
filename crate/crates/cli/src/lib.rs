//! `themeloom` command line and HTTP API.

pub mod api;
mod cli;
pub mod error;
pub mod provider;

pub use cli::{project_deck, run, Cli, Command};
pub use error::{ApiError, CliError, ErrorCode};
pub use provider::ProviderArgs;

//! Command-line front end: configuration loading and file-emitting
//! subcommands built on `wdmqkd-core`.

pub mod commands;
pub mod config;

//! Library side of the `bdod` driver: configuration, the solution cache and
//! the subcommands, shared with the integration tests.

pub mod cache;
pub mod commands;
pub mod config;

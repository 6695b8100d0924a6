//! Library surface of the `cnmf` binary: argument definitions, the file
//! formats, configuration schema, and the subcommand implementations.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

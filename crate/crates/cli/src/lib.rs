//! Implementation of the `mlndlm` command-line tool, exposed as a library
//! so integration tests can reuse the file formats and manifest logic.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

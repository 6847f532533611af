//! Command-line front end and benchmark harness for `hokalman`.

pub mod bench;
pub mod commands;
pub mod config;

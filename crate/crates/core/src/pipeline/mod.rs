//! Configured runs that write snapshot files, as driven by the command line.

mod config;

pub use config::{parse_entries, parse_times, RunConfig, Source, TOOL_NAME, TOOL_VERSION};
mod commands;

pub use commands::*;

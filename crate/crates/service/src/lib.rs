//! Command-line and HTTP front ends for `gebi-core`.

pub mod cli;
pub mod server;

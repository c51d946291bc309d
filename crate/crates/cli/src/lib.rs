//! Command-line front end and HTTP session server for `ktsim-core`.

pub mod commands;
pub mod server;

//! Command-line front end and HTTP server for `photochat-core`.

pub mod config;
pub mod server;
pub mod wiring;

//! Library surface of the command-line tool; the binary in `main.rs` is a
//! thin wrapper over these modules.

pub mod config;
pub mod expr;
pub mod output;
pub mod runner;

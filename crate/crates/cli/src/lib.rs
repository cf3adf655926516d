//! Library surface of the `metarkhs` harness: configuration, IO formats,
//! the training/evaluation driver, and subcommand implementations. The
//! binary in `main.rs` is a thin CLI wrapper; integration and acceptance
//! tests drive these modules directly.

pub mod commands;
pub mod config;
pub mod driver;
pub mod io;
pub mod optim;

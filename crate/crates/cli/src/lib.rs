//! The `compcomp` command-line tool, plus the demo world and stub model it
//! ships with.

pub mod commands;
pub mod exit;
pub mod fixture;
pub mod fsio;
pub mod stub;

pub use commands::{run, Cli};
pub use exit::exit_code;

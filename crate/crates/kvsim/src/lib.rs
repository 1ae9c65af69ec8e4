//! Scenario runner and file formats for `kvsim-core`.
//!
//! Everything that touches the filesystem, threads or the command line lives
//! here; the simulator itself stays `no_std`.

pub mod cli;
pub mod error;
pub mod io;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod training;

pub use error::{CliError, Result};
pub use scenario::Scenario;

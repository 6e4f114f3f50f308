//! Dataset files, reports and the `heatalloc` command line on top of
//! `heatalloc-core`.

pub mod cli;
pub mod error;
pub mod io;
pub mod report;

pub use error::{Error, Result};

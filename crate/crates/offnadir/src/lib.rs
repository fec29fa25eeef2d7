//! File formats and command-line tools on top of `offnadir-core`.

pub mod checkpoint;
pub mod cli;
pub mod configs;
pub mod error;
pub mod evaluate;
pub mod format;
pub mod pbm;
pub mod report;

pub use error::{Error, Result};

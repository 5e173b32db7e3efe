//! File formats, external hooks and the command-line front end for `negsuite-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod hooks;

pub use error::{Error, Result};

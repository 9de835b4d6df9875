//! File formats, wall-clock timing and the `gcbf` command-line tool built on
//! [`gcbf_core`].

pub mod cli;
pub mod cloud_io;
pub mod error;
pub mod export;
pub mod field_file;
pub mod fsutil;
pub mod model_file;
pub mod scenario;
pub mod timing;

pub use error::{IoError, Result};

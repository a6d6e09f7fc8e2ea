//! File formats, run configuration and the stages behind the `fsdlab`
//! command-line tool.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{LabError, Result};

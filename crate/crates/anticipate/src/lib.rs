//! File formats, configuration and the pipeline behind the `anticipate`
//! command-line tool. The models themselves live in `anticipate-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod signals;

pub use config::Config;
pub use error::{Error, Result};

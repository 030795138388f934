//! File formats, the staged pipeline and the command line around
//! `stabscope-core`.

pub mod case;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod tsdb;

pub use case::load_case;
pub use config::{Loaded, PipelineConfig};
pub use error::{Error, Result};
pub use exec::Pool;
pub use manifest::{Manifest, Stage};
pub use pipeline::Pipeline;
pub use tsdb::{read_tsdb, write_tsdb};

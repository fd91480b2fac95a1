//! Configuration, file formats, synthetic-building experiments and the
//! end-to-end calibration run behind the `epe` command line.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use config::ProjectConfig;
pub use error::{PipelineError, Result};
pub use pipeline::{run_pipeline, Inputs};
pub use report::{interpret, PipelineReport};

//! File formats, configuration and tooling around `uxnet-core`.
//!
//! * [`wav`]: PCM16 / float WAV reading and writing.
//! * [`checkpoint`]: the checksummed binary parameter format.
//! * [`config`]: flat `key = value` run configuration.
//! * [`dataset`]: synthetic datasets on disk.
//! * [`bench`]: real-time factor and complexity records.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod wav;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::{IoError, Result};

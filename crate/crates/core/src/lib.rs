//! Mean-shift family of clustering and mode-finding algorithms.

pub mod blur;
pub mod components;
pub mod data;
pub mod datasets;
pub mod error;
pub mod kde;
pub mod kmodes;
pub mod manifold;
pub mod metrics;
pub mod mode_seek;
pub mod pipelines;

pub use data::DataSet;
pub use error::{Error, Result};
pub use kde::{BandwidthSpec, KdeModel, Kernel};

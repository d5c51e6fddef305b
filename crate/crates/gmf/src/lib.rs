//! File formats, image codecs and the command line of the gmf facial
//! emotion toolkit. The numerical work lives in `gmf-core`.

pub mod annotate;
pub mod cascade;
pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod dataset;
mod error;
pub mod manifest;
pub mod report;
pub mod score;
pub mod workers;

pub use error::{Error, Result};

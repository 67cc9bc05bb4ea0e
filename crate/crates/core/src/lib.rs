//! Multi-head probing of document embeddings for fine-grained emotion
//! classification, plus the analyses built on the trained probes: layer-wise
//! confusion drift, an emotion wheel from embedding arithmetic, and PAD value
//! regression.

mod binfmt;
pub mod dataset;
pub mod embedding;
pub mod emotions;
pub mod error;
pub mod geometry;
pub mod layers;
pub mod pad;
pub mod pipeline;
pub mod probing;

pub use error::{Error, FormatError, Result};

//! Deep product quantization.
//!
//! Vectors are split into `M` sub-vectors, each mapped to one of `K` learned
//! codebook rows, giving `M log2 K`-bit codes. Besides the classical k-means
//! baseline ([`pq`]), the crate trains a supervised network ([`model`]) that
//! produces soft and hard representations over learned codebooks, and
//! answers classification and distance queries on compressed codes through
//! lookup tables ([`lut`]).

pub mod bench;
pub mod codec;
pub mod config;
pub mod error;
pub mod lut;
pub mod model;
pub mod pq;
pub mod quantizer;

pub use codec::{compression_ratio, CodeSet, Codebook, CompressedCode, VectorSet};
pub use config::{LossWeights, QuantizerConfig, Schedule};
pub use error::{DpqError, Result};
pub use lut::{search, Neighbor, SearchIndex, SearchMode};
pub use model::DpqModel;
pub use pq::ProductQuantizer;
pub use quantizer::Quantizer;

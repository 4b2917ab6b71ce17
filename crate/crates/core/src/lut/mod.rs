//! Lookup-table inference over compressed codes: classification, symmetric
//! code-to-code distances and asymmetric vector-to-code distances.
//!
//! Tables are stored in f64.

pub mod counters;
pub mod naive;
mod search;
mod tables;

pub use search::{neighbor_order, search, Neighbor, SearchIndex, SearchMode};
pub use tables::{
    asym_distance, build_asym_lut, build_class_lut, build_sym_lut, classify_code, sym_distance, AsymLut, ClassLut,
    SymLut,
};

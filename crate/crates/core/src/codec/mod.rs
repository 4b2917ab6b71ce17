//! Codes, codebooks, bit-packing and the shared on-disk formats.

mod code;
mod codebook;
pub mod format;
mod pack;
mod vectors;

pub use code::{CodeSet, CompressedCode};
pub(crate) use code::check_indices;
pub use codebook::Codebook;
pub use pack::{bits_per_index, pack_code, pack_into, packed_len, unpack_code};
pub use vectors::VectorSet;

use crate::error::{DpqError, Result};

/// Compression ratio of `M`-partition, `K`-cluster codes relative to f32 storage
/// of an `L`-dimensional vector: `32 L / (M log2 K)`.
pub fn compression_ratio(input_dim: usize, m: usize, k: usize) -> Result<f64> {
    let bits = bits_per_index(k)?;
    if input_dim == 0 || m == 0 || bits == 0 {
        return Err(DpqError::InvalidConfig(
            "compression ratio needs positive L, M and K > 1".into(),
        ));
    }
    Ok(32.0 * input_dim as f64 / (m as f64 * bits as f64))
}

/// Reconstructs a code against a codebook.
pub fn reconstruct(code: &CompressedCode, codebook: &Codebook) -> Result<ndarray::Array1<f64>> {
    if code.num_clusters() != codebook.num_clusters() {
        return Err(DpqError::ShapeMismatch {
            what: "code K",
            expected: codebook.num_clusters(),
            actual: code.num_clusters(),
        });
    }
    codebook.reconstruct(code.indices())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_values() {
        assert_eq!(compression_ratio(128, 8, 256).unwrap(), 64.0);
        let r = compression_ratio(500, 2, 64).unwrap();
        assert!((r - 32.0 * 500.0 / 12.0).abs() < 1e-12);
        // L = M log2(K) / 32
        assert_eq!(compression_ratio(1, 4, 256).unwrap(), 1.0);
        assert!(compression_ratio(128, 8, 100).is_err());
        assert!(compression_ratio(128, 8, 1).is_err());
    }
}

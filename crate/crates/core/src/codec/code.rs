use super::pack::{bits_per_index, pack_code, packed_len, unpack_code};
use crate::error::{DpqError, Result};

/// The per-partition cluster indices `z = (z_1, .., z_M)` of one vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompressedCode {
    indices: Vec<u32>,
    k: usize,
}

impl CompressedCode {
    pub fn new(indices: Vec<u32>, k: usize) -> Result<Self> {
        bits_per_index(k)?;
        check_indices(&indices, k)?;
        Ok(Self { indices, k })
    }

    pub fn from_packed(packed: &[u8], m: usize, k: usize) -> Result<Self> {
        Ok(Self {
            indices: unpack_code(packed, m, k)?,
            k,
        })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn num_partitions(&self) -> usize {
        self.indices.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.k
    }

    /// Bits of information in the code, `M * log2(K)`.
    pub fn bits(&self) -> usize {
        self.indices.len() * self.k.trailing_zeros() as usize
    }

    pub fn packed(&self) -> Vec<u8> {
        pack_code(&self.indices, self.k).expect("indices validated at construction")
    }
}

pub(crate) fn check_indices(indices: &[u32], k: usize) -> Result<()> {
    match indices.iter().position(|&z| z as usize >= k) {
        Some(position) => Err(DpqError::IndexOutOfRange {
            position,
            index: indices[position],
            k,
        }),
        None => Ok(()),
    }
}

/// A collection of codes sharing one (M, K) shape, stored as a flat index array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSet {
    m: usize,
    k: usize,
    indices: Vec<u32>,
}

impl CodeSet {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        bits_per_index(k)?;
        if m == 0 {
            return Err(DpqError::InvalidConfig("codes need at least one partition".into()));
        }
        Ok(Self {
            m,
            k,
            indices: Vec::new(),
        })
    }

    /// Builds a set from `n * m` row-major indices.
    pub fn from_flat(m: usize, k: usize, indices: Vec<u32>) -> Result<Self> {
        let mut set = Self::new(m, k)?;
        if !indices.len().is_multiple_of(m) {
            return Err(DpqError::ShapeMismatch {
                what: "flat code indices",
                expected: indices.len().div_ceil(m) * m,
                actual: indices.len(),
            });
        }
        check_indices(&indices, k)?;
        set.indices = indices;
        Ok(set)
    }

    pub fn push(&mut self, code: &[u32]) -> Result<()> {
        if code.len() != self.m {
            return Err(DpqError::ShapeMismatch {
                what: "code length",
                expected: self.m,
                actual: code.len(),
            });
        }
        check_indices(code, self.k)?;
        self.indices.extend_from_slice(code);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn num_partitions(&self) -> usize {
        self.m
    }

    pub fn num_clusters(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.indices[i * self.m..(i + 1) * self.m]
    }

    pub fn code(&self, i: usize) -> CompressedCode {
        CompressedCode {
            indices: self.get(i).to_vec(),
            k: self.k,
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.indices.chunks_exact(self.m)
    }

    pub fn flat(&self) -> &[u32] {
        &self.indices
    }

    /// Size of one packed record in bytes.
    pub fn record_len(&self) -> usize {
        packed_len(self.m, self.k).expect("K validated at construction")
    }
}

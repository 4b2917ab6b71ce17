//! Bit-packing of code index sequences.
//!
//! Layout: the stream is little-endian at the bit level. Index `z_1` occupies
//! the lowest `log2(K)` bits of byte 0, `z_2` the next `log2(K)` bits, and so
//! on across byte boundaries. Unused high bits of the last byte are zero.

use crate::error::{DpqError, Result};

/// Bits used by one index, `log2(K)`.
pub fn bits_per_index(k: usize) -> Result<u32> {
    if !k.is_power_of_two() {
        return Err(DpqError::NotPowerOfTwo(k));
    }
    Ok(k.trailing_zeros())
}

/// Bytes needed for `m` indices of `log2(k)` bits each.
pub fn packed_len(m: usize, k: usize) -> Result<usize> {
    let bits = bits_per_index(k)? as usize;
    Ok((m * bits).div_ceil(8))
}

pub fn pack_code(indices: &[u32], k: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(packed_len(indices.len(), k)?);
    pack_into(indices, k, &mut out)?;
    Ok(out)
}

/// Appends the packed form of `indices` to `out`.
pub fn pack_into(indices: &[u32], k: usize, out: &mut Vec<u8>) -> Result<()> {
    let bits = bits_per_index(k)?;
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for (position, &index) in indices.iter().enumerate() {
        if index as usize >= k {
            return Err(DpqError::IndexOutOfRange { position, index, k });
        }
        acc |= (index as u64) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    Ok(())
}

pub fn unpack_code(packed: &[u8], m: usize, k: usize) -> Result<Vec<u32>> {
    let expected = packed_len(m, k)?;
    if packed.len() != expected {
        return Err(DpqError::InvalidLength {
            expected,
            actual: packed.len(),
        });
    }
    let bits = bits_per_index(k)?;
    let mask = (1u64 << bits) - 1;
    let mut out = Vec::with_capacity(m);
    let mut bytes = packed.iter();
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for _ in 0..m {
        while filled < bits {
            // Length was checked above, so the stream cannot run dry here.
            acc |= (*bytes.next().expect("packed length checked") as u64) << filled;
            filled += 8;
        }
        out.push((acc & mask) as u32);
        acc >>= bits;
        filled -= bits;
    }
    Ok(out)
}

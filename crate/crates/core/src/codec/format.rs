//! Little-endian binary containers for vectors (`DPQV`), codebooks (`DPQC`)
//! and packed codes (`DPQZ`). Reals are stored as IEEE-754 f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::code::CodeSet;
use super::codebook::Codebook;
use super::pack::{pack_into, unpack_code};
use super::vectors::VectorSet;
use crate::error::{DpqError, Result};

pub const VECTOR_MAGIC: &[u8; 4] = b"DPQV";
pub const CODEBOOK_MAGIC: &[u8; 4] = b"DPQC";
pub const CODES_MAGIC: &[u8; 4] = b"DPQZ";

pub(crate) struct LeReader<R> {
    inner: R,
    format: &'static str,
}

impl<R: Read> LeReader<R> {
    pub(crate) fn new(inner: R, format: &'static str) -> Self {
        Self { inner, format }
    }

    pub(crate) fn malformed(&self, detail: impl Into<String>) -> DpqError {
        DpqError::Format {
            format: self.format,
            detail: detail.into(),
        }
    }

    pub(crate) fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                self.malformed("unexpected end of file")
            } else {
                e.into()
            }
        })?;
        Ok(buf)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.bytes::<4>()?;
        if &got != expected {
            return Err(self.malformed(format!("bad magic {got:?}")));
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f32().map(f64::from)).collect()
    }

    pub(crate) fn exact(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| self.malformed("unexpected end of file"))?;
        Ok(buf)
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(self.malformed("trailing bytes")),
        }
    }
}

pub(crate) fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| DpqError::InvalidConfig(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_reals<'a, W: Write>(w: &mut W, vals: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &v in vals {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_vectors<W: Write>(w: &mut W, set: &VectorSet) -> Result<()> {
    w.write_all(VECTOR_MAGIC)?;
    put_u32(w, set.len())?;
    put_u32(w, set.dim())?;
    let flag = u8::from(set.labels().is_some());
    w.write_all(&[flag, 0, 0, 0])?;
    put_reals(w, set.vectors().iter())?;
    if let Some(labels) = set.labels() {
        for &l in labels {
            put_u32(w, l)?;
        }
    }
    Ok(())
}

pub fn read_vectors<R: Read>(r: R) -> Result<VectorSet> {
    let mut r = LeReader::new(r, "DPQV");
    r.magic(VECTOR_MAGIC)?;
    let n = r.usize()?;
    let dim = r.usize()?;
    let [flag, a, b, c] = r.bytes::<4>()?;
    if flag > 1 || (a, b, c) != (0, 0, 0) {
        return Err(r.malformed("bad label flag or reserved bytes"));
    }
    let data = r.reals(n * dim)?;
    let labels = if flag == 1 {
        Some((0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    r.finish()?;
    let vectors = Array2::from_shape_vec((n, dim), data).expect("length matches shape");
    VectorSet::new(vectors, labels)
}

pub fn write_codebook<W: Write>(w: &mut W, cb: &Codebook) -> Result<()> {
    w.write_all(CODEBOOK_MAGIC)?;
    put_u32(w, cb.num_partitions())?;
    put_u32(w, cb.num_clusters())?;
    put_u32(w, cb.centroid_dim())?;
    for part in cb.partitions() {
        put_reals(w, part.iter())?;
    }
    Ok(())
}

pub fn read_codebook<R: Read>(r: R) -> Result<Codebook> {
    let mut r = LeReader::new(r, "DPQC");
    r.magic(CODEBOOK_MAGIC)?;
    let (m, k, d) = (r.usize()?, r.usize()?, r.usize()?);
    if m == 0 || k == 0 || d == 0 {
        return Err(r.malformed("zero-sized codebook"));
    }
    let mut parts = Vec::with_capacity(m);
    for _ in 0..m {
        let vals = r.reals(k * d)?;
        parts.push(Array2::from_shape_vec((k, d), vals).expect("length matches shape"));
    }
    r.finish()?;
    Codebook::new(parts)
}

pub fn write_codes<W: Write>(w: &mut W, codes: &CodeSet) -> Result<()> {
    w.write_all(CODES_MAGIC)?;
    put_u32(w, codes.len())?;
    put_u32(w, codes.num_partitions())?;
    put_u32(w, codes.num_clusters())?;
    let mut buf = Vec::with_capacity(codes.len() * codes.record_len());
    for code in codes.iter() {
        pack_into(code, codes.num_clusters(), &mut buf)?;
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_codes<R: Read>(r: R) -> Result<CodeSet> {
    let mut r = LeReader::new(r, "DPQZ");
    r.magic(CODES_MAGIC)?;
    let (n, m, k) = (r.usize()?, r.usize()?, r.usize()?);
    let mut set = CodeSet::new(m, k).map_err(|e| r.malformed(e.to_string()))?;
    let record = set.record_len();
    let raw = r.exact(n * record)?;
    r.finish()?;
    let mut flat = Vec::with_capacity(n * m);
    for chunk in raw.chunks_exact(record.max(1)).take(n) {
        flat.extend(unpack_code(chunk, m, k)?);
    }
    if record == 0 {
        flat.resize(n * m, 0);
    }
    set = CodeSet::from_flat(m, k, flat)?;
    Ok(set)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn save_vectors(path: impl AsRef<Path>, set: &VectorSet) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_vectors(&mut w, set)?;
    w.flush()?;
    Ok(())
}

pub fn load_vectors(path: impl AsRef<Path>) -> Result<VectorSet> {
    read_vectors(open(path.as_ref())?)
}

pub fn save_codebook(path: impl AsRef<Path>, cb: &Codebook) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_codebook(&mut w, cb)?;
    w.flush()?;
    Ok(())
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    read_codebook(open(path.as_ref())?)
}

pub fn save_codes(path: impl AsRef<Path>, codes: &CodeSet) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_codes(&mut w, codes)?;
    w.flush()?;
    Ok(())
}

pub fn load_codes(path: impl AsRef<Path>) -> Result<CodeSet> {
    read_codes(open(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn vector_header_layout() {
        let set = VectorSet::new(array![[1.0, -2.0], [0.5, 4.0]], Some(vec![3, 1])).unwrap();
        let mut buf = Vec::new();
        write_vectors(&mut buf, &set).unwrap();
        assert_eq!(&buf[..4], b"DPQV");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &[1, 0, 0, 0]);
        assert_eq!(&buf[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&buf[28..32], &4.0f32.to_le_bytes());
        assert_eq!(&buf[32..36], &3u32.to_le_bytes());
        assert_eq!(buf.len(), 16 + 16 + 8);
        assert_eq!(read_vectors(&buf[..]).unwrap(), set);
    }

    #[test]
    fn unlabeled_vectors() {
        let set = VectorSet::unlabeled(array![[1.0, 2.0, 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_vectors(&mut buf, &set).unwrap();
        assert_eq!(buf[12], 0);
        assert_eq!(read_vectors(&buf[..]).unwrap(), set);
    }

    #[test]
    fn codebook_layout() {
        let cb = Codebook::new(vec![array![[1.0], [2.0]], array![[3.0], [4.0]]]).unwrap();
        let mut buf = Vec::new();
        write_codebook(&mut buf, &cb).unwrap();
        assert_eq!(buf.len(), 16 + 16);
        assert_eq!(&buf[24..28], &3.0f32.to_le_bytes());
        assert_eq!(read_codebook(&buf[..]).unwrap(), cb);
    }

    #[test]
    fn codes_records_are_independently_padded() {
        let codes = CodeSet::from_flat(3, 64, vec![1, 2, 3, 63, 0, 5]).unwrap();
        let mut buf = Vec::new();
        write_codes(&mut buf, &codes).unwrap();
        // 16-byte header + 2 records of ceil(18 / 8) = 3 bytes.
        assert_eq!(buf.len(), 16 + 6);
        assert_eq!(&buf[16..19], &[0x81, 0x30, 0x00]);
        assert_eq!(read_codes(&buf[..]).unwrap(), codes);
    }

    #[test]
    fn rejects_corruption() {
        assert!(read_vectors(&b"DPQX"[..]).is_err());
        let codes = CodeSet::from_flat(2, 16, vec![1, 2]).unwrap();
        let mut buf = Vec::new();
        write_codes(&mut buf, &codes).unwrap();
        buf.push(0);
        assert!(matches!(read_codes(&buf[..]), Err(DpqError::Format { .. })));
        buf.truncate(buf.len() - 2);
        assert!(matches!(read_codes(&buf[..]), Err(DpqError::Format { .. })));
    }
}

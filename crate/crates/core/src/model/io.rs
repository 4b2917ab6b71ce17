//! `DPQM` model files.
//!
//! Layout (little-endian): magic, format version (u32), config block
//! `M K D L hidden C front_dim flags` as u32 (`front_dim` 0 means no front
//! layer, flag bit 0 marks an intra-normalized model), the five loss weights
//! as f32, then every parameter tensor in declaration order as
//! `rank (u32), dims (u32 each), values (f32)`.
//!
//! The schedule and seed are training-time settings and are not stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Dense, DpqModel, Params, SliceMlp};
use crate::codec::format::{put_reals, put_u32, LeReader};
use crate::codec::Codebook;
use crate::config::{LossWeights, QuantizerConfig};
use crate::error::Result;

pub const MODEL_MAGIC: &[u8; 4] = b"DPQM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const FLAG_INTRA_NORMALIZED: u32 = 1;

pub fn write_model<W: Write>(w: &mut W, model: &DpqModel) -> Result<()> {
    let c = model.config();
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    for v in [
        c.num_partitions,
        c.num_clusters,
        c.centroid_dim,
        c.input_dim,
        c.hidden_dim,
        c.num_classes,
        c.front_dim.unwrap_or(0),
    ] {
        put_u32(w, v)?;
    }
    let flags = if model.is_intra_normalized() { FLAG_INTRA_NORMALIZED } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    put_reals(w, c.weights.as_array().iter())?;
    for t in model.params().tensors() {
        put_u32(w, t.ndim())?;
        for &d in t.shape() {
            put_u32(w, d)?;
        }
        put_reals(w, t.iter())?;
    }
    Ok(())
}

fn read_dense<R: Read>(r: &mut LeReader<R>, inputs: usize, outputs: usize) -> Result<Dense> {
    Ok(Dense {
        weight: read_matrix(r, inputs, outputs)?,
        bias: read_vector(r, outputs)?,
    })
}

fn read_dims<R: Read>(r: &mut LeReader<R>, expected: &[usize]) -> Result<()> {
    let rank = r.usize()?;
    if rank != expected.len() {
        return Err(r.malformed(format!("tensor rank {rank}, expected {}", expected.len())));
    }
    for &want in expected {
        let got = r.usize()?;
        if got != want {
            return Err(r.malformed(format!("tensor dimension {got}, expected {want}")));
        }
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut LeReader<R>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    read_dims(r, &[rows, cols])?;
    let vals = r.reals(rows * cols)?;
    Ok(Array2::from_shape_vec((rows, cols), vals).expect("length matches shape"))
}

fn read_vector<R: Read>(r: &mut LeReader<R>, len: usize) -> Result<Array1<f64>> {
    read_dims(r, &[len])?;
    Ok(Array1::from(r.reals(len)?))
}

pub fn read_model<R: Read>(r: R) -> Result<DpqModel> {
    let mut r = LeReader::new(r, "DPQM");
    r.magic(MODEL_MAGIC)?;
    let version = r.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(r.malformed(format!("unsupported version {version}")));
    }
    let mut head = [0usize; 7];
    for v in &mut head {
        *v = r.usize()?;
    }
    let [m, k, d, l, hidden, classes, front] = head;
    let flags = r.u32()?;
    if flags & !FLAG_INTRA_NORMALIZED != 0 {
        return Err(r.malformed(format!("unknown flags {flags:#x}")));
    }
    let w = r.reals(5)?;
    let mut config = QuantizerConfig::new(l, m, k, classes);
    config.centroid_dim = d;
    config.hidden_dim = hidden;
    config.front_dim = (front > 0).then_some(front);
    config.weights = LossWeights::from_array([w[0], w[1], w[2], w[3], w[4]]);
    config.validate().map_err(|e| r.malformed(e.to_string()))?;

    let front = match config.front_dim {
        Some(width) => Some(read_dense(&mut r, l, width)?),
        None => None,
    };
    let width = config.slice_width();
    let mut slices = Vec::with_capacity(m);
    for _ in 0..m {
        slices.push(SliceMlp {
            hidden: read_dense(&mut r, width, hidden)?,
            output: read_dense(&mut r, hidden, k)?,
        });
    }
    let mut parts = Vec::with_capacity(m);
    for _ in 0..m {
        parts.push(read_matrix(&mut r, k, d)?);
    }
    let v = config.representation_dim();
    let classifier = read_dense(&mut r, v, classes)?;
    let centers = read_matrix(&mut r, classes, v)?;
    r.finish()?;

    let params = Params {
        front,
        slices,
        codebook: Codebook::new(parts)?,
        classifier,
        centers,
    };
    DpqModel::from_params(config, params, flags & FLAG_INTRA_NORMALIZED != 0)
}

pub fn save_model(path: impl AsRef<Path>, model: &DpqModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DpqModel> {
    read_model(BufReader::new(File::open(path.as_ref())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(front: Option<usize>) -> DpqModel {
        let mut c = QuantizerConfig::new(12, 3, 8, 4);
        c.hidden_dim = 5;
        c.centroid_dim = 2;
        c.front_dim = front;
        c.seed = 9;
        DpqModel::random(&c).unwrap()
    }

    fn to_f32(m: &DpqModel) -> DpqModel {
        let mut out = m.clone();
        for t in out.params_mut().tensors_mut() {
            let mut t = t;
            t.mapv_inplace(|v| v as f32 as f64);
        }
        out
    }

    #[test]
    fn round_trip_at_f32_precision() {
        for front in [None, Some(9)] {
            let m = model(front).intra_normalize().unwrap();
            let mut buf = Vec::new();
            write_model(&mut buf, &m).unwrap();
            let back = read_model(&buf[..]).unwrap();
            assert_eq!(back.params(), to_f32(&m).params());
            assert!(back.is_intra_normalized());
            assert_eq!(back.config().front_dim, front);
            let mut again = Vec::new();
            write_model(&mut again, &back).unwrap();
            assert_eq!(buf, again);
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_model(&mut buf, &model(None)).unwrap();
        assert_eq!(&buf[..4], b"DPQM");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        let ints: Vec<u32> = buf[8..40]
            .chunks(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(ints, vec![3, 8, 2, 12, 5, 4, 0, 0]);
        assert_eq!(&buf[40..44], &1.0f32.to_le_bytes());
        // first tensor: slice[0].hidden.weight, rank 2, dims 4 x 5
        assert_eq!(&buf[60..64], &2u32.to_le_bytes());
        assert_eq!(&buf[64..68], &4u32.to_le_bytes());
        assert_eq!(&buf[68..72], &5u32.to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_model(&mut buf, &model(None)).unwrap();
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(read_model(&bad[..]).is_err());
        assert!(read_model(&buf[..buf.len() - 1]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_model(&long[..]).is_err());
        let mut dims = buf.clone();
        dims[64] = 7;
        assert!(read_model(&dims[..]).is_err());
    }
}

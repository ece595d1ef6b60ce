//! Binary model and dataset files, little-endian throughout.
//!
//! Model: magic `CNN1`, u32 layer count, then per layer u32 s_out, u32 s_in
//! followed by the four real tensors (w_re, w_im row-major, b_re, b_im) as
//! f64. The head kind is supplied by the loader; the file stores layers only.
//!
//! Dataset: magic `DSET`, u32 n_samples, u32 s_inp, u32 n_out, then per
//! sample the complex input (interleaved re/im) followed by n_out f64 labels.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

use super::layer::{ComplexBatch, ComplexLinearLayer};
use super::network::{ComplexNetwork, Head, NetworkSpec};
use super::train::Dataset;

const MODEL_MAGIC: &[u8; 4] = b"CNN1";
const DATASET_MAGIC: &[u8; 4] = b"DSET";

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    w.write_all(&(v as u32).to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf) as usize)
}

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn save_model<W: Write>(w: &mut W, net: &ComplexNetwork) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    write_u32(w, net.layers.len())?;
    for layer in &net.layers {
        write_u32(w, layer.s_out())?;
        write_u32(w, layer.s_in())?;
        // row-major weight planes
        for r in 0..layer.s_out() {
            write_f64s(w, (0..layer.s_in()).map(|c| layer.w_re[(r, c)]))?;
        }
        for r in 0..layer.s_out() {
            write_f64s(w, (0..layer.s_in()).map(|c| layer.w_im[(r, c)]))?;
        }
        write_f64s(w, layer.b_re.iter().copied())?;
        write_f64s(w, layer.b_im.iter().copied())?;
    }
    Ok(())
}

/// Load a model, attaching the head the caller expects. The final layer
/// width must match the head's output count.
pub fn load_model<R: Read>(r: &mut R, head: Head) -> Result<ComplexNetwork> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(CoreError::BadFormat("missing CNN1 magic".into()));
    }
    let layer_count = read_u32(r)?;
    if layer_count != 4 {
        return Err(CoreError::BadFormat(format!(
            "expected 4 layers, file has {layer_count}"
        )));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let s_out = read_u32(r)?;
        let s_in = read_u32(r)?;
        let mut read_matrix = |rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(rows, cols);
            for r_i in 0..rows {
                for c_i in 0..cols {
                    m[(r_i, c_i)] = read_f64(r)?;
                }
            }
            Ok(m)
        };
        let w_re = read_matrix(s_out, s_in)?;
        let w_im = read_matrix(s_out, s_in)?;
        let mut b_re = DVector::zeros(s_out);
        let mut b_im = DVector::zeros(s_out);
        for i in 0..s_out {
            b_re[i] = read_f64(r)?;
        }
        for i in 0..s_out {
            b_im[i] = read_f64(r)?;
        }
        layers.push(ComplexLinearLayer {
            w_re,
            w_im,
            b_re,
            b_im,
        });
    }
    let input_size = layers[0].s_in();
    let hidden = [layers[0].s_out(), layers[1].s_out(), layers[2].s_out()];
    let n_out = layers[3].s_out();
    if head.n_out() != n_out {
        return Err(CoreError::BadFormat(format!(
            "file output width {n_out} does not match requested head ({})",
            head.n_out()
        )));
    }
    Ok(ComplexNetwork {
        spec: NetworkSpec {
            input_size,
            hidden,
            head,
        },
        layers,
    })
}

pub fn save_dataset<W: Write>(w: &mut W, data: &Dataset) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    write_u32(w, data.len())?;
    write_u32(w, data.s_inp())?;
    write_u32(w, data.label_dim())?;
    for j in 0..data.len() {
        for i in 0..data.s_inp() {
            w.write_all(&data.inputs.re[(i, j)].to_le_bytes())?;
            w.write_all(&data.inputs.im[(i, j)].to_le_bytes())?;
        }
        for i in 0..data.label_dim() {
            w.write_all(&data.labels[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(CoreError::BadFormat("missing DSET magic".into()));
    }
    let n_samples = read_u32(r)?;
    let s_inp = read_u32(r)?;
    let n_out = read_u32(r)?;
    let mut inputs = ComplexBatch::zeros(s_inp, n_samples);
    let mut labels = DMatrix::zeros(n_out, n_samples);
    for j in 0..n_samples {
        for i in 0..s_inp {
            inputs.re[(i, j)] = read_f64(r)?;
            inputs.im[(i, j)] = read_f64(r)?;
        }
        for i in 0..n_out {
            labels[(i, j)] = read_f64(r)?;
        }
    }
    Ok(Dataset { inputs, labels })
}

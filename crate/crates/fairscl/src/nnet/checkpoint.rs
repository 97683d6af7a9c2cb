//! Binary model checkpoints.
//!
//! A checkpoint is the complete [`ModelState`] — weights, biases, and the
//! optimizer's moment estimates — in a fixed little-endian layout:
//!
//! ```text
//! magic            8 bytes, "FSCLNN01"
//! feature_dim      u32
//! encoder layers   u32, then per layer: out u32, in u32,
//!                  weights (out·in f64, row-major), biases (out f64)
//! contrastive head out u32, in u32, weights, biases
//! prediction head  out u32, in u32, weights, biases
//! group flag       u8 (0 or 1), then the group head if 1
//! optimizer step   u64
//! moment slots     per layer in the same order: m(w), v(w), m(b), v(b)
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a load returns exactly the
//! bytes that were saved and resumed training continues bit-for-bit.
//! Structural problems (bad magic, truncation, inconsistent layer dims,
//! non-finite values) are data errors; only genuine filesystem failures
//! surface as I/O errors.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{AdamSlot, AdamState, DenseLayer, ModelState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FSCLNN01";

/// Any dimension above this is a corrupt header, not a big model.
const MAX_DIM: u32 = 1 << 20;

pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, model.feature_dim as u32)?;
    write_u32(&mut w, model.encoder.len() as u32)?;
    for layer in &model.encoder {
        write_layer(&mut w, layer)?;
    }
    write_layer(&mut w, &model.contrastive_head)?;
    write_layer(&mut w, &model.prediction_head)?;
    match &model.group_head {
        Some(layer) => {
            w.write_all(&[1])?;
            write_layer(&mut w, layer)?;
        }
        None => w.write_all(&[0])?,
    }
    w.write_all(&model.adam.step.to_le_bytes())?;
    for slot in &model.adam.encoder {
        write_slot(&mut w, slot)?;
    }
    write_slot(&mut w, &model.adam.contrastive)?;
    write_slot(&mut w, &model.adam.prediction)?;
    if let Some(slot) = &model.adam.group {
        write_slot(&mut w, slot)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "not a model checkpoint: bad magic {:02x?}",
            magic
        )));
    }
    let feature_dim = read_dim(&mut r)? as usize;
    let n_layers = read_dim(&mut r)? as usize;

    let mut encoder = Vec::with_capacity(n_layers);
    let mut prev = feature_dim;
    for l in 0..n_layers {
        let layer = read_layer(&mut r)?;
        if layer.w.ncols() != prev {
            return Err(Error::Data(format!(
                "encoder layer {l} expects {} inputs but the previous width is {prev}",
                layer.w.ncols()
            )));
        }
        prev = layer.w.nrows();
        encoder.push(layer);
    }
    let contrastive_head = read_head(&mut r, prev, "contrastive head")?;
    let prediction_head = read_head(&mut r, prev, "prediction head")?;
    if prediction_head.w.nrows() != 1 {
        return Err(Error::Data(format!(
            "prediction head must have one output, found {}",
            prediction_head.w.nrows()
        )));
    }
    let mut flag = [0u8; 1];
    read_exact(&mut r, &mut flag)?;
    let group_head = match flag[0] {
        0 => None,
        1 => Some(read_head(&mut r, prev, "group head")?),
        other => {
            return Err(Error::Data(format!(
                "group-head flag must be 0 or 1, found {other}"
            )))
        }
    };

    let mut step_bytes = [0u8; 8];
    read_exact(&mut r, &mut step_bytes)?;
    let step = u64::from_le_bytes(step_bytes);

    let mut slots = Vec::with_capacity(encoder.len());
    for layer in &encoder {
        slots.push(read_slot(&mut r, layer)?);
    }
    let contrastive_slot = read_slot(&mut r, &contrastive_head)?;
    let prediction_slot = read_slot(&mut r, &prediction_head)?;
    let group_slot = match &group_head {
        Some(layer) => Some(read_slot(&mut r, layer)?),
        None => None,
    };

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Data("trailing bytes after checkpoint".into()));
    }

    Ok(ModelState {
        feature_dim,
        encoder,
        contrastive_head,
        prediction_head,
        group_head,
        adam: AdamState {
            encoder: slots,
            contrastive: contrastive_slot,
            prediction: prediction_slot,
            group: group_slot,
            step,
        },
    })
}

fn write_u32(w: &mut impl IoWrite, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64s<'a>(w: &mut impl IoWrite, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_layer(w: &mut impl IoWrite, layer: &DenseLayer) -> Result<()> {
    write_u32(w, layer.w.nrows() as u32)?;
    write_u32(w, layer.w.ncols() as u32)?;
    write_f64s(w, layer.w.iter())?;
    write_f64s(w, layer.b.iter())
}

fn write_slot(w: &mut impl IoWrite, slot: &AdamSlot) -> Result<()> {
    write_f64s(w, slot.mw.iter())?;
    write_f64s(w, slot.vw.iter())?;
    write_f64s(w, slot.mb.iter())?;
    write_f64s(w, slot.vb.iter())
}

/// `read_exact` with truncation reported as corrupt data rather than I/O.
fn read_exact(r: &mut impl IoRead, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Data("checkpoint truncated".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_dim(r: &mut impl IoRead) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    let v = u32::from_le_bytes(buf);
    if v == 0 || v > MAX_DIM {
        return Err(Error::Data(format!(
            "dimension {v} out of range (1..={MAX_DIM})"
        )));
    }
    Ok(v)
}

fn read_f64s(r: &mut impl IoRead, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    read_exact(r, &mut buf)?;
    let values: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite value {bad} in checkpoint"
        )));
    }
    Ok(values)
}

fn read_layer(r: &mut impl IoRead) -> Result<DenseLayer> {
    let out = read_dim(r)? as usize;
    let inp = read_dim(r)? as usize;
    let w = read_f64s(r, out * inp)?;
    let b = read_f64s(r, out)?;
    Ok(DenseLayer {
        w: Array2::from_shape_vec((out, inp), w).expect("shape matches length"),
        b: Array1::from_vec(b),
    })
}

fn read_head(r: &mut impl IoRead, expected_in: usize, what: &str) -> Result<DenseLayer> {
    let layer = read_layer(r)?;
    if layer.w.ncols() != expected_in {
        return Err(Error::Data(format!(
            "{what} expects {} inputs but the encoder emits {expected_in}",
            layer.w.ncols()
        )));
    }
    Ok(layer)
}

fn read_slot(r: &mut impl IoRead, layer: &DenseLayer) -> Result<AdamSlot> {
    let (out, inp) = (layer.w.nrows(), layer.w.ncols());
    let mw = read_f64s(r, out * inp)?;
    let vw = read_f64s(r, out * inp)?;
    let mb = read_f64s(r, out)?;
    let vb = read_f64s(r, out)?;
    Ok(AdamSlot {
        mw: Array2::from_shape_vec((out, inp), mw).expect("shape matches length"),
        vw: Array2::from_shape_vec((out, inp), vw).expect("shape matches length"),
        mb: Array1::from_vec(mb),
        vb: Array1::from_vec(vb),
    })
}

//! Model container.
//!
//! ```text
//! magic "OSTLMODL" | version u32
//! input_len u32 | input_channels u32 | n_layers u32
//! per layer: kind u8 | a u32 | b u32 | padding u8 | activation u8
//!   conv: a = filters, b = kernel; pool: a = pool size; dense: a = units
//! n_params u64
//! has_meta u8 [| n_sites u32 | grid_len u32 | maxima 3 x f64 | times]
//! provenance [u8; 32]
//! parameters n_params x f64, layer by layer, weights then biases
//! sha256 of everything above
//! ```

use std::path::Path;

use super::layers::{Activation, LayerSpec, Padding};
use super::model::{Architecture, Model, OutputMeta};
use crate::codec::{read_file, write_file, Provenance, Reader, Writer};
use crate::dataset::Normalizer;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"OSTLMODL";
pub const MODEL_VERSION: u32 = 1;

fn act_tag(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Linear => 1,
    }
}

fn act_from(tag: u8) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Linear),
        _ => Err(Error::Format(format!("bad activation tag {tag}"))),
    }
}

fn pad_from(tag: u8) -> Result<Padding> {
    match tag {
        0 => Ok(Padding::Valid),
        1 => Ok(Padding::Same),
        _ => Err(Error::Format(format!("bad padding tag {tag}"))),
    }
}

pub fn encode_model(model: &Model, provenance: &Provenance) -> Result<Vec<u8>> {
    let params = model.params()?;
    let mut w = Writer::with_magic(MODEL_MAGIC, MODEL_VERSION);
    w.u32(model.arch.input_len as u32);
    w.u32(model.arch.input_channels as u32);
    w.u32(model.arch.layers.len() as u32);
    for spec in &model.arch.layers {
        let (kind, a, b, pad, act) = match *spec {
            LayerSpec::Conv1d {
                filters,
                kernel_size,
                padding,
                activation,
            } => (0u8, filters, kernel_size, padding as u8, act_tag(activation)),
            LayerSpec::MaxPool1d { pool_size } => (1, pool_size, 0, 0, 0),
            LayerSpec::Flatten => (2, 0, 0, 0, 0),
            LayerSpec::Dense { units, activation } => (3, units, 0, 0, act_tag(activation)),
        };
        w.u8(kind);
        w.u32(a as u32);
        w.u32(b as u32);
        w.u8(pad);
        w.u8(act);
    }
    w.u64(params.len() as u64);
    match &model.meta {
        Some(meta) => {
            w.u8(1);
            w.u32(meta.n_sites as u32);
            w.u32(meta.times.len() as u32);
            w.f64s(&meta.normalizer.maxima);
            w.f64s(&meta.times);
        }
        None => w.u8(0),
    }
    w.bytes(provenance);
    w.f64s(params);
    Ok(w.finish())
}

pub fn decode_model(bytes: &[u8]) -> Result<(Model, Provenance)> {
    let mut r = Reader::open(bytes, MODEL_MAGIC, MODEL_VERSION)?;
    let input_len = r.u32()? as usize;
    let input_channels = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let kind = r.u8()?;
        let a = r.u32()? as usize;
        let b = r.u32()? as usize;
        let pad = r.u8()?;
        let act = r.u8()?;
        layers.push(match kind {
            0 => LayerSpec::Conv1d {
                filters: a,
                kernel_size: b,
                padding: pad_from(pad)?,
                activation: act_from(act)?,
            },
            1 => LayerSpec::MaxPool1d { pool_size: a },
            2 => LayerSpec::Flatten,
            3 => LayerSpec::Dense {
                units: a,
                activation: act_from(act)?,
            },
            _ => return Err(Error::Format(format!("bad layer kind {kind}"))),
        });
    }
    let mut model = Model::new(Architecture {
        input_len,
        input_channels,
        layers,
    })?;
    let n_params = r.u64()? as usize;
    if n_params != model.n_params() {
        return Err(Error::Format(format!(
            "header records {n_params} parameters, architecture has {}",
            model.n_params()
        )));
    }
    if r.u8()? == 1 {
        let n_sites = r.u32()? as usize;
        let grid_len = r.u32()? as usize;
        let m = r.f64s(3)?;
        let times = r.f64s(grid_len)?;
        model.meta = Some(OutputMeta {
            n_sites,
            times,
            normalizer: Normalizer::new([m[0], m[1], m[2]])?,
        });
    }
    let provenance = r.digest()?;
    model.set_params(r.f64s(n_params)?)?;
    r.expect_end()?;
    Ok((model, provenance))
}

pub fn save_model(model: &Model, provenance: &Provenance, path: &Path) -> Result<()> {
    write_file(path, &encode_model(model, provenance)?)
}

pub fn load_model(path: &Path) -> Result<(Model, Provenance)> {
    decode_model(&read_file(path)?)
}

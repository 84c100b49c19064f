//! Dataset container.
//!
//! ```text
//! magic "OSTLDSET" | version u32
//! n_sites u32 | grid_len u32 | feature_len u32 (= 4) | target_len u64 | n_records u64
//! provenance [u8; 32]
//! normalization maxima: 3 x f64 | times: grid_len x f64
//! per record: raw point 4 x f64 | normalized input 4 x f64 | target target_len x f64 | split u8
//! sha256 of everything above
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use super::{target_len, Dataset, FlatTrajectory, NormalizedInput, Normalizer, Split};
use crate::codec::{read_file, write_file, Provenance, Reader, Writer};
use crate::error::{Error, Result};
use crate::ltlme::io::{read_point, write_point};

pub const DATASET_MAGIC: &[u8; 8] = b"OSTLDSET";
pub const DATASET_VERSION: u32 = 1;
const FEATURE_LEN: u32 = 4;

pub fn encode_dataset(ds: &Dataset, provenance: &Provenance) -> Vec<u8> {
    let mut w = Writer::with_magic(DATASET_MAGIC, DATASET_VERSION);
    w.u32(ds.n_sites as u32);
    w.u32(ds.times.len() as u32);
    w.u32(FEATURE_LEN);
    w.u64(ds.target_len() as u64);
    w.u64(ds.len() as u64);
    w.bytes(provenance);
    w.f64s(&ds.normalizer.maxima);
    w.f64s(&ds.times);
    for i in 0..ds.len() {
        write_point(&mut w, &ds.points[i]);
        w.f64s(&ds.inputs[i].0);
        w.f64s(&ds.targets[i].values);
        w.u8(ds.split[i] as u8);
    }
    w.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(Dataset, Provenance)> {
    let mut r = Reader::open(bytes, DATASET_MAGIC, DATASET_VERSION)?;
    let n_sites = r.u32()? as usize;
    let grid_len = r.u32()? as usize;
    let features = r.u32()?;
    if features != FEATURE_LEN {
        return Err(Error::Format(format!("feature length {features}, expected 4")));
    }
    let tlen = r.u64()? as usize;
    if n_sites < 2 || tlen != target_len(n_sites, grid_len) {
        return Err(Error::Format(format!(
            "target length {tlen} inconsistent with {n_sites} sites x {grid_len} steps"
        )));
    }
    let n_records = r.u64()? as usize;
    let provenance = r.digest()?;
    let maxima = r.f64s(3)?;
    let normalizer = Normalizer::new([maxima[0], maxima[1], maxima[2]])?;
    let times = r.f64s(grid_len)?;
    let mut ds = Dataset {
        n_sites,
        times,
        normalizer,
        points: Vec::new(),
        inputs: Vec::new(),
        targets: Vec::new(),
        split: Vec::new(),
    };
    for _ in 0..n_records {
        ds.points.push(read_point(&mut r)?);
        let x = r.f64s(4)?;
        ds.inputs.push(NormalizedInput([x[0], x[1], x[2], x[3]]));
        ds.targets.push(FlatTrajectory { values: r.f64s(tlen)? });
        ds.split.push(Split::from_tag(r.u8()?)?);
    }
    r.expect_end()?;
    Ok((ds, provenance))
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset, provenance: &Provenance) -> Result<()> {
    write_file(path.as_ref(), &encode_dataset(ds, provenance))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<(Dataset, Provenance)> {
    decode_dataset(&read_file(path.as_ref())?)
}

//! Trajectory container and CSV export.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic "OSTLTRAJ" | version u32 | n_sites u32 | grid_len u32 | provenance [u8; 32]
//! point: j, lambda, gamma, T as 4 x f64
//! times: grid_len x f64 (fs)
//! states: grid_len x n_sites x n_sites x (re f64, im f64), row-major
//! sha256 of everything above
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::{DensityMatrix, TimeGrid, Trajectory, C64};
use crate::codec::{read_file, write_file, Provenance, Reader, Writer};
use crate::error::{Error, Result};
use crate::exciton::SimulationPoint;

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"OSTLTRAJ";
pub const TRAJECTORY_VERSION: u32 = 1;

pub(crate) fn write_point(w: &mut Writer, p: &SimulationPoint) {
    w.f64s(&[f64::from(p.j), p.lambda, p.gamma, p.temperature]);
}

pub(crate) fn read_point(r: &mut Reader<'_>) -> Result<SimulationPoint> {
    let v = r.f64s(4)?;
    if v[0] != 0.0 && v[0] != 1.0 {
        return Err(Error::Format(format!("bad site label {}", v[0])));
    }
    SimulationPoint::new(v[0] as u8, v[1], v[2], v[3])
}

pub fn encode_trajectory(traj: &Trajectory, provenance: &Provenance) -> Vec<u8> {
    let n = traj.n_sites();
    let mut w = Writer::with_magic(TRAJECTORY_MAGIC, TRAJECTORY_VERSION);
    w.u32(n as u32);
    w.u32(traj.grid.len() as u32);
    w.bytes(provenance);
    write_point(&mut w, &traj.point);
    w.f64s(&traj.grid.times);
    for s in &traj.states {
        for i in 0..n {
            for k in 0..n {
                let z = s.0[(i, k)];
                w.f64(z.re);
                w.f64(z.im);
            }
        }
    }
    w.finish()
}

/// Decodes a trajectory and the provenance digest stored with it.
pub fn decode_trajectory(bytes: &[u8]) -> Result<(Trajectory, Provenance)> {
    let mut r = Reader::open(bytes, TRAJECTORY_MAGIC, TRAJECTORY_VERSION)?;
    let n = r.u32()? as usize;
    let len = r.u32()? as usize;
    let provenance = r.digest()?;
    let point = read_point(&mut r)?;
    let grid = TimeGrid::new(r.f64s(len)?)?;
    let mut states = Vec::with_capacity(len);
    for _ in 0..len {
        let raw = r.f64s(2 * n * n)?;
        let m = DMatrix::from_row_iterator(
            n,
            n,
            raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])),
        );
        states.push(DensityMatrix(m));
    }
    r.expect_end()?;
    Ok((
        Trajectory {
            point,
            grid,
            states,
        },
        provenance,
    ))
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory, provenance: &Provenance) -> Result<()> {
    write_file(path.as_ref(), &encode_trajectory(traj, provenance))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<(Trajectory, Provenance)> {
    decode_trajectory(&read_file(path.as_ref())?)
}

/// Column names of the CSV export: `t_fs`, then the upper triangle in
/// flattening order (`rho_ii` for diagonals, `re_rho_ik` / `im_rho_ik`
/// for off-diagonals, 1-based site indices).
pub fn csv_header(n: usize) -> Vec<String> {
    let mut cols = vec!["t_fs".to_string()];
    for i in 0..n {
        for k in i..n {
            if i == k {
                cols.push(format!("rho_{}{}", i + 1, k + 1));
            } else {
                cols.push(format!("re_rho_{}{}", i + 1, k + 1));
                cols.push(format!("im_rho_{}{}", i + 1, k + 1));
            }
        }
    }
    cols
}

/// One row per sampled time.
pub fn trajectory_csv(times: &[f64], states: &[DensityMatrix]) -> String {
    let n = states.first().map_or(0, DensityMatrix::n_sites);
    let mut out = csv_header(n).join(",");
    out.push('\n');
    for (t, s) in times.iter().zip(states) {
        let _ = write!(out, "{t:?}");
        for i in 0..n {
            for k in i..n {
                let z = s.0[(i, k)];
                if i == k {
                    let _ = write!(out, ",{:?}", z.re);
                } else {
                    let _ = write!(out, ",{:?},{:?}", z.re, z.im);
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory_csv(path: impl AsRef<Path>, times: &[f64], states: &[DensityMatrix]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, trajectory_csv(times, states)).map_err(|e| Error::io(path, e))
}

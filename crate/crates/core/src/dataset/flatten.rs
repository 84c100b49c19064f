use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ltlme::{DensityMatrix, Trajectory, C64};

/// Values per time step: `n` diagonals plus real and imaginary parts of the
/// `n (n - 1) / 2` upper off-diagonals, i.e. `n^2`.
pub fn values_per_step(n_sites: usize) -> usize {
    n_sites + n_sites * (n_sites - 1)
}

/// Target length for `n_sites` over `grid_len` time steps.
pub fn target_len(n_sites: usize, grid_len: usize) -> usize {
    grid_len * values_per_step(n_sites)
}

/// One supervised label: `[Y(t0), Y(t1), ...]` with
/// `Y = [rho_11, Re rho_12, Im rho_12, ..., Re rho_1n, Im rho_1n, rho_22, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatTrajectory {
    pub values: Vec<f64>,
}

impl FlatTrajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn push_state(out: &mut Vec<f64>, rho: &DMatrix<C64>) {
    let n = rho.nrows();
    for i in 0..n {
        out.push(rho[(i, i)].re);
        for k in (i + 1)..n {
            let z = rho[(i, k)];
            out.push(z.re);
            out.push(z.im);
        }
    }
}

pub fn flatten(traj: &Trajectory) -> FlatTrajectory {
    let n = traj.n_sites();
    let mut values = Vec::with_capacity(target_len(n, traj.states.len()));
    for s in &traj.states {
        push_state(&mut values, &s.0);
    }
    FlatTrajectory { values }
}

/// Rebuilds Hermitian matrices from a flat vector, completing the lower
/// triangle as `rho[k][i] = conj(rho[i][k])`.
pub fn unflatten(values: &[f64], n_sites: usize, grid_len: usize) -> Result<Vec<DensityMatrix>> {
    let per = values_per_step(n_sites);
    if values.len() != per * grid_len {
        return Err(Error::Shape(format!(
            "flat trajectory has {} values, expected {} ({} steps x {})",
            values.len(),
            per * grid_len,
            grid_len,
            per
        )));
    }
    let mut out = Vec::with_capacity(grid_len);
    for chunk in values.chunks_exact(per) {
        let mut m = DMatrix::zeros(n_sites, n_sites);
        let mut it = chunk.iter().copied();
        for i in 0..n_sites {
            m[(i, i)] = C64::new(it.next().unwrap(), 0.0);
            for k in (i + 1)..n_sites {
                let z = C64::new(it.next().unwrap(), it.next().unwrap());
                m[(i, k)] = z;
                m[(k, i)] = z.conj();
            }
        }
        out.push(DensityMatrix(m));
    }
    Ok(out)
}

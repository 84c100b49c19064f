//! Local thermalising Lindblad master equation (LTLME) reference dynamics.
//!
//! The site Hamiltonian is diagonalized; population transfer between exciton
//! eigenstates uses Drude-Lorentz rates with Bose factors, and each exciton
//! state carries a zero-frequency pure-dephasing channel. The generator is a
//! time-independent superoperator, so trajectories are sampled by repeatedly
//! applying `exp(L dt)` for the (few) distinct step sizes of the time grid.

mod generator;
pub mod io;
mod propagate;

pub use generator::{
    bose_occupation, build_generator, spectral_density, LindbladGenerator, RATE_PREFACTOR,
};
pub use propagate::{gibbs_state, initial_state, propagate, propagate_with};

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::exciton::SimulationPoint;

pub type C64 = Complex<f64>;

/// Reduced density matrix in the site basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub DMatrix<C64>);

impl DensityMatrix {
    /// Pure state `|s><s|`.
    pub fn pure_site(n: usize, site: usize) -> Self {
        let mut m = DMatrix::zeros(n, n);
        m[(site, site)] = C64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    pub fn n_sites(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `max |rho - rho^dagger|` over all entries.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.n_sites();
        let mut worst = 0.0f64;
        for i in 0..n {
            for k in i..n {
                worst = worst.max((self.0[(i, k)] - self.0[(k, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|i| self.0[(i, i)].re).collect()
    }
}

/// Sample times in fs.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub times: Vec<f64>,
}

/// Fine sampling interval for the first 2.5 ps, fs.
pub const FINE_STEP_FS: f64 = 5.0;
/// End of the fine segment, fs.
pub const FINE_END_FS: f64 = 2500.0;
/// Coarse sampling interval after the fine segment, fs.
pub const COARSE_STEP_FS: f64 = 25.0;
/// End of the sampled window, fs.
pub const END_FS: f64 = 10_000.0;

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        let grid = TimeGrid { times };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.first() != Some(&0.0) {
            return Err(Error::Invalid("time grid must start at 0 fs".into()));
        }
        if self.times.iter().any(|t| !t.is_finite()) || self.times.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Invalid("time grid must be strictly increasing".into()));
        }
        Ok(())
    }

    /// 0..=2500 fs every 5 fs, then 2525..=10000 fs every 25 fs: 801 points.
    pub fn paper() -> Self {
        Self::paper_until(END_FS)
    }

    /// The dual-rate grid cut at `t_max_fs` (inclusive). `paper_until(1000.0)`
    /// is the 201-point, 1 ps grid.
    pub fn paper_until(t_max_fs: f64) -> Self {
        let fine = (0..)
            .map(|i| i as f64 * FINE_STEP_FS)
            .take_while(|&t| t <= FINE_END_FS && t <= t_max_fs);
        let coarse = (1..)
            .map(|i| FINE_END_FS + i as f64 * COARSE_STEP_FS)
            .take_while(|&t| t <= END_FS && t <= t_max_fs);
        TimeGrid {
            times: fine.chain(coarse).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Convenience alias for [`TimeGrid::paper`].
pub fn paper_time_grid() -> TimeGrid {
    TimeGrid::paper()
}

/// A sampled reduced-density-matrix trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub point: SimulationPoint,
    pub grid: TimeGrid,
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn n_sites(&self) -> usize {
        self.states.first().map_or(0, DensityMatrix::n_sites)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_grid_layout() {
        let g = paper_time_grid();
        assert_eq!(g.len(), 801);
        assert_eq!(g.times[0], 0.0);
        assert_eq!(g.times[500], 2500.0);
        assert_eq!(g.times[501], 2525.0);
        assert_eq!(g.times[800], 10_000.0);
        assert_eq!(501 + 300, g.len());
        assert!(g.validate().is_ok());
    }

    #[test]
    fn truncated_grid() {
        let g = TimeGrid::paper_until(1000.0);
        assert_eq!(g.len(), 201);
        assert_eq!(*g.times.last().unwrap(), 1000.0);
        assert_eq!(TimeGrid::paper_until(2550.0).len(), 503);
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 5.0, 5.0]).is_err());
        assert!(TimeGrid::new(vec![1.0, 5.0]).is_err());
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.0]).is_ok());
    }

    #[test]
    fn density_matrix_diagnostics() {
        let rho = DensityMatrix::pure_site(3, 1);
        assert_eq!(rho.trace(), C64::new(1.0, 0.0));
        assert_eq!(rho.hermiticity_residual(), 0.0);
        assert!(rho.min_eigenvalue().abs() < 1e-14);
        assert_eq!(rho.populations(), vec![0.0, 1.0, 0.0]);
    }
}

//! Supervised dataset: one example per trajectory.
//!
//! The input is `[j, lambda/lambda_max, gamma/gamma_max, T/T_max]`; the target
//! is the whole trajectory flattened time-major, each time step contributing
//! the upper triangle of the density matrix with off-diagonals split into
//! real and imaginary parts.

mod flatten;
mod fps;
pub mod io;

pub use flatten::{flatten, target_len, unflatten, values_per_step, FlatTrajectory};
pub use fps::{centroid_seed, farthest_point_sampling, fps_with_distances};

use crate::error::{Error, Result};
use crate::exciton::{ParameterGrid, SimulationPoint};
use crate::ltlme::Trajectory;

/// Network input for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedInput(pub [f64; 4]);

impl NormalizedInput {
    pub fn site_label(&self) -> f64 {
        self.0[0]
    }

    /// `(lambda, gamma, T)` normalized coordinates.
    pub fn coords(&self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }
}

/// Divides lambda, gamma and T by fixed maxima. Only [`SimulationPoint`]s are
/// accepted, so an already-normalized input cannot be normalized again.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub maxima: [f64; 3],
}

impl Normalizer {
    pub fn new(maxima: [f64; 3]) -> Result<Self> {
        if maxima.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::Invalid(format!("normalization maxima must be positive: {maxima:?}")));
        }
        Ok(Normalizer { maxima })
    }

    pub fn from_grid(grid: &ParameterGrid) -> Self {
        Normalizer {
            maxima: grid.maxima(),
        }
    }

    pub fn normalize(&self, p: &SimulationPoint) -> NormalizedInput {
        NormalizedInput([
            f64::from(p.j),
            p.lambda / self.maxima[0],
            p.gamma / self.maxima[1],
            p.temperature / self.maxima[2],
        ])
    }

    /// True when the point lies beyond the maxima used for training.
    pub fn extrapolates(&self, p: &SimulationPoint) -> bool {
        p.lambda > self.maxima[0] || p.gamma > self.maxima[1] || p.temperature > self.maxima[2]
    }
}

pub fn normalize_input(point: &SimulationPoint, grid: &ParameterGrid) -> NormalizedInput {
    Normalizer::from_grid(grid).normalize(point)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train = 0,
    Validation = 1,
    Test = 2,
}

impl Split {
    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Split::Train),
            1 => Ok(Split::Validation),
            2 => Ok(Split::Test),
            _ => Err(Error::Format(format!("bad split tag {tag}"))),
        }
    }
}

/// How the first point of each farthest-point selection is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedRule {
    /// Candidate closest to the centroid of the candidate set.
    Centroid,
    /// Fixed position within the per-site candidate list.
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_sites: usize,
    /// Time grid of every target, fs.
    pub times: Vec<f64>,
    pub normalizer: Normalizer,
    pub points: Vec<SimulationPoint>,
    pub inputs: Vec<NormalizedInput>,
    pub targets: Vec<FlatTrajectory>,
    pub split: Vec<Split>,
}

impl Dataset {
    /// Flattens and normalizes trajectories. Every entry starts in the test
    /// split until [`Dataset::make_splits`] runs.
    pub fn from_trajectories(trajectories: &[Trajectory], normalizer: Normalizer) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::Invalid("no trajectories".into()))?;
        let n_sites = first.n_sites();
        let times = first.grid.times.clone();
        let mut ds = Dataset {
            n_sites,
            times,
            normalizer,
            points: Vec::with_capacity(trajectories.len()),
            inputs: Vec::with_capacity(trajectories.len()),
            targets: Vec::with_capacity(trajectories.len()),
            split: Vec::with_capacity(trajectories.len()),
        };
        for t in trajectories {
            ds.push(t)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, t: &Trajectory) -> Result<()> {
        if t.n_sites() != self.n_sites || t.grid.times != self.times {
            return Err(Error::Shape(format!(
                "trajectory for {} does not match dataset shape",
                t.point
            )));
        }
        self.points.push(t.point);
        self.inputs.push(self.normalizer.normalize(&t.point));
        self.targets.push(flatten(t));
        self.split.push(Split::Test);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn target_len(&self) -> usize {
        target_len(self.n_sites, self.times.len())
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    /// `(train, validation, test)` sizes.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let count = |s| self.split.iter().filter(|&&x| x == s).count();
        (count(Split::Train), count(Split::Validation), count(Split::Test))
    }

    /// Per site label: farthest-point sampling picks `n_train_per_site`
    /// training points, a second farthest-point pass over the remainder picks
    /// `n_val_per_site` validation points, and the rest become test points.
    pub fn make_splits(
        &mut self,
        n_train_per_site: usize,
        n_val_per_site: usize,
        seed: SeedRule,
    ) -> Result<()> {
        let mut labels: Vec<u8> = self.points.iter().map(|p| p.j).collect();
        labels.sort_unstable();
        labels.dedup();
        for s in self.split.iter_mut() {
            *s = Split::Test;
        }
        for j in labels {
            let members: Vec<usize> = (0..self.len()).filter(|&i| self.points[i].j == j).collect();
            if n_train_per_site + n_val_per_site > members.len() {
                return Err(Error::Invalid(format!(
                    "site label j={j}: {} train + {} validation exceeds {} available points",
                    n_train_per_site,
                    n_val_per_site,
                    members.len()
                )));
            }
            let coords: Vec<[f64; 3]> = members.iter().map(|&i| self.inputs[i].coords()).collect();
            let seed_index = resolve_seed(seed, &coords)?;
            let mut in_train = vec![false; members.len()];
            for t in farthest_point_sampling(&coords, n_train_per_site, seed_index)? {
                in_train[t] = true;
                self.split[members[t]] = Split::Train;
            }
            let rest: Vec<usize> = (0..members.len()).filter(|&m| !in_train[m]).collect();
            if n_val_per_site > 0 {
                let rest_coords: Vec<[f64; 3]> = rest.iter().map(|&m| coords[m]).collect();
                let seed_index = resolve_seed(SeedRule::Centroid, &rest_coords)?;
                let val = farthest_point_sampling(&rest_coords, n_val_per_site, seed_index)?;
                for v in val {
                    self.split[members[rest[v]]] = Split::Validation;
                }
            }
        }
        Ok(())
    }
}

fn resolve_seed(seed: SeedRule, coords: &[[f64; 3]]) -> Result<usize> {
    match seed {
        SeedRule::Centroid => centroid_seed(coords)
            .ok_or_else(|| Error::Invalid("cannot seed an empty selection".into())),
        SeedRule::Index(i) if i < coords.len() => Ok(i),
        SeedRule::Index(i) => Err(Error::Invalid(format!(
            "seed index {i} out of range for {} candidates",
            coords.len()
        ))),
    }
}

//! Fixtures shared by the benchmarks.

use ostl::cnn::{paper_architecture, Model, OutputMeta};
use ostl::dataset::{target_len, Normalizer};
use ostl::exciton::paper_grid;
use ostl::ltlme::TimeGrid;

/// The full-size network (39249 outputs) with seeded weights and the
/// 801-step output grid attached.
pub fn paper_model(seed: u64) -> Model {
    let times = TimeGrid::paper().times;
    let mut m = paper_architecture(target_len(7, times.len())).expect("valid architecture");
    m.init_glorot(seed);
    m.with_meta(OutputMeta {
        n_sites: 7,
        times,
        normalizer: Normalizer::from_grid(&paper_grid()),
    })
}

/// Evenly spread points in the unit cube, `n` per axis.
pub fn cube_points(n: usize) -> Vec<[f64; 3]> {
    let s = |i: usize| i as f64 / (n.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                out.push([s(a), s(b), s(c)]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures() {
        assert_eq!(paper_model(0).n_params(), 5_123_247);
        let p = cube_points(3);
        assert_eq!(p.len(), 27);
        assert_eq!(p[26], [1.0, 1.0, 1.0]);
    }
}

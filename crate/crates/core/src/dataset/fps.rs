use crate::error::{Error, Result};

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Squared distances within this relative margin of the maximum count as
/// tied, so ties that rounding splits still go to the lowest index.
pub const TIE_RTOL: f64 = 1e-9;

/// Index of the candidate closest to the centroid, lowest index on ties.
pub fn centroid_seed(candidates: &[[f64; 3]]) -> Option<usize> {
    if candidates.is_empty() {
        return None;
    }
    let n = candidates.len() as f64;
    let mut c = [0.0; 3];
    for p in candidates {
        for (ci, pi) in c.iter_mut().zip(p) {
            *ci += pi;
        }
    }
    let c = c.map(|x| x / n);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in candidates.iter().enumerate() {
        let d = dist2(p, &c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Some(best)
}

/// Greedy max-min selection of `k` candidates starting from `seed_index`.
/// Ties go to the lowest index.
pub fn farthest_point_sampling(candidates: &[[f64; 3]], k: usize, seed_index: usize) -> Result<Vec<usize>> {
    fps_with_distances(candidates, k, seed_index).map(|(idx, _)| idx)
}

/// Like [`farthest_point_sampling`], also returning for each pick its
/// Euclidean distance to the previously selected set (`inf` for the seed).
/// The distance sequence is non-increasing.
pub fn fps_with_distances(
    candidates: &[[f64; 3]],
    k: usize,
    seed_index: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = candidates.len();
    if k > n {
        return Err(Error::Invalid(format!(
            "cannot select {k} points from {n} candidates"
        )));
    }
    if k == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if seed_index >= n {
        return Err(Error::Invalid(format!(
            "seed index {seed_index} out of range for {n} candidates"
        )));
    }

    let mut selected = vec![false; n];
    let mut order = Vec::with_capacity(k);
    let mut picked_dist = Vec::with_capacity(k);
    let mut min_d2: Vec<f64> = candidates
        .iter()
        .map(|p| dist2(p, &candidates[seed_index]))
        .collect();
    selected[seed_index] = true;
    order.push(seed_index);
    picked_dist.push(f64::INFINITY);

    while order.len() < k {
        let max_d = min_d2
            .iter()
            .zip(&selected)
            .filter(|(_, &s)| !s)
            .map(|(&d, _)| d)
            .fold(f64::NEG_INFINITY, f64::max);
        let cut = max_d - TIE_RTOL * max_d;
        let best = (0..n)
            .find(|&i| !selected[i] && min_d2[i] >= cut)
            .expect("an unselected candidate attains the maximum");
        let best_d = min_d2[best];
        selected[best] = true;
        order.push(best);
        picked_dist.push(best_d.sqrt());
        let p = candidates[best];
        for (d, q) in min_d2.iter_mut().zip(candidates) {
            let nd = dist2(q, &p);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok((order, picked_dist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid3(axis: [f64; 3]) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        for &x in &axis {
            for &y in &axis {
                for &z in &axis {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }

    #[test]
    fn line_extremes() {
        let c = [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(farthest_point_sampling(&c, 2, 0).unwrap(), vec![0, 2]);
        assert_eq!(farthest_point_sampling(&c, 3, 0).unwrap(), vec![0, 2, 1]);
        assert!(farthest_point_sampling(&c, 4, 0).is_err());
        assert!(farthest_point_sampling(&c, 1, 3).is_err());
        assert!(farthest_point_sampling(&c, 0, 0).unwrap().is_empty());
    }

    #[test]
    fn exhaustion_is_deterministic() {
        let c = grid3([0.0, 0.5, 1.0]);
        let a = farthest_point_sampling(&c, c.len(), 13).unwrap();
        let b = farthest_point_sampling(&c, c.len(), 13).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..27).collect::<Vec<_>>());
    }

    #[test]
    fn centroid_seed_of_cube_is_center() {
        let c = grid3([0.0, 0.5, 1.0]);
        assert_eq!(centroid_seed(&c), Some(13));
        assert_eq!(centroid_seed(&[]), None);
    }

    proptest! {
        #[test]
        fn min_distance_sequence_non_increasing(
            pts in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 2..40),
            k_frac in 0.0f64..1.0,
        ) {
            let k = 1 + ((pts.len() - 1) as f64 * k_frac) as usize;
            let (_, d) = fps_with_distances(&pts, k, 0).unwrap();
            prop_assert!(d.windows(2).all(|w| w[1] <= w[0]));
        }

        #[test]
        fn permutation_independent(
            pts in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 3..30),
            shift in 0usize..1000,
        ) {
            let n = pts.len();
            // Rotation permutation: shuffled[i] = pts[(i + shift) % n].
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let shuffled: Vec<[f64; 3]> = perm.iter().map(|&i| pts[i]).collect();
            let seed = 0;
            let seed_shuffled = perm.iter().position(|&i| i == seed).unwrap();
            let k = n.min(8);
            let a = farthest_point_sampling(&pts, k, seed).unwrap();
            let b: Vec<usize> = farthest_point_sampling(&shuffled, k, seed_shuffled)
                .unwrap()
                .into_iter()
                .map(|i| perm[i])
                .collect();
            prop_assert_eq!(a, b);
        }
    }
}

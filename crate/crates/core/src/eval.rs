//! One-shot prediction and error analysis.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::cnn::Model;
use crate::dataset::{unflatten, values_per_step, Dataset, Split};
use crate::error::{Error, Result};
use crate::exciton::SimulationPoint;
use crate::ltlme::{DensityMatrix, TimeGrid, Trajectory};

/// Predicts the full trajectory of `point` with one forward pass.
pub fn predict(model: &Model, point: &SimulationPoint) -> Result<Trajectory> {
    let meta = model
        .meta
        .as_ref()
        .ok_or_else(|| Error::Invalid("model carries no output grid".into()))?;
    let flat = model.forward(&meta.normalizer.normalize(point).0)?;
    let states = unflatten(&flat, meta.n_sites, meta.times.len())?;
    Ok(Trajectory {
        point: *point,
        grid: TimeGrid::new(meta.times.clone())?,
        states,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Diagonal,
    Real,
    Imag,
}

fn step_pattern(n: usize) -> Vec<Category> {
    let mut out = Vec::with_capacity(values_per_step(n));
    for i in 0..n {
        out.push(Category::Diagonal);
        for _ in (i + 1)..n {
            out.push(Category::Real);
            out.push(Category::Imag);
        }
    }
    out
}

/// Pooled MAE and RMSE over every (trajectory, time, element) sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub mae_diagonal: f64,
    pub rmse_diagonal: f64,
    pub mae_offdiag_real: f64,
    pub rmse_offdiag_real: f64,
    pub mae_offdiag_imag: f64,
    pub rmse_offdiag_imag: f64,
    pub n_trajectories: usize,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    abs: f64,
    sq: f64,
    n: u64,
}

impl Acc {
    fn mae(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.abs / self.n as f64
        }
    }

    fn rmse(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.sq / self.n as f64).sqrt()
        }
    }
}

impl ErrorReport {
    /// Errors between flattened predictions and references of `n_sites`.
    pub fn from_flat(predictions: &[&[f64]], references: &[&[f64]], n_sites: usize) -> Result<Self> {
        if predictions.len() != references.len() || predictions.is_empty() {
            return Err(Error::Shape(format!(
                "{} predictions vs {} references",
                predictions.len(),
                references.len()
            )));
        }
        let pattern = step_pattern(n_sites);
        let mut acc = [Acc::default(); 3];
        for (p, r) in predictions.iter().zip(references) {
            if p.len() != r.len() || p.len() % pattern.len() != 0 {
                return Err(Error::Shape(format!(
                    "trajectory lengths {} and {} do not fit {n_sites} sites",
                    p.len(),
                    r.len()
                )));
            }
            for (block_p, block_r) in p.chunks_exact(pattern.len()).zip(r.chunks_exact(pattern.len())) {
                for ((c, a), b) in pattern.iter().zip(block_p).zip(block_r) {
                    let d = a - b;
                    let slot = &mut acc[*c as usize];
                    slot.abs += d.abs();
                    slot.sq += d * d;
                    slot.n += 1;
                }
            }
        }
        Ok(ErrorReport {
            mae_diagonal: acc[0].mae(),
            rmse_diagonal: acc[0].rmse(),
            mae_offdiag_real: acc[1].mae(),
            rmse_offdiag_real: acc[1].rmse(),
            mae_offdiag_imag: acc[2].mae(),
            rmse_offdiag_imag: acc[2].rmse(),
            n_trajectories: predictions.len(),
        })
    }

    pub fn from_trajectories(predictions: &[Trajectory], references: &[Trajectory]) -> Result<Self> {
        let flat = |ts: &[Trajectory]| -> Vec<Vec<f64>> {
            ts.iter().map(|t| crate::dataset::flatten(t).values).collect()
        };
        let n = references
            .first()
            .map(Trajectory::n_sites)
            .ok_or_else(|| Error::Shape("no references".into()))?;
        if predictions.iter().chain(references).any(|t| t.n_sites() != n) {
            return Err(Error::Shape("mixed site counts".into()));
        }
        let (p, r) = (flat(predictions), flat(references));
        let pr: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
        let rr: Vec<&[f64]> = r.iter().map(Vec::as_slice).collect();
        Self::from_flat(&pr, &rr, n)
    }

    /// Off-diagonal MAE pooled over the real and imaginary parts.
    pub fn mae_offdiag(&self) -> f64 {
        0.5 * (self.mae_offdiag_real + self.mae_offdiag_imag)
    }

    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("mae_diagonal", self.mae_diagonal),
            ("rmse_diagonal", self.rmse_diagonal),
            ("mae_offdiag_real", self.mae_offdiag_real),
            ("rmse_offdiag_real", self.rmse_offdiag_real),
            ("mae_offdiag_imag", self.mae_offdiag_imag),
            ("rmse_offdiag_imag", self.rmse_offdiag_imag),
        ]
    }

    pub fn to_key_value(&self) -> String {
        let mut s = format!("n_trajectories = {}\n", self.n_trajectories);
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k} = {v:e}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,mae,rmse\n");
        for (name, mae, rmse) in [
            ("diagonal", self.mae_diagonal, self.rmse_diagonal),
            ("offdiag_real", self.mae_offdiag_real, self.rmse_offdiag_real),
            ("offdiag_imag", self.mae_offdiag_imag, self.rmse_offdiag_imag),
        ] {
            let _ = writeln!(s, "{name},{mae:e},{rmse:e}");
        }
        s
    }
}

/// Predicts every entry of `split` in parallel, keeping dataset order.
pub fn predict_split(model: &Model, dataset: &Dataset, split: Split) -> Result<Vec<(usize, Vec<f64>)>> {
    dataset
        .indices(split)
        .into_par_iter()
        .map(|i| Ok((i, model.forward(&dataset.inputs[i].0)?)))
        .collect()
}

/// Pooled errors of the model over one split of `dataset`.
pub fn evaluate_split(model: &Model, dataset: &Dataset, split: Split) -> Result<ErrorReport> {
    let preds = predict_split(model, dataset, split)?;
    report_for(dataset, &preds)
}

fn report_for(dataset: &Dataset, preds: &[(usize, Vec<f64>)]) -> Result<ErrorReport> {
    let p: Vec<&[f64]> = preds.iter().map(|(_, v)| v.as_slice()).collect();
    let r: Vec<&[f64]> = preds
        .iter()
        .map(|(i, _)| dataset.targets[*i].values.as_slice())
        .collect();
    ErrorReport::from_flat(&p, &r, dataset.n_sites)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub repetitions: usize,
}

/// Times `repetitions` single-trajectory predictions (forward + unflatten)
/// on one thread, cycling over `points`, after `warmup` untimed calls.
pub fn latency_benchmark(
    model: &Model,
    points: &[SimulationPoint],
    repetitions: usize,
    warmup: usize,
) -> Result<LatencyStats> {
    if repetitions == 0 || points.is_empty() {
        return Err(Error::Invalid("latency benchmark needs repetitions and points".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        for k in 0..warmup {
            std::hint::black_box(predict(model, &points[k % points.len()])?);
        }
        let mut ms = Vec::with_capacity(repetitions);
        for k in 0..repetitions {
            let t0 = Instant::now();
            std::hint::black_box(predict(model, &points[k % points.len()])?);
            ms.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        ms.sort_by(f64::total_cmp);
        let pick = |q: f64| ms[((q * (ms.len() - 1) as f64).round() as usize).min(ms.len() - 1)];
        Ok(LatencyStats {
            median_ms: pick(0.5),
            p95_ms: pick(0.95),
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            repetitions,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalityThresholds {
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl Default for PhysicalityThresholds {
    fn default() -> Self {
        PhysicalityThresholds {
            trace: 1e-2,
            min_eigenvalue: -1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalityReport {
    pub trace_deviation: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
    pub hermiticity: Vec<f64>,
    /// Steps with `|tr - 1| > trace` or `min eig < min_eigenvalue`.
    pub flagged: Vec<usize>,
}

pub fn physicality_report(states: &[DensityMatrix], th: PhysicalityThresholds) -> PhysicalityReport {
    let mut r = PhysicalityReport {
        trace_deviation: Vec::with_capacity(states.len()),
        min_eigenvalue: Vec::with_capacity(states.len()),
        hermiticity: Vec::with_capacity(states.len()),
        flagged: Vec::new(),
    };
    for (k, s) in states.iter().enumerate() {
        let dev = (s.trace() - 1.0).norm();
        let eig = s.min_eigenvalue();
        if dev > th.trace || eig < th.min_eigenvalue {
            r.flagged.push(k);
        }
        r.trace_deviation.push(dev);
        r.min_eigenvalue.push(eig);
        r.hermiticity.push(s.hermiticity_residual());
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationReport {
    pub interior: Option<ErrorReport>,
    pub exterior: Option<ErrorReport>,
    pub n_interior: usize,
    pub n_exterior: usize,
}

/// For each test entry, whether its `(lambda, gamma, T)` coordinates lie in
/// the bounding box of the training entries with the same site label.
pub fn test_interior_mask(dataset: &Dataset) -> Vec<(usize, bool)> {
    let mut boxes: Vec<(f64, [f64; 3], [f64; 3])> = Vec::new();
    for i in dataset.indices(Split::Train) {
        let x = &dataset.inputs[i];
        let c = x.coords();
        match boxes.iter_mut().find(|b| b.0 == x.site_label()) {
            Some(b) => {
                for d in 0..3 {
                    b.1[d] = b.1[d].min(c[d]);
                    b.2[d] = b.2[d].max(c[d]);
                }
            }
            None => boxes.push((x.site_label(), c, c)),
        }
    }
    dataset
        .indices(Split::Test)
        .into_iter()
        .map(|i| {
            let x = &dataset.inputs[i];
            let c = x.coords();
            let inside = boxes
                .iter()
                .find(|b| b.0 == x.site_label())
                .is_some_and(|b| (0..3).all(|d| b.1[d] <= c[d] && c[d] <= b.2[d]));
            (i, inside)
        })
        .collect()
}

/// Test-set errors split into points inside and outside the training box.
pub fn interpolation_split_eval(model: &Model, dataset: &Dataset) -> Result<InterpolationReport> {
    let preds = predict_split(model, dataset, Split::Test)?;
    let mask = test_interior_mask(dataset);
    let (inner, outer): (Vec<_>, Vec<_>) = preds
        .into_iter()
        .zip(&mask)
        .partition(|(_, (_, inside))| *inside);
    let strip = |v: Vec<((usize, Vec<f64>), &(usize, bool))>| -> Vec<(usize, Vec<f64>)> {
        v.into_iter().map(|(p, _)| p).collect()
    };
    let (inner, outer) = (strip(inner), strip(outer));
    let report = |v: &[(usize, Vec<f64>)]| {
        if v.is_empty() {
            Ok(None)
        } else {
            report_for(dataset, v).map(Some)
        }
    };
    Ok(InterpolationReport {
        interior: report(&inner)?,
        exterior: report(&outer)?,
        n_interior: inner.len(),
        n_exterior: outer.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{paper_architecture, OutputMeta};
    use crate::dataset::{flatten, Normalizer};
    use crate::exciton::{ParameterGrid, SystemSpec};
    use crate::ltlme::{propagate, C64};
    use nalgebra::DMatrix;

    fn traj(n: usize, k: usize, f: impl Fn(usize, usize, usize) -> C64) -> Trajectory {
        let states = (0..k)
            .map(|t| DensityMatrix(DMatrix::from_fn(n, n, |i, j| f(t, i, j))))
            .collect();
        Trajectory {
            point: SimulationPoint::new(0, 1.0, 1.0, 1.0).unwrap(),
            grid: TimeGrid::new((0..k).map(|t| t as f64 * 5.0).collect()).unwrap(),
            states,
        }
    }

    fn hermitian(t: usize, i: usize, j: usize) -> C64 {
        let (a, b) = (i.min(j) as f64, i.max(j) as f64);
        let sign = (j as f64 - i as f64).signum();
        C64::new(0.1 * (t as f64 + a + b).sin(), sign * 0.01 * b)
    }

    #[test]
    fn identical_inputs_give_zero_errors() {
        let a = traj(3, 4, hermitian);
        let r = ErrorReport::from_trajectories(&[a.clone()], &[a]).unwrap();
        assert_eq!(r.mae_diagonal, 0.0);
        assert_eq!(r.rmse_offdiag_imag, 0.0);
        assert_eq!(r.n_trajectories, 1);
    }

    #[test]
    fn constant_diagonal_offset() {
        let a = traj(3, 4, hermitian);
        let b = traj(3, 4, |t, i, j| hermitian(t, i, j) + if i == j { C64::new(0.03, 0.0) } else { C64::new(0.0, 0.0) });
        let r = ErrorReport::from_trajectories(&[b], &[a]).unwrap();
        assert!((r.mae_diagonal - 0.03).abs() < 1e-15);
        assert!((r.rmse_diagonal - 0.03).abs() < 1e-15);
        assert_eq!(r.mae_offdiag_real, 0.0);
    }

    #[test]
    fn rmse_dominates_mae_and_order_is_irrelevant() {
        let refs = [traj(2, 5, hermitian), traj(2, 5, |t, i, j| hermitian(t + 3, i, j))];
        let preds = [traj(2, 5, |t, i, j| hermitian(t + 1, i, j)), traj(2, 5, |t, i, j| hermitian(t * 2, i, j))];
        let r = ErrorReport::from_trajectories(&preds, &refs).unwrap();
        for (mae, rmse) in [
            (r.mae_diagonal, r.rmse_diagonal),
            (r.mae_offdiag_real, r.rmse_offdiag_real),
            (r.mae_offdiag_imag, r.rmse_offdiag_imag),
        ] {
            assert!(mae >= 0.0 && rmse >= mae);
        }
        let swapped = ErrorReport::from_trajectories(&[preds[1].clone(), preds[0].clone()], &[refs[1].clone(), refs[0].clone()]).unwrap();
        assert!((swapped.mae_diagonal - r.mae_diagonal).abs() < 1e-15);
        assert!((swapped.rmse_offdiag_real - r.rmse_offdiag_real).abs() < 1e-15);
        assert!(ErrorReport::from_trajectories(&preds[..1], &refs).is_err());
    }

    #[test]
    fn report_text_formats() {
        let a = traj(2, 2, hermitian);
        let r = ErrorReport::from_trajectories(&[a.clone()], &[a]).unwrap();
        assert!(r.to_key_value().contains("mae_diagonal = 0e0"));
        assert_eq!(r.to_csv().lines().count(), 4);
    }

    #[test]
    fn physicality_flags() {
        let sys = SystemSpec::fmo();
        let p = SimulationPoint::new(0, 160.0, 150.0, 170.0).unwrap();
        let t = propagate(&sys, &p, &TimeGrid::paper_until(200.0)).unwrap();
        assert!(physicality_report(&t.states, PhysicalityThresholds::default()).flagged.is_empty());

        let mut low = DensityMatrix::pure_site(2, 0);
        low.0[(0, 0)] = C64::new(0.9, 0.0);
        let r = physicality_report(&[low], PhysicalityThresholds::default());
        assert_eq!(r.flagged, vec![0]);

        let zeros = vec![DensityMatrix(DMatrix::zeros(3, 3)); 4];
        assert_eq!(physicality_report(&zeros, PhysicalityThresholds::default()).flagged.len(), 4);
    }

    fn tiny_dataset() -> Dataset {
        let sys = SystemSpec::new("two", DMatrix::from_row_slice(2, 2, &[0.0, 50.0, 50.0, 150.0])).unwrap();
        let grid = ParameterGrid::new(vec![10.0, 100.0, 200.0], vec![50.0, 300.0], vec![100.0, 300.0], vec![0]).unwrap();
        let tg = TimeGrid::paper_until(20.0);
        let trajs: Vec<_> = grid.points().iter().map(|p| propagate(&sys, p, &tg).unwrap()).collect();
        Dataset::from_trajectories(&trajs, Normalizer::from_grid(&grid)).unwrap()
    }

    #[test]
    fn corner_training_set_makes_everything_interior() {
        let mut ds = tiny_dataset();
        for (k, p) in ds.points.iter().enumerate() {
            ds.split[k] = if p.lambda == 100.0 { Split::Test } else { Split::Train };
        }
        let mask = test_interior_mask(&ds);
        assert_eq!(mask.len(), 4);
        assert!(mask.iter().all(|m| m.1));

        let mut model = paper_architecture(ds.target_len()).unwrap();
        model.init_glorot(1);
        let r = interpolation_split_eval(&model, &ds).unwrap();
        assert!(r.exterior.is_none() && r.interior.is_some());
        assert_eq!((r.n_interior, r.n_exterior), (4, 0));
    }

    #[test]
    fn outside_points_are_exterior() {
        let mut ds = tiny_dataset();
        for (k, p) in ds.points.iter().enumerate() {
            ds.split[k] = if p.lambda == 200.0 { Split::Test } else { Split::Train };
        }
        assert!(test_interior_mask(&ds).iter().all(|m| !m.1));
    }

    #[test]
    fn predict_matches_forward_and_is_hermitian() {
        let ds = tiny_dataset();
        let mut model = paper_architecture(ds.target_len()).unwrap();
        model.init_glorot(3);
        let p = ds.points[2];
        assert!(predict(&model, &p).is_err());
        let model = model.with_meta(OutputMeta {
            n_sites: 2,
            times: ds.times.clone(),
            normalizer: ds.normalizer,
        });
        let t = predict(&model, &p).unwrap();
        assert_eq!(t.states.len(), ds.times.len());
        assert!(t.states.iter().all(|s| s.hermiticity_residual() == 0.0));
        assert_eq!(flatten(&t).values, model.forward(&ds.inputs[2].0).unwrap());
        assert_eq!(predict(&model, &p).unwrap(), t);
    }

    #[test]
    fn latency_rejects_zero_repetitions() {
        let mut model = paper_architecture(values_per_step(2) * 3).unwrap();
        model.init_zeros();
        let model = model.with_meta(OutputMeta {
            n_sites: 2,
            times: vec![0.0, 5.0, 10.0],
            normalizer: Normalizer::new([1.0, 1.0, 1.0]).unwrap(),
        });
        let p = [SimulationPoint::new(0, 1.0, 1.0, 1.0).unwrap()];
        assert!(latency_benchmark(&model, &p, 0, 0).is_err());
        let s = latency_benchmark(&model, &p, 20, 2).unwrap();
        assert!(s.median_ms <= s.p95_ms);
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde_json::json;

use ostl::cnn::{io as model_io, paper_architecture, OutputMeta, TrainConfig};
use ostl::dataset::io::{read_dataset, write_dataset};
use ostl::dataset::{unflatten, Dataset, Normalizer, SeedRule, Split};
use ostl::eval::{
    evaluate_split, interpolation_split_eval, latency_benchmark, physicality_report, predict_split,
    ErrorReport, PhysicalityThresholds,
};
use ostl::exciton::{desk_grid, format_system, load_system, paper_grid, ParameterGrid};
use ostl::ltlme::io::{read_trajectory, write_trajectory, write_trajectory_csv};
use ostl::ltlme::{propagate, TimeGrid};
use ostl::{SimulationPoint, SystemSpec, Trajectory};

use crate::manifest::{config_digest, hex, sidecar, RunManifest};

const MANIFEST: &str = "manifest.json";

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// `fmo` or a Hamiltonian text file.
    #[arg(long, default_value = "fmo")]
    pub system: String,
    /// `paper`, `desk` or a TOML grid file.
    #[arg(long, default_value = "paper")]
    pub grid: String,
    /// Last time point, fs.
    #[arg(long, default_value_t = 10_000.0)]
    pub t_max: f64,
    /// Output directory; defaults to `<data-dir>/trajectories`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct BuildDatasetArgs {
    /// Trajectory directory written by `generate`.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub train_per_site: usize,
    #[arg(long, default_value_t = 100)]
    pub val_per_site: usize,
    /// Index of the first training point per site; centroid-nearest if absent.
    #[arg(long)]
    pub seed: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, alias = "max-epochs", default_value_t = 10_000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print progress every this many epochs (0 = silent).
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub j: u8,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub temperature: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Report directory; defaults to `<data-dir>/eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
}

fn or_default(p: Option<PathBuf>, data_dir: &Path, name: &str) -> PathBuf {
    p.unwrap_or_else(|| data_dir.join(name))
}

fn resolve_system(arg: &str) -> Result<SystemSpec> {
    if arg == "fmo" {
        Ok(SystemSpec::fmo())
    } else {
        Ok(load_system(arg)?)
    }
}

fn resolve_grid(arg: &str) -> Result<ParameterGrid> {
    match arg {
        "paper" => Ok(paper_grid()),
        "desk" => Ok(desk_grid()),
        path => Ok(ParameterGrid::load(path)?),
    }
}

pub fn trajectory_file_name(p: &SimulationPoint) -> String {
    format!("j{}_lam{}_gam{}_T{}.traj", p.j, p.lambda, p.gamma, p.temperature)
}

/// A file counts as done when it decodes, carries our digest and holds the
/// expected point.
fn load_valid(path: &Path, digest: &[u8; 32], point: &SimulationPoint) -> Option<Trajectory> {
    match read_trajectory(path) {
        Ok((t, prov)) if &prov == digest && t.point == *point => Some(t),
        _ => None,
    }
}

pub fn generate(data_dir: &Path, a: GenerateArgs) -> Result<()> {
    let sys = resolve_system(&a.system)?;
    let grid = resolve_grid(&a.grid)?;
    if !(a.t_max > 0.0 && a.t_max <= 10_000.0) {
        bail!(ostl::Error::Invalid(format!("--t-max must be in (0, 10000], got {}", a.t_max)));
    }
    let times = TimeGrid::paper_until(a.t_max);
    let out = or_default(a.out, data_dir, "trajectories");
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let config = json!({
        "system": { "name": sys.name, "hamiltonian": format_system(&sys) },
        "grid": grid,
        "times": times.times,
    });
    let digest = config_digest(&config);
    let mut manifest = RunManifest::new("generate", config);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    let points = grid.points();
    let skipped = AtomicUsize::new(0);
    pool.install(|| {
        points.par_iter().try_for_each(|p| -> Result<()> {
            let path = out.join(trajectory_file_name(p));
            if load_valid(&path, &digest, p).is_some() {
                skipped.fetch_add(1, Ordering::Relaxed);
                return Ok(());
            }
            let traj = propagate(&sys, p, &times).with_context(|| format!("propagating {p}"))?;
            write_trajectory(&path, &traj, &digest)?;
            Ok(())
        })
    })?;
    let skipped = skipped.into_inner();
    manifest.outputs = points.iter().map(|p| out.join(trajectory_file_name(p))).collect();
    manifest.write(&out.join(MANIFEST))?;
    println!(
        "generated={} skipped={} total={}",
        points.len() - skipped,
        skipped,
        points.len()
    );
    Ok(())
}

pub fn build_dataset(data_dir: &Path, a: BuildDatasetArgs) -> Result<()> {
    let dir = or_default(a.trajectories, data_dir, "trajectories");
    let source = RunManifest::read(&dir.join(MANIFEST))?;
    let grid: ParameterGrid = serde_json::from_value(source.config["grid"].clone())
        .map_err(|e| ostl::Error::Format(format!("grid in trajectory manifest: {e}")))?;
    let digest = config_digest(&source.config);

    let mut missing = Vec::new();
    let mut dataset: Option<Dataset> = None;
    for p in grid.points() {
        let path = dir.join(trajectory_file_name(&p));
        match load_valid(&path, &digest, &p) {
            Some(t) => match dataset.as_mut() {
                Some(ds) => ds.push(&t)?,
                None => dataset = Some(Dataset::from_trajectories(&[t], Normalizer::from_grid(&grid))?),
            },
            None => missing.push(p),
        }
    }
    if !missing.is_empty() {
        for p in &missing {
            eprintln!("missing or invalid trajectory: {p}");
        }
        bail!(ostl::Error::Invalid(format!("{} trajectories missing in {}", missing.len(), dir.display())));
    }
    let mut ds = dataset.ok_or_else(|| ostl::Error::Invalid("empty grid".into()))?;
    let seed = a.seed.map_or(SeedRule::Centroid, SeedRule::Index);
    ds.make_splits(a.train_per_site, a.val_per_site, seed)?;

    let config = json!({
        "source_digest": hex(&digest),
        "train_per_site": a.train_per_site,
        "val_per_site": a.val_per_site,
        "seed": a.seed,
    });
    let prov = config_digest(&config);
    let out = or_default(a.out, data_dir, "dataset.bin");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_dataset(&out, &ds, &prov)?;
    let mut manifest = RunManifest::new("build-dataset", config);
    if let Some(s) = a.seed {
        manifest.seeds.insert("fps_seed_index".into(), s as u64);
    }
    manifest.inputs.push(dir);
    manifest.outputs.push(out.clone());
    manifest.write(&sidecar(&out, ".manifest.json"))?;
    let (tr, va, te) = ds.split_sizes();
    println!("train={tr} val={va} test={te}");
    Ok(())
}

pub fn train(data_dir: &Path, a: TrainArgs) -> Result<()> {
    let path = or_default(a.dataset, data_dir, "dataset.bin");
    let (ds, ds_prov) = read_dataset(&path)?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let mut model = paper_architecture(ds.target_len())?;
    model.init_glorot(a.seed);
    let t0 = Instant::now();
    let report = ostl::cnn::train(&mut model, &ds, &cfg, |e| {
        if a.log_every > 0 && e.epoch % a.log_every == 0 {
            eprintln!(
                "epoch {} train_mse {:e} val_mse {:e} ({:.0} s)",
                e.epoch,
                e.train_mse,
                e.val_mse,
                t0.elapsed().as_secs_f64()
            );
        }
        true
    })?;
    let model = model.with_meta(OutputMeta {
        n_sites: ds.n_sites,
        times: ds.times.clone(),
        normalizer: ds.normalizer,
    });

    let config = json!({
        "dataset_digest": hex(&ds_prov),
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "max_epochs": cfg.max_epochs,
        "beta1": cfg.beta1,
        "beta2": cfg.beta2,
        "epsilon": cfg.epsilon,
        "seed": cfg.seed,
    });
    let prov = config_digest(&config);
    let out = or_default(a.out, data_dir, "model.bin");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    model_io::save_model(&model, &prov, &out)?;
    let history = sidecar(&out, ".history.txt");
    fs::write(&history, report.history_log()).with_context(|| format!("writing {}", history.display()))?;
    let mut manifest = RunManifest::new("train", config);
    manifest.seeds.insert("init_and_shuffle".into(), a.seed);
    manifest.inputs.push(path);
    manifest.outputs.extend([out.clone(), history]);
    manifest.write(&sidecar(&out, ".manifest.json"))?;
    println!(
        "best_epoch={} best_val_mse={:e} params={}",
        report.best_epoch,
        report.best_val_mse,
        model.n_params()
    );
    Ok(())
}

pub fn predict(data_dir: &Path, a: PredictArgs) -> Result<()> {
    let (model, _) = model_io::load_model(&or_default(a.model, data_dir, "model.bin"))?;
    let point = SimulationPoint::new(a.j, a.lambda, a.gamma, a.temperature)?;
    if let Some(meta) = &model.meta {
        if meta.normalizer.extrapolates(&point) {
            eprintln!(
                "warning: {point} lies beyond the training maxima {:?}; extrapolating",
                meta.normalizer.maxima
            );
        }
    }
    let t0 = Instant::now();
    let traj = ostl::eval::predict(&model, &point)?;
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    let out = or_default(a.out, data_dir, "prediction.csv");
    write_trajectory_csv(&out, &traj.grid.times, &traj.states)?;
    println!("prediction_ms={ms:.3} steps={} out={}", traj.states.len(), out.display());
    Ok(())
}

fn optional_report(r: &Option<ErrorReport>) -> String {
    r.as_ref().map_or_else(|| "absent\n".to_string(), ErrorReport::to_key_value)
}

pub fn evaluate(data_dir: &Path, a: EvaluateArgs) -> Result<()> {
    let (model, _) = model_io::load_model(&or_default(a.model, data_dir, "model.bin"))?;
    let (ds, _) = read_dataset(&or_default(a.dataset, data_dir, "dataset.bin"))?;
    if ds.indices(Split::Test).is_empty() {
        bail!(ostl::Error::Invalid("dataset has an empty test split".into()));
    }
    if model.output_size() != ds.target_len() {
        bail!(ostl::Error::Shape(format!(
            "model emits {} values, dataset targets have {}",
            model.output_size(),
            ds.target_len()
        )));
    }
    let out = or_default(a.out, data_dir, "eval");
    fs::create_dir_all(&out)?;

    let report = evaluate_split(&model, &ds, Split::Test)?;
    let interp = interpolation_split_eval(&model, &ds)?;
    let mut flagged = 0usize;
    let mut steps = 0usize;
    for (_, flat) in predict_split(&model, &ds, Split::Test)? {
        let states = unflatten(&flat, ds.n_sites, ds.times.len())?;
        steps += states.len();
        flagged += physicality_report(&states, PhysicalityThresholds::default()).flagged.len();
    }

    fs::write(out.join("errors.txt"), report.to_key_value())?;
    fs::write(out.join("errors.csv"), report.to_csv())?;
    fs::write(
        out.join("interpolation.txt"),
        format!(
            "[interior]\nn_points = {}\n{}\n[exterior]\nn_points = {}\n{}",
            interp.n_interior,
            optional_report(&interp.interior),
            interp.n_exterior,
            optional_report(&interp.exterior)
        ),
    )?;
    fs::write(
        out.join("physicality.txt"),
        format!("steps = {steps}\nflagged_steps = {flagged}\n"),
    )?;
    print!("{}", report.to_key_value());
    Ok(())
}

pub fn bench(data_dir: &Path, a: BenchArgs) -> Result<()> {
    let (model, _) = model_io::load_model(&or_default(a.model, data_dir, "model.bin"))?;
    let m = model
        .meta
        .as_ref()
        .ok_or_else(|| ostl::Error::Invalid("model carries no output grid".into()))?
        .normalizer
        .maxima;
    let points: Vec<SimulationPoint> = (0..2u8)
        .flat_map(|j| {
            [0.25, 0.5, 1.0]
                .into_iter()
                .map(move |f| SimulationPoint::new(j, f * m[0], f * m[1], f * m[2]))
        })
        .collect::<ostl::Result<_>>()?;
    let s = latency_benchmark(&model, &points, a.repetitions, a.warmup)?;
    println!(
        "median_ms={:.3} p95_ms={:.3} mean_ms={:.3} repetitions={}",
        s.median_ms, s.p95_ms, s.mean_ms, s.repetitions
    );
    Ok(())
}

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::model::Model;
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 10_000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Invalid(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch size must be at least 1".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's mini-batch losses, each taken before its update.
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

impl TrainReport {
    /// `epoch train_mse val_mse` per line.
    pub fn history_log(&self) -> String {
        let mut s = String::from("# epoch train_mse val_mse\n");
        for r in &self.history {
            let _ = writeln!(s, "{} {:e} {:e}", r.epoch, r.train_mse, r.val_mse);
        }
        s
    }
}

/// Mean squared error and its gradient `2 (pred - target) / len`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Mean per-example MSE over a set of examples.
pub fn mean_mse(model: &Model, inputs: &[&[f64]], targets: &[&[f64]]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::Invalid("no examples".into()));
    }
    let mut total = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        total += mse_loss(&model.forward(x)?, y)?.0;
    }
    Ok(total / inputs.len() as f64)
}

/// Trains on the dataset's train split, checkpointing on validation MSE.
pub fn train(
    model: &mut Model,
    dataset: &Dataset,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord) -> bool,
) -> Result<TrainReport> {
    let pick = |which| {
        let idx = dataset.indices(which);
        let xs: Vec<&[f64]> = idx.iter().map(|&i| &dataset.inputs[i].0[..]).collect();
        let ys: Vec<&[f64]> = idx.iter().map(|&i| dataset.targets[i].values.as_slice()).collect();
        (xs, ys)
    };
    let (tx, ty) = pick(Split::Train);
    let (vx, vy) = pick(Split::Validation);
    if tx.is_empty() || vx.is_empty() {
        return Err(Error::Invalid(format!(
            "training needs non-empty train and validation splits (train={}, val={})",
            tx.len(),
            vx.len()
        )));
    }
    train_on(model, (&tx, &ty), (&vx, &vy), cfg, on_epoch)
}

/// Mini-batch Adam on explicit example lists. `on_epoch` returns `false` to
/// stop early. On return the model holds the best-validation parameters.
pub fn train_on(
    model: &mut Model,
    train_set: (&[&[f64]], &[&[f64]]),
    val_set: (&[&[f64]], &[&[f64]]),
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> bool,
) -> Result<TrainReport> {
    cfg.validate()?;
    let (tx, ty) = train_set;
    let (vx, vy) = val_set;
    if tx.is_empty() || vx.is_empty() || tx.len() != ty.len() || vx.len() != vy.len() {
        return Err(Error::Invalid("empty or mismatched training data".into()));
    }
    let n_params = model.params()?.len();
    let adam = cfg.adam();
    let mut state = AdamState::new(n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..tx.len()).collect();
    let mut grad = vec![0.0; n_params];

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Vec<f64>)> = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = 0.0;
        let mut n_batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                let cache = model.forward_cached(tx[i])?;
                let (l, mut g) = mse_loss(cache.output(), ty[i])?;
                loss += l;
                g.iter_mut().for_each(|v| *v *= scale);
                model.backward(&cache, &g, &mut grad)?;
            }
            batch_losses += loss * scale;
            n_batches += 1;
            adam_step(model.params_mut()?, &grad, &mut state, &adam);
        }
        let record = EpochRecord {
            epoch,
            train_mse: batch_losses / n_batches as f64,
            val_mse: mean_mse(model, vx, vy)?,
        };
        if !record.train_mse.is_finite() || !record.val_mse.is_finite() {
            return Err(Error::NonFinite { step: epoch });
        }
        if best.as_ref().is_none_or(|b| record.val_mse < b.1) {
            best = Some((epoch, record.val_mse, model.params()?.to_vec()));
        }
        history.push(record);
        log::debug!("epoch {epoch} train {:e} val {:e}", record.train_mse, record.val_mse);
        if !on_epoch(&record) {
            break;
        }
    }

    let (best_epoch, best_val_mse) = match best {
        Some((e, v, params)) => {
            model.set_params(params)?;
            (e, v)
        }
        None => (0, f64::INFINITY),
    };
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_mse,
    })
}

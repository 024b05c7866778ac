use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{mse_loss, Adam, Batch, Network};
use crate::rng::substream;
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 32,
            patience: 10,
            validation_fraction: 0.1,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Last epoch that ran (1-based).
    pub stopped_epoch: usize,
    /// Epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

/// Seeded mini-batch Adam on mean squared error with early stopping.
///
/// A `validation_fraction` slice of the rows is held out once up front.
/// Training stops after `patience` epochs without a strict improvement in
/// validation loss, or at `max_epochs`; the best-validation parameters are
/// restored before returning.
pub fn train_loop<T, N>(
    model: &mut N,
    inputs: &N::Input,
    targets: &Array2<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome>
where
    T: Scalar,
    N: Network<T>,
{
    config.validate()?;
    let n = inputs.batch_len();
    if n == 0 || targets.nrows() != n {
        return Err(Error::shape(format!("{n} target rows (n > 0)"), targets.nrows()));
    }
    let n_val = (config.validation_fraction * n as f64).round() as usize;
    if n_val == 0 {
        return Err(Error::Config(format!(
            "validation slice is empty ({n} rows x fraction {})",
            config.validation_fraction
        )));
    }
    if n_val >= n {
        return Err(Error::Config("no rows left for training after the validation split".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(config.seed, "train/validation-split"));
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_x = inputs.take_rows(val_idx);
    let val_y = targets.take_rows(val_idx);
    let mut train_idx = train_idx.to_vec();

    let mut shuffle_rng = substream(config.seed, "train/shuffle");
    let mut noise_rng = substream(config.seed, "train/dropout");
    let mut adam = Adam::new(T::of(config.learning_rate));

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, N)> = None;
    let mut since_best = 0;
    let mut stopped_epoch = 0;

    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for rows in batches(&train_idx, config.batch_size) {
            let bx = inputs.take_rows(rows);
            let by = targets.take_rows(rows);
            let (pred, cache) = model.forward_train(&bx, &mut noise_rng)?;
            let (loss, grad) = mse_loss(&pred, &by)?;
            let grads = model.backward(&cache, &grad)?;
            adam.update(model.params_mut(), &grads)?;
            weighted += loss.as_f64() * rows.len() as f64;
        }
        let train_loss = weighted / train_idx.len() as f64;
        let val_loss = mse_loss(&model.predict(&val_x)?, &val_y)?.0.as_f64();
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "loss diverged at epoch {epoch} (train {train_loss}, validation {val_loss})"
            )));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss: val_loss,
        });
        stopped_epoch = epoch;

        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (best_validation_loss, best_epoch, best_model) = best.expect("at least one epoch ran");
    *model = best_model;
    Ok(TrainOutcome {
        history,
        stopped_epoch,
        best_epoch,
        best_validation_loss,
    })
}

/// Consecutive chunks of `batch_size`; a trailing single row is folded
/// into the previous chunk so batch statistics stay defined.
fn batches(idx: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = idx.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|c| c.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().unwrap() = &idx[start..];
    }
    out
}

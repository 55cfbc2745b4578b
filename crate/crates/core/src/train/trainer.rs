//! Mini-batch training with early stopping on validation MSE.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::metrics::{mse, Metrics};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{mix_seed, Checkpoint, FeatureCache, Model, ModelConfig, PreparedPost};
use crate::nn::Mode;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 20,
            max_epochs: 30,
            patience: 5,
            dropout: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training objective (1/2N form) over the epoch's batches.
    pub train_loss: f64,
    /// Validation MSE (1/N form) after the epoch.
    pub val_mse: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_mse\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{},{}", r.epoch, r.train_loss, r.val_mse);
        }
        s
    }

    pub fn from_csv(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        if lines.next()? != "epoch,train_loss,val_mse" {
            return None;
        }
        let epochs = lines
            .map(|l| {
                let mut f = l.split(',');
                let r = EpochRecord {
                    epoch: f.next()?.parse().ok()?,
                    train_loss: f.next()?.parse().ok()?,
                    val_mse: f.next()?.parse().ok()?,
                };
                f.next().is_none().then_some(r)
            })
            .collect::<Option<_>>()?;
        Some(Self { epochs })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE.
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    /// Validation MSE of the freshly initialised model.
    pub initial_val_mse: f64,
    pub history: History,
    /// Optimizer steps taken.
    pub steps: u64,
}

pub fn predict_all(model: &Model, posts: &[PreparedPost]) -> Result<Vec<f64>> {
    posts.iter().map(|p| model.predict(p)).collect()
}

/// Inference-mode metrics over `posts`.
pub fn evaluate(model: &Model, posts: &[PreparedPost]) -> Result<Metrics> {
    if posts.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let preds = predict_all(model, posts)?;
    let targets: Vec<f64> = posts.iter().map(|p| p.target).collect();
    Metrics::compute(&preds, &targets)
}

fn val_mse(model: &Model, posts: &[PreparedPost]) -> Result<f64> {
    let preds = predict_all(model, posts)?;
    let targets: Vec<f64> = posts.iter().map(|p| p.target).collect();
    mse(&preds, &targets)
}

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

/// Trains at a constant learning rate.
pub fn train(
    train: &[PreparedPost],
    val: &[PreparedPost],
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    cache: &FeatureCache,
) -> Result<TrainOutcome> {
    train_with_schedule(train, val, model_config, cfg, cache, |_| cfg.learning_rate)
}

/// Trains with `lr(epoch)` (epochs count from 1) as the learning rate.
/// Stops once validation MSE has not strictly improved for `patience`
/// consecutive epochs.
pub fn train_with_schedule(
    train: &[PreparedPost],
    val: &[PreparedPost],
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    cache: &FeatureCache,
    lr: impl Fn(usize) -> f64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training split".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptyDataset("validation split".into()));
    }
    let mut mc = model_config.clone();
    mc.dropout = cfg.dropout;
    let mut model = Model::new(mc, mix_seed(cfg.seed, INIT_STREAM))?;
    let mut opt = Adam::new(&model.params, cfg.learning_rate);
    let initial_val_mse = val_mse(&model, val)?;
    let mut history = History::default();
    let mut best = (model.params.clone(), 0, f64::INFINITY);
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        opt.lr = lr(epoch);
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(cfg.seed, SHUFFLE_STREAM), epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedPost> = chunk.iter().map(|&i| &train[i]).collect();
            let seed = mix_seed(mix_seed(cfg.seed, DROPOUT_STREAM), opt.step);
            let (loss, grads) = model.loss_and_gradients(&batch, Mode::Train, seed)?;
            if !loss.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "training diverged at epoch {epoch} (loss {loss})"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            opt.update(&mut model.params, &grads)?;
        }
        let v = val_mse(&model, val)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_mse: v,
        });
        if v < best.2 {
            best = (model.params.clone(), epoch, v);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (params, best_epoch, best_val_mse) = best;
    Ok(TrainOutcome {
        best: Checkpoint {
            model: Model {
                config: model.config,
                params,
            },
            pca: cache.pca.clone(),
            cache_digest: cache.digest(),
        },
        best_epoch,
        best_val_mse,
        initial_val_mse,
        history,
        steps: opt.step,
    })
}

/// Builds the feature cache from `train_ds`, prepares both splits and trains.
pub fn train_datasets(
    train_ds: &Dataset,
    val_ds: &Dataset,
    model_config: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(TrainOutcome, FeatureCache)> {
    let cache = FeatureCache::build(train_ds, model_config)?;
    let tr = cache.prepare_all(train_ds, model_config)?;
    let va = cache.prepare_all(val_ds, model_config)?;
    let out = train(&tr, &va, model_config, cfg, &cache)?;
    Ok((out, cache))
}

//! Deterministic mini-batch training with early stopping.
//!
//! The loop minimizes the mean per-record objective loss with Adam. All
//! randomness (weight init, epoch shuffles, dropout masks) comes from named
//! sub-streams of `cfg.seed`, so a seed plus a dataset fully determines the
//! returned weights and the log. Early stopping watches the validation
//! objective loss and restores the best-on-validation weights.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamConfig, AdamState, BackboneConfig, FeatureVector, Model};
use crate::error::{CwmError, Result};
use crate::objective::Objective;
use crate::records::Dataset;
use crate::rng::{substream, STREAM_DATA_SHUFFLE, STREAM_DROPOUT, STREAM_INIT};

fn default_batch_size() -> usize {
    512
}
fn default_max_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    5
}

/// Training-loop hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CwmError::Config("batch size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(CwmError::Config("early-stop patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(CwmError::Config("max epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean losses for one epoch. `val_loss` is `None` when the validation
/// split is empty (early stopping then watches the training loss).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Per-epoch history plus where early stopping settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
    /// Early-stop metric at that epoch.
    pub best_val_loss: f64,
}

fn encode_all(ds: &Dataset, vocab: &crate::records::Vocab) -> Result<Vec<FeatureVector>> {
    ds.records.iter().map(|r| FeatureVector::from_record(vocab, r)).collect()
}

/// Train a backbone on `train_ds`, early-stopping against `val_ds`.
///
/// The objective must already be fitted on the training split; both splits
/// are encoded with the training vocabulary (unseen categories fall back to
/// the reserved index). Returns the best-on-validation model and the full
/// epoch log. A non-finite loss aborts with a numerical-divergence error.
pub fn train(
    train_ds: &Dataset,
    val_ds: &Dataset,
    objective: &Objective,
    backbone: &BackboneConfig,
    cfg: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    backbone.validate()?;
    if train_ds.is_empty() {
        return Err(CwmError::Config("training split is empty".into()));
    }
    if !objective.is_fitted() {
        return Err(CwmError::Config(format!(
            "objective {} must be fitted on the training split before training",
            objective.method_name()
        )));
    }

    let vocab = &train_ds.vocab;
    let train_x = encode_all(train_ds, vocab)?;
    let val_x = encode_all(val_ds, vocab)?;
    if val_ds.is_empty() {
        log::warn!("validation split is empty; early stopping will watch the training loss");
    }

    let mut model = Model::init(backbone, &vocab.field_cards(), &mut substream(cfg.seed, STREAM_INIT))?;
    let mut adam = AdamState::new(cfg.adam, model.n_params());
    let mut rng_shuffle = substream(cfg.seed, STREAM_DATA_SHUFFLE);
    let mut rng_dropout = substream(cfg.seed, STREAM_DROPOUT);

    let n = train_ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; model.n_params()];

    let mut log_rows: Vec<EpochStats> = Vec::with_capacity(cfg.max_epochs);
    let mut best_metric = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_weights = model.weights().to_vec();
    let mut epochs_since_best = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng_shuffle);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                let rec = &train_ds.records[i];
                let (score, cache) = model.forward_train(&train_x[i], &mut rng_dropout)?;
                let (loss, dloss) = objective.loss_grad(score, rec)?;
                if !loss.is_finite() {
                    return Err(CwmError::Numerical(format!(
                        "training diverged: non-finite loss at epoch {epoch} (record {i})"
                    )));
                }
                loss_sum += loss;
                model.backward_into(&train_x[i], &cache, dloss, &mut grad)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grad {
                *g *= scale;
            }
            adam_step(&mut adam, model.weights_mut(), &grad)?;
        }
        let train_loss = loss_sum / n as f64;

        let val_loss = if val_ds.is_empty() {
            None
        } else {
            let mut sum = 0.0;
            for (i, rec) in val_ds.records.iter().enumerate() {
                let score = model.score(&val_x[i])?;
                sum += objective.loss_grad(score, rec)?.0;
            }
            Some(sum / val_ds.len() as f64)
        };
        let metric = val_loss.unwrap_or(train_loss);
        if !metric.is_finite() {
            return Err(CwmError::Numerical(format!("training diverged: non-finite epoch loss at epoch {epoch}")));
        }

        log_rows.push(EpochStats { epoch, train_loss, val_loss });
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, val loss {}",
            val_loss.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
        );

        if metric < best_metric {
            best_metric = metric;
            best_epoch = epoch;
            best_weights.copy_from_slice(model.weights());
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= cfg.patience {
                log::info!("early stop at epoch {epoch}; best epoch {best_epoch}");
                break;
            }
        }
    }

    model.weights_mut().copy_from_slice(&best_weights);
    Ok((model, TrainLog { epochs: log_rows, best_epoch, best_val_loss: best_metric }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::BackboneKind;
    use crate::records::test_support::{rec, schema_uv};
    use crate::records::Dataset;

    fn one_record_ds() -> Dataset {
        Dataset::new(schema_uv(), vec![rec("u", "v", 0, 30.0, 5.0)]).unwrap()
    }

    fn fast_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            max_epochs: 400,
            patience: 400,
            seed,
            adam: AdamConfig { lr: 0.1, ..AdamConfig::default() },
        }
    }

    #[test]
    fn single_record_vr_interpolates() {
        let ds = one_record_ds();
        let empty = Dataset::with_vocab(ds.schema.clone(), vec![], ds.vocab.clone()).unwrap();
        let (model, log) = train(&ds, &empty, &Objective::Vr, &BackboneConfig::fm(), &fast_cfg(1)).unwrap();
        let x = FeatureVector::from_record(&ds.vocab, &ds.records[0]).unwrap();
        let pred = Objective::Vr.predict_watch_time(model.score(&x).unwrap(), 30.0).unwrap();
        assert!((pred - 5.0).abs() <= 0.1, "prediction {pred} after {} epochs", log.epochs.len());
    }

    #[test]
    fn single_record_vr_interpolates_with_mlp() {
        let ds = one_record_ds();
        let empty = Dataset::with_vocab(ds.schema.clone(), vec![], ds.vocab.clone()).unwrap();
        let mut cfg = fast_cfg(2);
        cfg.max_epochs = 1200;
        cfg.patience = 1200;
        let (model, _) = train(&ds, &empty, &Objective::Vr, &BackboneConfig::mlp(), &cfg).unwrap();
        let x = FeatureVector::from_record(&ds.vocab, &ds.records[0]).unwrap();
        let pred = Objective::Vr.predict_watch_time(model.score(&x).unwrap(), 30.0).unwrap();
        assert!((pred - 5.0).abs() <= 0.1, "prediction {pred}");
    }

    #[test]
    fn same_seed_reproduces_weights_exactly() {
        let records: Vec<_> = (0..40)
            .map(|i| rec(&format!("u{}", i % 5), &format!("v{}", i % 7), i, 30.0, (i % 13) as f64))
            .collect();
        let ds = Dataset::new(schema_uv(), records).unwrap();
        let (tr, va, _) = crate::records::temporal_split(&ds, 30, 35).unwrap();
        for backbone in [BackboneConfig::fm(), BackboneConfig::mlp()] {
            let mut cfg = TrainConfig { max_epochs: 5, seed: 33, ..TrainConfig::default() };
            cfg.batch_size = 16;
            let (m1, l1) = train(&tr, &va, &Objective::Pcr, &backbone, &cfg).unwrap();
            let (m2, l2) = train(&tr, &va, &Objective::Pcr, &backbone, &cfg).unwrap();
            assert_eq!(m1.weights(), m2.weights());
            assert_eq!(l1, l2);
            cfg.seed = 34;
            let (m3, _) = train(&tr, &va, &Objective::Pcr, &backbone, &cfg).unwrap();
            assert_ne!(m1.weights(), m3.weights(), "{:?}", backbone.kind);
        }
    }

    #[test]
    fn best_epoch_attains_minimum_logged_metric() {
        let records: Vec<_> = (0..60)
            .map(|i| rec(&format!("u{}", i % 4), &format!("v{}", i % 6), i, 20.0, (i % 21) as f64))
            .collect();
        let ds = Dataset::new(schema_uv(), records).unwrap();
        let (tr, va, _) = crate::records::temporal_split(&ds, 45, 52).unwrap();
        let cfg = TrainConfig { max_epochs: 30, batch_size: 16, seed: 5, ..TrainConfig::default() };
        let (_, log) = train(&tr, &va, &Objective::Vr, &BackboneConfig::fm(), &cfg).unwrap();
        let min = log.epochs.iter().map(|e| e.val_loss.unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(log.best_val_loss, min);
        let at_best = log.epochs.iter().find(|e| e.epoch == log.best_epoch).unwrap();
        assert_eq!(at_best.val_loss.unwrap(), min);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = one_record_ds();
        let empty = Dataset::with_vocab(ds.schema.clone(), vec![], ds.vocab.clone()).unwrap();
        let cfg = TrainConfig::default();
        assert!(train(&empty, &ds, &Objective::Vr, &BackboneConfig::fm(), &cfg).is_err());
        let unfitted = Objective::Wtg { bin_width_s: 5.0, stats: None };
        assert!(train(&ds, &empty, &unfitted, &BackboneConfig::fm(), &cfg).is_err());
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(train(&ds, &empty, &Objective::Vr, &BackboneConfig::fm(), &bad).is_err());
    }

    #[test]
    fn patience_stops_before_max_epochs() {
        // A constant-label dataset converges immediately; with small
        // patience the loop must stop well short of max_epochs.
        let records: Vec<_> = (0..30).map(|i| rec("u", "v", i, 30.0, 10.0)).collect();
        let ds = Dataset::new(schema_uv(), records).unwrap();
        let (tr, va, _) = crate::records::temporal_split(&ds, 20, 25).unwrap();
        let cfg = TrainConfig { max_epochs: 100, patience: 3, batch_size: 8, seed: 0, adam: AdamConfig { lr: 0.2, ..AdamConfig::default() } };
        let (_, log) = train(&tr, &va, &Objective::Vr, &BackboneConfig::fm(), &cfg).unwrap();
        assert!(log.epochs.len() < 100, "ran {} epochs", log.epochs.len());
        assert_eq!(log.epochs.last().unwrap().epoch - log.best_epoch, 3);
    }

    #[test]
    fn kind_is_preserved() {
        let ds = one_record_ds();
        let empty = Dataset::with_vocab(ds.schema.clone(), vec![], ds.vocab.clone()).unwrap();
        let cfg = TrainConfig { max_epochs: 1, ..TrainConfig::default() };
        let (model, _) = train(&ds, &empty, &Objective::Vr, &BackboneConfig::mlp(), &cfg).unwrap();
        assert_eq!(model.kind(), BackboneKind::Mlp);
    }
}

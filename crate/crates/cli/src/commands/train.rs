//! `cwm train` — fit the configured objective/backbone and write a
//! checkpoint plus a per-epoch loss log.

use serde::Serialize;

use cwm_core::backbone::{train, Checkpoint};
use cwm_core::Result;

use super::{csv_finish, csv_write_row, csv_writer, fmt_f64, fmt_opt, guard_overwrite, load_split};
use crate::config::RunConfig;

/// Printed once training finishes.
#[derive(Debug, Serialize)]
struct TrainSummary {
    checkpoint: String,
    epoch_log: String,
    n_train: usize,
    n_val: usize,
    best_epoch: usize,
    best_val_loss: f64,
}

pub fn run(cfg: &RunConfig, force: bool) -> Result<()> {
    let checkpoint_path = cfg.checkpoint_path();
    let log_path = cfg
        .out_dir
        .join("logs")
        .join(format!("train_{}_{}.csv", cfg.method, cfg.backbone.kind.name()));
    guard_overwrite(&checkpoint_path, force)?;
    guard_overwrite(&log_path, force)?;

    let split = load_split(cfg)?;
    let mut objective = cfg.objective()?;
    objective.fit(&split.train)?;
    log::info!(
        "training {} / {} on {} records (val {}, split at t1={} t2={})",
        cfg.method,
        cfg.backbone.kind.name(),
        split.train.len(),
        split.val.len(),
        split.t1,
        split.t2
    );

    let (model, train_log) = train(&split.train, &split.val, &objective, &cfg.backbone, &cfg.train)?;

    let checkpoint = Checkpoint::from_trained(&model, &split.train.schema, &split.train.vocab, &cfg.train, &objective);
    super::ensure_parent(&checkpoint_path)?;
    checkpoint.save(&checkpoint_path)?;

    let mut writer = csv_writer(&log_path)?;
    csv_write_row(&mut writer, &log_path, &["epoch".into(), "train_loss".into(), "val_loss".into()])?;
    for epoch in &train_log.epochs {
        csv_write_row(
            &mut writer,
            &log_path,
            &[epoch.epoch.to_string(), fmt_f64(epoch.train_loss), fmt_opt(epoch.val_loss)],
        )?;
    }
    csv_finish(writer, &log_path)?;

    let summary = TrainSummary {
        checkpoint: checkpoint_path.display().to_string(),
        epoch_log: log_path.display().to_string(),
        n_train: split.train.len(),
        n_val: split.val.len(),
        best_epoch: train_log.best_epoch,
        best_val_loss: train_log.best_val_loss,
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialize"));
    Ok(())
}

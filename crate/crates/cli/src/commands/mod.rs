//! Command implementations and the filesystem conventions they share.
//!
//! Layout under `out_dir`: `data/` (generated logs), `checkpoints/`,
//! `reports/`, `logs/`. Every writer goes through [`guard_overwrite`], so
//! nothing is clobbered without `--force`, and every file is written in one
//! deterministic pass.

pub mod analyze;
pub mod eval;
pub mod gen;
pub mod predict;
pub mod sweep;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use cwm_core::backbone::{Checkpoint, FeatureVector, Model};
use cwm_core::metrics::DurationBins;
use cwm_core::objective::Objective;
use cwm_core::records::{load_csv, temporal_split, Dataset, PlayRecord};
use cwm_core::{CwmError, Result};

use crate::config::RunConfig;

/// Refuse to overwrite `path` unless `--force` was given.
pub(crate) fn guard_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(CwmError::Config(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

/// Create the parent directory of an output file.
pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| CwmError::Io { path: parent.into(), source })?;
        }
    }
    Ok(())
}

/// Write pretty JSON with a trailing newline (byte-identical across runs).
pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| CwmError::Json { path: path.into(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| CwmError::Io { path: path.into(), source })
}

/// Open a CSV writer at `path`, creating parents.
pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    ensure_parent(path)?;
    csv::Writer::from_path(path).map_err(|source| CwmError::Csv { path: path.into(), source })
}

pub(crate) fn csv_write_row(
    writer: &mut csv::Writer<fs::File>,
    path: &Path,
    row: &[String],
) -> Result<()> {
    writer.write_record(row).map_err(|source| CwmError::Csv { path: path.into(), source })
}

pub(crate) fn csv_finish(mut writer: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    writer.flush().map_err(|source| CwmError::Io { path: path.into(), source })
}

/// Shortest decimal form that round-trips exactly (standard `f64` display).
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Like [`fmt_f64`], with `None` as an empty CSV cell.
pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// The play log named by the config, duration-filtered.
pub(crate) fn load_records(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.records_path();
    let ds = load_csv(&path, &cfg.data.schema)?;
    let lo = cfg.data.min_duration_s.unwrap_or(f64::NEG_INFINITY);
    let hi = cfg.data.max_duration_s.unwrap_or(f64::INFINITY);
    if cfg.data.min_duration_s.is_none() && cfg.data.max_duration_s.is_none() {
        return Ok(ds);
    }
    let records: Vec<PlayRecord> =
        ds.records.into_iter().filter(|r| r.duration_s >= lo && r.duration_s <= hi).collect();
    if records.is_empty() {
        return Err(CwmError::Data(format!(
            "no records left after the duration filter [{lo}, {hi}]"
        )));
    }
    Dataset::new(ds.schema, records)
}

/// Records split into train/val/test by the configured timestamps.
pub(crate) struct SplitData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub t1: i64,
    pub t2: i64,
}

pub(crate) fn load_split(cfg: &RunConfig) -> Result<SplitData> {
    let ds = load_records(cfg)?;
    let (t1, t2) = cfg.split_points(&ds);
    let (train, val, test) = temporal_split(&ds, t1, t2)?;
    Ok(SplitData { train, val, test, t1, t2 })
}

/// A checkpoint restored for scoring.
pub(crate) struct LoadedModel {
    pub checkpoint: Checkpoint,
    pub model: Model,
    pub objective: Objective,
}

pub(crate) fn load_model(path: &Path) -> Result<LoadedModel> {
    let checkpoint = Checkpoint::load(path)?;
    let model = checkpoint.to_model()?;
    let objective = checkpoint.objective_config.clone();
    if !objective.is_fitted() {
        return Err(CwmError::Config(format!(
            "checkpoint {} carries an unfitted {} objective",
            path.display(),
            objective.method_name()
        )));
    }
    Ok(LoadedModel { checkpoint, model, objective })
}

/// Eval-mode scores for every record, encoded with the checkpoint's
/// vocabulary. The schema must match field-for-field.
pub(crate) fn score_dataset(loaded: &LoadedModel, ds: &Dataset) -> Result<Vec<f64>> {
    if ds.schema != loaded.checkpoint.schema {
        return Err(CwmError::Data(format!(
            "schema mismatch: data has fields {:?}, checkpoint expects {:?}",
            ds.schema, loaded.checkpoint.schema
        )));
    }
    ds.records
        .iter()
        .map(|r| {
            let x = FeatureVector::from_record(&loaded.checkpoint.vocab, r)?;
            loaded.model.score(&x)
        })
        .collect()
}

/// Clipped watch-time predictions matching `scores`.
pub(crate) fn predict_watch_times(objective: &Objective, ds: &Dataset, scores: &[f64]) -> Result<Vec<f64>> {
    scores
        .iter()
        .zip(&ds.records)
        .map(|(&s, r)| objective.predict_watch_time(s, r.duration_s))
        .collect()
}

/// Equal-count duration bins over a dataset, per the metrics config.
pub(crate) fn report_bins(cfg: &RunConfig, ds: &Dataset) -> Result<DurationBins> {
    let durations: Vec<f64> = ds.records.iter().map(|r| r.duration_s).collect();
    DurationBins::equal_count(&durations, cfg.metrics.duration_bins)
}

/// `<out_dir>/reports/<name>`.
pub(crate) fn report_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join("reports").join(name)
}

//! `cwm analyze` — dataset and report diagnostics as per-bin CSV tables.
//!
//! Analyses:
//!
//! * `bimodal` — histogram of observed watch time at one fixed duration;
//!   censoring piles mass onto both boundary bins.
//! * `repeat_play` — proportion of records with `w > d` and their mean
//!   excess ratio, per duration bin.
//! * `feedback` — positive like/forward proportion per duration bin under
//!   the configured restriction (default: complete plays only).
//! * `label_check` — the same proportion restricted to records whose
//!   binary interest label is positive; a flat profile means the label is
//!   not leaking duration.
//! * `dist_fit` — at one fixed duration, histograms of observed vs
//!   model-predicted watch time side by side (needs a checkpoint).
//! * `delta_imp` — per-bin relative improvement of one evaluation report
//!   over a reference report.

use std::path::Path;

use cwm_core::metrics::{
    delta_imp, feedback_proportion, repeat_play_stats, EvalReport, InterestLabelConfig, Restriction,
};
use cwm_core::records::Dataset;
use cwm_core::synth::fixed_duration_histogram;
use cwm_core::{CwmError, Result};

use super::{
    csv_finish, csv_write_row, csv_writer, fmt_f64, fmt_opt, guard_overwrite, load_model, load_records,
    predict_watch_times, report_bins, report_path, score_dataset,
};
use crate::config::{RestrictionConfig, RunConfig};

const ANALYSES: [&str; 6] = ["bimodal", "repeat_play", "feedback", "label_check", "dist_fit", "delta_imp"];

pub fn run(cfg: &RunConfig, force: bool) -> Result<()> {
    let name = cfg.analysis.name.as_deref().ok_or_else(|| {
        CwmError::Config(format!("analysis.name is required (one of {})", ANALYSES.join(", ")))
    })?;
    match name {
        "bimodal" => bimodal(cfg, force),
        "repeat_play" => repeat_play(cfg, force),
        "feedback" | "label_check" => feedback(cfg, force, name),
        "dist_fit" => dist_fit(cfg, force),
        "delta_imp" => delta_imp_report(cfg, force),
        other => Err(CwmError::Config(format!(
            "unknown analysis {other:?} (expected one of {})",
            ANALYSES.join(", ")
        ))),
    }
}

/// Open the output CSV for an analysis, honoring the overwrite guard.
fn open_output(cfg: &RunConfig, force: bool, file: &str) -> Result<(csv::Writer<std::fs::File>, std::path::PathBuf)> {
    let path = report_path(cfg, file);
    guard_overwrite(&path, force)?;
    let writer = csv_writer(&path)?;
    Ok((writer, path))
}

fn bimodal(cfg: &RunConfig, force: bool) -> Result<()> {
    let ds = load_records(cfg)?;
    let d = cfg.analysis.fixed_duration_s;
    let n_bins = cfg.analysis.n_bins;
    let counts = fixed_duration_histogram(&ds, d, n_bins)?;
    let (mut writer, path) = open_output(cfg, force, "analysis_bimodal.csv")?;
    csv_write_row(&mut writer, &path, &["bin".into(), "lo".into(), "hi".into(), "count".into()])?;
    for (i, count) in counts.iter().enumerate() {
        let lo = d * i as f64 / n_bins as f64;
        let hi = d * (i + 1) as f64 / n_bins as f64;
        csv_write_row(&mut writer, &path, &[i.to_string(), fmt_f64(lo), fmt_f64(hi), count.to_string()])?;
    }
    csv_finish(writer, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn repeat_play(cfg: &RunConfig, force: bool) -> Result<()> {
    let ds = load_records(cfg)?;
    let bins = report_bins(cfg, &ds)?;
    let rows = repeat_play_stats(&ds, &bins);
    let (mut writer, path) = open_output(cfg, force, "analysis_repeat_play.csv")?;
    csv_write_row(
        &mut writer,
        &path,
        &["bin".into(), "lo".into(), "hi".into(), "n".into(), "repeat_proportion".into(), "mean_excess_ratio".into()],
    )?;
    for row in rows {
        csv_write_row(
            &mut writer,
            &path,
            &[
                row.bin.to_string(),
                fmt_f64(row.lo),
                fmt_f64(row.hi),
                row.n.to_string(),
                fmt_f64(row.repeat_proportion),
                fmt_opt(row.mean_excess_ratio),
            ],
        )?;
    }
    csv_finish(writer, &path)?;
    println!("{}", path.display());
    Ok(())
}

/// `feedback` uses the configured restriction; `label_check` always
/// restricts to label-positive records.
fn feedback(cfg: &RunConfig, force: bool, name: &str) -> Result<()> {
    let ds = load_records(cfg)?;
    let bins = report_bins(cfg, &ds)?;
    let restriction = if name == "label_check" {
        Restriction::InterestLabel(interest_cfg(cfg, &ds)?)
    } else {
        match cfg.analysis.restriction {
            RestrictionConfig::All => Restriction::All,
            RestrictionConfig::CompleteOnly => Restriction::CompleteOnly,
            RestrictionConfig::InterestLabel => Restriction::InterestLabel(interest_cfg(cfg, &ds)?),
        }
    };
    let rows = feedback_proportion(&ds, &bins, &restriction)?;
    let (mut writer, path) = open_output(cfg, force, &format!("analysis_{name}.csv"))?;
    csv_write_row(
        &mut writer,
        &path,
        &["bin".into(), "lo".into(), "hi".into(), "n".into(), "positive_proportion".into()],
    )?;
    for row in rows {
        csv_write_row(
            &mut writer,
            &path,
            &[row.bin.to_string(), fmt_f64(row.lo), fmt_f64(row.hi), row.n.to_string(), fmt_f64(row.positive_proportion)],
        )?;
    }
    csv_finish(writer, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn interest_cfg(cfg: &RunConfig, ds: &Dataset) -> Result<InterestLabelConfig> {
    // Analyses are data diagnostics, so the threshold comes from the data
    // under analysis rather than a training split.
    InterestLabelConfig::fit(ds, cfg.metrics.interest_quantile)
}

fn dist_fit(cfg: &RunConfig, force: bool) -> Result<()> {
    let loaded = load_model(&cfg.checkpoint_path())?;
    let ds = load_records(cfg)?;
    let d = cfg.analysis.fixed_duration_s;
    let n_bins = cfg.analysis.n_bins;
    if n_bins == 0 {
        return Err(CwmError::Config("histogram needs at least one bin".into()));
    }
    let scores = score_dataset(&loaded, &ds)?;
    let preds = predict_watch_times(&loaded.objective, &ds, &scores)?;

    let mut n_true = vec![0u64; n_bins];
    let mut n_pred = vec![0u64; n_bins];
    let mut matched = 0usize;
    let bin_of = |w: f64| ((w / d * n_bins as f64).floor() as usize).min(n_bins - 1);
    for (i, r) in ds.records.iter().enumerate() {
        if (r.duration_s - d).abs() > 1e-9 {
            continue;
        }
        matched += 1;
        n_true[bin_of(r.watch_time_s)] += 1;
        n_pred[bin_of(preds[i])] += 1;
    }
    if matched == 0 {
        return Err(CwmError::Data(format!("no records with duration {d} to histogram")));
    }

    let method = loaded.objective.method_name();
    let backbone = loaded.checkpoint.backbone.kind.name();
    let (mut writer, path) = open_output(cfg, force, &format!("analysis_dist_fit_{method}_{backbone}.csv"))?;
    csv_write_row(
        &mut writer,
        &path,
        &["bin".into(), "lo".into(), "hi".into(), "n_true".into(), "n_predicted".into()],
    )?;
    for i in 0..n_bins {
        let lo = d * i as f64 / n_bins as f64;
        let hi = d * (i + 1) as f64 / n_bins as f64;
        csv_write_row(
            &mut writer,
            &path,
            &[i.to_string(), fmt_f64(lo), fmt_f64(hi), n_true[i].to_string(), n_pred[i].to_string()],
        )?;
    }
    csv_finish(writer, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn load_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|source| CwmError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CwmError::Json { path: path.into(), source })
}

fn delta_imp_report(cfg: &RunConfig, force: bool) -> Result<()> {
    let report_p = cfg
        .analysis
        .report
        .as_deref()
        .ok_or_else(|| CwmError::Config("analysis.report is required for delta_imp".into()))?;
    let baseline_p = cfg
        .analysis
        .baseline_report
        .as_deref()
        .ok_or_else(|| CwmError::Config("analysis.baseline_report is required for delta_imp".into()))?;
    let method = load_report(report_p)?;
    let baseline = load_report(baseline_p)?;
    if method.bins.len() != baseline.bins.len()
        || method
            .bins
            .iter()
            .zip(&baseline.bins)
            .any(|(a, b)| a.bin != b.bin || a.lo != b.lo || a.hi != b.hi)
    {
        return Err(CwmError::Data(format!(
            "reports {} and {} use different duration bins",
            report_p.display(),
            baseline_p.display()
        )));
    }

    let (mut writer, path) = open_output(cfg, force, "analysis_delta_imp.csv")?;
    csv_write_row(
        &mut writer,
        &path,
        &[
            "bin".into(),
            "lo".into(),
            "hi".into(),
            "n".into(),
            "mae_method".into(),
            "mae_baseline".into(),
            "delta_imp_mae".into(),
            "xauc_method".into(),
            "xauc_baseline".into(),
            "delta_imp_xauc".into(),
        ],
    )?;
    for (a, b) in method.bins.iter().zip(&baseline.bins) {
        let dmae = delta_imp(a.mae, b.mae)?;
        let dxauc = match (a.xauc, b.xauc) {
            (Some(x), Some(y)) => Some(delta_imp(x, y)?),
            _ => None,
        };
        csv_write_row(
            &mut writer,
            &path,
            &[
                a.bin.to_string(),
                fmt_f64(a.lo),
                fmt_f64(a.hi),
                a.n.to_string(),
                fmt_f64(a.mae),
                fmt_f64(b.mae),
                fmt_f64(dmae),
                fmt_opt(a.xauc),
                fmt_opt(b.xauc),
                fmt_opt(dxauc),
            ],
        )?;
    }
    // Whole-split summary row.
    csv_write_row(
        &mut writer,
        &path,
        &[
            "overall".into(),
            String::new(),
            String::new(),
            method.n_records.to_string(),
            fmt_f64(method.mae),
            fmt_f64(baseline.mae),
            fmt_f64(delta_imp(method.mae, baseline.mae)?),
            fmt_f64(method.xauc),
            fmt_f64(baseline.xauc),
            fmt_f64(delta_imp(method.xauc, baseline.xauc)?),
        ],
    )?;
    csv_finish(writer, &path)?;
    println!("{}", path.display());
    Ok(())
}

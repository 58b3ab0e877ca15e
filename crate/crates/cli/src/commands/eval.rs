//! `cwm eval` — score a split with a checkpoint and write the evaluation
//! report (summary JSON plus a per-duration-bin CSV).
//!
//! Watch-time quality (MAE, XAUC) is measured on each objective's clipped
//! inverse-transform predictions; ranking quality (AUC, nDCG) on the raw
//! scores against binary interest labels whose threshold `w_q` is fitted on
//! the training split only.

use cwm_core::metrics::{evaluate, EvalReport, InterestLabelConfig};
use cwm_core::records::Dataset;
use cwm_core::Result;

use super::{
    csv_finish, csv_write_row, csv_writer, fmt_f64, fmt_opt, guard_overwrite, load_model, load_split, predict_watch_times,
    report_bins, report_path, score_dataset,
};
use crate::config::{RunConfig, Split};

/// Pick the records named by `metrics.split`.
fn select_split(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let split = load_split(cfg)?;
    let chosen = match cfg.metrics.split {
        Split::Train => split.train.clone(),
        Split::Val => split.val,
        Split::Test => split.test,
        Split::All => {
            let mut records = split.train.records.clone();
            records.extend(split.val.records);
            records.extend(split.test.records);
            Dataset::with_vocab(split.train.schema.clone(), records, split.train.vocab.clone())?
        }
    };
    Ok((split.train, chosen))
}

pub fn run(cfg: &RunConfig, force: bool) -> Result<()> {
    let loaded = load_model(&cfg.checkpoint_path())?;
    let method = loaded.objective.method_name();
    let backbone = loaded.checkpoint.backbone.kind.name();
    let split_name = cfg.metrics.split.name();
    let json_path = report_path(cfg, &format!("eval_{method}_{backbone}_{split_name}.json"));
    let bins_path = report_path(cfg, &format!("eval_{method}_{backbone}_{split_name}_bins.csv"));
    guard_overwrite(&json_path, force)?;
    guard_overwrite(&bins_path, force)?;

    let (train, eval_ds) = select_split(cfg)?;
    let label_cfg = InterestLabelConfig::fit(&train, cfg.metrics.interest_quantile)?;

    let scores = score_dataset(&loaded, &eval_ds)?;
    let preds = predict_watch_times(&loaded.objective, &eval_ds, &scores)?;
    let bins = report_bins(cfg, &eval_ds)?;
    let report = evaluate(
        method,
        backbone,
        &eval_ds,
        &scores,
        &preds,
        &label_cfg,
        cfg.metrics.ndcg_k,
        cfg.metrics.xauc.to_mode(cfg.seed),
        &bins,
    )?;

    super::write_json(&report, &json_path)?;
    write_bins_csv(&report, &bins_path)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serialize"));
    Ok(())
}

fn write_bins_csv(report: &EvalReport, path: &std::path::Path) -> Result<()> {
    let mut writer = csv_writer(path)?;
    csv_write_row(
        &mut writer,
        path,
        &["bin".into(), "lo".into(), "hi".into(), "n".into(), "mae".into(), "xauc".into()],
    )?;
    for row in &report.bins {
        csv_write_row(
            &mut writer,
            path,
            &[
                row.bin.to_string(),
                fmt_f64(row.lo),
                fmt_f64(row.hi),
                row.n.to_string(),
                fmt_f64(row.mae),
                fmt_opt(row.xauc),
            ],
        )?;
    }
    csv_finish(writer, path)
}

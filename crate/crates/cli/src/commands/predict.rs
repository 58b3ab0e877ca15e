//! `cwm predict` — per-record scores and predictions as CSV.
//!
//! Columns: the raw model score, the interest estimate `r_hat = Phi(score)`,
//! and the objective's inverse-transformed watch-time prediction clipped to
//! `[0, duration]`. Predictions cover the whole (duration-filtered) file, in
//! input order.

use cwm_core::transform::normal_cdf;
use cwm_core::Result;

use super::{
    csv_finish, csv_write_row, csv_writer, fmt_f64, guard_overwrite, load_model, load_records, predict_watch_times,
    report_path, score_dataset,
};
use crate::config::RunConfig;

pub fn run(cfg: &RunConfig, force: bool) -> Result<()> {
    let loaded = load_model(&cfg.checkpoint_path())?;
    let method = loaded.objective.method_name();
    let backbone = loaded.checkpoint.backbone.kind.name();
    let path = report_path(cfg, &format!("predictions_{method}_{backbone}.csv"));
    guard_overwrite(&path, force)?;

    let ds = load_records(cfg)?;
    let scores = score_dataset(&loaded, &ds)?;
    let preds = predict_watch_times(&loaded.objective, &ds, &scores)?;

    let mut writer = csv_writer(&path)?;
    csv_write_row(
        &mut writer,
        &path,
        &[
            "record_index".into(),
            "user_id".into(),
            "video_id".into(),
            "duration_s".into(),
            "score".into(),
            "r_hat".into(),
            "watch_time_hat".into(),
        ],
    )?;
    for (i, r) in ds.records.iter().enumerate() {
        csv_write_row(
            &mut writer,
            &path,
            &[
                i.to_string(),
                r.user_id.clone(),
                r.video_id.clone(),
                fmt_f64(r.duration_s),
                fmt_f64(scores[i]),
                fmt_f64(normal_cdf(scores[i])),
                fmt_f64(preds[i]),
            ],
        )?;
    }
    csv_finish(writer, &path)?;
    log::info!("wrote {} predictions to {}", ds.len(), path.display());
    println!("{}", path.display());
    Ok(())
}

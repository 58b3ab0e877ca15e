//! `cwm sweep` — train the likelihood objective over a (cost_c, sigma)
//! grid and report validation metrics per cell.
//!
//! Each cell retrains from the same master seed, so cells differ only in
//! the objective parameters. Rows carry the mean validation loss alongside
//! MAE/XAUC/AUC/nDCG, sorted by (cost_c, sigma).

use cwm_core::backbone::{train, FeatureVector};
use cwm_core::metrics::{auc, interest_label, mae, ndcg_at_k, xauc, InterestLabelConfig};
use cwm_core::objective::Objective;
use cwm_core::records::Dataset;
use cwm_core::transform::CostParams;
use cwm_core::{CwmError, Result};

use super::{csv_finish, csv_write_row, csv_writer, fmt_f64, guard_overwrite, load_split, report_path};
use crate::config::RunConfig;

struct SweepRow {
    cost_c: f64,
    sigma: f64,
    val_loss: f64,
    mae: f64,
    xauc: f64,
    auc: f64,
    ndcg: f64,
}

pub fn run(cfg: &RunConfig, force: bool) -> Result<()> {
    if cfg.sweep.cost_c.is_empty() || cfg.sweep.sigma.is_empty() {
        return Err(CwmError::Config("sweep grid is empty: both cost_c and sigma need values".into()));
    }
    let path = report_path(cfg, "sweep.csv");
    guard_overwrite(&path, force)?;

    let split = load_split(cfg)?;
    if split.val.is_empty() {
        return Err(CwmError::Config("sweep needs a non-empty validation split".into()));
    }
    let label_cfg = InterestLabelConfig::fit(&split.train, cfg.metrics.interest_quantile)?;

    // Deterministic row order: the grid is sorted up front.
    let mut grid: Vec<(f64, f64)> = Vec::new();
    for &c in &cfg.sweep.cost_c {
        for &s in &cfg.sweep.sigma {
            if !(c.is_finite() && s.is_finite()) {
                return Err(CwmError::Config(format!("sweep grid values must be finite, got ({c}, {s})")));
            }
            grid.push((c, s));
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite by construction"));
    grid.dedup();

    let mut rows = Vec::new();
    for (cost_c, sigma) in grid {
        let params = CostParams::new(cost_c, sigma)?;
        let objective = Objective::Cwm { params, phi: cfg.phi };
        log::info!("sweep cell cost_c={cost_c} sigma={sigma}");
        let (model, _) = train(&split.train, &split.val, &objective, &cfg.backbone, &cfg.train)?;

        let mut scores = Vec::with_capacity(split.val.len());
        let mut loss_sum = 0.0;
        for r in &split.val.records {
            let x = FeatureVector::from_record(&split.train.vocab, r)?;
            let score = model.score(&x)?;
            loss_sum += objective.loss_grad(score, r)?.0;
            scores.push(score);
        }
        let preds: Vec<f64> = scores
            .iter()
            .zip(&split.val.records)
            .map(|(&s, r)| objective.predict_watch_time(s, r.duration_s))
            .collect::<Result<_>>()?;
        rows.push(eval_cell(&split.val, cost_c, sigma, loss_sum / split.val.len() as f64, &scores, &preds, &label_cfg, cfg)?);
    }

    let mut writer = csv_writer(&path)?;
    csv_write_row(
        &mut writer,
        &path,
        &["cost_c".into(), "sigma".into(), "val_loss".into(), "mae".into(), "xauc".into(), "auc".into(), "ndcg".into()],
    )?;
    for row in &rows {
        csv_write_row(
            &mut writer,
            &path,
            &[
                fmt_f64(row.cost_c),
                fmt_f64(row.sigma),
                fmt_f64(row.val_loss),
                fmt_f64(row.mae),
                fmt_f64(row.xauc),
                fmt_f64(row.auc),
                fmt_f64(row.ndcg),
            ],
        )?;
    }
    csv_finish(writer, &path)?;
    println!("{}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval_cell(
    val: &Dataset,
    cost_c: f64,
    sigma: f64,
    val_loss: f64,
    scores: &[f64],
    preds: &[f64],
    label_cfg: &InterestLabelConfig,
    cfg: &RunConfig,
) -> Result<SweepRow> {
    let truths: Vec<f64> = val.records.iter().map(|r| r.watch_time_s).collect();
    let labels: Vec<bool> = val.records.iter().map(|r| interest_label(r, label_cfg)).collect();
    let mut by_user: std::collections::BTreeMap<&str, Vec<(f64, f64)>> = Default::default();
    for (i, r) in val.records.iter().enumerate() {
        by_user.entry(r.user_id.as_str()).or_default().push((scores[i], if labels[i] { 1.0 } else { 0.0 }));
    }
    let users: Vec<Vec<(f64, f64)>> = by_user.into_values().collect();
    Ok(SweepRow {
        cost_c,
        sigma,
        val_loss,
        mae: mae(preds, &truths)?,
        xauc: xauc(preds, &truths, cfg.metrics.xauc.to_mode(cfg.seed))?,
        auc: auc(scores, &labels)?,
        ndcg: ndcg_at_k(&users, cfg.metrics.ndcg_k)?,
    })
}

//! Training objectives and their inverse transforms.
//!
//! The primary objective is the censored Gaussian likelihood of the watch
//! model: incomplete plays contribute a squared error against the probit
//! label of the observed watch time, complete plays contribute the log
//! probability that the latent watch intent reached beyond the video's end:
//!
//! ```text
//! w < d:   (g'(w;c) - f)^2 / (2 sigma^2)
//! w >= d:  -ln Phi((f - g'(d;c)) / sigma)
//! ```
//!
//! (negated per-record log-likelihood, constant terms dropped). Repeat-play
//! records (`w > d`) fall in the censored branch: the model is defined on
//! `min(w, d)`, and rewatching is evidence of intent beyond the duration,
//! not a separately modeled outcome. The two branches are intentionally
//! different functions at `w = d` — censoring is a genuine discontinuity of
//! the likelihood, not something to smooth over.
//!
//! `Phi` in the censored branch may be the exact cdf or the classic
//! logistic approximation `sigmoid(1.702 z)` (good to ~0.0095 absolute);
//! the probit labels themselves always use the exact quantile.
//!
//! The four baselines are label correctors trained with plain MSE: value
//! regression (raw watch time), play-completion rate, per-duration-bin
//! z-scores ("watch-time gain"), and per-duration-group empirical quantiles.
//! Each carries the inverse transform used to turn a trained score back
//! into a watch-time prediction, clipped into `[0, d]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CwmError, Result};
use crate::records::{Dataset, PlayRecord};
use crate::transform::{self, CostParams};

/// Scale of the logistic approximation to the normal cdf.
pub const SIGMOID_K: f64 = 1.702;
/// Default duration-bin width for the watch-time-gain baseline, seconds.
pub const WTG_DEFAULT_BIN_WIDTH_S: f64 = 5.0;
/// Default duration-group count for the quantile baseline.
pub const D2Q_DEFAULT_GROUPS: usize = 60;

/// How the censored branch evaluates the normal cdf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiMode {
    /// Exact erf-based cdf (default; preferred for testing and analysis).
    Exact,
    /// `Phi(z) ~ sigmoid(k z)`; `k = 1.702` reproduces the classic
    /// logistic-probit correspondence.
    Sigmoid { k: f64 },
}

impl Default for PhiMode {
    fn default() -> Self {
        PhiMode::Exact
    }
}

impl PhiMode {
    /// The sigmoid mode at its canonical scale.
    pub fn sigmoid_default() -> Self {
        PhiMode::Sigmoid { k: SIGMOID_K }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Censored-likelihood loss and gradient for one record at score `f`.
///
/// Returns `(loss, dloss/df)`. Errors on a non-finite score (upstream
/// divergence) rather than propagating NaN into the optimizer.
pub fn cwm_loss(score: f64, rec: &PlayRecord, params: &CostParams, mode: PhiMode) -> Result<(f64, f64)> {
    if !score.is_finite() {
        return Err(CwmError::Numerical(format!("cwm loss got non-finite score {score}")));
    }
    let (c, sigma) = (params.cost_c, params.sigma);
    let (w, d) = (rec.watch_time_s, rec.duration_s);
    if w < d {
        let gp = transform::probit_label(w, c);
        let resid = score - gp;
        Ok((resid * resid / (2.0 * sigma * sigma), resid / (sigma * sigma)))
    } else {
        let gp = transform::probit_label(d, c);
        let z = (score - gp) / sigma;
        match mode {
            PhiMode::Exact => Ok((-transform::ln_normal_cdf(z), -transform::mills_ratio(z) / sigma)),
            PhiMode::Sigmoid { k } => Ok((softplus(-k * z), -k * sigmoid(-k * z) / sigma)),
        }
    }
}

/// Squared-error loss for corrected labels: `((s-t)^2/2, s-t)`.
pub fn mse_loss(score: f64, target: f64) -> (f64, f64) {
    let resid = score - target;
    (resid * resid / 2.0, resid)
}

/// Value regression target: the observed watch time itself.
pub fn vr_target(rec: &PlayRecord) -> f64 {
    rec.watch_time_s
}

/// Value regression inverse: clip the raw prediction into `[0, d]`.
pub fn vr_inverse(pred: f64, d: f64) -> f64 {
    pred.clamp(0.0, d)
}

/// Play-completion-rate label: `min(w/d, 1)`.
pub fn pcr_label(rec: &PlayRecord) -> f64 {
    (rec.watch_time_s / rec.duration_s).min(1.0)
}

/// Play-completion-rate inverse: `clip(pred * d, 0, d)`.
pub fn pcr_inverse(pred: f64, d: f64) -> f64 {
    (pred * d).clamp(0.0, d)
}

/// Per-duration-bin watch-time statistics for the z-score baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtgStats {
    /// Bin width in seconds; bin index is `floor(d / width)`.
    pub bin_width_s: f64,
    bins: BTreeMap<i64, WtgBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtgBin {
    pub mean: f64,
    /// Population standard deviation, floored at 1e-6.
    pub std: f64,
    pub count: u64,
}

impl WtgStats {
    /// Fit per-bin means and standard deviations on the training split.
    pub fn fit(train: &Dataset, bin_width_s: f64) -> Result<WtgStats> {
        if !(bin_width_s.is_finite() && bin_width_s > 0.0) {
            return Err(CwmError::Config(format!("wtg bin width must be positive, got {bin_width_s}")));
        }
        if train.is_empty() {
            return Err(CwmError::Data("cannot fit wtg statistics on an empty dataset".into()));
        }
        let mut acc: BTreeMap<i64, (f64, f64, u64)> = BTreeMap::new();
        for r in &train.records {
            let bin = (r.duration_s / bin_width_s).floor() as i64;
            let e = acc.entry(bin).or_insert((0.0, 0.0, 0));
            e.0 += r.watch_time_s;
            e.2 += 1;
        }
        // Second pass for a numerically stable variance.
        let means: BTreeMap<i64, f64> = acc.iter().map(|(&b, &(sum, _, n))| (b, sum / n as f64)).collect();
        for r in &train.records {
            let bin = (r.duration_s / bin_width_s).floor() as i64;
            let dev = r.watch_time_s - means[&bin];
            acc.get_mut(&bin).unwrap().1 += dev * dev;
        }
        let bins = acc
            .into_iter()
            .map(|(b, (sum, ssq, n))| {
                let mean = sum / n as f64;
                let std = (ssq / n as f64).sqrt().max(1e-6);
                (b, WtgBin { mean, std, count: n })
            })
            .collect();
        Ok(WtgStats { bin_width_s, bins })
    }

    /// Statistics for the bin containing duration `d`; durations outside
    /// every fitted bin fall back to the nearest fitted bin.
    pub fn lookup(&self, d: f64) -> &WtgBin {
        let bin = (d / self.bin_width_s).floor() as i64;
        if let Some(b) = self.bins.get(&bin) {
            return b;
        }
        // Nearest fitted bin; ties resolve to the lower bin.
        let below = self.bins.range(..=bin).next_back();
        let above = self.bins.range(bin..).next();
        match (below, above) {
            (Some((bl, vl)), Some((ba, va))) => {
                if (bin - bl) <= (ba - bin) {
                    vl
                } else {
                    va
                }
            }
            (Some((_, v)), None) | (None, Some((_, v))) => v,
            (None, None) => unreachable!("fitted WtgStats always has at least one bin"),
        }
    }
}

/// Watch-time-gain label: the z-score of `w` within its duration bin.
pub fn wtg_label(rec: &PlayRecord, stats: &WtgStats) -> f64 {
    let bin = stats.lookup(rec.duration_s);
    (rec.watch_time_s - bin.mean) / bin.std
}

/// Watch-time-gain inverse: un-z-score and clip into `[0, d]`.
pub fn wtg_inverse(pred: f64, d: f64, stats: &WtgStats) -> f64 {
    let bin = stats.lookup(d);
    (pred * bin.std + bin.mean).clamp(0.0, d)
}

/// Equal-frequency duration groups with per-group sorted watch times, for
/// the quantile baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D2qTables {
    /// Internal cut points (strictly increasing duration values); group of
    /// `d` = number of cuts strictly below `d`.
    cuts: Vec<f64>,
    /// Sorted watch times per group, in cut order.
    groups: Vec<Vec<f64>>,
}

impl D2qTables {
    /// Fit `group_count` equal-frequency duration groups on the training
    /// split. Heavily duplicated durations collapse cuts, so the effective
    /// group count may be smaller (one group per distinct duration at the
    /// limit).
    pub fn fit(train: &Dataset, group_count: usize) -> Result<D2qTables> {
        if group_count == 0 {
            return Err(CwmError::Config("d2q group count must be at least 1".into()));
        }
        if train.is_empty() {
            return Err(CwmError::Data("cannot fit d2q tables on an empty dataset".into()));
        }
        let mut durations: Vec<f64> = train.records.iter().map(|r| r.duration_s).collect();
        durations.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = durations.len();
        let max_d = durations[n - 1];
        let mut cuts: Vec<f64> = Vec::new();
        for j in 1..group_count {
            // Nearest-rank quantile at j/group_count.
            let idx = ((j * n).div_ceil(group_count)).max(1) - 1;
            let cut = durations[idx];
            if cut < max_d && cuts.last() != Some(&cut) {
                cuts.push(cut);
            }
        }
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); cuts.len() + 1];
        for r in &train.records {
            let g = cuts.partition_point(|c| *c < r.duration_s);
            groups[g].push(r.watch_time_s);
        }
        for g in &mut groups {
            g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        debug_assert!(groups.iter().all(|g| !g.is_empty()));
        Ok(D2qTables { cuts, groups })
    }

    fn group_of(&self, d: f64) -> &[f64] {
        &self.groups[self.cuts.partition_point(|c| *c < d)]
    }

    /// Number of (non-empty) duration groups.
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }
}

/// Quantile label: midpoint empirical-cdf rank of `w` within its duration
/// group, `(#below + 0.5 #equal) / n`.
pub fn d2q_label(rec: &PlayRecord, tables: &D2qTables) -> f64 {
    let ws = tables.group_of(rec.duration_s);
    let n = ws.len() as f64;
    let below = ws.partition_point(|&x| x < rec.watch_time_s) as f64;
    let not_above = ws.partition_point(|&x| x <= rec.watch_time_s) as f64;
    (below + 0.5 * (not_above - below)) / n
}

/// Quantile inverse: linearly interpolated empirical quantile of the
/// record's duration group at rank `pred`, clipped into `[0, d]`. Inverts
/// [`d2q_label`] exactly for watch times present in the group.
pub fn d2q_inverse(pred: f64, d: f64, tables: &D2qTables) -> f64 {
    let ws = tables.group_of(d);
    let n = ws.len();
    let h = (pred * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let i = h.floor() as usize;
    let value = if i + 1 < n {
        let frac = h - i as f64;
        ws[i] * (1.0 - frac) + ws[i + 1] * frac
    } else {
        ws[n - 1]
    };
    value.clamp(0.0, d)
}

/// A training objective: the censored likelihood or one of the four
/// label-correction baselines, with its fitted statistics.
///
/// `Wtg` and `D2q` must be [`fit`](Objective::fit) on the training split
/// before evaluating losses or inverses; the fitted statistics are
/// serialized into checkpoints so evaluation does not refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Objective {
    /// Censored counterfactual likelihood.
    Cwm {
        params: CostParams,
        #[serde(default)]
        phi: PhiMode,
    },
    /// Value regression on raw watch time.
    Vr,
    /// Play-completion-rate regression.
    Pcr,
    /// Per-duration-bin z-score regression.
    Wtg {
        bin_width_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stats: Option<WtgStats>,
    },
    /// Per-duration-group quantile regression.
    D2q {
        group_count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tables: Option<D2qTables>,
    },
}

impl Objective {
    /// Short lowercase method name, used in file names and reports.
    pub fn method_name(&self) -> &'static str {
        match self {
            Objective::Cwm { .. } => "cwm",
            Objective::Vr => "vr",
            Objective::Pcr => "pcr",
            Objective::Wtg { .. } => "wtg",
            Objective::D2q { .. } => "d2q",
        }
    }

    /// Fit label statistics on the training split (no-op for objectives
    /// without fitted state).
    pub fn fit(&mut self, train: &Dataset) -> Result<()> {
        match self {
            Objective::Wtg { bin_width_s, stats } => {
                *stats = Some(WtgStats::fit(train, *bin_width_s)?);
            }
            Objective::D2q { group_count, tables } => {
                *tables = Some(D2qTables::fit(train, *group_count)?);
            }
            Objective::Cwm { .. } | Objective::Vr | Objective::Pcr => {}
        }
        Ok(())
    }

    /// Whether all required statistics are present.
    pub fn is_fitted(&self) -> bool {
        match self {
            Objective::Wtg { stats, .. } => stats.is_some(),
            Objective::D2q { tables, .. } => tables.is_some(),
            _ => true,
        }
    }

    fn unfitted(&self) -> CwmError {
        CwmError::Config(format!("objective {} used before fitting its statistics", self.method_name()))
    }

    /// Corrected regression target for baseline objectives. Errors for the
    /// likelihood objective (which has no single target) and for unfitted
    /// statistics.
    pub fn label(&self, rec: &PlayRecord) -> Result<f64> {
        match self {
            Objective::Cwm { .. } => Err(CwmError::Config("the censored likelihood has no scalar label".into())),
            Objective::Vr => Ok(vr_target(rec)),
            Objective::Pcr => Ok(pcr_label(rec)),
            Objective::Wtg { stats, .. } => Ok(wtg_label(rec, stats.as_ref().ok_or_else(|| self.unfitted())?)),
            Objective::D2q { tables, .. } => Ok(d2q_label(rec, tables.as_ref().ok_or_else(|| self.unfitted())?)),
        }
    }

    /// Per-record loss and d(loss)/d(score) at the given score.
    pub fn loss_grad(&self, score: f64, rec: &PlayRecord) -> Result<(f64, f64)> {
        match self {
            Objective::Cwm { params, phi } => cwm_loss(score, rec, params, *phi),
            _ => Ok(mse_loss(score, self.label(rec)?)),
        }
    }

    /// Watch-time prediction from a trained score, via this objective's
    /// inverse transform, clipped into `[0, d]`.
    pub fn predict_watch_time(&self, score: f64, d: f64) -> Result<f64> {
        match self {
            Objective::Cwm { params, .. } => Ok(transform::predict_watch_time(score, params.cost_c, d)),
            Objective::Vr => Ok(vr_inverse(score, d)),
            Objective::Pcr => Ok(pcr_inverse(score, d)),
            Objective::Wtg { stats, .. } => Ok(wtg_inverse(score, d, stats.as_ref().ok_or_else(|| self.unfitted())?)),
            Objective::D2q { tables, .. } => Ok(d2q_inverse(score, d, tables.as_ref().ok_or_else(|| self.unfitted())?)),
        }
    }
}

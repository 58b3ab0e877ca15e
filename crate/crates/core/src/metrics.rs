//! Evaluation: error metrics, ranking metrics, interest labels, and the
//! grouped analyses used in reports.
//!
//! Watch-time accuracy is measured with MAE and XAUC on clipped predictions;
//! ranking quality with AUC and nDCG@k against binary interest labels. The
//! interest label calls a record positive when a short video was watched to
//! the end or a long one was watched past the train-split quantile
//! threshold:
//!
//! ```text
//! label = 1  iff  (d <= w_q and w >= d)  or  (d > w_q and w > w_q)
//! ```
//!
//! with `w_q` the q-quantile (default 0.7) of observed watch time, fitted on
//! the training split so evaluation never sees test statistics. Everything
//! here is a pure function; sampled XAUC takes its own seed and is
//! deterministic for a given one.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CwmError, Result};
use crate::records::{Dataset, PlayRecord};
use crate::rng::{substream, STREAM_XAUC};

/// Default nDCG cutoff.
pub const DEFAULT_NDCG_K: usize = 3;
/// Default interest-label quantile.
pub const DEFAULT_INTEREST_QUANTILE: f64 = 0.7;
/// Default duration-bin count for grouped analyses.
pub const DEFAULT_DURATION_BINS: usize = 10;

/// Mean absolute error.
pub fn mae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(CwmError::Data(format!("mae length mismatch: {} vs {}", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(CwmError::Data("mae of empty vectors is undefined".into()));
    }
    Ok(preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

/// How XAUC enumerates record pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum XaucMode {
    /// All unordered pairs with distinct truths.
    Exhaustive,
    /// `n_pairs` pairs drawn uniformly with replacement from those pairs.
    Sampled { n_pairs: usize, seed: u64 },
}

fn pair_score(pi: f64, pj: f64, ti: f64, tj: f64) -> f64 {
    debug_assert!(ti != tj);
    if pi == pj {
        0.5
    } else if (pi < pj) == (ti < tj) {
        1.0
    } else {
        0.0
    }
}

/// Fraction of record pairs whose predicted watch times are ordered like
/// their true watch times (prediction ties count 0.5; pairs with equal
/// truths are not comparable and are excluded).
pub fn xauc(preds: &[f64], truths: &[f64], mode: XaucMode) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(CwmError::Data(format!("xauc length mismatch: {} vs {}", preds.len(), truths.len())));
    }
    let n = preds.len();
    if n < 2 {
        return Err(CwmError::Data(format!("xauc needs at least 2 records, got {n}")));
    }
    if truths.iter().all(|t| *t == truths[0]) {
        return Err(CwmError::Data("xauc is undefined when all true watch times are identical".into()));
    }
    match mode {
        XaucMode::Exhaustive => {
            let mut sum = 0.0;
            let mut pairs = 0u64;
            for i in 0..n {
                for j in i + 1..n {
                    if truths[i] == truths[j] {
                        continue;
                    }
                    pairs += 1;
                    sum += pair_score(preds[i], preds[j], truths[i], truths[j]);
                }
            }
            Ok(sum / pairs as f64)
        }
        XaucMode::Sampled { n_pairs, seed } => {
            if n_pairs == 0 {
                return Err(CwmError::Config("sampled xauc needs n_pairs >= 1".into()));
            }
            let mut rng = substream(seed, STREAM_XAUC);
            let mut sum = 0.0;
            let mut accepted = 0usize;
            let max_attempts = 100 * n_pairs as u64 + 1000;
            let mut attempts = 0u64;
            while accepted < n_pairs {
                attempts += 1;
                if attempts > max_attempts {
                    return Err(CwmError::Data(
                        "sampled xauc could not find enough comparable pairs (truths nearly constant)".into(),
                    ));
                }
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                if i == j || truths[i] == truths[j] {
                    continue;
                }
                accepted += 1;
                sum += pair_score(preds[i], preds[j], truths[i], truths[j]);
            }
            Ok(sum / n_pairs as f64)
        }
    }
}

/// Probability a random positive outranks a random negative (Mann-Whitney
/// with average ranks; score ties count 0.5).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(CwmError::Data(format!("auc length mismatch: {} vs {}", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CwmError::Data(format!(
            "auc needs both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("auc scores must not contain NaN"));
    // Average ranks over tie groups; ranks are 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1..=j
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    Ok((rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64))
}

/// Mean nDCG@k over users, with gain `2^label - 1` and discount
/// `1/log2(rank+1)`. Score ties keep their original order (stable sort);
/// users without a positive label are excluded from the mean.
pub fn ndcg_at_k(users: &[Vec<(f64, f64)>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(CwmError::Config("ndcg needs k >= 1".into()));
    }
    let mut total = 0.0;
    let mut included = 0usize;
    for items in users {
        if !items.iter().any(|(_, label)| *label > 0.0) {
            continue;
        }
        included += 1;
        let gain = |label: f64| 2f64.powf(label) - 1.0;
        let discount = |rank0: usize| 1.0 / ((rank0 + 2) as f64).log2();

        let mut by_score: Vec<usize> = (0..items.len()).collect();
        by_score.sort_by(|&a, &b| items[b].0.partial_cmp(&items[a].0).expect("ndcg scores must not contain NaN"));
        let dcg: f64 = by_score.iter().take(k).enumerate().map(|(pos, &i)| gain(items[i].1) * discount(pos)).sum();

        let mut ideal: Vec<f64> = items.iter().map(|(_, l)| *l).collect();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let idcg: f64 = ideal.iter().take(k).enumerate().map(|(pos, &l)| gain(l) * discount(pos)).sum();
        total += dcg / idcg;
    }
    if included == 0 {
        return Err(CwmError::Data("ndcg has no users with a positive label".into()));
    }
    Ok(total / included as f64)
}

/// Relative improvement over a reference value: `(v_m - v_0) / v_0`.
pub fn delta_imp(v_method: f64, v_reference: f64) -> Result<f64> {
    if v_reference == 0.0 {
        return Err(CwmError::Data("delta imp is undefined for a zero reference value".into()));
    }
    Ok((v_method - v_reference) / v_reference)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CwmError::Data(format!("spearman length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(CwmError::Data("spearman needs at least 2 points".into()));
    }
    let ra = average_ranks(a)?;
    let rb = average_ranks(b)?;
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for i in 0..ra.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(CwmError::Data("spearman is undefined for a constant vector".into()));
    }
    // `(va * vb).sqrt()` keeps perfect correlations at exactly +/-1.0.
    Ok(cov / (va * vb).sqrt())
}

fn average_ranks(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(CwmError::Data("ranks are undefined with NaN values".into()));
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    Ok(ranks)
}

/// Binary interest label threshold, fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterestLabelConfig {
    /// Quantile of observed watch time defining the threshold.
    pub quantile: f64,
    /// The fitted threshold, seconds.
    pub w_q: f64,
}

impl InterestLabelConfig {
    /// Fit `w_q` as the nearest-rank `quantile` of watch time on `train`.
    pub fn fit(train: &Dataset, quantile: f64) -> Result<InterestLabelConfig> {
        if !(quantile > 0.0 && quantile < 1.0) {
            return Err(CwmError::Config(format!("interest quantile must be in (0, 1), got {quantile}")));
        }
        if train.is_empty() {
            return Err(CwmError::Data("cannot fit an interest threshold on an empty dataset".into()));
        }
        let mut ws: Vec<f64> = train.records.iter().map(|r| r.watch_time_s).collect();
        ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = (quantile * ws.len() as f64).ceil() as usize; // 1-based nearest rank
        let w_q = ws[rank.clamp(1, ws.len()) - 1];
        if w_q <= 0.0 {
            return Err(CwmError::Data(format!(
                "interest threshold at quantile {quantile} is {w_q}; watch times are too concentrated at zero"
            )));
        }
        Ok(InterestLabelConfig { quantile, w_q })
    }
}

/// Binary interest: short videos count when completely played, long ones
/// when watched beyond the threshold.
pub fn interest_label(rec: &PlayRecord, cfg: &InterestLabelConfig) -> bool {
    if rec.duration_s <= cfg.w_q {
        rec.watch_time_s >= rec.duration_s
    } else {
        rec.watch_time_s > cfg.w_q
    }
}

/// Half-open duration bins `[edge_i, edge_{i+1})`, last bin closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationBins {
    /// Strictly increasing edges; bin count = `edges.len() - 1`.
    pub edges: Vec<f64>,
}

impl DurationBins {
    /// Equal-count bins from observed durations. Interior edges snap to the
    /// boundary between distinct values nearest each quantile rank and sit at
    /// the midpoint of the two values, so a duration never straddles an edge;
    /// heavy duplication collapses edges and yields fewer bins.
    pub fn equal_count(durations: &[f64], n_bins: usize) -> Result<DurationBins> {
        if n_bins == 0 {
            return Err(CwmError::Config("duration binning needs at least one bin".into()));
        }
        if durations.is_empty() {
            return Err(CwmError::Data("cannot bin an empty duration list".into()));
        }
        let mut sorted = durations.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        // Ranks where the sorted list steps to a new distinct value.
        let steps: Vec<usize> = (1..n).filter(|&i| sorted[i] > sorted[i - 1]).collect();
        let mut edges = vec![sorted[0]];
        let mut last_step = usize::MAX;
        for j in 1..n_bins {
            if steps.is_empty() {
                break; // all durations identical: a single degenerate bin
            }
            let target = (j * n) as f64 / n_bins as f64;
            let hi = steps.partition_point(|&s| (s as f64) < target).min(steps.len() - 1);
            let lo = hi.saturating_sub(1);
            let k = if (steps[lo] as f64 - target).abs() <= (steps[hi] as f64 - target).abs() {
                lo
            } else {
                hi
            };
            if k != last_step {
                last_step = k;
                let s = steps[k];
                edges.push((sorted[s - 1] + sorted[s]) / 2.0);
            }
        }
        edges.push(sorted[n - 1]);
        Ok(DurationBins { edges })
    }

    /// `n_bins` equal-width bins over `[lo, hi]`.
    pub fn equal_width(lo: f64, hi: f64, n_bins: usize) -> Result<DurationBins> {
        if n_bins == 0 {
            return Err(CwmError::Config("duration binning needs at least one bin".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CwmError::Config(format!("invalid duration range [{lo}, {hi}]")));
        }
        let width = (hi - lo) / n_bins as f64;
        let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + i as f64 * width).collect();
        edges.push(hi);
        Ok(DurationBins { edges })
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin index for a duration, clamped into range.
    pub fn index_of(&self, d: f64) -> usize {
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|e| *e <= d)
    }

    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        (self.edges[bin], self.edges[bin + 1])
    }
}

/// Per-duration-bin repeat-play statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatPlayRow {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// Fraction of records with `w > d`.
    pub repeat_proportion: f64,
    /// Mean of `(w - d)/d` over repeat plays; absent when the bin has none.
    pub mean_excess_ratio: Option<f64>,
}

/// Repeat-play proportion and excess ratio per duration bin; empty bins are
/// omitted.
pub fn repeat_play_stats(ds: &Dataset, bins: &DurationBins) -> Vec<RepeatPlayRow> {
    let nb = bins.n_bins();
    let mut count = vec![0usize; nb];
    let mut repeats = vec![0usize; nb];
    let mut excess = vec![0.0f64; nb];
    for r in &ds.records {
        let b = bins.index_of(r.duration_s);
        count[b] += 1;
        if r.repeat_play() {
            repeats[b] += 1;
            excess[b] += (r.watch_time_s - r.duration_s) / r.duration_s;
        }
    }
    (0..nb)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let (lo, hi) = bins.bounds(b);
            RepeatPlayRow {
                bin: b,
                lo,
                hi,
                n: count[b],
                repeat_proportion: repeats[b] as f64 / count[b] as f64,
                mean_excess_ratio: (repeats[b] > 0).then(|| excess[b] / repeats[b] as f64),
            }
        })
        .collect()
}

/// Which records enter a feedback-proportion analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Restriction {
    All,
    /// Only completely played records.
    CompleteOnly,
    /// Only records with interest label 1.
    InterestLabel(InterestLabelConfig),
}

/// Per-duration-bin positive-feedback proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRow {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    /// Records in the bin after the restriction.
    pub n: usize,
    /// Fraction of those with a like or forward flag set.
    pub positive_proportion: f64,
}

/// Fraction of restricted records with explicit positive feedback, per
/// duration bin. Errors if any record lacks feedback flags; bins with no
/// restricted records are omitted.
pub fn feedback_proportion(ds: &Dataset, bins: &DurationBins, restrict: &Restriction) -> Result<Vec<FeedbackRow>> {
    let nb = bins.n_bins();
    let mut count = vec![0usize; nb];
    let mut positive = vec![0usize; nb];
    for r in &ds.records {
        let (like, forward) = match (r.like_flag, r.forward_flag) {
            (Some(l), Some(f)) => (l, f),
            _ => {
                return Err(CwmError::Data(
                    "feedback analysis requires like/forward columns on every record".into(),
                ))
            }
        };
        let keep = match restrict {
            Restriction::All => true,
            Restriction::CompleteOnly => r.complete(),
            Restriction::InterestLabel(cfg) => interest_label(r, cfg),
        };
        if !keep {
            continue;
        }
        let b = bins.index_of(r.duration_s);
        count[b] += 1;
        if like || forward {
            positive[b] += 1;
        }
    }
    Ok((0..nb)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let (lo, hi) = bins.bounds(b);
            FeedbackRow { bin: b, lo, hi, n: count[b], positive_proportion: positive[b] as f64 / count[b] as f64 }
        })
        .collect())
}

/// One duration bin of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub mae: f64,
    /// Absent when the bin is too small or its truths are constant.
    pub xauc: Option<f64>,
}

/// Full evaluation of one method on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub backbone: String,
    pub n_records: usize,
    /// MAE of clipped watch-time predictions, seconds.
    pub mae: f64,
    /// Pairwise watch-time ordering accuracy of the predictions.
    pub xauc: f64,
    /// Interest-ranking AUC of the raw scores.
    pub auc: f64,
    /// Mean nDCG@k of the raw scores, grouped by user.
    pub ndcg: f64,
    pub ndcg_k: usize,
    /// Interest threshold used for AUC/nDCG labels, seconds.
    pub w_q: f64,
    pub bins: Vec<BinRow>,
}

/// Compute the full report: MAE/XAUC on watch-time predictions, AUC/nDCG on
/// raw scores against interest labels, plus per-duration-bin breakdowns.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    method: &str,
    backbone: &str,
    ds: &Dataset,
    scores: &[f64],
    preds: &[f64],
    label_cfg: &InterestLabelConfig,
    ndcg_k: usize,
    xauc_mode: XaucMode,
    bins: &DurationBins,
) -> Result<EvalReport> {
    if scores.len() != ds.len() || preds.len() != ds.len() {
        return Err(CwmError::Data(format!(
            "evaluation arrays ({} scores, {} predictions) do not match the dataset ({} records)",
            scores.len(),
            preds.len(),
            ds.len()
        )));
    }
    let truths: Vec<f64> = ds.records.iter().map(|r| r.watch_time_s).collect();
    let labels: Vec<bool> = ds.records.iter().map(|r| interest_label(r, label_cfg)).collect();

    let mae_all = mae(preds, &truths)?;
    let xauc_all = xauc(preds, &truths, xauc_mode)?;
    let auc_all = auc(scores, &labels)?;

    let mut by_user: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, r) in ds.records.iter().enumerate() {
        by_user.entry(r.user_id.as_str()).or_default().push((scores[i], if labels[i] { 1.0 } else { 0.0 }));
    }
    let users: Vec<Vec<(f64, f64)>> = by_user.into_values().collect();
    let ndcg = ndcg_at_k(&users, ndcg_k)?;

    let mut rows = Vec::new();
    for b in 0..bins.n_bins() {
        let idx: Vec<usize> = (0..ds.len()).filter(|&i| bins.index_of(ds.records[i].duration_s) == b).collect();
        if idx.is_empty() {
            continue;
        }
        let bp: Vec<f64> = idx.iter().map(|&i| preds[i]).collect();
        let bt: Vec<f64> = idx.iter().map(|&i| truths[i]).collect();
        let (lo, hi) = bins.bounds(b);
        // Bin-level XAUC is always exhaustive: bins are small and a fixed
        // global sample would be spread too thin.
        let bin_xauc = if idx.len() >= 2 { xauc(&bp, &bt, XaucMode::Exhaustive).ok() } else { None };
        rows.push(BinRow { bin: b, lo, hi, n: idx.len(), mae: mae(&bp, &bt)?, xauc: bin_xauc });
    }

    Ok(EvalReport {
        method: method.to_string(),
        backbone: backbone.to_string(),
        n_records: ds.len(),
        mae: mae_all,
        xauc: xauc_all,
        auc: auc_all,
        ndcg,
        ndcg_k,
        w_q: label_cfg.w_q,
        bins: rows,
    })
}

//! Generative oracle for watch-time logs with known ground truth.
//!
//! The generator samples exactly the model the censored likelihood assumes,
//! so recovery experiments are well-specified:
//!
//! ```text
//! z  ~ Normal(f_true(x), sigma_true^2)      r   = Phi(z)
//! wc = 1/(-c_true ln r) - 1                 w   = clip(wc, 0, d)
//! ```
//!
//! `f_true` is a small random model from the same families as the learner
//! (FM by default; an MLP truth is available for misspecification studies).
//! Durations are drawn from a weighted categorical list, timestamps are the
//! record index, and optional like/forward flags are Bernoulli(r²) — a
//! deliberately simple monotone-in-interest choice so feedback analyses
//! have something to find.
//!
//! The module also carries the economic watching model the transform is
//! derived from: `utility(t) = ln(t+1)/(-ln r) - c t`, whose grid argmax is
//! checked against the closed form `wc` — an independent verification that
//! the transform really is the utility maximizer.
//!
//! Repeat play is not generated: the model truncates at the duration.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneKind, FeatureVector, FmParams, Model, MlpParams};
use crate::error::{CwmError, Result};
use crate::records::{Dataset, PlayRecord};
use crate::rng::{substream, STREAM_SYNTH};
use crate::transform::{self, CostParams};

fn default_n_users() -> usize {
    500
}
fn default_n_videos() -> usize {
    300
}
fn default_n_records() -> usize {
    20_000
}
fn default_true_embedding_dim() -> usize {
    4
}
fn default_durations() -> Vec<f64> {
    vec![30.0, 60.0, 120.0, 240.0, 400.0]
}
fn default_weights() -> Vec<f64> {
    vec![0.2; 5]
}
fn default_true_cost_c() -> f64 {
    CostParams::default().cost_c
}
fn default_true_sigma() -> f64 {
    CostParams::default().sigma
}
fn default_truth_backbone() -> BackboneKind {
    BackboneKind::Fm
}
fn default_truth_linear_std() -> f64 {
    1.0
}
fn default_truth_emb_std() -> f64 {
    0.25
}
fn default_with_feedback() -> bool {
    true
}

/// Generator configuration. The `truth_*` knobs control the location and
/// spread of true scores, which in turn set the complete ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_n_users")]
    pub n_users: usize,
    #[serde(default = "default_n_videos")]
    pub n_videos: usize,
    #[serde(default = "default_n_records")]
    pub n_records: usize,
    /// Embedding dimension of the ground-truth model.
    #[serde(default = "default_true_embedding_dim")]
    pub true_embedding_dim: usize,
    /// Categorical duration support, seconds.
    #[serde(default = "default_durations")]
    pub durations_s: Vec<f64>,
    /// Sampling weight per duration (normalized internally).
    #[serde(default = "default_weights")]
    pub duration_weights: Vec<f64>,
    #[serde(default = "default_true_cost_c")]
    pub true_cost_c: f64,
    #[serde(default = "default_true_sigma")]
    pub true_sigma: f64,
    /// Family of the ground-truth scorer.
    #[serde(default = "default_truth_backbone")]
    pub truth_backbone: BackboneKind,
    /// Mean shift of true scores; more negative means less interest and a
    /// lower complete ratio.
    #[serde(default)]
    pub truth_bias: f64,
    /// Scale of the truth's per-category linear weights (FM truth).
    #[serde(default = "default_truth_linear_std")]
    pub truth_linear_std: f64,
    /// Scale of the truth's embedding entries (and, for an MLP truth, all
    /// its dense weights).
    #[serde(default = "default_truth_emb_std")]
    pub truth_emb_std: f64,
    /// Emit like/forward flags drawn as Bernoulli(r²).
    #[serde(default = "default_with_feedback")]
    pub with_feedback: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all SynthConfig fields have defaults")
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_videos == 0 || self.n_records == 0 {
            return Err(CwmError::Config("synth counts must all be positive".into()));
        }
        if self.true_embedding_dim == 0 {
            return Err(CwmError::Config("true embedding dimension must be at least 1".into()));
        }
        if self.durations_s.is_empty() {
            return Err(CwmError::Config("synth requires at least one duration".into()));
        }
        if self.durations_s.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(CwmError::Config(format!("synth durations must be positive and finite: {:?}", self.durations_s)));
        }
        if self.duration_weights.len() != self.durations_s.len() {
            return Err(CwmError::Config(format!(
                "{} duration weights for {} durations",
                self.duration_weights.len(),
                self.durations_s.len()
            )));
        }
        if self.duration_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.duration_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(CwmError::Config(format!(
                "duration weights must be non-negative with positive sum: {:?}",
                self.duration_weights
            )));
        }
        if !(self.true_cost_c.is_finite() && self.true_cost_c > 0.0) {
            return Err(CwmError::Config(format!("true cost must be positive, got {}", self.true_cost_c)));
        }
        if !(self.true_sigma.is_finite() && self.true_sigma > 0.0) {
            return Err(CwmError::Config(format!("true sigma must be positive, got {}", self.true_sigma)));
        }
        if !(self.truth_linear_std >= 0.0 && self.truth_emb_std >= 0.0 && self.truth_bias.is_finite()) {
            return Err(CwmError::Config("truth scales must be non-negative and finite".into()));
        }
        Ok(())
    }
}

/// Named generator configurations used throughout tests and demos.
///
/// - `mild_censoring`: long-video mix, complete ratio tuned to ~0.175.
/// - `heavy_censoring`: short-video mix, complete ratio tuned to ~0.455.
/// - `bimodal`: one 30 s duration with a broad score spread, so the
///   observed watch-time histogram piles up at both boundaries.
///
/// The censoring pair shrinks the entity universe to 100 users x 60 videos
/// so 20k records give production-like density (hundreds of plays per
/// entity); the biases were Monte-Carlo tuned to hit the complete-ratio
/// targets under that shape.
pub fn preset(name: &str) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    match name {
        "mild_censoring" => {
            cfg.durations_s = vec![30.0, 60.0, 120.0, 240.0, 400.0];
            cfg.duration_weights = vec![0.2; 5];
            cfg.truth_bias = -1.54;
            cfg.true_sigma = 1.5;
            cfg.n_users = 100;
            cfg.n_videos = 60;
        }
        "heavy_censoring" => {
            cfg.durations_s = vec![5.0, 10.0, 15.0, 30.0, 60.0];
            cfg.duration_weights = vec![0.2; 5];
            cfg.truth_bias = -1.62;
            cfg.true_sigma = 1.5;
            cfg.n_users = 100;
            cfg.n_videos = 60;
        }
        "bimodal" => {
            cfg.n_records = 12_000;
            cfg.durations_s = vec![30.0];
            cfg.duration_weights = vec![1.0];
            cfg.true_cost_c = 0.2;
            cfg.truth_bias = -1.0;
            cfg.truth_linear_std = 0.3;
            cfg.truth_emb_std = 0.1;
        }
        other => {
            return Err(CwmError::Config(format!(
                "unknown synth preset {other:?} (expected mild_censoring, heavy_censoring, or bimodal)"
            )))
        }
    }
    Ok(cfg)
}

/// Per-record ground truth aligned with the generated dataset, plus the
/// generating model itself.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub true_score: Vec<f64>,
    pub true_r: Vec<f64>,
    pub true_cwt: Vec<f64>,
    pub model: Model,
}

fn truth_model(cfg: &SynthConfig, rng: &mut rand_chacha::ChaCha12Rng) -> Model {
    let cards = vec![cfg.n_users, cfg.n_videos];
    match cfg.truth_backbone {
        BackboneKind::Fm => Model::Fm(FmParams::init_scaled(
            &cards,
            cfg.true_embedding_dim,
            cfg.truth_bias,
            cfg.truth_linear_std,
            cfg.truth_emb_std,
            rng,
        )),
        BackboneKind::Mlp => {
            // Misspecification truth: a dropout-free MLP with all dense
            // weights at the embedding scale and the bias on the output.
            let mut p = MlpParams::init(&cards, cfg.true_embedding_dim, 16, 0.0, rng);
            let scale = cfg.truth_emb_std / crate::backbone::INIT_STD;
            for w in &mut p.weights {
                *w *= scale;
            }
            let b2 = p.weights.len() - 1;
            p.weights[b2] = cfg.truth_bias;
            Model::Mlp(p)
        }
    }
}

/// Sample a dataset and its aligned ground truth.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, STREAM_SYNTH);
    let model = truth_model(cfg, &mut rng);
    let sampler = WeightedIndex::new(&cfg.duration_weights)
        .map_err(|e| CwmError::Config(format!("invalid duration weights: {e}")))?;

    let n = cfg.n_records;
    let mut records = Vec::with_capacity(n);
    let mut true_score = Vec::with_capacity(n);
    let mut true_r = Vec::with_capacity(n);
    let mut true_cwt = Vec::with_capacity(n);

    for i in 0..n {
        let u = rng.gen_range(0..cfg.n_users);
        let v = rng.gen_range(0..cfg.n_videos);
        let d = cfg.durations_s[sampler.sample(&mut rng)];
        let x = FeatureVector { indices: vec![u, v] };
        let f = model.score(&x)?;
        let z = f + cfg.true_sigma * rng.sample::<f64, _>(StandardNormal);
        let r = transform::normal_cdf(z);
        // CWT straight from ln Phi(z): stays exact where Phi(z) rounds to 1.
        let ln_r = transform::ln_normal_cdf(z);
        let wc = if ln_r == 0.0 { f64::INFINITY } else { 1.0 / (-cfg.true_cost_c * ln_r) - 1.0 };
        let w = wc.clamp(0.0, d);
        debug_assert_eq!(w, wc.max(0.0).min(d));

        let (like, forward) = if cfg.with_feedback {
            let p = r * r;
            (Some(rng.gen::<f64>() < p), Some(rng.gen::<f64>() < p))
        } else {
            (None, None)
        };
        records.push(PlayRecord {
            user_id: format!("u{u}"),
            video_id: format!("v{v}"),
            timestamp: i as i64,
            duration_s: d,
            watch_time_s: w,
            features: vec![format!("u{u}"), format!("v{v}")],
            like_flag: like,
            forward_flag: forward,
        });
        true_score.push(f);
        true_r.push(r);
        true_cwt.push(wc);
    }

    let schema = vec!["user".to_string(), "video".to_string()];
    let ds = Dataset::new(schema, records)?;
    Ok((ds, GroundTruth { true_score, true_r, true_cwt, model }))
}

/// Expected watching utility after `t` seconds at interest `r` and
/// per-second cost `c`: `ln(t+1)/(-ln r) - c t`.
pub fn utility(t: f64, r: f64, c: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(CwmError::Config(format!("utility needs t >= 0, got {t}")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(CwmError::Config(format!("utility needs interest in (0, 1), got {r}")));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(CwmError::Config(format!("utility needs a positive cost, got {c}")));
    }
    Ok(t.ln_1p() / (-r.ln()) - c * t)
}

/// Grid argmax of [`utility`] over `t in {0, step, 2 step, ... <= t_max}`.
///
/// An independent numerical check of the closed-form maximizer
/// `cwt_from_interest`; warns if the maximum sits on the grid boundary
/// (grid too short to bracket it).
pub fn argmax_utility(r: f64, c: f64, t_max: f64, step: f64) -> Result<f64> {
    if !(step.is_finite() && step > 0.0) {
        return Err(CwmError::Config(format!("argmax grid step must be positive, got {step}")));
    }
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(CwmError::Config(format!("argmax grid end must be non-negative, got {t_max}")));
    }
    let n_steps = (t_max / step).floor() as u64;
    let mut best_t = 0.0;
    let mut best_u = utility(0.0, r, c)?;
    for k in 1..=n_steps {
        let t = k as f64 * step;
        let u = utility(t, r, c)?;
        if u > best_u {
            best_u = u;
            best_t = t;
        }
    }
    if n_steps > 0 && best_t == n_steps as f64 * step {
        log::warn!("utility argmax hit the grid boundary at t_max={t_max}; increase the grid");
    }
    Ok(best_t)
}

/// Histogram of observed watch time over `[0, d]` for records whose
/// duration equals `d` (tolerance 1e-9). The first and last bins include
/// the boundary masses at 0 and `d`.
pub fn fixed_duration_histogram(ds: &Dataset, d: f64, n_bins: usize) -> Result<Vec<u64>> {
    if n_bins == 0 {
        return Err(CwmError::Config("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0u64; n_bins];
    let mut matched = 0usize;
    for r in &ds.records {
        if (r.duration_s - d).abs() > 1e-9 {
            continue;
        }
        matched += 1;
        let bin = ((r.watch_time_s / d * n_bins as f64).floor() as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    if matched == 0 {
        return Err(CwmError::Data(format!("no records with duration {d} to histogram")));
    }
    Ok(counts)
}

/// Write the ground-truth sidecar CSV: `record_index,true_score,true_r,true_cwt`.
pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|source| CwmError::Csv { path: path.into(), source })?;
    writer
        .write_record(["record_index", "true_score", "true_r", "true_cwt"])
        .map_err(|source| CwmError::Csv { path: path.into(), source })?;
    for i in 0..gt.true_score.len() {
        writer
            .write_record([
                i.to_string(),
                gt.true_score[i].to_string(),
                gt.true_r[i].to_string(),
                gt.true_cwt[i].to_string(),
            ])
            .map_err(|source| CwmError::Csv { path: path.into(), source })?;
    }
    writer.flush().map_err(|source| CwmError::Io { path: path.into(), source })?;
    Ok(())
}

/// Read a ground-truth sidecar back as `(true_score, true_r, true_cwt)`
/// columns, ordered by record index.
pub fn load_ground_truth(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| CwmError::Csv { path: path.into(), source })?;
    let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|source| CwmError::Csv { path: path.into(), source })?;
        let field = |j: usize| -> Result<&str> {
            rec.get(j).ok_or_else(|| CwmError::Data(format!("{}: row {} is missing column {j}", path.display(), i + 2)))
        };
        let parse = |j: usize| -> Result<f64> {
            field(j)?.parse().map_err(|_| {
                CwmError::Data(format!("{}: row {}: cannot parse {:?} as a number", path.display(), i + 2, rec.get(j).unwrap_or("")))
            })
        };
        let idx: usize = field(0)?
            .parse()
            .map_err(|_| CwmError::Data(format!("{}: row {}: bad record index", path.display(), i + 2)))?;
        rows.push((idx, parse(1)?, parse(2)?, parse(3)?));
    }
    if rows.is_empty() {
        return Err(CwmError::Data(format!("{}: ground-truth file has no rows", path.display())));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(CwmError::Data(format!("{}: record_index column is not 0..n", path.display())));
    }
    let mut score = Vec::with_capacity(rows.len());
    let mut r_col = Vec::with_capacity(rows.len());
    let mut cwt = Vec::with_capacity(rows.len());
    for (_, s, r, w) in rows {
        score.push(s);
        r_col.push(r);
        cwt.push(w);
    }
    Ok((score, r_col, cwt))
}

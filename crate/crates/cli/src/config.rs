//! Run configuration: one JSON document drives every command.
//!
//! Each field has a default, so an empty document (or no `--config` at all)
//! is a complete, runnable experiment. `--set dotted.key=value` rewrites
//! individual keys in the parsed JSON before deserialization, and `--seed`
//! overrides the master seed, which is then copied into the training and
//! generator sub-configurations so that one number controls all randomness.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use cwm_core::backbone::{BackboneConfig, TrainConfig};
use cwm_core::metrics::{XaucMode, DEFAULT_DURATION_BINS, DEFAULT_INTEREST_QUANTILE, DEFAULT_NDCG_K};
use cwm_core::objective::{Objective, PhiMode, D2Q_DEFAULT_GROUPS, WTG_DEFAULT_BIN_WIDTH_S};
use cwm_core::records::Dataset;
use cwm_core::synth::SynthConfig;
use cwm_core::transform::CostParams;
use cwm_core::{CwmError, Result};

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_schema() -> Vec<String> {
    vec!["user_id".to_string(), "video_id".to_string()]
}
fn default_method() -> String {
    "cwm".to_string()
}
fn default_backbone() -> BackboneConfig {
    BackboneConfig::fm()
}
fn default_wtg_bin_width() -> f64 {
    WTG_DEFAULT_BIN_WIDTH_S
}
fn default_d2q_groups() -> usize {
    D2Q_DEFAULT_GROUPS
}
fn default_ndcg_k() -> usize {
    DEFAULT_NDCG_K
}
fn default_interest_quantile() -> f64 {
    DEFAULT_INTEREST_QUANTILE
}
fn default_duration_bins() -> usize {
    DEFAULT_DURATION_BINS
}
fn default_sampled_pairs() -> usize {
    1_000_000
}
fn default_fixed_duration() -> f64 {
    30.0
}
fn default_histogram_bins() -> usize {
    20
}
fn default_grid_cost() -> Vec<f64> {
    vec![CostParams::default().cost_c]
}
fn default_grid_sigma() -> Vec<f64> {
    vec![CostParams::default().sigma]
}

/// Where records live and how they are filtered and split.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Play-log CSV; defaults to the `gen` output under `out_dir`.
    #[serde(default)]
    pub records: Option<PathBuf>,
    /// Categorical feature columns, in model field order.
    #[serde(default = "default_schema")]
    pub schema: Vec<String>,
    /// Records with `timestamp < split_t1` train; `< split_t2` validate;
    /// the rest test. Defaults: the 80th / 90th percentile timestamps.
    #[serde(default)]
    pub split_t1: Option<i64>,
    #[serde(default)]
    pub split_t2: Option<i64>,
    /// Optional duration window; records outside it are dropped on load.
    #[serde(default)]
    pub min_duration_s: Option<f64>,
    #[serde(default)]
    pub max_duration_s: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            records: None,
            schema: default_schema(),
            split_t1: None,
            split_t2: None,
            min_duration_s: None,
            max_duration_s: None,
        }
    }
}

/// XAUC pair enumeration, minus the seed (which flows from the master seed).
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum XaucConfig {
    Exhaustive,
    Sampled {
        #[serde(default = "default_sampled_pairs")]
        n_pairs: usize,
    },
}

impl XaucConfig {
    pub fn to_mode(self, seed: u64) -> XaucMode {
        match self {
            XaucConfig::Exhaustive => XaucMode::Exhaustive,
            XaucConfig::Sampled { n_pairs } => XaucMode::Sampled { n_pairs, seed },
        }
    }
}

/// Which temporal split a command reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    All,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::All => "all",
        }
    }
}

/// Evaluation knobs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_ndcg_k")]
    pub ndcg_k: usize,
    /// Watch-time quantile defining the interest threshold `w_q`.
    #[serde(default = "default_interest_quantile")]
    pub interest_quantile: f64,
    /// Equal-count duration bins in reports.
    #[serde(default = "default_duration_bins")]
    pub duration_bins: usize,
    #[serde(default = "default_xauc_config")]
    pub xauc: XaucConfig,
    /// Split evaluated by `eval`.
    #[serde(default = "default_eval_split")]
    pub split: Split,
}

fn default_xauc_config() -> XaucConfig {
    XaucConfig::Exhaustive
}
fn default_eval_split() -> Split {
    Split::Test
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            ndcg_k: default_ndcg_k(),
            interest_quantile: default_interest_quantile(),
            duration_bins: default_duration_bins(),
            xauc: default_xauc_config(),
            split: default_eval_split(),
        }
    }
}

/// Which records a feedback analysis keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionConfig {
    All,
    CompleteOnly,
    InterestLabel,
}

/// Inputs for `analyze`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// One of: bimodal, repeat_play, feedback, label_check, dist_fit,
    /// delta_imp.
    #[serde(default)]
    pub name: Option<String>,
    /// Duration selected by the fixed-duration analyses, seconds.
    #[serde(default = "default_fixed_duration")]
    pub fixed_duration_s: f64,
    /// Histogram resolution for the fixed-duration analyses.
    #[serde(default = "default_histogram_bins")]
    pub n_bins: usize,
    /// Restriction for the `feedback` analysis.
    #[serde(default = "default_restriction")]
    pub restriction: RestrictionConfig,
    /// Evaluation report under comparison (delta_imp).
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Reference report (delta_imp denominators).
    #[serde(default)]
    pub baseline_report: Option<PathBuf>,
}

fn default_restriction() -> RestrictionConfig {
    RestrictionConfig::CompleteOnly
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            name: None,
            fixed_duration_s: default_fixed_duration(),
            n_bins: default_histogram_bins(),
            restriction: default_restriction(),
            report: None,
            baseline_report: None,
        }
    }
}

/// Grid for `sweep`; the default is the 1x1 grid at the default parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_grid_cost")]
    pub cost_c: Vec<f64>,
    #[serde(default = "default_grid_sigma")]
    pub sigma: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { cost_c: default_grid_cost(), sigma: default_grid_sigma() }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Checkpoint path; defaults to
    /// `<out_dir>/checkpoints/<method>_<backbone>.json`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Training objective: cwm, vr, pcr, wtg, or d2q.
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_backbone")]
    pub backbone: BackboneConfig,
    /// Cost/noise parameters of the likelihood objective.
    #[serde(default)]
    pub cost: CostParams,
    /// Gaussian-tail mode inside the likelihood.
    #[serde(default)]
    pub phi: PhiMode,
    /// Duration-bin width for the wtg objective, seconds.
    #[serde(default = "default_wtg_bin_width")]
    pub wtg_bin_width_s: f64,
    /// Duration-group count for the d2q objective.
    #[serde(default = "default_d2q_groups")]
    pub d2q_groups: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Generator settings for `gen`.
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Master seed; all sub-streams derive from it.
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all RunConfig fields have defaults")
    }
}

impl RunConfig {
    /// Load from an optional file, apply `--set` overrides and the `--seed`
    /// flag, propagate the master seed, and validate.
    pub fn load(path: Option<&Path>, seed: Option<u64>, sets: &[String]) -> Result<RunConfig> {
        let mut value: serde_json::Value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| CwmError::Io { path: p.into(), source })?;
                serde_json::from_str(&text).map_err(|source| CwmError::Json { path: p.into(), source })?
            }
            None => serde_json::Value::Object(Default::default()),
        };
        for set in sets {
            apply_set(&mut value, set)?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CwmError::Config(format!("invalid configuration: {e}")))?;
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        // One master seed; nested seeds are not independent knobs.
        cfg.train.seed = cfg.seed;
        cfg.synth.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        const METHODS: [&str; 5] = ["cwm", "vr", "pcr", "wtg", "d2q"];
        if !METHODS.contains(&self.method.as_str()) {
            return Err(CwmError::Config(format!(
                "unknown method {:?} (expected one of {})",
                self.method,
                METHODS.join(", ")
            )));
        }
        self.backbone.validate()?;
        CostParams::new(self.cost.cost_c, self.cost.sigma)?;
        self.train.validate()?;
        if self.data.schema.is_empty() {
            return Err(CwmError::Config("data.schema needs at least one feature field".into()));
        }
        if let (Some(lo), Some(hi)) = (self.data.min_duration_s, self.data.max_duration_s) {
            if lo > hi {
                return Err(CwmError::Config(format!("duration filter is empty: min {lo} > max {hi}")));
            }
        }
        if !(self.metrics.interest_quantile > 0.0 && self.metrics.interest_quantile < 1.0) {
            return Err(CwmError::Config(format!(
                "metrics.interest_quantile must be in (0, 1), got {}",
                self.metrics.interest_quantile
            )));
        }
        if self.metrics.duration_bins == 0 {
            return Err(CwmError::Config("metrics.duration_bins must be at least 1".into()));
        }
        Ok(())
    }

    /// The play-log CSV this run reads.
    pub fn records_path(&self) -> PathBuf {
        self.data.records.clone().unwrap_or_else(|| self.out_dir.join("data").join("synthetic.csv"))
    }

    /// The checkpoint this run writes or reads.
    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("checkpoints").join(format!("{}_{}.json", self.method, self.backbone.kind.name())))
    }

    /// Assemble the configured objective (statistics unfitted).
    pub fn objective(&self) -> Result<Objective> {
        Ok(match self.method.as_str() {
            "cwm" => Objective::Cwm { params: self.cost, phi: self.phi },
            "vr" => Objective::Vr,
            "pcr" => Objective::Pcr,
            "wtg" => Objective::Wtg { bin_width_s: self.wtg_bin_width_s, stats: None },
            "d2q" => Objective::D2q { group_count: self.d2q_groups, tables: None },
            other => return Err(CwmError::Config(format!("unknown method {other:?}"))),
        })
    }

    /// Split timestamps, defaulting to the 80th/90th percentiles.
    pub fn split_points(&self, ds: &Dataset) -> (i64, i64) {
        let mut ts: Vec<i64> = ds.records.iter().map(|r| r.timestamp).collect();
        ts.sort_unstable();
        let q = |f: f64| ts[((ts.len() as f64 * f) as usize).min(ts.len() - 1)];
        let t1 = self.data.split_t1.unwrap_or_else(|| q(0.8));
        let t2 = self.data.split_t2.unwrap_or_else(|| q(0.9));
        (t1, t2)
    }
}

/// Apply one `dotted.key=value` override to a JSON tree, creating objects
/// along the path as needed.
fn apply_set(root: &mut serde_json::Value, set: &str) -> Result<()> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| CwmError::Config(format!("--set expects dotted.key=value, got {set:?}")))?;
    if key.is_empty() {
        return Err(CwmError::Config(format!("--set key is empty in {set:?}")));
    }
    // Values that parse as JSON keep their type; anything else is a string.
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let object = node
            .as_object_mut()
            .ok_or_else(|| CwmError::Config(format!("--set {key}: {} is not an object", segments[..i].join("."))))?;
        if i + 1 == segments.len() {
            object.insert(segment.to_string(), value);
            break;
        }
        node = object.entry(segment.to_string()).or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

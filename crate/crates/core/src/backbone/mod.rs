//! Scoring backbones over categorical features.
//!
//! Records are encoded as one dense vocab index per feature field (a sparse
//! one-hot). Two backbones share that encoding: a second-order factorization
//! machine and a single-hidden-layer MLP over concatenated embeddings. Both
//! keep their parameters in a single flat `Vec<f64>` with a documented
//! layout, so the optimizer, checkpoints, and gradient checks all operate on
//! plain slices. Backpropagation is analytic and hand-written; finite
//! differences are used only in tests, as the oracle.

pub mod adam;
pub mod checkpoint;
pub mod fm;
pub mod mlp;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use fm::{fm_backward, fm_forward, FmParams};
pub use mlp::{mlp_backward, mlp_forward, MlpCache, MlpParams};
pub use train::{train, EpochStats, TrainConfig, TrainLog};

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CwmError, Result};
use crate::records::{PlayRecord, Vocab};

/// Default latent embedding dimension.
pub const DEFAULT_K_EMB: usize = 10;
/// Default MLP hidden width.
pub const DEFAULT_HIDDEN: usize = 64;
/// Default MLP dropout rate.
pub const DEFAULT_DROPOUT: f64 = 0.2;
/// Initialization scale for embeddings and dense weights.
pub const INIT_STD: f64 = 0.01;

/// One dense vocab index per feature field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub indices: Vec<usize>,
}

impl FeatureVector {
    /// Encode a record against a vocabulary; categories unseen at vocab
    /// build time map to the reserved index 0.
    pub fn from_record(vocab: &Vocab, rec: &PlayRecord) -> Result<FeatureVector> {
        if rec.features.len() != vocab.n_fields() {
            return Err(CwmError::Data(format!(
                "record has {} feature fields, vocabulary expects {}",
                rec.features.len(),
                vocab.n_fields()
            )));
        }
        let indices = rec
            .features
            .iter()
            .enumerate()
            .map(|(f, cat)| vocab.index_of(f, cat))
            .collect();
        Ok(FeatureVector { indices })
    }
}

/// Which backbone to score with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Fm,
    Mlp,
}

impl BackboneKind {
    pub fn name(&self) -> &'static str {
        match self {
            BackboneKind::Fm => "fm",
            BackboneKind::Mlp => "mlp",
        }
    }
}

fn default_k_emb() -> usize {
    DEFAULT_K_EMB
}
fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}
fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

/// Backbone hyperparameters. `hidden` and `dropout` only apply to the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    #[serde(default = "default_k_emb")]
    pub k_emb: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

impl BackboneConfig {
    pub fn fm() -> Self {
        BackboneConfig { kind: BackboneKind::Fm, k_emb: DEFAULT_K_EMB, hidden: DEFAULT_HIDDEN, dropout: DEFAULT_DROPOUT }
    }

    pub fn mlp() -> Self {
        BackboneConfig { kind: BackboneKind::Mlp, ..Self::fm() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_emb == 0 {
            return Err(CwmError::Config("embedding dimension must be at least 1".into()));
        }
        if self.kind == BackboneKind::Mlp {
            if self.hidden == 0 {
                return Err(CwmError::Config("mlp hidden width must be at least 1".into()));
            }
            if !(0.0..1.0).contains(&self.dropout) {
                return Err(CwmError::Config(format!("dropout rate must be in [0, 1), got {}", self.dropout)));
            }
        }
        Ok(())
    }
}

/// A concrete scoring model: parameters plus layout.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Fm(FmParams),
    Mlp(MlpParams),
}

/// Per-example forward state kept for the backward pass.
pub enum Cache {
    Fm(fm::FmCache),
    Mlp(MlpCache),
}

impl Model {
    /// Fresh model with seeded small-normal weights and zero biases.
    pub fn init(cfg: &BackboneConfig, field_cards: &[usize], rng: &mut ChaCha12Rng) -> Result<Model> {
        cfg.validate()?;
        Ok(match cfg.kind {
            BackboneKind::Fm => Model::Fm(FmParams::init(field_cards, cfg.k_emb, rng)),
            BackboneKind::Mlp => Model::Mlp(MlpParams::init(field_cards, cfg.k_emb, cfg.hidden, cfg.dropout, rng)),
        })
    }

    pub fn kind(&self) -> BackboneKind {
        match self {
            Model::Fm(_) => BackboneKind::Fm,
            Model::Mlp(_) => BackboneKind::Mlp,
        }
    }

    /// Deterministic eval-mode score (no dropout).
    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        match self {
            Model::Fm(p) => fm_forward(p, x),
            Model::Mlp(p) => Ok(mlp_forward(p, x, false, None)?.0),
        }
    }

    /// Train-mode forward pass; the MLP draws its dropout mask from `rng`.
    pub fn forward_train(&self, x: &FeatureVector, rng: &mut ChaCha12Rng) -> Result<(f64, Cache)> {
        match self {
            Model::Fm(p) => {
                let (score, cache) = fm::fm_forward_cached(p, x)?;
                Ok((score, Cache::Fm(cache)))
            }
            Model::Mlp(p) => {
                let (score, cache) = mlp_forward(p, x, true, Some(rng))?;
                Ok((score, Cache::Mlp(cache)))
            }
        }
    }

    /// Accumulate `upstream * dscore/dtheta` into `grad` (same layout as
    /// [`weights`](Model::weights)).
    pub fn backward_into(&self, x: &FeatureVector, cache: &Cache, upstream: f64, grad: &mut [f64]) -> Result<()> {
        match (self, cache) {
            (Model::Fm(p), Cache::Fm(c)) => fm::fm_backward_into(p, x, c, upstream, grad),
            (Model::Mlp(p), Cache::Mlp(c)) => mlp::mlp_backward_into(p, x, c, upstream, grad),
            _ => Err(CwmError::Config("forward cache does not match backbone kind".into())),
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Model::Fm(p) => &p.weights,
            Model::Mlp(p) => &p.weights,
        }
    }

    pub fn weights_mut(&mut self) -> &mut Vec<f64> {
        match self {
            Model::Fm(p) => &mut p.weights,
            Model::Mlp(p) => &mut p.weights,
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights().len()
    }
}

/// Draw `n` values from Normal(0, `INIT_STD`²).
pub(crate) fn draw_small_normal(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    (0..n).map(|_| INIT_STD * rng.sample::<f64, _>(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::test_support::rec;
    use crate::rng::{substream, STREAM_INIT};

    fn vocab_two_fields() -> Vocab {
        let schema = vec!["user".to_string(), "video".to_string()];
        let records = vec![rec("u1", "v1", 0, 30.0, 10.0), rec("u2", "v2", 1, 30.0, 10.0)];
        Vocab::build(&schema, &records)
    }

    #[test]
    fn encoding_maps_unseen_to_reserved_zero() {
        let vocab = vocab_two_fields();
        let x = FeatureVector::from_record(&vocab, &rec("u1", "brand-new", 0, 30.0, 10.0)).unwrap();
        assert!(x.indices[0] > 0);
        assert_eq!(x.indices[1], 0);
    }

    #[test]
    fn encoding_rejects_arity_mismatch() {
        let vocab = vocab_two_fields();
        let mut r = rec("u1", "v1", 0, 30.0, 10.0);
        r.features.pop();
        assert!(FeatureVector::from_record(&vocab, &r).is_err());
    }

    #[test]
    fn init_is_seed_deterministic_and_small() {
        let cards = vec![5, 7];
        for cfg in [BackboneConfig::fm(), BackboneConfig::mlp()] {
            let a = Model::init(&cfg, &cards, &mut substream(9, STREAM_INIT)).unwrap();
            let b = Model::init(&cfg, &cards, &mut substream(9, STREAM_INIT)).unwrap();
            assert_eq!(a.weights(), b.weights());
            let c = Model::init(&cfg, &cards, &mut substream(10, STREAM_INIT)).unwrap();
            assert_ne!(a.weights(), c.weights());
            assert!(a.weights().iter().all(|w| w.abs() < 0.1));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = BackboneConfig::mlp();
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        cfg.dropout = 0.2;
        cfg.hidden = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = BackboneConfig::fm();
        cfg.k_emb = 0;
        assert!(cfg.validate().is_err());
    }
}

//! Single-hidden-layer MLP over concatenated categorical embeddings.
//!
//! Forward: embeddings of the active categories are concatenated (field
//! order), passed through one dense ReLU layer, inverted dropout in train
//! mode, then a scalar output head:
//!
//! ```text
//! score = w2 . dropout(relu(W1 . concat(emb) + b1)) + b2
//! ```
//!
//! Inverted dropout scales kept units by 1/(1-p) at train time so eval mode
//! is a plain forward pass with no rescaling.
//!
//! Flat weight layout: `[embeddings (k_emb per category) | W1 (hidden x
//! in_dim, row-major) | b1 (hidden) | w2 (hidden) | b2 (1)]` where
//! `in_dim = n_fields * k_emb`.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{draw_small_normal, FeatureVector};
use crate::error::{CwmError, Result};

/// MLP parameters over categorical fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Category count per field (including the reserved unseen index 0).
    pub field_cards: Vec<usize>,
    /// Embedding dimension.
    pub k_emb: usize,
    /// Hidden layer width.
    pub hidden: usize,
    /// Dropout rate in [0, 1).
    pub dropout: f64,
    /// Flat parameters: `[embeddings | W1 | b1 | w2 | b2]`.
    pub weights: Vec<f64>,
}

/// Forward-pass state needed by backward.
pub struct MlpCache {
    /// Concatenated input embeddings (length `in_dim`).
    pub emb: Vec<f64>,
    /// Hidden pre-activations.
    pub pre: Vec<f64>,
    /// Hidden activations after ReLU and (in train mode) dropout.
    pub act: Vec<f64>,
    /// Per-unit dropout multiplier: 0 or 1/(1-p); `None` in eval mode.
    pub mask: Option<Vec<f64>>,
}

impl MlpParams {
    pub fn zeros(field_cards: &[usize], k_emb: usize, hidden: usize, dropout: f64) -> MlpParams {
        let total: usize = field_cards.iter().sum();
        let in_dim = field_cards.len() * k_emb;
        let n = total * k_emb + hidden * in_dim + hidden + hidden + 1;
        MlpParams { field_cards: field_cards.to_vec(), k_emb, hidden, dropout, weights: vec![0.0; n] }
    }

    /// Seeded init: embeddings and dense weights ~ Normal(0, 0.01²), biases 0.
    pub fn init(field_cards: &[usize], k_emb: usize, hidden: usize, dropout: f64, rng: &mut ChaCha12Rng) -> MlpParams {
        let mut p = Self::zeros(field_cards, k_emb, hidden, dropout);
        let total: usize = field_cards.iter().sum();
        let in_dim = field_cards.len() * k_emb;
        let (e0, e1) = (0, total * k_emb);
        let drawn = draw_small_normal(e1 + hidden * in_dim, rng);
        p.weights[e0..e1].copy_from_slice(&drawn[..e1]);
        let w1 = p.w1_range();
        p.weights[w1.0..w1.1].copy_from_slice(&drawn[e1..]);
        // w2 is also a dense weight vector.
        let drawn2 = draw_small_normal(hidden, rng);
        let w2 = p.w2_range();
        p.weights[w2.0..w2.1].copy_from_slice(&drawn2);
        p
    }

    pub fn total_categories(&self) -> usize {
        self.field_cards.iter().sum()
    }

    pub fn in_dim(&self) -> usize {
        self.field_cards.len() * self.k_emb
    }

    fn w1_range(&self) -> (usize, usize) {
        let s = self.total_categories() * self.k_emb;
        (s, s + self.hidden * self.in_dim())
    }

    fn b1_range(&self) -> (usize, usize) {
        let (_, e) = self.w1_range();
        (e, e + self.hidden)
    }

    fn w2_range(&self) -> (usize, usize) {
        let (_, e) = self.b1_range();
        (e, e + self.hidden)
    }

    fn b2_index(&self) -> usize {
        self.w2_range().1
    }

    fn slot(&self, field: usize, index: usize) -> Result<usize> {
        if index >= self.field_cards[field] {
            return Err(CwmError::Data(format!(
                "feature index {index} out of range for field {field} (cardinality {})",
                self.field_cards[field]
            )));
        }
        Ok(self.field_cards[..field].iter().sum::<usize>() + index)
    }

    fn check_arity(&self, x: &FeatureVector) -> Result<()> {
        if x.indices.len() != self.field_cards.len() {
            return Err(CwmError::Data(format!(
                "feature vector has {} fields, model expects {}",
                x.indices.len(),
                self.field_cards.len()
            )));
        }
        Ok(())
    }
}

/// MLP forward pass. Train mode requires an rng for the dropout mask; eval
/// mode (`train_mode = false`) is deterministic and ignores `rng`.
pub fn mlp_forward(
    params: &MlpParams,
    x: &FeatureVector,
    train_mode: bool,
    rng: Option<&mut ChaCha12Rng>,
) -> Result<(f64, MlpCache)> {
    params.check_arity(x)?;
    let (k, hidden, in_dim) = (params.k_emb, params.hidden, params.in_dim());

    let mut emb = Vec::with_capacity(in_dim);
    for (field, &idx) in x.indices.iter().enumerate() {
        let slot = params.slot(field, idx)?;
        emb.extend_from_slice(&params.weights[slot * k..(slot + 1) * k]);
    }

    let (w1s, _) = params.w1_range();
    let (b1s, _) = params.b1_range();
    let pre: Vec<f64> = (0..hidden)
        .map(|h| {
            let row = &params.weights[w1s + h * in_dim..w1s + (h + 1) * in_dim];
            params.weights[b1s + h] + row.iter().zip(&emb).map(|(w, e)| w * e).sum::<f64>()
        })
        .collect();

    let mask = if train_mode {
        let rng = rng.ok_or_else(|| CwmError::Config("train-mode mlp forward needs a dropout rng".into()))?;
        let keep_scale = 1.0 / (1.0 - params.dropout);
        Some((0..hidden).map(|_| if rng.gen::<f64>() < params.dropout { 0.0 } else { keep_scale }).collect::<Vec<f64>>())
    } else {
        None
    };

    let mut act = vec![0.0; hidden];
    for h in 0..hidden {
        let a = pre[h].max(0.0);
        act[h] = match &mask {
            Some(m) => a * m[h],
            None => a,
        };
    }

    let (w2s, _) = params.w2_range();
    let score = params.weights[params.b2_index()]
        + (0..hidden).map(|h| params.weights[w2s + h] * act[h]).sum::<f64>();
    Ok((score, MlpCache { emb, pre, act, mask }))
}

/// Gradient of the MLP score, scaled by `upstream`, as a fresh flat vector.
/// Replays the cached forward state (including any dropout mask).
pub fn mlp_backward(params: &MlpParams, x: &FeatureVector, cache: &MlpCache, upstream: f64) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.weights.len()];
    mlp_backward_into(params, x, cache, upstream, &mut grad)?;
    Ok(grad)
}

/// Accumulate the scaled MLP score gradient into `grad`.
pub fn mlp_backward_into(params: &MlpParams, x: &FeatureVector, cache: &MlpCache, upstream: f64, grad: &mut [f64]) -> Result<()> {
    params.check_arity(x)?;
    if grad.len() != params.weights.len() {
        return Err(CwmError::Config(format!(
            "gradient buffer has {} entries, parameters have {}",
            grad.len(),
            params.weights.len()
        )));
    }
    let (k, hidden, in_dim) = (params.k_emb, params.hidden, params.in_dim());
    let (w1s, _) = params.w1_range();
    let (b1s, _) = params.b1_range();
    let (w2s, _) = params.w2_range();

    // Output head.
    grad[params.b2_index()] += upstream;
    for h in 0..hidden {
        grad[w2s + h] += upstream * cache.act[h];
    }

    // Through dropout and ReLU into the hidden layer. relu'(0) = 0.
    let mut d_emb = vec![0.0; in_dim];
    for h in 0..hidden {
        let keep = match &cache.mask {
            Some(m) => m[h],
            None => 1.0,
        };
        if keep == 0.0 || cache.pre[h] <= 0.0 {
            continue;
        }
        let d_pre = upstream * params.weights[w2s + h] * keep;
        grad[b1s + h] += d_pre;
        let row = w1s + h * in_dim;
        for i in 0..in_dim {
            grad[row + i] += d_pre * cache.emb[i];
            d_emb[i] += d_pre * params.weights[row + i];
        }
    }

    // Scatter into the active categories' embedding rows.
    for (field, &idx) in x.indices.iter().enumerate() {
        let slot = params.slot(field, idx)?;
        for j in 0..k {
            grad[slot * k + j] += d_emb[field * k + j];
        }
    }
    Ok(())
}

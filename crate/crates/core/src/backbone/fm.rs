//! Second-order factorization machine.
//!
//! With one active category per field, the score is
//!
//! ```text
//! f(x) = w0 + sum_i w[x_i] + 1/2 sum_k [ (sum_i v[x_i][k])^2 - sum_i v[x_i][k]^2 ]
//! ```
//!
//! i.e. bias + per-category linear terms + all pairwise inner products of
//! the active categories' embeddings (the squares trick counts each
//! unordered pair exactly once).
//!
//! Flat weight layout: `[bias | linear (one per category, fields
//! concatenated) | embeddings (k_emb per category, same order)]`.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{draw_small_normal, FeatureVector};
use crate::error::{CwmError, Result};

/// Factorization-machine parameters over categorical fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmParams {
    /// Category count per field (including the reserved unseen index 0).
    pub field_cards: Vec<usize>,
    /// Embedding dimension.
    pub k_emb: usize,
    /// Flat parameters: `[bias | linear | embeddings]`.
    pub weights: Vec<f64>,
}

/// Per-dimension embedding sums from the forward pass, reused by backward.
pub struct FmCache {
    pub dim_sums: Vec<f64>,
}

impl FmParams {
    /// Zero-initialized parameters (useful for hand-built fixtures).
    pub fn zeros(field_cards: &[usize], k_emb: usize) -> FmParams {
        let total: usize = field_cards.iter().sum();
        FmParams { field_cards: field_cards.to_vec(), k_emb, weights: vec![0.0; 1 + total + total * k_emb] }
    }

    /// Seeded init: linear and embedding weights ~ Normal(0, 0.01²), bias 0.
    pub fn init(field_cards: &[usize], k_emb: usize, rng: &mut ChaCha12Rng) -> FmParams {
        let mut p = Self::zeros(field_cards, k_emb);
        let total: usize = field_cards.iter().sum();
        let drawn = draw_small_normal(total + total * k_emb, rng);
        p.weights[1..].copy_from_slice(&drawn);
        p
    }

    /// Seeded init with explicit scales, for building synthetic ground-truth
    /// models whose score spread is controlled.
    pub fn init_scaled(field_cards: &[usize], k_emb: usize, bias: f64, linear_std: f64, emb_std: f64, rng: &mut ChaCha12Rng) -> FmParams {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut p = Self::zeros(field_cards, k_emb);
        let total: usize = field_cards.iter().sum();
        p.weights[0] = bias;
        for w in &mut p.weights[1..1 + total] {
            *w = linear_std * rng.sample::<f64, _>(StandardNormal);
        }
        for w in &mut p.weights[1 + total..] {
            *w = emb_std * rng.sample::<f64, _>(StandardNormal);
        }
        p
    }

    pub fn total_categories(&self) -> usize {
        self.field_cards.iter().sum()
    }

    /// Global category slot of `(field, index)`, or an error if out of range.
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

    fn emb(&self, slot: usize) -> &[f64] {
        let base = 1 + self.total_categories() + slot * self.k_emb;
        &self.weights[base..base + self.k_emb]
    }
}

/// FM score for one encoded record.
pub fn fm_forward(params: &FmParams, x: &FeatureVector) -> Result<f64> {
    Ok(fm_forward_cached(params, x)?.0)
}

/// FM score plus the per-dimension embedding sums needed by backward.
pub fn fm_forward_cached(params: &FmParams, x: &FeatureVector) -> Result<(f64, FmCache)> {
    params.check_arity(x)?;
    let mut score = params.weights[0];
    let mut dim_sums = vec![0.0; params.k_emb];
    let mut sq_sums = 0.0;
    for (field, &idx) in x.indices.iter().enumerate() {
        let slot = params.slot(field, idx)?;
        score += params.weights[1 + slot];
        for (k, &e) in params.emb(slot).iter().enumerate() {
            dim_sums[k] += e;
            sq_sums += e * e;
        }
    }
    let pair: f64 = dim_sums.iter().map(|s| s * s).sum::<f64>() - sq_sums;
    score += 0.5 * pair;
    Ok((score, FmCache { dim_sums }))
}

/// Gradient of the FM score, scaled by `upstream`, as a fresh flat vector.
pub fn fm_backward(params: &FmParams, x: &FeatureVector, upstream: f64) -> Result<Vec<f64>> {
    let (_, cache) = fm_forward_cached(params, x)?;
    let mut grad = vec![0.0; params.weights.len()];
    fm_backward_into(params, x, &cache, upstream, &mut grad)?;
    Ok(grad)
}

/// Accumulate the scaled FM score gradient into `grad`.
///
/// Per active category: d/dw[x_i] = 1, d/dv[x_i][k] = dim_sums[k] − v[x_i][k]
/// (the sum of the *other* active embeddings in dimension k).
pub fn fm_backward_into(params: &FmParams, x: &FeatureVector, cache: &FmCache, upstream: f64, grad: &mut [f64]) -> Result<()> {
    params.check_arity(x)?;
    if grad.len() != params.weights.len() {
        return Err(CwmError::Config(format!(
            "gradient buffer has {} entries, parameters have {}",
            grad.len(),
            params.weights.len()
        )));
    }
    grad[0] += upstream;
    let emb_base = 1 + params.total_categories();
    for (field, &idx) in x.indices.iter().enumerate() {
        let slot = params.slot(field, idx)?;
        grad[1 + slot] += upstream;
        let base = emb_base + slot * params.k_emb;
        for k in 0..params.k_emb {
            let e = params.weights[base + k];
            grad[base + k] += upstream * (cache.dim_sums[k] - e);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, STREAM_INIT};

    /// 2 fields of one category each, k_emb = 2; hand-set weights.
    fn hand_params() -> FmParams {
        let mut p = FmParams::zeros(&[1, 1], 2);
        // linear = (0.1, -0.2); emb1 = (1, 0); emb2 = (0.5, 2).
        p.weights[1] = 0.1;
        p.weights[2] = -0.2;
        p.weights[3] = 1.0;
        p.weights[4] = 0.0;
        p.weights[5] = 0.5;
        p.weights[6] = 2.0;
        p
    }

    #[test]
    fn zero_parameters_score_zero() {
        let p = FmParams::zeros(&[3, 4], 5);
        let x = FeatureVector { indices: vec![1, 2] };
        assert_eq!(fm_forward(&p, &x).unwrap(), 0.0);
    }

    #[test]
    fn bias_only_scores_bias() {
        let mut p = FmParams::zeros(&[3, 4], 5);
        p.weights[0] = 0.3;
        let x = FeatureVector { indices: vec![0, 3] };
        assert_eq!(fm_forward(&p, &x).unwrap(), 0.3);
    }

    #[test]
    fn hand_evaluated_example() {
        // 0.1 - 0.2 + <(1,0), (0.5,2)> = -0.1 + 0.5 = 0.4
        let p = hand_params();
        let x = FeatureVector { indices: vec![0, 0] };
        assert!((fm_forward(&p, &x).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn pairwise_term_counts_unordered_pairs_once() {
        // Three fields with embeddings a, b, c in 1 dim:
        // pair term = ab + ac + bc.
        let mut p = FmParams::zeros(&[1, 1, 1], 1);
        p.weights[4] = 2.0;
        p.weights[5] = 3.0;
        p.weights[6] = 5.0;
        let x = FeatureVector { indices: vec![0, 0, 0] };
        assert!((fm_forward(&p, &x).unwrap() - (6.0 + 10.0 + 15.0)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_index_errors() {
        let p = FmParams::zeros(&[2, 2], 3);
        let x = FeatureVector { indices: vec![0, 2] };
        assert!(fm_forward(&p, &x).is_err());
        assert!(fm_backward(&p, &x, 1.0).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let p = hand_params();
        let x = FeatureVector { indices: vec![0, 0] };
        let g = fm_backward(&p, &x, 0.0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_equals_upstream() {
        let p = hand_params();
        let x = FeatureVector { indices: vec![0, 0] };
        let g = fm_backward(&p, &x, -1.7).unwrap();
        assert_eq!(g[0], -1.7);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = substream(42, STREAM_INIT);
        let mut p = FmParams::init(&[4, 3, 5], 3, &mut rng);
        // Larger weights make the pairwise term numerically significant.
        for w in &mut p.weights {
            *w *= 30.0;
        }
        let x = FeatureVector { indices: vec![2, 0, 4] };
        let upstream = 1.3;
        let grad = fm_backward(&p, &x, upstream).unwrap();
        let h = 1e-6;
        let mut worst = 0.0f64;
        let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())).max(1e-12);
        for i in 0..p.weights.len() {
            let orig = p.weights[i];
            p.weights[i] = orig + h;
            let up = fm_forward(&p, &x).unwrap();
            p.weights[i] = orig - h;
            let dn = fm_forward(&p, &x).unwrap();
            p.weights[i] = orig;
            let fd = upstream * (up - dn) / (2.0 * h);
            worst = worst.max((grad[i] - fd).abs() / scale);
        }
        assert!(worst <= 1e-6, "worst scaled gradient error {worst}");
    }

    #[test]
    fn score_invariant_under_field_permutation() {
        // Swap the two fields together with their parameter blocks.
        let p = {
            let mut p = FmParams::zeros(&[2, 3], 2);
            for (i, w) in p.weights.iter_mut().enumerate() {
                *w = (i as f64 + 1.0) * 0.1;
            }
            p
        };
        let x = FeatureVector { indices: vec![1, 2] };
        let score = fm_forward(&p, &x).unwrap();

        let mut q = FmParams::zeros(&[3, 2], 2);
        q.weights[0] = p.weights[0];
        // linear: field B's 3 cats first, then field A's 2.
        q.weights[1..4].copy_from_slice(&p.weights[3..6]);
        q.weights[4..6].copy_from_slice(&p.weights[1..3]);
        // embeddings likewise (k_emb = 2, field A spans slots 0..2, B 2..5).
        let (e, f) = (1 + 5, 1 + 5); // emb bases coincide: same totals
        q.weights[f..f + 6].copy_from_slice(&p.weights[e + 4..e + 10]);
        q.weights[f + 6..f + 10].copy_from_slice(&p.weights[e..e + 4]);
        let y = FeatureVector { indices: vec![2, 1] };
        assert!((fm_forward(&q, &y).unwrap() - score).abs() < 1e-15);
    }
}

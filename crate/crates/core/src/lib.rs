//! Duration-debiased watch-time modeling.
//!
//! Observed watch time on a video platform is the minimum of how long the
//! user *wanted* to watch and how long the video *is*. Training directly on
//! observed watch time therefore bakes video duration into any interest
//! signal. This crate models the untruncated ("counterfactual") watch time
//! explicitly:
//!
//! * [`transform`] — closed-form maps between interest, counterfactual
//!   watch time, and probit space, plus the standard-normal kernels.
//! * [`objective`] — the censored Gaussian training objective and four
//!   label-correction baselines (value regression, play-completion rate,
//!   watch-time gain, duration-grouped quantiles), each with its inverse
//!   transform for watch-time prediction.
//! * [`backbone`] — factorization-machine and MLP scorers over categorical
//!   features, analytic backprop, Adam, the training loop, and JSON
//!   checkpoints.
//! * [`records`] — play-log data model, CSV ingestion, vocabulary building,
//!   temporal splits.
//! * [`synth`] — a generative oracle with known ground truth, for
//!   recovery experiments and evidence statistics.
//! * [`metrics`] — MAE, XAUC, AUC, nDCG@k, interest labels, grouped
//!   relative-improvement analysis.
//!
//! Everything is deterministic given a single `u64` seed (see [`rng`]).

pub mod backbone;
pub mod error;
pub mod metrics;
pub mod objective;
pub mod records;
pub mod rng;
pub mod synth;
pub mod transform;

pub use error::{CwmError, Result};

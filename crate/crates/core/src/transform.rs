//! Closed-form watch-time math.
//!
//! The model treats observed watch time as a truncated view of the time a
//! user *would* watch if the video were long enough. This module holds the
//! pure functions connecting the three spaces involved:
//!
//! * interest `r` in (0,1),
//! * counterfactual watch time `w = 1/(-c ln r) - 1` (`cwt_from_interest`),
//! * probit space `g'(w) = Phi^-1(r)` (`probit_label`), the Gaussian
//!   regression target used by the censored objective.
//!
//! plus the standard-normal kernels (`normal_cdf`, `normal_quantile`, log
//! variants, Mills ratio) that everything else is built on. Tail accuracy
//! matters here: `interest_from_cwt(0, 1/40)` is `e^-40 ~ 4.2e-18`, so the
//! cdf uses a high-accuracy rational error-function expansion and the probit
//! label works in log space when probabilities underflow.
//!
//! All functions are pure and safe for unrestricted concurrent use. The only
//! shared state is a saturation counter incremented when a probit label has
//! to be clamped to +-38 (beyond which the double-precision cdf is exactly
//! 0 or 1).

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{CwmError, Result};

/// ln(sqrt(2 pi)).
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_405_62;
/// 1/sqrt(2 pi).
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_38;
/// Probit magnitude beyond which the double-precision cdf saturates.
const PROBIT_CLAMP: f64 = 38.0;

static PROBIT_SATURATIONS: AtomicU64 = AtomicU64::new(0);

/// Hyperparameters of the censored watch model: per-second watch cost `c`
/// and the standard deviation `sigma` of probit-space interest.
///
/// Only `cost_c` enters the transforms in this module; `sigma` belongs to
/// the objective. They travel together because they are tuned together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Per-second watch cost, `c > 0`. Default 1/40.
    pub cost_c: f64,
    /// Standard deviation of probit-space interest, `sigma > 0`. Default 2.
    pub sigma: f64,
}

impl CostParams {
    /// Validating constructor.
    pub fn new(cost_c: f64, sigma: f64) -> Result<Self> {
        if !(cost_c.is_finite() && cost_c > 0.0) {
            return Err(CwmError::Config(format!("cost_c must be positive and finite, got {cost_c}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(CwmError::Config(format!("sigma must be positive and finite, got {sigma}")));
        }
        Ok(CostParams { cost_c, sigma })
    }
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { cost_c: 1.0 / 40.0, sigma: 2.0 }
    }
}

// ---------------------------------------------------------------------------
// Error function (Cody's rational Chebyshev approximation, W. J. Cody 1969).
// Relative error below 1e-15 across the full double range.
// ---------------------------------------------------------------------------

const ERF_A: [f64; 5] = [
    3.161_123_743_870_565_6e0,
    1.138_641_541_510_501_56e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_47e3,
    1.857_777_061_846_031_53e-1,
];
const ERF_B: [f64; 4] = [
    2.360_129_095_234_412_09e1,
    2.440_246_379_344_441_73e2,
    1.282_616_526_077_372_28e3,
    2.844_236_833_439_170_62e3,
];
const ERF_C: [f64; 9] = [
    5.641_884_969_886_700_89e-1,
    8.883_149_794_388_375_94e0,
    6.611_919_063_714_162_95e1,
    2.986_351_381_974_001_31e2,
    8.819_522_212_417_690_9e2,
    1.712_047_612_634_070_58e3,
    2.051_078_377_826_071_47e3,
    1.230_339_354_797_997_25e3,
    2.153_115_354_744_038_46e-8,
];
const ERF_D: [f64; 8] = [
    1.574_492_611_070_983_47e1,
    1.176_939_508_913_124_99e2,
    5.371_811_018_620_098_58e2,
    1.621_389_574_566_690_19e3,
    3.290_799_235_733_459_63e3,
    4.362_619_090_143_247_16e3,
    3.439_367_674_143_721_64e3,
    1.230_339_354_803_749_42e3,
];
const ERF_P: [f64; 6] = [
    3.053_266_349_612_323_44e-1,
    3.603_448_999_498_044_39e-1,
    1.257_817_261_112_292_46e-1,
    1.608_378_514_874_227_66e-2,
    6.587_491_615_298_378_03e-4,
    1.631_538_713_730_209_78e-2,
];
const ERF_Q: [f64; 5] = [
    2.568_520_192_289_822_42e0,
    1.872_952_849_923_460_47e0,
    5.279_051_029_514_284_12e-1,
    6.051_834_131_244_131_91e-2,
    2.335_204_976_268_691_85e-3,
];
/// 1/sqrt(pi).
const ERF_SQRPI: f64 = 5.641_895_835_477_562_869_5e-1;
/// Threshold below which x^2 underflows in the small-x rational.
const ERF_XSMALL: f64 = 1.11e-16;
/// Point beyond which erfc underflows to zero in double precision.
const ERF_XBIG: f64 = 26.543;

/// erf on |x| <= 0.46875 (the only region where erf itself is computed).
fn erf_small(x: f64) -> f64 {
    let y = x.abs();
    let z = if y > ERF_XSMALL { y * y } else { 0.0 };
    let mut num = ERF_A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + ERF_A[i]) * z;
        den = (den + ERF_B[i]) * z;
    }
    x * (num + ERF_A[3]) / (den + ERF_B[3])
}

/// Shared tail evaluation: erfc(y) for y > 0.46875.
fn erfc_tail(y: f64) -> f64 {
    let result = if y <= 4.0 {
        let mut num = ERF_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERF_C[i]) * y;
            den = (den + ERF_D[i]) * y;
        }
        (num + ERF_C[7]) / (den + ERF_D[7])
    } else if y < ERF_XBIG {
        let z = 1.0 / (y * y);
        let mut num = ERF_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERF_P[i]) * z;
            den = (den + ERF_Q[i]) * z;
        }
        let r = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
        (ERF_SQRPI - r) / y
    } else {
        return 0.0;
    };
    // exp(-y^2) split so the squared part is computed on an exactly
    // representable value, keeping relative error small in the far tail.
    let ysq = (y * 16.0).floor() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp() * result
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    if x.abs() <= 0.46875 {
        erf_small(x)
    } else if x > 0.0 {
        1.0 - erfc_tail(x)
    } else {
        erfc_tail(-x) - 1.0
    }
}

/// Complementary error function, accurate into the deep tail.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let result = if y <= 0.46875 { 1.0 - erf_small(y) } else { erfc_tail(y) };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

// ---------------------------------------------------------------------------
// Standard-normal kernels.
// ---------------------------------------------------------------------------

/// Standard-normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Log of the standard-normal density; safe for any finite x.
pub fn ln_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard-normal cumulative distribution function.
///
/// Absolute error below 1e-15 for |x| <= 8 and relative error ~1e-13 down
/// to the underflow point near x = -37.6.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Log of the standard-normal cdf, finite for any finite input.
///
/// Three regimes: `ln1p` of the complementary mass for positive x, a direct
/// log for moderate negative x, and the asymptotic expansion
/// `ln Phi(x) = -x^2/2 - ln(-x) - ln sqrt(2 pi) + ln(1 - 1/x^2 + 3/x^4 - ...)`
/// once the cdf itself would underflow.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > 0.0 {
        let upper = 0.5 * erfc(x / std::f64::consts::SQRT_2);
        (-upper).ln_1p()
    } else if x >= -37.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        let z = 1.0 / (x * x);
        let series = (-1.0 + z * (3.0 + z * (-15.0 + z * 105.0))) * z;
        -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + series.ln_1p()
    }
}

/// Mills ratio phi(x)/Phi(x), computed in log space so it stays finite and
/// accurate even deep in the lower tail (where it approaches -x).
pub fn mills_ratio(x: f64) -> f64 {
    (ln_normal_pdf(x) - ln_normal_cdf(x)).exp()
}

// Acklam's rational approximation to the standard-normal quantile
// (relative error ~1.15e-9), refined here by Newton steps against the
// cdf above to full double accuracy.
const NQ_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_690e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239e0,
];
const NQ_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const NQ_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838e0,
    -2.549_732_539_343_734e0,
    4.374_664_141_464_968e0,
    2.938_163_982_698_783e0,
];
const NQ_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996e0,
    3.754_408_661_907_416e0,
];
const NQ_P_LOW: f64 = 0.02425;

/// Quantile for the central region p in [P_LOW, 1 - P_LOW]; two Newton
/// refinements against the cdf.
fn quantile_central(p: f64) -> f64 {
    let q = p - 0.5;
    let r = q * q;
    let mut x = (((((NQ_A[0] * r + NQ_A[1]) * r + NQ_A[2]) * r + NQ_A[3]) * r + NQ_A[4]) * r + NQ_A[5]) * q
        / (((((NQ_B[0] * r + NQ_B[1]) * r + NQ_B[2]) * r + NQ_B[3]) * r + NQ_B[4]) * r + 1.0);
    for _ in 0..2 {
        x -= (normal_cdf(x) - p) / normal_pdf(x);
    }
    x
}

/// Quantile for the lower tail, parameterized by ln(p) so callers can pass
/// log-probabilities that would underflow as plain doubles. Requires
/// `ln_p <= ln(P_LOW)`. Newton refinement runs in log space:
/// `x <- x - (ln Phi(x) - ln p) / mills(x)`.
fn quantile_lower_from_ln_p(ln_p: f64) -> f64 {
    let q = (-2.0 * ln_p).sqrt();
    let mut x = (((((NQ_C[0] * q + NQ_C[1]) * q + NQ_C[2]) * q + NQ_C[3]) * q + NQ_C[4]) * q + NQ_C[5])
        / ((((NQ_D[0] * q + NQ_D[1]) * q + NQ_D[2]) * q + NQ_D[3]) * q + 1.0);
    for _ in 0..2 {
        x -= (ln_normal_cdf(x) - ln_p) / mills_ratio(x);
    }
    x
}

/// Standard-normal quantile (inverse cdf).
///
/// Errors on p outside (0,1). Accuracy: `|Phi(Phi^-1(p)) - p| <= 1e-10`
/// for p in [1e-15, 1-1e-15]; the lower tail stays accurate in relative
/// terms down to the smallest positive doubles.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CwmError::Numerical(format!("normal_quantile requires p in (0,1), got {p}")));
    }
    let x = if p < NQ_P_LOW {
        quantile_lower_from_ln_p(p.ln())
    } else if p > 1.0 - NQ_P_LOW {
        -quantile_lower_from_ln_p((1.0 - p).ln())
    } else {
        quantile_central(p)
    };
    Ok(x)
}

// ---------------------------------------------------------------------------
// Cost-based transforms.
// ---------------------------------------------------------------------------

/// Counterfactual watch time implied by interest `r`:
/// `w = 1/(-c ln r) - 1`, the maximizer of the watching utility
/// `ln(t+1)/(-ln r) - c t`. Strictly increasing in `r`, range (-1, inf).
pub fn cwt_from_interest(r: f64, c: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) {
        return Err(CwmError::Numerical(format!("cost c must be positive, got {c}")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(CwmError::Numerical(format!("interest r must lie in (0,1), got {r}")));
    }
    let t = -c * r.ln();
    if t <= 0.0 {
        // r is so close to 1 that ln(r) underflowed to zero.
        return Err(CwmError::Numerical(format!("cwt overflow: interest r={r} is indistinguishable from 1")));
    }
    Ok(1.0 / t - 1.0)
}

/// Interest implied by a non-negative counterfactual watch time:
/// `r = exp(-1/(c (w+1)))`. Inverse of [`cwt_from_interest`] on `w >= 0`.
pub fn interest_from_cwt(w: f64, c: f64) -> f64 {
    assert!(w >= 0.0, "interest_from_cwt requires w >= 0, got {w}");
    assert!(c > 0.0, "interest_from_cwt requires c > 0, got {c}");
    (-1.0 / (c * (w + 1.0))).exp()
}

/// Derivative of [`interest_from_cwt`] with respect to `w`:
/// `exp(-1/(c (w+1))) / (c (w+1)^2)`.
pub fn interest_from_cwt_dw(w: f64, c: f64) -> f64 {
    assert!(w >= 0.0, "interest_from_cwt_dw requires w >= 0, got {w}");
    assert!(c > 0.0, "interest_from_cwt_dw requires c > 0, got {c}");
    let u = c * (w + 1.0);
    (-1.0 / u).exp() / (u * (w + 1.0))
}

/// Probit-space label `g'(w) = Phi^-1(exp(-1/(c (w+1))))`.
///
/// Works directly on the log-probability `-1/(c (w+1))`, so it never loses
/// the tail even when the interest underflows as a plain double; the
/// complementary side uses `expm1` for the same reason. Results are clamped
/// to +-38 (where the double cdf saturates); each clamp increments a global
/// counter queryable via [`probit_saturation_count`] and logs a warning the
/// first time.
pub fn probit_label(w: f64, c: f64) -> f64 {
    assert!(w >= 0.0, "probit_label requires w >= 0, got {w}");
    assert!(c > 0.0, "probit_label requires c > 0, got {c}");
    // a = -ln r > 0.
    let a = 1.0 / (c * (w + 1.0));
    let ln_p_low = NQ_P_LOW.ln();
    let x = if a >= std::f64::consts::LN_2 {
        // r <= 1/2: lower half, log form avoids underflow entirely.
        if -a < ln_p_low {
            quantile_lower_from_ln_p(-a)
        } else {
            quantile_central((-a).exp())
        }
    } else {
        // r > 1/2: reflect through the accurate complementary mass 1 - r.
        let pu = -(-a).exp_m1();
        if pu < NQ_P_LOW {
            -quantile_lower_from_ln_p(pu.ln())
        } else {
            -quantile_central(pu)
        }
    };
    if x.abs() > PROBIT_CLAMP {
        let n = PROBIT_SATURATIONS.fetch_add(1, Ordering::Relaxed);
        if n == 0 {
            log::warn!("probit label saturated at {x:.3} (w={w}, c={c}); clamping to +-{PROBIT_CLAMP}");
        }
        x.clamp(-PROBIT_CLAMP, PROBIT_CLAMP)
    } else {
        x
    }
}

/// Number of probit-label saturation clamps since process start.
pub fn probit_saturation_count() -> u64 {
    PROBIT_SATURATIONS.load(Ordering::Relaxed)
}

/// Online watch-time inference: `r_hat = Phi(score)`, then the implied
/// counterfactual watch time clipped into `[0, d]`.
pub fn predict_watch_time(score: f64, c: f64, d: f64) -> f64 {
    assert!(d > 0.0, "predict_watch_time requires d > 0, got {d}");
    assert!(c > 0.0, "predict_watch_time requires c > 0, got {c}");
    if score.is_nan() {
        return f64::NAN;
    }
    let r = normal_cdf(score);
    if r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 {
        return d;
    }
    let t = -c * r.ln();
    if t <= 0.0 {
        return d;
    }
    (1.0 / t - 1.0).clamp(0.0, d)
}

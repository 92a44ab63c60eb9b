//! Binomial confidence limits and tail bounds.
//!
//! Three interval constructions are provided for a binomial parameter after
//! `n` Bernoulli trials with `k` successes:
//!
//! * [`clopper_pearson_limits`] - the exact tail-inversion interval, found by
//!   bisection on the monotone binomial CDF.
//! * [`explicit_limits`] - a closed form derived from Massart's inequality.
//!   It always contains the Clopper-Pearson interval, so it inherits its
//!   coverage guarantee while costing O(1) to evaluate.
//! * [`normal_approx_limits`] - the textbook Wald interval. Asymptotic only,
//!   and flagged as such.
//!
//! Everything here is a pure function of its arguments.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BinomError {
    #[error("invalid trial counts: n = {n}, k = {k} (need n >= 1 and k <= n)")]
    InvalidCounts { n: u64, k: u64 },
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("confidence parameter delta = {0} must lie strictly inside (0, 1)")]
    InvalidDelta(f64),
    #[error("{name} = {value} must lie strictly inside (0, 1)")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("bisection for the Clopper-Pearson limit did not converge (n = {n}, k = {k})")]
    NoConvergence { n: u64, k: u64 },
}

/// Number of Bernoulli trials and number of successes among them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrialCounts {
    n: u64,
    k: u64,
}

impl TrialCounts {
    pub fn new(n: u64, k: u64) -> Result<Self, BinomError> {
        if n == 0 || k > n {
            return Err(BinomError::InvalidCounts { n, k });
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// Empirical frequency `k / n`.
    pub fn frequency(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BoundMethod {
    ClopperPearson,
    Explicit,
    NormalApprox,
}

/// Lower/upper confidence limits for a binomial parameter at level `1 - delta`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfidenceBounds {
    pub lower: f64,
    pub upper: f64,
    pub delta: f64,
    pub method: BoundMethod,
}

impl ConfidenceBounds {
    /// `false` for the normal approximation, whose coverage is only asymptotic.
    pub fn is_rigorous(&self) -> bool {
        self.method != BoundMethod::NormalApprox
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// Risk, confidence and relative accuracy for the fixed sample-size rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSizeParams {
    epsilon: f64,
    delta: f64,
    alpha: f64,
}

impl SampleSizeParams {
    pub fn new(epsilon: f64, delta: f64, alpha: f64) -> Result<Self, BinomError> {
        check_open_unit("epsilon", epsilon)?;
        check_open_unit("delta", delta)?;
        check_open_unit("alpha", alpha)?;
        Ok(Self {
            epsilon,
            delta,
            alpha,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

fn check_open_unit(name: &'static str, value: f64) -> Result<(), BinomError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(BinomError::InvalidParameter { name, value })
    }
}

fn check_delta(delta: f64) -> Result<(), BinomError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(BinomError::InvalidDelta(delta))
    }
}

fn check_probability(p: f64) -> Result<(), BinomError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(BinomError::InvalidProbability(p))
    }
}

// ---------------------------------------------------------------------------
// Binomial probabilities
// ---------------------------------------------------------------------------

/// ln(n!) - ln(sqrt(2 pi n) (n/e)^n) for n = 0..=15.
const STIRLING_ERR: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_094,
    0.027_677_925_684_998_339_149,
    0.020_790_672_103_765_093_112,
    0.016_644_691_189_821_192_163,
    0.013_876_128_823_070_747_999,
    0.011_896_709_945_891_770_095,
    0.010_411_265_261_972_096_497,
    0.009_255_462_182_712_732_917_7,
    0.008_330_563_433_362_871_256_5,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_865_7,
    0.006_408_994_188_004_207_068_4,
    0.005_951_370_112_758_847_735_6,
    0.005_554_733_551_962_801_371,
];

/// Error of Stirling's approximation to ln(n!).
fn stirling_err(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15 {
        return STIRLING_ERR[n as usize];
    }
    let x = n as f64;
    let xx = x * x;
    if n > 500 {
        (S0 - S1 / xx) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / xx) / xx) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / xx) / xx) / xx) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / xx) / xx) / xx) / xx) / x
    }
}

/// Deviance term `x ln(x / m) + m - x`, evaluated without cancellation when
/// `x` is close to `m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// Probability of exactly `k` successes in `n` trials, via the saddle-point
/// expansion. Relative error is a few ulps for every `n`, unlike the naive
/// log-factorial route whose cancellation grows with `n`.
fn pmf_unchecked(n: u64, k: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if k == 0 {
        let lc = if p < 0.1 {
            -deviance(nf, nf * q) - nf * p
        } else {
            nf * q.ln()
        };
        return lc.exp();
    }
    if k == n {
        let lc = if q < 0.1 {
            -deviance(nf, nf * p) - nf * q
        } else {
            nf * p.ln()
        };
        return lc.exp();
    }
    let kf = k as f64;
    let lc = stirling_err(n)
        - stirling_err(k)
        - stirling_err(n - k)
        - deviance(kf, nf * p)
        - deviance(nf - kf, nf * q);
    let lf = (2.0 * PI).ln() + kf.ln() + (-kf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// `Pr{K = k}` for `K ~ Binomial(n, p)`.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> Result<f64, BinomError> {
    if k > n {
        return Err(BinomError::InvalidCounts { n, k });
    }
    check_probability(p)?;
    Ok(pmf_unchecked(n, k, p))
}

/// `Pr{K <= k}` for `K ~ Binomial(n, p)`.
///
/// Sums whichever tail lies away from the mean, stopping once the remaining
/// terms (bounded by a geometric series) are negligible. Absolute error stays
/// around 1e-15 for `n` up to 10^6 and beyond.
pub fn binomial_cdf(n: u64, k: u64, p: f64) -> Result<f64, BinomError> {
    if k > n {
        return Err(BinomError::InvalidCounts { n, k });
    }
    check_probability(p)?;
    Ok(cdf_unchecked(n, k, p))
}

fn cdf_unchecked(n: u64, k: u64, p: f64) -> f64 {
    if k >= n || p == 0.0 {
        return 1.0;
    }
    if p == 1.0 {
        return 0.0;
    }
    let q = 1.0 - p;
    let nf = n as f64;
    if (k as f64) < nf * p {
        // Lower tail: terms shrink as j decreases; t_{j-1}/t_j = j q / ((n-j+1) p).
        let mut sum = 0.0;
        let mut j = k;
        loop {
            let t = pmf_unchecked(n, j, p);
            sum += t;
            if j == 0 {
                break;
            }
            let ratio = (j as f64) * q / (((n - j + 1) as f64) * p);
            if ratio < 1.0 && t * ratio / (1.0 - ratio) <= 1e-17 * sum {
                break;
            }
            j -= 1;
        }
        sum.min(1.0)
    } else {
        // Upper tail from k+1: t_{j+1}/t_j = (n-j) p / ((j+1) q).
        let mut sum = 0.0;
        let mut j = k + 1;
        loop {
            let t = pmf_unchecked(n, j, p);
            sum += t;
            if j == n {
                break;
            }
            let ratio = ((n - j) as f64) * p / (((j + 1) as f64) * q);
            if ratio < 1.0 && t * ratio / (1.0 - ratio) <= 1e-17 * sum.max(f64::MIN_POSITIVE) {
                break;
            }
            j += 1;
        }
        (1.0 - sum).clamp(0.0, 1.0)
    }
}

// ---------------------------------------------------------------------------
// Confidence limits
// ---------------------------------------------------------------------------

const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_STEPS: usize = 200;

/// Root of the decreasing map `p -> cdf(n, j, p) - target` on [0, 1].
fn bisect_cdf(n: u64, j: u64, target: f64, k: u64) -> Result<f64, BinomError> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..BISECTION_MAX_STEPS {
        if hi - lo <= BISECTION_TOL {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if cdf_unchecked(n, j, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(BinomError::NoConvergence { n, k })
}

/// Exact (Clopper-Pearson) two-sided limits at confidence `1 - delta`.
///
/// The lower limit solves `Pr{K <= k-1; p} = 1 - delta/2` and the upper limit
/// solves `Pr{K <= k; p} = delta/2`, with the conventions lower = 0 at k = 0
/// and upper = 1 at k = n.
pub fn clopper_pearson_limits(
    counts: TrialCounts,
    delta: f64,
) -> Result<ConfidenceBounds, BinomError> {
    check_delta(delta)?;
    let TrialCounts { n, k } = counts;
    let lower = if k == 0 {
        0.0
    } else {
        bisect_cdf(n, k - 1, 1.0 - delta / 2.0, k)?
    };
    let upper = if k == n {
        1.0
    } else {
        bisect_cdf(n, k, delta / 2.0, k)?
    };
    Ok(ConfidenceBounds {
        lower,
        upper,
        delta,
        method: BoundMethod::ClopperPearson,
    })
}

/// `9 / (8 ln(2/delta))`, the scale constant of the explicit limits.
pub fn explicit_theta(delta: f64) -> f64 {
    9.0 / (8.0 * (2.0 / delta).ln())
}

/// Closed-form limits that contain the Clopper-Pearson interval:
///
/// ```text
/// k/n + 3/4 * (1 - 2k/n -/+ sqrt(1 + 4 theta k (1 - k/n))) / (1 + theta n)
/// ```
///
/// clamped to [0, 1].
pub fn explicit_limits(counts: TrialCounts, delta: f64) -> Result<ConfidenceBounds, BinomError> {
    check_delta(delta)?;
    let (lower, upper) = explicit_raw(counts.n, counts.k, explicit_theta(delta));
    Ok(ConfidenceBounds {
        lower,
        upper,
        delta,
        method: BoundMethod::Explicit,
    })
}

/// Explicit limits with a precomputed `theta`; used on the per-trial hot path.
pub(crate) fn explicit_raw(n: u64, k: u64, theta: f64) -> (f64, f64) {
    let nf = n as f64;
    let kf = k as f64;
    let phat = kf / nf;
    let root = (1.0 + 4.0 * theta * kf * (1.0 - phat)).sqrt();
    let scale = 0.75 / (1.0 + theta * nf);
    let lower = phat + scale * (1.0 - 2.0 * phat - root);
    let upper = phat + scale * (1.0 - 2.0 * phat + root);
    (lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0))
}

/// Wald interval `k/n -/+ z_{delta/2} sqrt(phat (1 - phat) / n)`.
///
/// Not a guaranteed-coverage interval: the result is tagged
/// [`BoundMethod::NormalApprox`] and reports `is_rigorous() == false`.
pub fn normal_approx_limits(
    counts: TrialCounts,
    delta: f64,
) -> Result<ConfidenceBounds, BinomError> {
    check_delta(delta)?;
    let phat = counts.frequency();
    let z = -inverse_normal_cdf(delta / 2.0);
    let half = z * (phat * (1.0 - phat) / counts.n as f64).sqrt();
    Ok(ConfidenceBounds {
        lower: (phat - half).clamp(0.0, 1.0),
        upper: (phat + half).clamp(0.0, 1.0),
        delta,
        method: BoundMethod::NormalApprox,
    })
}

/// Standard normal quantile (Wichura's AS 241, relative error ~1e-16).
///
/// Returns `-inf` / `+inf` at 0 / 1 and NaN outside [0, 1].
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_672_7e3 * r + 3.343_057_558_358_812_810_5e4) * r
            + 6.726_577_092_700_870_085_3e4)
            * r
            + 4.592_195_393_154_987_145_7e4)
            * r
            + 1.373_169_376_550_946_112_5e4)
            * r
            + 1.971_590_950_306_551_442_7e3)
            * r
            + 1.331_416_678_917_843_774_5e2)
            * r
            + 3.387_132_872_796_366_608_0;
        let den = ((((((5.226_495_278_852_854_561_0e3 * r + 2.872_908_573_572_194_267_4e4) * r
            + 3.930_789_580_009_271_061_0e4)
            * r
            + 2.121_379_430_158_659_586_7e4)
            * r
            + 5.394_196_021_424_751_107_7e3)
            * r
            + 6.871_870_074_920_579_083_0e2)
            * r
            + 4.231_333_070_160_091_125_2e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414_076_4e-4 * r + 2.272_384_498_926_918_458_3e-2)
            * r
            + 2.417_807_251_774_506_117_7e-1)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34;
        let den = ((((((1.050_750_071_644_416_843_24e-9 * r + 5.475_938_084_995_344_946e-4)
            * r
            + 1.519_866_656_361_645_719_66e-2)
            * r
            + 1.481_039_764_274_800_745_9e-1)
            * r
            + 6.897_673_349_851_000_045_5e-1)
            * r
            + 1.676_384_830_183_803_849_4)
            * r
            + 2.053_191_626_637_758_821_87)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_132_65e-7 * r + 2.711_555_568_743_487_578_15e-5)
            * r
            + 1.242_660_947_388_078_438_6e-3)
            * r
            + 2.653_218_952_657_612_309_3e-2)
            * r
            + 2.965_605_718_285_048_912_3e-1)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2;
        let den = ((((((2.044_263_103_389_939_785_64e-15 * r + 1.421_511_758_316_445_888_7e-7)
            * r
            + 1.846_318_317_510_054_681_8e-5)
            * r
            + 7.868_691_311_456_132_591e-4)
            * r
            + 1.487_536_129_085_061_485_25e-2)
            * r
            + 1.369_298_809_227_358_053_1e-1)
            * r
            + 5.998_322_065_558_879_376_9e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

// ---------------------------------------------------------------------------
// Tail bounds and sample size
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailDirection {
    /// Bounds `Pr{K/n >= p + eps}`.
    Upper,
    /// Bounds `Pr{K/n <= p - eps}`.
    Lower,
}

/// Massart's sub-Gaussian bound on a binomial tail.
///
/// Returns 1 (always valid) when a denominator factor is not strictly
/// positive; in that regime the tail event is empty or trivially bounded.
pub fn massart_tail_bound(n: u64, p: f64, eps: f64, direction: TailDirection) -> f64 {
    let shift = match direction {
        TailDirection::Upper => eps / 3.0,
        TailDirection::Lower => -eps / 3.0,
    };
    let a = p + shift;
    let b = 1.0 - p - shift;
    if !(eps > 0.0) || !(a > 0.0) || !(b > 0.0) {
        return 1.0;
    }
    (-(n as f64) * eps * eps / (2.0 * a * b)).exp().min(1.0)
}

/// Least integer `N` with
/// `N > 2 (1 - eps + alpha eps / 3)(1 - alpha / 3) ln(2/delta) / (alpha^2 eps)`.
///
/// Guarantees `Pr{|p - K/N| < alpha eps} > 1 - delta` at `p = 1 - eps`.
pub fn required_sample_size(params: SampleSizeParams) -> u64 {
    let SampleSizeParams {
        epsilon: e,
        delta: d,
        alpha: a,
    } = params;
    let bound = 2.0 * (1.0 - e + a * e / 3.0) * (1.0 - a / 3.0) * (2.0 / d).ln() / (a * a * e);
    bound.floor() as u64 + 1
}

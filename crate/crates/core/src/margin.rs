//! Probabilistic robustness margin: sequential comparison of a proportion
//! against `1 - epsilon`, an initial bracketing interval by doubling or
//! halving the radius, and bisection of that bracket.
//!
//! All three rely on the proportion crossing `1 - epsilon` once: it should
//! stay below `1 - epsilon` above the margin and at every power of two
//! between the margin and 1. This cannot be checked from samples; see
//! [`crate::curve::separability_diagnostic`] for a post-hoc check on a
//! constructed curve.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binom::{
    explicit_raw, explicit_theta, required_sample_size, BoundMethod, ConfidenceBounds,
    SampleSizeParams,
};
use crate::oracle::BernoulliOracle;
use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarginError {
    #[error("invalid margin parameter: {0}")]
    InvalidParams(String),
    #[error("trial source exhausted after {trials} trials without a verdict")]
    SourceExhausted { trials: u64 },
    #[error("comparison at radius {radius} was inconclusive after {trials} trials")]
    Inconclusive {
        radius: f64,
        trials: u64,
        partial: Box<IntervalEstimate>,
    },
    #[error("no sign change after {steps} doubling/halving steps (last radius {radius})")]
    MaxDoublings {
        radius: f64,
        steps: u32,
        partial: Box<IntervalEstimate>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Proportion above `1 - epsilon` with confidence `1 - delta`.
    Above,
    /// Proportion below `1 - epsilon` with confidence `1 - delta`.
    Below,
    /// Trial cap reached first.
    Inconclusive,
}

impl Verdict {
    /// +1 / -1 / 0.
    pub fn sign(&self) -> i8 {
        match self {
            Verdict::Above => 1,
            Verdict::Below => -1,
            Verdict::Inconclusive => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonParams {
    pub epsilon: f64,
    pub delta: f64,
    pub cap: Option<u64>,
    /// Stopping is checked every `batch` trials (and at the cap).
    pub batch: u64,
}

impl ComparisonParams {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta,
            cap: None,
            batch: 1,
        }
    }

    fn validate(&self) -> Result<(), MarginError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(MarginError::InvalidParams(format!(
                "epsilon = {} not in (0, 1)",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(MarginError::InvalidParams(format!(
                "delta = {} not in (0, 1)",
                self.delta
            )));
        }
        if self.cap == Some(0) {
            return Err(MarginError::InvalidParams("cap must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(MarginError::InvalidParams(
                "batch must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonOutcome {
    pub verdict: Verdict,
    pub trials: u64,
    pub successes: u64,
    pub final_bounds: ConfidenceBounds,
}

/// Draws trials one at a time and stops as soon as the explicit confidence
/// limits at `(N, K)` separate from `1 - epsilon`:
/// `lower > 1 - epsilon` gives [`Verdict::Above`], `upper < 1 - epsilon`
/// gives [`Verdict::Below`].
pub fn probabilistic_comparison<I>(
    trials: I,
    params: &ComparisonParams,
) -> Result<ComparisonOutcome, MarginError>
where
    I: IntoIterator<Item = bool>,
{
    params.validate()?;
    let theta = explicit_theta(params.delta);
    let target = 1.0 - params.epsilon;
    let (mut n, mut k) = (0u64, 0u64);
    let bounds = |n: u64, k: u64| {
        let (lower, upper) = explicit_raw(n, k, theta);
        ConfidenceBounds {
            lower,
            upper,
            delta: params.delta,
            method: BoundMethod::Explicit,
        }
    };
    for success in trials {
        n += 1;
        k += u64::from(success);
        let at_cap = params.cap == Some(n);
        if n % params.batch == 0 || at_cap {
            let b = bounds(n, k);
            let verdict = if b.upper < target {
                Some(Verdict::Below)
            } else if b.lower > target {
                Some(Verdict::Above)
            } else if at_cap {
                Some(Verdict::Inconclusive)
            } else {
                None
            };
            if let Some(verdict) = verdict {
                return Ok(ComparisonOutcome {
                    verdict,
                    trials: n,
                    successes: k,
                    final_bounds: b,
                });
            }
        }
    }
    Err(MarginError::SourceExhausted { trials: n })
}

/// Unbounded trial sequence at one radius. Trial `i` uses substream
/// `stream / i`, so outcomes do not depend on how they are scheduled. Trials
/// are evaluated ahead in parallel chunks of growing size; surplus
/// evaluations past the stopping point are discarded.
pub struct OracleTrials<'a, O: ?Sized> {
    oracle: &'a O,
    radius: f64,
    stream: RngStream,
    next: u64,
    chunk: u64,
    buffer: VecDeque<bool>,
}

impl<'a, O: BernoulliOracle + ?Sized> OracleTrials<'a, O> {
    pub fn new(oracle: &'a O, radius: f64, stream: RngStream) -> Self {
        Self {
            oracle,
            radius,
            stream,
            next: 0,
            chunk: 16,
            buffer: VecDeque::new(),
        }
    }
}

impl<O: BernoulliOracle + ?Sized> Iterator for OracleTrials<'_, O> {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        if self.buffer.is_empty() {
            let start = self.next;
            let end = start + self.chunk;
            let (oracle, radius, stream) = (self.oracle, self.radius, &self.stream);
            let fresh: Vec<bool> = (start..end)
                .into_par_iter()
                .map(|i| oracle.trial(radius, &mut stream.child(i).rng()))
                .collect();
            self.buffer.extend(fresh);
            self.next = end;
            self.chunk = (self.chunk * 2).min(4096);
        }
        self.buffer.pop_front()
    }
}

/// Compares the proportion at `radius` against `1 - epsilon` using trials
/// drawn from `stream`.
pub fn compare_at<O: BernoulliOracle + ?Sized>(
    oracle: &O,
    radius: f64,
    params: &ComparisonParams,
    stream: RngStream,
) -> Result<ComparisonOutcome, MarginError> {
    probabilistic_comparison(OracleTrials::new(oracle, radius, stream), params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Bisection stops once `b - a <= gamma * a`.
    pub gamma: f64,
    pub cap: Option<u64>,
    pub max_doublings: u32,
    pub start_radius: f64,
    pub batch: u64,
}

impl MarginParams {
    /// Defaults: cap `4 * required_sample_size(epsilon, delta, 0.5)`, at most 30
    /// doubling/halving steps, start at radius 1, stopping checked every trial.
    pub fn new(epsilon: f64, delta: f64, gamma: f64) -> Result<Self, MarginError> {
        let size = SampleSizeParams::new(epsilon, delta, 0.5)
            .map_err(|e| MarginError::InvalidParams(e.to_string()))?;
        let params = Self {
            epsilon,
            delta,
            gamma,
            cap: Some(4 * required_sample_size(size)),
            max_doublings: 30,
            start_radius: 1.0,
            batch: 1,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), MarginError> {
        self.comparison().validate()?;
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(MarginError::InvalidParams(format!(
                "gamma = {} must be positive",
                self.gamma
            )));
        }
        if !(self.start_radius > 0.0) || !self.start_radius.is_finite() {
            return Err(MarginError::InvalidParams(format!(
                "start_radius = {} must be positive",
                self.start_radius
            )));
        }
        Ok(())
    }

    pub fn comparison(&self) -> ComparisonParams {
        ComparisonParams {
            epsilon: self.epsilon,
            delta: self.delta,
            cap: self.cap,
            batch: self.batch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Bisection,
}

/// One comparison in a margin run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub stage: Stage,
    pub radius: f64,
    pub trials: u64,
    pub successes: u64,
    pub verdict: Verdict,
    pub lower: f64,
    pub upper: f64,
}

impl ComparisonRecord {
    fn new(stage: Stage, radius: f64, outcome: &ComparisonOutcome) -> Self {
        Self {
            stage,
            radius,
            trials: outcome.trials,
            successes: outcome.successes,
            verdict: outcome.verdict,
            lower: outcome.final_bounds.lower,
            upper: outcome.final_bounds.upper,
        }
    }
}

/// Bracket `[a, b]` believed to contain the margin.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalEstimate {
    pub a: f64,
    pub b: f64,
    /// Successive brackets, starting with the initial one.
    pub history: Vec<(f64, f64)>,
    pub total_trials: u64,
    /// Bisection output `b`; an upper bound with high confidence, not certainty.
    pub soft_upper: f64,
    /// Indices into `records` of bisection steps resolved conservatively after
    /// an inconclusive comparison.
    pub inconclusive_steps: Vec<usize>,
    pub records: Vec<ComparisonRecord>,
}

impl IntervalEstimate {
    /// Caller-supplied bracket.
    pub fn new(a: f64, b: f64) -> Result<Self, MarginError> {
        if !(a > 0.0 && a < b && b.is_finite()) {
            return Err(MarginError::InvalidParams(format!(
                "need 0 < a < b, got [{a}, {b}]"
            )));
        }
        Ok(Self {
            a,
            b,
            history: vec![(a, b)],
            total_trials: 0,
            soft_upper: b,
            inconclusive_steps: Vec::new(),
            records: Vec::new(),
        })
    }

    fn empty() -> Self {
        Self {
            a: f64::NAN,
            b: f64::NAN,
            history: Vec::new(),
            total_trials: 0,
            soft_upper: f64::NAN,
            inconclusive_steps: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

/// Brackets the margin starting from `params.start_radius`: while the
/// proportion is above `1 - epsilon` double the radius, while below halve it,
/// and return the last two radii as `[a, 2a]`.
///
/// Trials for the `j`-th comparison come from `stream / 0 / j`.
pub fn initial_interval<O: BernoulliOracle + ?Sized>(
    oracle: &O,
    params: &MarginParams,
    stream: &RngStream,
) -> Result<IntervalEstimate, MarginError> {
    params.validate()?;
    let comparison = params.comparison();
    let stage_stream = stream.child(0);
    let mut state = IntervalEstimate::empty();
    let mut r = params.start_radius;
    let compare = |r: f64, state: &mut IntervalEstimate| -> Result<Verdict, MarginError> {
        let j = state.records.len() as u64;
        let outcome = compare_at(oracle, r, &comparison, stage_stream.child(j))?;
        state.total_trials += outcome.trials;
        state
            .records
            .push(ComparisonRecord::new(Stage::Initial, r, &outcome));
        log::info!(
            "initial r={r} N={} K={} verdict={:?}",
            outcome.trials,
            outcome.successes,
            outcome.verdict
        );
        if outcome.verdict == Verdict::Inconclusive {
            return Err(MarginError::Inconclusive {
                radius: r,
                trials: outcome.trials,
                partial: Box::new(state.clone()),
            });
        }
        Ok(outcome.verdict)
    };

    let first = compare(r, &mut state)?;
    let mut steps = 0;
    let (a, b) = loop {
        if steps == params.max_doublings {
            return Err(MarginError::MaxDoublings {
                radius: r,
                steps,
                partial: Box::new(state),
            });
        }
        steps += 1;
        match first {
            Verdict::Above => {
                r *= 2.0;
                if compare(r, &mut state)? == Verdict::Below {
                    break (r / 2.0, r);
                }
            }
            _ => {
                r /= 2.0;
                if compare(r, &mut state)? == Verdict::Above {
                    break (r, 2.0 * r);
                }
            }
        }
    };
    state.a = a;
    state.b = b;
    state.soft_upper = b;
    state.history.push((a, b));
    Ok(state)
}

/// Halves `[a, b]` until `b - a <= gamma * a`, keeping the half where the
/// comparison places the crossing. An inconclusive comparison at a midpoint
/// is resolved as `b <- midpoint` and flagged.
///
/// Trials for the `j`-th bisection comparison come from `stream / 1 / j`.
pub fn probabilistic_bisection<O: BernoulliOracle + ?Sized>(
    oracle: &O,
    interval: IntervalEstimate,
    params: &MarginParams,
    stream: &RngStream,
) -> Result<IntervalEstimate, MarginError> {
    params.validate()?;
    let comparison = params.comparison();
    let stage_stream = stream.child(1);
    let mut est = interval;
    if !(est.a > 0.0 && est.a < est.b) {
        return Err(MarginError::InvalidParams(format!(
            "need 0 < a < b, got [{}, {}]",
            est.a, est.b
        )));
    }
    let mut j = 0u64;
    while est.b - est.a > params.gamma * est.a {
        let mid = 0.5 * (est.a + est.b);
        let outcome = compare_at(oracle, mid, &comparison, stage_stream.child(j))?;
        j += 1;
        est.total_trials += outcome.trials;
        est.records
            .push(ComparisonRecord::new(Stage::Bisection, mid, &outcome));
        log::info!(
            "bisection r={mid} N={} K={} verdict={:?}",
            outcome.trials,
            outcome.successes,
            outcome.verdict
        );
        match outcome.verdict {
            Verdict::Above => est.a = mid,
            Verdict::Below => est.b = mid,
            Verdict::Inconclusive => {
                log::warn!("inconclusive comparison at r={mid}; shrinking b conservatively");
                est.inconclusive_steps.push(est.records.len() - 1);
                est.b = mid;
            }
        }
        est.history.push((est.a, est.b));
    }
    est.soft_upper = est.b;
    Ok(est)
}

/// [`initial_interval`] followed by [`probabilistic_bisection`].
pub fn estimate_margin<O: BernoulliOracle + ?Sized>(
    oracle: &O,
    params: &MarginParams,
    stream: &RngStream,
) -> Result<IntervalEstimate, MarginError> {
    let initial = initial_interval(oracle, params, stream)?;
    probabilistic_bisection(oracle, initial, params, stream)
}

//! Robustness degradation curves built backward from the largest radius with
//! sample reuse, and the halving-interval global strategy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binom::{
    explicit_raw, explicit_theta, required_sample_size, BinomError, BoundMethod, ConfidenceBounds,
    SampleSizeParams,
};
use crate::oracle::UncertainSystem;
use crate::rng::RngStream;
use crate::uncertainty::SetError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("invalid radius grid: {0}")]
    InvalidGrid(String),
    #[error("invalid curve parameter: {0}")]
    InvalidParams(String),
    #[error("sampling failed at radius index {row}: {source}")]
    Sampler { row: usize, source: SetError },
    #[error(transparent)]
    Binom(#[from] BinomError),
}

/// `l` radii from `b` down to `a`, evenly spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusGrid {
    a: f64,
    b: f64,
    l: usize,
}

impl RadiusGrid {
    pub fn new(a: f64, b: f64, l: usize) -> Result<Self, CurveError> {
        if !(a > 0.0 && a < b && b.is_finite()) {
            return Err(CurveError::InvalidGrid(format!(
                "need 0 < a < b, got [{a}, {b}]"
            )));
        }
        if l < 2 {
            return Err(CurveError::InvalidGrid(format!(
                "need at least 2 radii, got {l}"
            )));
        }
        let grid = Self { a, b, l };
        if grid.radii().windows(2).any(|w| w[1] >= w[0]) {
            return Err(CurveError::InvalidGrid(format!(
                "[{a}, {b}] too narrow for {l} distinct radii"
            )));
        }
        Ok(grid)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Descending radii; the endpoints are exactly `b` and `a`.
    pub fn radii(&self) -> Vec<f64> {
        let step = (self.b - self.a) / (self.l - 1) as f64;
        let mut r: Vec<f64> = (0..self.l).map(|i| self.b - step * i as f64).collect();
        r[self.l - 1] = self.a;
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: f64,
    pub m1: u64,
    pub m2: u64,
    pub estimate: f64,
    pub bounds: ConfidenceBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationCurve {
    /// Ordered by descending radius.
    pub points: Vec<CurvePoint>,
    pub generated_samples: u64,
    pub n_required: u64,
    pub delta: f64,
    pub seed: u64,
    pub stream_path: Vec<u64>,
}

/// Builds the curve on `grid` from the largest radius down. At row `i`, fresh
/// samples are drawn from `B(r_i)` until row `i` has `n` counted trials; each
/// fresh sample also counts toward every later row whose ball contains it.
/// Earlier rows are never updated, since a sample from `B(r_i)` is not
/// uniform on a larger ball.
///
/// Fresh sample `j` of row `i` uses substream `stream / i / j`.
pub fn sample_reuse_curve<S: UncertainSystem + ?Sized>(
    system: &S,
    n: u64,
    delta: f64,
    grid: &RadiusGrid,
    stream: &RngStream,
) -> Result<DegradationCurve, CurveError> {
    if n == 0 {
        return Err(CurveError::InvalidParams(
            "sample size must be at least 1".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CurveError::InvalidParams(format!(
            "delta = {delta} not in (0, 1)"
        )));
    }
    let radii = grid.radii();
    let l = radii.len();
    let set = system.uncertainty();
    let mut m1 = vec![0u64; l];
    let mut m2 = vec![0u64; l];
    let mut generated = 0u64;

    for i in 0..l {
        let deficit = n.saturating_sub(m1[i]);
        if deficit == 0 {
            continue;
        }
        let row = stream.child(i as u64);
        let r = radii[i];
        let fresh: Vec<(f64, bool)> = (0..deficit)
            .into_par_iter()
            .map(|j| {
                let mut rng = row.child(j).rng();
                let q = set.sample_uniform(r, &mut rng)?;
                let size = set.size_of(&q)?;
                Ok((size, system.satisfies(&q)))
            })
            .collect::<Result<_, SetError>>()
            .map_err(|source| CurveError::Sampler { row: i, source })?;
        generated += deficit;
        for (size, ok) in fresh {
            // Row i always counts its own sample even if rounding puts the
            // size a hair above r_i.
            let mut s = i;
            loop {
                m1[s] += 1;
                m2[s] += u64::from(ok);
                s += 1;
                if s == l || radii[s] < size {
                    break;
                }
            }
        }
        log::debug!(
            "row {i} r={r}: {deficit} fresh samples, m1={} m2={}",
            m1[i],
            m2[i]
        );
    }

    let theta = explicit_theta(delta);
    let points = (0..l)
        .map(|i| {
            let (lower, upper) = explicit_raw(m1[i], m2[i], theta);
            CurvePoint {
                r: radii[i],
                m1: m1[i],
                m2: m2[i],
                estimate: m2[i] as f64 / m1[i] as f64,
                bounds: ConfidenceBounds {
                    lower,
                    upper,
                    delta,
                    method: BoundMethod::Explicit,
                },
            }
        })
        .collect();
    Ok(DegradationCurve {
        points,
        generated_samples: generated,
        n_required: n,
        delta,
        seed: stream.seed(),
        stream_path: stream.path().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStrategyOutcome {
    /// One curve per interval, from `[R/2, R]` downward.
    pub curves: Vec<DegradationCurve>,
    /// Whether some interval ended with every counted sample at its lower
    /// endpoint satisfying the requirement.
    pub terminated: bool,
    pub warning: Option<String>,
}

impl GlobalStrategyOutcome {
    pub fn generated_samples(&self) -> u64 {
        self.curves.iter().map(|c| c.generated_samples).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalParams {
    pub n: u64,
    pub delta: f64,
    pub r_hat: f64,
    pub l: usize,
    pub max_halvings: u32,
}

impl GlobalParams {
    /// `max_halvings` defaults to 20.
    pub fn new(n: u64, delta: f64, r_hat: f64, l: usize) -> Self {
        Self {
            n,
            delta,
            r_hat,
            l,
            max_halvings: 20,
        }
    }
}

/// Runs [`sample_reuse_curve`] on `[R/2, R]`, `[R/4, R/2]`, ... until the
/// lower endpoint of an interval has `m2 = m1`, or `max_halvings` halvings
/// have been made. Interval `h` uses substream `stream / h`.
pub fn global_strategy<S: UncertainSystem + ?Sized>(
    system: &S,
    params: &GlobalParams,
    stream: &RngStream,
) -> Result<GlobalStrategyOutcome, CurveError> {
    if !(params.r_hat > 0.0) || !params.r_hat.is_finite() {
        return Err(CurveError::InvalidParams(format!(
            "R = {} must be positive",
            params.r_hat
        )));
    }
    let (mut a, mut b) = (params.r_hat / 2.0, params.r_hat);
    let mut curves = Vec::new();
    for h in 0..=params.max_halvings {
        let grid = RadiusGrid::new(a, b, params.l)?;
        let curve = sample_reuse_curve(
            system,
            params.n,
            params.delta,
            &grid,
            &stream.child(u64::from(h)),
        )?;
        let last = *curve.points.last().expect("grid has at least two radii");
        log::info!(
            "interval [{a}, {b}]: {} fresh samples, m1={} m2={} at r=a",
            curve.generated_samples,
            last.m1,
            last.m2
        );
        curves.push(curve);
        if last.m2 == last.m1 {
            return Ok(GlobalStrategyOutcome {
                curves,
                terminated: true,
                warning: None,
            });
        }
        b = a;
        a = b / 2.0;
    }
    let warning = format!(
        "stopped after {} halvings without an all-success lower endpoint (last interval [{}, {}])",
        params.max_halvings,
        a * 2.0,
        b * 2.0
    );
    log::warn!("{warning}");
    Ok(GlobalStrategyOutcome {
        curves,
        terminated: false,
        warning: Some(warning),
    })
}

/// Sample size per radius guaranteeing the curve accuracy for `(epsilon, delta)`
/// with trade-off `alpha`.
pub fn choose_sample_size(epsilon: f64, delta: f64, alpha: f64) -> Result<u64, CurveError> {
    Ok(required_sample_size(SampleSizeParams::new(
        epsilon, delta, alpha,
    )?))
}

/// Pairs `(i, j)` of points with `r_i > r_j` where the proportion is
/// confidently above `1 - epsilon` at the larger radius yet confidently below
/// it at the smaller one. Such a pair contradicts a single crossing of
/// `1 - epsilon`; an empty result does not prove one.
pub fn separability_diagnostic(points: &[CurvePoint], epsilon: f64) -> Vec<(usize, usize)> {
    let target = 1.0 - epsilon;
    let mut flagged = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if p.bounds.lower <= target {
            continue;
        }
        for (j, q) in points.iter().enumerate() {
            if q.r < p.r && q.bounds.upper < target {
                flagged.push((i, j));
            }
        }
    }
    flagged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binom::{explicit_limits, TrialCounts};
    use crate::oracle::SyntheticSystem;
    use crate::uncertainty::{SamplePoint, UncertaintySet};

    fn threshold_system(
        set: UncertaintySet,
        t: f64,
    ) -> SyntheticSystem<impl Fn(&SamplePoint) -> bool + Sync> {
        let size_set = set.clone();
        SyntheticSystem {
            set,
            predicate: move |q: &SamplePoint| size_set.size_of(q).unwrap() <= t,
        }
    }

    #[test]
    fn grid_endpoints_and_errors() {
        let g = RadiusGrid::new(11.0 / 16.0, 11.0 / 8.0, 100).unwrap();
        let r = g.radii();
        assert_eq!(r.len(), 100);
        assert_eq!(r[0], 11.0 / 8.0);
        assert_eq!(r[99], 11.0 / 16.0);
        assert!(r.windows(2).all(|w| w[1] < w[0]));
        assert!(RadiusGrid::new(1.0, 1.0, 3).is_err());
        assert!(RadiusGrid::new(0.0, 1.0, 3).is_err());
        assert!(RadiusGrid::new(0.5, 1.0, 1).is_err());
    }

    #[test]
    fn always_true_predicate() {
        let sys = SyntheticSystem {
            set: UncertaintySet::box_set(3).unwrap(),
            predicate: |_: &SamplePoint| true,
        };
        let grid = RadiusGrid::new(0.5, 1.0, 6).unwrap();
        let c = sample_reuse_curve(&sys, 500, 0.01, &grid, &RngStream::new(4)).unwrap();
        for p in &c.points {
            assert_eq!(p.estimate, 1.0);
            assert_eq!(p.m1, p.m2);
            assert!(p.m1 >= 500);
            let b = explicit_limits(TrialCounts::new(p.m1, p.m1).unwrap(), 0.01).unwrap();
            assert_eq!(p.bounds.lower, b.lower);
            assert_eq!(p.bounds.upper, 1.0);
        }
    }

    #[test]
    fn accounting() {
        let sys = threshold_system(UncertaintySet::lp_ball(2.0, 2).unwrap(), 0.6);
        let grid = RadiusGrid::new(0.5, 1.0, 11).unwrap();
        let n = 2000;
        let c = sample_reuse_curve(&sys, n, 0.01, &grid, &RngStream::new(8)).unwrap();
        assert_eq!(c.points[0].m1, n);
        assert!(c.points.iter().all(|p| p.m1 >= n && p.m2 <= p.m1));
        assert!(c.generated_samples < n * 11);
        assert!(c.generated_samples >= n);
        for p in &c.points {
            assert!(p.bounds.lower <= p.estimate && p.estimate <= p.bounds.upper);
        }
    }

    #[test]
    fn single_sample_increments() {
        // With n = 1 the first row draws one sample; it lands in rows 1..=j
        // for the last j with r_j >= size. Later rows draw only if uncovered.
        let set = UncertaintySet::box_set(1).unwrap();
        let sys = SyntheticSystem {
            set,
            predicate: |_: &SamplePoint| true,
        };
        let grid = RadiusGrid::new(0.1, 1.0, 10).unwrap();
        let c = sample_reuse_curve(&sys, 1, 0.5, &grid, &RngStream::new(2)).unwrap();
        assert!(c.points.iter().all(|p| p.m1 == 1));
        assert!(c.generated_samples <= 10);
    }

    #[test]
    fn reused_rows_match_volume_law() {
        // For q uniform on B(r) in d dims, Pr{size <= t} = (t / r)^d; the
        // counted trials at every row must reproduce that proportion.
        let d = 3;
        let t = 0.8;
        let sys = threshold_system(UncertaintySet::lp_ball(1.0, d).unwrap(), t);
        let grid = RadiusGrid::new(0.85, 1.2, 8).unwrap();
        let c = sample_reuse_curve(&sys, 4000, 0.01, &grid, &RngStream::new(31)).unwrap();
        for p in &c.points {
            let truth = (t / p.r).powi(d as i32);
            let se = (truth * (1.0 - truth) / p.m1 as f64).sqrt();
            assert!(
                (p.estimate - truth).abs() < 4.5 * se,
                "r={} est={} truth={}",
                p.r,
                p.estimate,
                truth
            );
        }
    }

    #[test]
    fn deterministic() {
        let sys = threshold_system(UncertaintySet::box_set(2).unwrap(), 0.7);
        let grid = RadiusGrid::new(0.5, 1.0, 5).unwrap();
        let run = || sample_reuse_curve(&sys, 300, 0.01, &grid, &RngStream::new(12)).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn global_strategy_single_interval() {
        let sys = threshold_system(UncertaintySet::box_set(3).unwrap(), 0.9);
        let out = global_strategy(
            &sys,
            &GlobalParams::new(1000, 0.01, 1.4, 10),
            &RngStream::new(6),
        )
        .unwrap();
        assert!(out.terminated);
        assert_eq!(out.curves.len(), 1);
        let last = out.curves[0].points.last().unwrap();
        assert_eq!(last.r, 0.7);
        assert_eq!(last.m1, last.m2);
    }

    #[test]
    fn global_strategy_halves_then_stops() {
        let sys = threshold_system(UncertaintySet::box_set(2).unwrap(), 0.3);
        let out = global_strategy(
            &sys,
            &GlobalParams::new(200, 0.01, 2.0, 4),
            &RngStream::new(6),
        )
        .unwrap();
        assert!(out.terminated);
        let ends: Vec<(f64, f64)> = out
            .curves
            .iter()
            .map(|c| (c.points[0].r, c.points.last().unwrap().r))
            .collect();
        assert_eq!(ends, vec![(2.0, 1.0), (1.0, 0.5), (0.5, 0.25)]);
    }

    #[test]
    fn global_strategy_exhaustion_warns() {
        let sys = SyntheticSystem {
            set: UncertaintySet::box_set(1).unwrap(),
            predicate: |_: &SamplePoint| false,
        };
        let p = GlobalParams {
            max_halvings: 3,
            ..GlobalParams::new(20, 0.1, 1.0, 3)
        };
        let out = global_strategy(&sys, &p, &RngStream::new(1)).unwrap();
        assert!(!out.terminated);
        assert_eq!(out.curves.len(), 4);
        assert!(out.warning.is_some());
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(choose_sample_size(0.001, 0.001, 0.5).unwrap(), 50631);
        assert_eq!(choose_sample_size(0.01, 0.01, 0.2).unwrap(), 24495);
        assert!(
            choose_sample_size(0.01, 0.01, 0.9).unwrap()
                < choose_sample_size(0.01, 0.01, 0.5).unwrap()
        );
        for w in [0.1, 0.3, 0.5, 0.7, 0.9].windows(2) {
            assert!(
                choose_sample_size(0.01, 0.01, w[1]).unwrap()
                    <= choose_sample_size(0.01, 0.01, w[0]).unwrap()
            );
        }
        assert!(choose_sample_size(1.5, 0.01, 0.5).is_err());
    }

    #[test]
    fn separability_flags_reversal() {
        let pt = |r: f64, lower: f64, upper: f64| CurvePoint {
            r,
            m1: 1,
            m2: 1,
            estimate: 0.5 * (lower + upper),
            bounds: ConfidenceBounds {
                lower,
                upper,
                delta: 0.01,
                method: BoundMethod::Explicit,
            },
        };
        let good = [pt(2.0, 0.5, 0.9), pt(1.0, 0.995, 1.0)];
        assert!(separability_diagnostic(&good, 0.01).is_empty());
        let bad = [pt(2.0, 0.995, 1.0), pt(1.0, 0.5, 0.9)];
        assert_eq!(separability_diagnostic(&bad, 0.01), vec![(0, 1)]);
    }
}

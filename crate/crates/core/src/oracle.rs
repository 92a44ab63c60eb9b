//! The two views of a robustness problem that the Monte Carlo layers need.
//!
//! The margin search only needs a Bernoulli trial at a radius
//! ([`BernoulliOracle`]); sample reuse additionally needs the sample itself
//! and its size ([`UncertainSystem`]).

use crate::rng::StreamRng;
use crate::systems::RobustnessProblem;
use crate::uncertainty::{SamplePoint, UncertaintySet};

/// One Bernoulli trial of "the requirement holds" at uncertainty radius `r`.
pub trait BernoulliOracle: Sync {
    fn trial(&self, radius: f64, rng: &mut StreamRng) -> bool;
}

impl<F> BernoulliOracle for F
where
    F: Fn(f64, &mut StreamRng) -> bool + Sync,
{
    fn trial(&self, radius: f64, rng: &mut StreamRng) -> bool {
        self(radius, rng)
    }
}

/// An uncertainty set together with a requirement on its points.
pub trait UncertainSystem: Sync {
    fn uncertainty(&self) -> &UncertaintySet;
    fn satisfies(&self, delta: &SamplePoint) -> bool;
}

fn sample_and_check<S: UncertainSystem + ?Sized>(
    system: &S,
    radius: f64,
    rng: &mut StreamRng,
) -> bool {
    match system.uncertainty().sample_uniform(radius, rng) {
        Ok(x) => system.satisfies(&x),
        Err(e) => {
            log::warn!("sampling at radius {radius} failed: {e}; counted as violation");
            false
        }
    }
}

impl UncertainSystem for RobustnessProblem {
    fn uncertainty(&self) -> &UncertaintySet {
        &self.set
    }

    fn satisfies(&self, delta: &SamplePoint) -> bool {
        self.evaluate_predicate(delta)
    }
}

impl BernoulliOracle for RobustnessProblem {
    fn trial(&self, radius: f64, rng: &mut StreamRng) -> bool {
        sample_and_check(self, radius, rng)
    }
}

/// An uncertainty set with an arbitrary predicate; mostly for tests and
/// calibration runs.
pub struct SyntheticSystem<F> {
    pub set: UncertaintySet,
    pub predicate: F,
}

impl<F> UncertainSystem for SyntheticSystem<F>
where
    F: Fn(&SamplePoint) -> bool + Sync,
{
    fn uncertainty(&self) -> &UncertaintySet {
        &self.set
    }

    fn satisfies(&self, delta: &SamplePoint) -> bool {
        (self.predicate)(delta)
    }
}

impl<F> BernoulliOracle for SyntheticSystem<F>
where
    F: Fn(&SamplePoint) -> bool + Sync,
{
    fn trial(&self, radius: f64, rng: &mut StreamRng) -> bool {
        sample_and_check(self, radius, rng)
    }
}

//! Probabilistic robustness analysis of uncertain LTI systems.
pub mod binom;
pub mod cli;
pub mod curve;
pub mod margin;
pub mod oracle;
pub mod rng;
pub mod systems;
pub mod uncertainty;

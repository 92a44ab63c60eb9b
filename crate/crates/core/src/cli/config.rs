//! Experiment configuration file.
//!
//! TOML with `[section]` headers; every table rejects unknown keys. Which
//! sections are required depends on the mode; [`ExperimentConfig::resolve`]
//! checks them and builds the library objects.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::binom::SampleSizeParams;
use crate::margin::MarginParams;
use crate::systems::{
    AffineGain, Compensator, Disk, LinearFactor, Monomial, MultiaffineCoeff, PoleRegion,
    Polynomial, Requirement, RiseDefinition, RobustnessProblem, SimParams, TimeSpec,
    UncertainPlant,
};
use crate::uncertainty::{ScalarBlock, UncertaintySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    CiTable,
    Margin,
    Curve,
    Specs,
    Demo1,
    Demo2,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::CiTable => "ci-table",
            Mode::Margin => "margin",
            Mode::Curve => "curve",
            Mode::Specs => "specs",
            Mode::Demo1 => "demo1",
            Mode::Demo2 => "demo2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the command-line mode when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Confidence parameter for margin comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<MarginSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_table: Option<CiTableSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specs: Option<SpecsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginSection {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_doublings: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    pub delta: f64,
    pub l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Overrides the sample size computed from `epsilon`, `delta`, `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_halvings: Option<u32>,
    /// Upper end of the first interval. Required in curve mode; the demos
    /// take it from the margin estimate unless set here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CiTableSection {
    pub n: u64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecsSection {
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub plant: PlantConfig,
    pub compensator: CompensatorConfig,
    pub requirement: RequirementConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    /// `(gain + sum gain_terms) * prod(numerator) / prod(denominator)` with
    /// monic linear factors `s + constant + coeff * delta[index]`.
    Factored {
        gain: f64,
        #[serde(default)]
        gain_terms: Vec<GainTerm>,
        #[serde(default)]
        numerator: Vec<FactorConfig>,
        denominator: Vec<FactorConfig>,
        dim: usize,
    },
    /// Coefficients highest degree first, each a sum of monomials in delta.
    CoeffTable {
        numerator: Vec<Vec<MonomialConfig>>,
        denominator: Vec<Vec<MonomialConfig>>,
        dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainTerm {
    pub index: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialConfig {
    pub coeff: f64,
    #[serde(default)]
    pub vars: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensatorConfig {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RequirementConfig {
    Stability,
    DStability {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_plane: Option<f64>,
        #[serde(default)]
        disks: Vec<DiskConfig>,
    },
    TimeDomain {
        rise_time_max: f64,
        settling_time_max: f64,
        peak_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    pub re: f64,
    pub im: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settle_band: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rise_definition: Option<RiseDefinition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UncertaintyConfig {
    LpBall { p: f64, dim: usize },
    Box { dim: usize },
    ScalarBlocks { blocks: Vec<ScalarBlock> },
    StarSimplex { vertices: Vec<Vec<f64>> },
}

/// Validated run parameters for one mode.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub mode: Mode,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub margin: Option<MarginParams>,
    pub curve: Option<CurveParams>,
    pub ci_table: Option<CiTableSection>,
    pub point: Option<Vec<f64>>,
    pub problem: Option<RobustnessProblem>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveParams {
    pub n: u64,
    pub delta: f64,
    pub l: usize,
    pub max_halvings: u32,
    pub r_hat: Option<f64>,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

fn probability(field: &str, v: Option<f64>) -> Result<f64, CliError> {
    match v {
        None => Err(invalid(field, "required for this mode")),
        Some(x) if x > 0.0 && x < 1.0 => Ok(x),
        Some(x) => Err(invalid(field, format!("must be in (0, 1), got {x}"))),
    }
}

fn required<'a, T>(field: &str, v: &'a Option<T>) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| invalid(field, "section required for this mode"))
}

fn polynomial(field: &str, coeffs: &[f64]) -> Result<Polynomial, CliError> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(invalid(field, "coefficients must be finite"));
    }
    Polynomial::new(coeffs.to_vec()).map_err(|e| invalid(field, e))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Embedded configuration of a worked example.
    pub fn demo(mode: Mode) -> Option<Self> {
        let text = match mode {
            Mode::Demo1 => include_str!("../../configs/demo1.toml"),
            Mode::Demo2 => include_str!("../../configs/demo2.toml"),
            _ => return None,
        };
        Some(Self::from_toml(text).expect("embedded demo config parses"))
    }

    pub fn resolve(&self, mode: Mode) -> Result<Resolved, CliError> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(invalid(
                    "mode",
                    format!("config is for '{}', not '{}'", m.name(), mode.name()),
                ));
            }
        }
        let mut out = Resolved {
            mode,
            seed: self.seed,
            epsilon: None,
            margin: None,
            curve: None,
            ci_table: None,
            point: None,
            problem: None,
        };
        let needs_margin = matches!(mode, Mode::Margin | Mode::Demo1 | Mode::Demo2);
        let needs_curve = matches!(mode, Mode::Curve | Mode::Demo1 | Mode::Demo2);
        if needs_margin || needs_curve {
            out.epsilon = Some(probability("epsilon", self.epsilon)?);
        } else if let Some(e) = self.epsilon {
            probability("epsilon", Some(e))?;
        }
        if needs_margin {
            out.margin = Some(self.margin_params(out.epsilon.unwrap())?);
        }
        if needs_curve {
            out.curve = Some(self.curve_params(out.epsilon.unwrap(), mode == Mode::Curve)?);
        }
        if mode == Mode::CiTable {
            let t = required("ci_table", &self.ci_table)?;
            if t.n == 0 {
                return Err(invalid("ci_table.n", "must be at least 1"));
            }
            probability("ci_table.delta", Some(t.delta))?;
            out.ci_table = Some(t.clone());
        } else {
            out.problem = Some(self.problem()?);
        }
        if mode == Mode::Specs {
            let point = &required("specs", &self.specs)?.point;
            let dim = out.problem.as_ref().unwrap().plant.dim();
            if point.len() != dim {
                return Err(invalid(
                    "specs.point",
                    format!("expected {dim} coordinates, got {}", point.len()),
                ));
            }
            if point.iter().any(|x| !x.is_finite()) {
                return Err(invalid("specs.point", "coordinates must be finite"));
            }
            out.point = Some(point.clone());
        }
        Ok(out)
    }

    fn margin_params(&self, epsilon: f64) -> Result<MarginParams, CliError> {
        let m = required("margin", &self.margin)?;
        let delta = probability("delta", self.delta)?;
        if !(m.gamma > 0.0 && m.gamma.is_finite()) {
            return Err(invalid(
                "margin.gamma",
                format!("must be positive, got {}", m.gamma),
            ));
        }
        let mut p = MarginParams::new(epsilon, delta, m.gamma).map_err(|e| invalid("margin", e))?;
        if let Some(cap) = m.cap {
            if cap == 0 {
                return Err(invalid("margin.cap", "must be at least 1"));
            }
            p.cap = Some(cap);
        }
        if let Some(d) = m.max_doublings {
            p.max_doublings = d;
        }
        if let Some(r) = m.start_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid(
                    "margin.start_radius",
                    format!("must be positive, got {r}"),
                ));
            }
            p.start_radius = r;
        }
        if let Some(b) = m.batch {
            if b == 0 {
                return Err(invalid("margin.batch", "must be at least 1"));
            }
            p.batch = b;
        }
        Ok(p)
    }

    fn curve_params(&self, epsilon: f64, need_r_hat: bool) -> Result<CurveParams, CliError> {
        let c = required("curve", &self.curve)?;
        let delta = probability("curve.delta", Some(c.delta))?;
        if c.l < 2 {
            return Err(invalid(
                "curve.l",
                format!("must be at least 2, got {}", c.l),
            ));
        }
        let n = match (c.n, c.alpha) {
            (Some(0), _) => return Err(invalid("curve.n", "must be at least 1")),
            (Some(n), _) => n,
            (None, Some(alpha)) => {
                let p = SampleSizeParams::new(epsilon, delta, alpha)
                    .map_err(|e| invalid("curve.alpha", e))?;
                crate::binom::required_sample_size(p)
            }
            (None, None) => return Err(invalid("curve", "one of 'n' or 'alpha' is required")),
        };
        if let Some(r) = c.r_hat {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("curve.r_hat", format!("must be positive, got {r}")));
            }
        } else if need_r_hat {
            return Err(invalid("curve.r_hat", "required in curve mode"));
        }
        Ok(CurveParams {
            n,
            delta,
            l: c.l,
            max_halvings: c.max_halvings.unwrap_or(20),
            r_hat: c.r_hat,
        })
    }

    fn problem(&self) -> Result<RobustnessProblem, CliError> {
        let sys = required("system", &self.system)?;
        let set_cfg = required("uncertainty", &self.uncertainty)?;
        let plant = match &sys.plant {
            PlantConfig::Factored {
                gain,
                gain_terms,
                numerator,
                denominator,
                dim,
            } => {
                let factor = |f: &FactorConfig| match f.index {
                    Some(i) => LinearFactor::uncertain(f.constant, f.coeff.unwrap_or(0.0), i),
                    None => LinearFactor::fixed(f.constant),
                };
                if numerator
                    .iter()
                    .chain(denominator)
                    .any(|f| f.index.is_none() && f.coeff.is_some())
                {
                    return Err(invalid("system.plant", "factor has 'coeff' but no 'index'"));
                }
                UncertainPlant::factored(
                    AffineGain {
                        constant: *gain,
                        terms: gain_terms.iter().map(|t| (t.index, t.coeff)).collect(),
                    },
                    numerator.iter().map(factor).collect(),
                    denominator.iter().map(factor).collect(),
                    *dim,
                )
            }
            PlantConfig::CoeffTable {
                numerator,
                denominator,
                dim,
            } => {
                let coeff = |c: &Vec<MonomialConfig>| MultiaffineCoeff {
                    terms: c
                        .iter()
                        .map(|m| Monomial {
                            coeff: m.coeff,
                            vars: m.vars.clone(),
                        })
                        .collect(),
                };
                UncertainPlant::coeff_table(
                    numerator.iter().map(coeff).collect(),
                    denominator.iter().map(coeff).collect(),
                    *dim,
                )
            }
        }
        .map_err(|e| invalid("system.plant", e))?;

        let compensator = Compensator::new(
            polynomial("system.compensator.numerator", &sys.compensator.numerator)?,
            polynomial(
                "system.compensator.denominator",
                &sys.compensator.denominator,
            )?,
        )
        .map_err(|e| invalid("system.compensator", e))?;

        let requirement = match &sys.requirement {
            RequirementConfig::Stability => Requirement::Stability,
            RequirementConfig::DStability { half_plane, disks } => {
                let disks = disks
                    .iter()
                    .map(|d| Disk {
                        center: Complex64::new(d.re, d.im),
                        radius: d.radius,
                    })
                    .collect();
                Requirement::DStability(
                    PoleRegion::new(*half_plane, disks)
                        .map_err(|e| invalid("system.requirement", e))?,
                )
            }
            RequirementConfig::TimeDomain {
                rise_time_max,
                settling_time_max,
                peak_max,
            } => {
                let sim = self.sim_params()?;
                Requirement::TimeDomain(
                    TimeSpec::new(*rise_time_max, *settling_time_max, *peak_max, sim)
                        .map_err(|e| invalid("system.requirement", e))?,
                )
            }
        };

        let set = match set_cfg {
            UncertaintyConfig::LpBall { p, dim } => UncertaintySet::lp_ball(*p, *dim),
            UncertaintyConfig::Box { dim } => UncertaintySet::box_set(*dim),
            UncertaintyConfig::ScalarBlocks { blocks } => {
                UncertaintySet::scalar_blocks(blocks.clone())
            }
            UncertaintyConfig::StarSimplex { vertices } => {
                UncertaintySet::star_simplex(vertices.clone())
            }
        }
        .map_err(|e| invalid("uncertainty", e))?;

        RobustnessProblem::new(plant, compensator, requirement, set)
            .map_err(|e| invalid("system", e))
    }

    fn sim_params(&self) -> Result<SimParams, CliError> {
        let mut p = SimParams::default();
        if let Some(s) = self.system.as_ref().and_then(|s| s.sim.as_ref()) {
            p.dt = s.dt.unwrap_or(p.dt);
            p.horizon = s.horizon.unwrap_or(p.horizon);
            p.settle_band = s.settle_band.unwrap_or(p.settle_band);
            p.rise_def = s.rise_definition.unwrap_or(p.rise_def);
            p.hold = s.hold.unwrap_or(p.hold);
        }
        p.validate().map_err(|e| invalid("system.sim", e))?;
        Ok(p)
    }
}

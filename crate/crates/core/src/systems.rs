//! Uncertain LTI closed loops: characteristic polynomials, root finding,
//! pole-region tests, step-response specifications, and the robustness
//! predicate evaluated at a single uncertainty sample.

use num_complex::Complex64;
use thiserror::Error;

use crate::uncertainty::{SamplePoint, UncertaintySet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("uncertainty point has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polynomial has no nonzero coefficient")]
    ZeroPolynomial,
    #[error("polynomial of degree {0} has no roots to find")]
    ConstantPolynomial(usize),
    #[error("QR iteration did not converge for a degree-{0} polynomial")]
    NoConvergence(usize),
    #[error("root {root} fails the residual check: |p(root)| = {residual:e} > {limit:e}")]
    Residual {
        root: Complex64,
        residual: f64,
        limit: f64,
    },
    #[error("denominator is not strictly stable (max real part {0})")]
    Unstable(f64),
    #[error("closed loop has zero DC gain; step-response levels are undefined")]
    ZeroDcGain,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

// ---------------------------------------------------------------------------
// Polynomials
// ---------------------------------------------------------------------------

/// Real polynomial, coefficients ordered from the highest degree down.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Leading zeros are dropped. Fails only for the zero polynomial.
    pub fn new(coeffs: Vec<f64>) -> Result<Self, SystemError> {
        let first = coeffs
            .iter()
            .position(|&c| c != 0.0)
            .ok_or(SystemError::ZeroPolynomial)?;
        Ok(Self {
            coeffs: coeffs[first..].to_vec(),
        })
    }

    pub fn constant(c: f64) -> Result<Self, SystemError> {
        Self::new(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    fn derivative_at(&self, z: Complex64) -> Complex64 {
        let n = self.degree();
        self.coeffs[..n]
            .iter()
            .enumerate()
            .fold(Complex64::new(0.0, 0.0), |acc, (i, &c)| {
                acc * z + c * (n - i) as f64
            })
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial { coeffs: out }
    }

    /// Sum; `None` if the result is identically zero.
    pub fn add(&self, other: &Polynomial) -> Option<Polynomial> {
        let n = self.coeffs.len().max(other.coeffs.len());
        let pad = |c: &[f64]| {
            let mut v = vec![0.0; n - c.len()];
            v.extend_from_slice(c);
            v
        };
        let sum: Vec<f64> = pad(&self.coeffs)
            .iter()
            .zip(pad(&other.coeffs))
            .map(|(a, b)| a + b)
            .collect();
        Polynomial::new(sum).ok()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }
}

/// All complex roots, with multiplicity.
///
/// Eigenvalues of the balanced companion matrix by shifted Hessenberg QR,
/// followed by a Newton polish on the original coefficients. Every root must
/// pass `|p(z)| <= 1e-8 * max|coeff| * max(1, |z|)^deg`.
pub fn poly_roots(p: &Polynomial) -> Result<Vec<Complex64>, SystemError> {
    let degree = p.degree();
    if degree == 0 {
        return Err(SystemError::ConstantPolynomial(0));
    }
    let c = p.coeffs();
    // Exact zero roots.
    let trailing = c.iter().rev().take_while(|&&x| x == 0.0).count();
    let core = &c[..c.len() - trailing];
    let mut roots = vec![Complex64::new(0.0, 0.0); trailing];
    let n = core.len() - 1;
    if n == 1 {
        roots.push(Complex64::new(-core[1] / core[0], 0.0));
    } else if n > 1 {
        // 1-based (n+1)x(n+1) storage to keep the QR sweep readable.
        let mut a = vec![vec![0.0; n + 1]; n + 1];
        for k in 1..=n {
            a[1][k] = -core[k] / core[0];
        }
        for j in 2..=n {
            a[j][j - 1] = 1.0;
        }
        balance(&mut a, n);
        let eig = hessenberg_eigenvalues(&mut a, n).ok_or(SystemError::NoConvergence(n))?;
        roots.extend(eig);
    }
    let scale = p.max_abs_coeff();
    for z in roots.iter_mut() {
        polish(p, z);
        let residual = p.eval_complex(*z).norm();
        let limit = 1e-8 * scale * z.norm().max(1.0).powi(degree as i32);
        if !(residual <= limit) {
            return Err(SystemError::Residual {
                root: *z,
                residual,
                limit,
            });
        }
    }
    roots.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(roots)
}

fn polish(p: &Polynomial, z: &mut Complex64) {
    let mut best = p.eval_complex(*z).norm();
    for _ in 0..4 {
        let d = p.derivative_at(*z);
        if d.norm() == 0.0 {
            return;
        }
        let step = p.eval_complex(*z) / d;
        let candidate = *z - step;
        let r = p.eval_complex(candidate).norm();
        if !(r < best) {
            return;
        }
        best = r;
        *z = candidate;
    }
}

/// Diagonal similarity scaling by powers of two so that row and column norms
/// are comparable (1-based indices).
fn balance(a: &mut [Vec<f64>], n: usize) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let (mut c, mut r) = (0.0, 0.0);
            for j in 1..=n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let s = c + r;
                let mut f = 1.0;
                let mut g = r / RADIX;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        a[i][j] *= g;
                    }
                    for j in 1..=n {
                        a[j][i] *= f;
                    }
                }
            }
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix (1-based) by the Francis
/// double-shift QR algorithm. `None` if some eigenvalue needs more than 60
/// iterations.
#[allow(clippy::many_single_char_names)]
fn hessenberg_eigenvalues(a: &mut [Vec<f64>], n: usize) -> Option<Vec<Complex64>> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i - 1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            // Look for a single small subdiagonal element.
            let mut l = nu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
            } else {
                y = a[nu - 1][nu - 1];
                w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nu - 1] = x + z;
                        wr[nu] = x + z;
                        if z != 0.0 {
                            wr[nu] = x - w / z;
                        }
                        wi[nu - 1] = 0.0;
                        wi[nu] = 0.0;
                    } else {
                        wr[nu - 1] = x + p;
                        wr[nu] = x + p;
                        wi[nu - 1] = -z;
                        wi[nu] = z;
                    }
                    nn -= 2;
                } else {
                    if its == 60 {
                        return None;
                    }
                    if its % 10 == 0 && its > 0 {
                        // Exceptional shift.
                        t += x;
                        for i in 1..=nu {
                            a[i][i] -= x;
                        }
                        let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nu - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nu {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nu - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nu - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = nu.min(k + 3);
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nu - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 1 || l as isize >= nn - 1 {
                break;
            }
        }
    }
    Some((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// `constant + sum coeff * delta[index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGain {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineGain {
    fn eval(&self, delta: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * delta[i]).sum::<f64>()
    }
}

/// Monic linear factor `s + constant + coeff * delta[index]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFactor {
    pub constant: f64,
    pub coeff: f64,
    pub index: Option<usize>,
}

impl LinearFactor {
    pub fn fixed(constant: f64) -> Self {
        Self {
            constant,
            coeff: 0.0,
            index: None,
        }
    }

    pub fn uncertain(constant: f64, coeff: f64, index: usize) -> Self {
        Self {
            constant,
            coeff,
            index: Some(index),
        }
    }

    fn instantiate(&self, delta: &[f64]) -> Polynomial {
        let shift = self.constant + self.index.map_or(0.0, |i| self.coeff * delta[i]);
        Polynomial {
            coeffs: vec![1.0, shift],
        }
    }
}

/// One monomial `coeff * prod delta[vars]` of a multiaffine coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub vars: Vec<usize>,
}

/// Polynomial coefficient that is multiaffine in the uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiaffineCoeff {
    pub terms: Vec<Monomial>,
}

impl MultiaffineCoeff {
    fn eval(&self, delta: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| m.coeff * m.vars.iter().map(|&i| delta[i]).product::<f64>())
            .sum()
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().flat_map(|m| m.vars.iter().copied()).max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UncertainPlant {
    /// `gain(delta) * prod(numerator) / prod(denominator)`.
    Factored {
        gain: AffineGain,
        numerator: Vec<LinearFactor>,
        denominator: Vec<LinearFactor>,
        dim: usize,
    },
    /// Coefficient lists, highest degree first; the degree is implied by the
    /// list length and the leading denominator coefficient must not vanish.
    CoeffTable {
        numerator: Vec<MultiaffineCoeff>,
        denominator: Vec<MultiaffineCoeff>,
        dim: usize,
    },
}

impl UncertainPlant {
    pub fn factored(
        gain: AffineGain,
        numerator: Vec<LinearFactor>,
        denominator: Vec<LinearFactor>,
        dim: usize,
    ) -> Result<Self, SystemError> {
        let max_index = gain
            .terms
            .iter()
            .map(|t| t.0)
            .chain(numerator.iter().chain(&denominator).filter_map(|f| f.index))
            .max();
        if max_index.is_some_and(|i| i >= dim) {
            return Err(SystemError::InvalidModel(format!(
                "uncertainty index {} out of range for dimension {dim}",
                max_index.unwrap()
            )));
        }
        if numerator.len() > denominator.len() {
            return Err(SystemError::InvalidModel("plant must be proper".into()));
        }
        Ok(Self::Factored {
            gain,
            numerator,
            denominator,
            dim,
        })
    }

    pub fn coeff_table(
        numerator: Vec<MultiaffineCoeff>,
        denominator: Vec<MultiaffineCoeff>,
        dim: usize,
    ) -> Result<Self, SystemError> {
        if numerator.is_empty() || denominator.is_empty() {
            return Err(SystemError::InvalidModel(
                "coefficient lists must be non-empty".into(),
            ));
        }
        if numerator.len() > denominator.len() {
            return Err(SystemError::InvalidModel("plant must be proper".into()));
        }
        if let Some(i) = numerator
            .iter()
            .chain(&denominator)
            .filter_map(MultiaffineCoeff::max_index)
            .max()
        {
            if i >= dim {
                return Err(SystemError::InvalidModel(format!(
                    "uncertainty index {i} out of range for dimension {dim}"
                )));
            }
        }
        Ok(Self::CoeffTable {
            numerator,
            denominator,
            dim,
        })
    }

    /// The plant in the worked examples:
    /// `800 (1 + 0.1 d1) / (s (s + 4 + 0.2 d2) (s + 6 + 0.3 d3))`.
    pub fn example() -> Self {
        Self::Factored {
            gain: AffineGain {
                constant: 800.0,
                terms: vec![(0, 80.0)],
            },
            numerator: vec![],
            denominator: vec![
                LinearFactor::fixed(0.0),
                LinearFactor::uncertain(4.0, 0.2, 1),
                LinearFactor::uncertain(6.0, 0.3, 2),
            ],
            dim: 3,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Factored { dim, .. } | Self::CoeffTable { dim, .. } => *dim,
        }
    }

    /// Numerator and denominator at a given uncertainty value.
    pub fn instantiate(&self, delta: &[f64]) -> Result<(Polynomial, Polynomial), SystemError> {
        if delta.len() != self.dim() {
            return Err(SystemError::DimensionMismatch {
                expected: self.dim(),
                got: delta.len(),
            });
        }
        match self {
            Self::Factored {
                gain,
                numerator,
                denominator,
                ..
            } => {
                let g = gain.eval(delta);
                let num = numerator
                    .iter()
                    .fold(Polynomial { coeffs: vec![g] }, |acc, f| {
                        acc.mul(&f.instantiate(delta))
                    });
                let den = denominator
                    .iter()
                    .fold(Polynomial { coeffs: vec![1.0] }, |acc, f| {
                        acc.mul(&f.instantiate(delta))
                    });
                Ok((num, den))
            }
            Self::CoeffTable {
                numerator,
                denominator,
                ..
            } => {
                let lead = denominator[0].eval(delta);
                if lead == 0.0 {
                    return Err(SystemError::InvalidModel(
                        "leading denominator coefficient vanishes".into(),
                    ));
                }
                let num = numerator.iter().map(|c| c.eval(delta)).collect();
                let den = denominator.iter().map(|c| c.eval(delta)).collect();
                Ok((Polynomial { coeffs: num }, Polynomial { coeffs: den }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compensator {
    pub num: Polynomial,
    pub den: Polynomial,
}

impl Compensator {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, SystemError> {
        if num.degree() > den.degree() {
            return Err(SystemError::InvalidModel(
                "compensator must be proper".into(),
            ));
        }
        Ok(Self { num, den })
    }

    /// `(s + 2) / (s + 10)`.
    pub fn example() -> Self {
        Self {
            num: Polynomial {
                coeffs: vec![1.0, 2.0],
            },
            den: Polynomial {
                coeffs: vec![1.0, 10.0],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: Complex64,
    pub radius: f64,
}

/// Union of an open half plane `Re z < c` and closed disks.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleRegion {
    pub half_plane_bound: Option<f64>,
    pub disks: Vec<Disk>,
}

impl PoleRegion {
    pub fn new(half_plane_bound: Option<f64>, disks: Vec<Disk>) -> Result<Self, SystemError> {
        if half_plane_bound.is_none() && disks.is_empty() {
            return Err(SystemError::InvalidModel(
                "pole region needs at least one clause".into(),
            ));
        }
        if disks.iter().any(|d| !(d.radius > 0.0)) {
            return Err(SystemError::InvalidModel(
                "disk radius must be positive".into(),
            ));
        }
        Ok(Self {
            half_plane_bound,
            disks,
        })
    }

    /// Open left half plane.
    pub fn stability() -> Self {
        Self {
            half_plane_bound: Some(0.0),
            disks: vec![],
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.half_plane_bound.is_some_and(|c| z.re < c)
            || self.disks.iter().any(|d| (z - d.center).norm() <= d.radius)
    }
}

/// `true` iff every root lies in at least one clause of the region.
pub fn check_pole_region(roots: &[Complex64], region: &PoleRegion) -> bool {
    roots.iter().all(|&z| region.contains(z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiseDefinition {
    /// From 10% to 90% of the final value.
    Pct10to90,
    /// From 0 to the first time the final value is reached.
    Pct0to100,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    pub horizon: f64,
    /// Settling band as a fraction of the final value.
    pub settle_band: f64,
    pub rise_def: RiseDefinition,
    /// Simulation stops early once the response has stayed in the band this long.
    pub hold: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 10.0,
            settle_band: 0.02,
            rise_def: RiseDefinition::Pct10to90,
            hold: 1.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        let ok = self.dt > 0.0
            && self.horizon > self.dt
            && self.settle_band > 0.0
            && self.settle_band < 1.0
            && self.hold >= 0.0
            && self.dt.is_finite()
            && self.horizon.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SystemError::InvalidModel(format!(
                "invalid simulation parameters {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpec {
    pub rise_time_max: f64,
    pub settling_time_max: f64,
    pub peak_max: f64,
    pub sim: SimParams,
}

impl TimeSpec {
    pub fn new(
        rise_time_max: f64,
        settling_time_max: f64,
        peak_max: f64,
        sim: SimParams,
    ) -> Result<Self, SystemError> {
        if !(rise_time_max > 0.0 && settling_time_max > 0.0 && peak_max > 0.0) {
            return Err(SystemError::InvalidModel(
                "time-domain thresholds must be positive".into(),
            ));
        }
        sim.validate()?;
        Ok(Self {
            rise_time_max,
            settling_time_max,
            peak_max,
            sim,
        })
    }
}

/// Step-response characteristics. Times that never occur within the horizon
/// are reported as `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSpecs {
    pub peak: f64,
    pub rise_time: f64,
    pub settling_time: f64,
    pub settled: bool,
    pub final_value: f64,
    pub dc_gain: f64,
}

/// Unit-step response of `num / den` by fixed-step RK4 on the controllable
/// canonical realization. Fails if `den` is not strictly Hurwitz.
pub fn step_response_specs(
    num: &Polynomial,
    den: &Polynomial,
    sim: &SimParams,
) -> Result<StepSpecs, SystemError> {
    sim.validate()?;
    if num.degree() > den.degree() {
        return Err(SystemError::InvalidModel(
            "transfer function must be proper".into(),
        ));
    }
    let max_re = poly_roots(den)?
        .iter()
        .fold(f64::NEG_INFINITY, |m, z| m.max(z.re));
    if !(max_re < 0.0) {
        return Err(SystemError::Unstable(max_re));
    }
    simulate_step(num, den, sim)
}

fn simulate_step(
    num: &Polynomial,
    den: &Polynomial,
    sim: &SimParams,
) -> Result<StepSpecs, SystemError> {
    let n = den.degree();
    let lead = den.coeffs()[0];
    // Ascending-power coefficients, denominator made monic.
    let a: Vec<f64> = den.coeffs().iter().rev().map(|c| c / lead).collect();
    let mut b = vec![0.0; n + 1];
    for (i, c) in num.coeffs().iter().rev().enumerate() {
        b[i] = c / lead;
    }
    let dc_gain = b[0] / a[0];
    if dc_gain == 0.0 || !dc_gain.is_finite() {
        return Err(SystemError::ZeroDcGain);
    }
    let feedthrough = b[n];
    let output: Vec<f64> = (0..n).map(|j| b[j] - feedthrough * a[j]).collect();

    // For x' = A x + e_n (unit step), one RK4 step is exactly
    // x <- M x + v with M = sum_{j<=4} (hA)^j / j!, v = h sum_{j<=3} (hA)^j / (j+1)! e_n.
    let h = sim.dt;
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        y[..n - 1].copy_from_slice(&x[1..n]);
        y[n - 1] = -(0..n).map(|j| a[j] * x[j]).sum::<f64>();
        y
    };
    let mut m = vec![vec![0.0; n]; n]; // column j = M e_j
    for (j, column) in m.iter_mut().enumerate() {
        let mut term = vec![0.0; n];
        term[j] = 1.0;
        let mut acc = term.clone();
        for p in 1..=4 {
            term = apply(&term).into_iter().map(|t| t * h / p as f64).collect();
            acc.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
        }
        *column = acc;
    }
    let v = {
        let mut term = vec![0.0; n];
        term[n - 1] = h;
        let mut acc = term.clone();
        for p in 2..=4 {
            term = apply(&term).into_iter().map(|t| t * h / p as f64).collect();
            acc.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
        }
        acc
    };

    let y_of = |x: &[f64]| output.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>() + feedthrough;
    let levels = match sim.rise_def {
        RiseDefinition::Pct10to90 => (0.1, 0.9),
        RiseDefinition::Pct0to100 => (0.0, 1.0),
    };
    let band = sim.settle_band;
    let steps = (sim.horizon / h).ceil() as usize;
    let hold_steps = (sim.hold / h).round() as usize;

    let mut x = vec![0.0; n];
    let mut y_prev = y_of(&x) / dc_gain;
    let mut peak = y_prev * dc_gain;
    let mut t_low = if levels.0 == 0.0 { Some(0.0) } else { None };
    let mut t_high = None;
    let mut in_band = (y_prev - 1.0).abs() <= band;
    let mut last_entry = 0.0; // time the response last entered the band
    let mut in_band_steps = 0usize;
    let mut early_exit = false;
    let mut next = vec![0.0; n];
    let mut step = 0;
    while step < steps {
        step += 1;
        for (i, ni) in next.iter_mut().enumerate() {
            *ni = v[i] + (0..n).map(|j| m[j][i] * x[j]).sum::<f64>();
        }
        std::mem::swap(&mut x, &mut next);
        let y_raw = y_of(&x);
        if !y_raw.is_finite() {
            return Err(SystemError::Unstable(f64::NAN));
        }
        peak = peak.max(y_raw);
        let y = y_raw / dc_gain;
        let t = step as f64 * h;
        let cross = |level: f64| t - h + h * (level - y_prev) / (y - y_prev);
        if t_low.is_none() && y >= levels.0 {
            t_low = Some(cross(levels.0));
        }
        if t_high.is_none() && y >= levels.1 {
            t_high = Some(cross(levels.1));
        }
        let inside = (y - 1.0).abs() <= band;
        if inside && !in_band {
            let edge = if y_prev > 1.0 { 1.0 + band } else { 1.0 - band };
            last_entry = cross(edge);
            in_band_steps = 0;
        }
        in_band = inside;
        if inside {
            in_band_steps += 1;
            if t_high.is_some() && in_band_steps >= hold_steps {
                early_exit = true;
                y_prev = y;
                break;
            }
        }
        y_prev = y;
    }
    let rise_time = match (t_low, t_high) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => f64::INFINITY,
    };
    let settled = early_exit || in_band;
    Ok(StepSpecs {
        peak,
        rise_time,
        settling_time: if settled { last_entry } else { f64::INFINITY },
        settled,
        final_value: y_prev * dc_gain,
        dc_gain,
    })
}

// ---------------------------------------------------------------------------
// Robustness problem
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Requirement {
    /// All closed-loop poles in the open left half plane.
    Stability,
    DStability(PoleRegion),
    /// Stability plus strict rise/settling/peak bounds on the unit-step response.
    TimeDomain(TimeSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessProblem {
    pub plant: UncertainPlant,
    pub compensator: Compensator,
    pub requirement: Requirement,
    pub set: UncertaintySet,
}

/// Closed-loop roots and step specs at one uncertainty value.
#[derive(Debug, Clone, PartialEq)]
pub struct PointReport {
    pub char_poly: Polynomial,
    pub roots: Vec<Complex64>,
    pub specs: Option<StepSpecs>,
    pub satisfied: bool,
}

impl RobustnessProblem {
    pub fn new(
        plant: UncertainPlant,
        compensator: Compensator,
        requirement: Requirement,
        set: UncertaintySet,
    ) -> Result<Self, SystemError> {
        if plant.dim() != set.dim() {
            return Err(SystemError::InvalidModel(format!(
                "plant has {} uncertain parameters but the uncertainty set has dimension {}",
                plant.dim(),
                set.dim()
            )));
        }
        Ok(Self {
            plant,
            compensator,
            requirement,
            set,
        })
    }

    fn open_loop(&self, delta: &SamplePoint) -> Result<(Polynomial, Polynomial), SystemError> {
        let (num_p, den_p) = self.plant.instantiate(&delta.coords)?;
        let num = self.compensator.num.mul(&num_p);
        let den = self.compensator.den.mul(&den_p);
        Ok((num, den))
    }

    /// `den_C den_P(delta) + num_C num_P(delta)`.
    pub fn closed_loop_char_poly(&self, delta: &SamplePoint) -> Result<Polynomial, SystemError> {
        let (num, den) = self.open_loop(delta)?;
        den.add(&num).ok_or(SystemError::ZeroPolynomial)
    }

    /// Reference-to-output transfer function `(num, char_poly)`.
    pub fn closed_loop(
        &self,
        delta: &SamplePoint,
    ) -> Result<(Polynomial, Polynomial), SystemError> {
        let (num, den) = self.open_loop(delta)?;
        let char_poly = den.add(&num).ok_or(SystemError::ZeroPolynomial)?;
        Ok((num, char_poly))
    }

    /// Full evaluation with diagnostics; errors propagate.
    pub fn report(&self, delta: &SamplePoint) -> Result<PointReport, SystemError> {
        let (num, char_poly) = self.closed_loop(delta)?;
        let roots = poly_roots(&char_poly)?;
        let stable = check_pole_region(&roots, &PoleRegion::stability());
        let (satisfied, specs) = match &self.requirement {
            Requirement::Stability => (stable, None),
            Requirement::DStability(region) => (check_pole_region(&roots, region), None),
            Requirement::TimeDomain(spec) => {
                if stable {
                    let s = simulate_step(&num, &char_poly, &spec.sim)?;
                    let ok = s.settled
                        && s.rise_time < spec.rise_time_max
                        && s.settling_time < spec.settling_time_max
                        && s.peak < spec.peak_max;
                    (ok, Some(s))
                } else {
                    (false, None)
                }
            }
        };
        Ok(PointReport {
            char_poly,
            roots,
            specs,
            satisfied,
        })
    }

    /// Whether the closed loop at `delta` meets the requirement. Numerical
    /// failures count as violations and are logged.
    pub fn evaluate_predicate(&self, delta: &SamplePoint) -> bool {
        match self.report(delta) {
            Ok(r) => r.satisfied,
            Err(e) => {
                log::warn!(
                    "predicate evaluation failed at {:?}: {e}; counted as violation",
                    delta.coords
                );
                false
            }
        }
    }
}

/// D-stability region of the first worked example: `Re z < -1.5`, or within
/// 0.3 of the nominal complex pole pair.
pub fn example_region() -> PoleRegion {
    let z3 = Complex64::new(-1.1256, 7.3234);
    PoleRegion {
        half_plane_bound: Some(-1.5),
        disks: vec![
            Disk {
                center: z3,
                radius: 0.3,
            },
            Disk {
                center: z3.conj(),
                radius: 0.3,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::uncertainty::example_tetrahedron;
    use rand::Rng;

    fn poly(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec()).unwrap()
    }

    fn example_problem(requirement: Requirement, set: UncertaintySet) -> RobustnessProblem {
        RobustnessProblem::new(
            UncertainPlant::example(),
            Compensator::example(),
            requirement,
            set,
        )
        .unwrap()
    }

    fn tetra() -> UncertaintySet {
        UncertaintySet::star_simplex(example_tetrahedron()).unwrap()
    }

    fn time_spec() -> TimeSpec {
        TimeSpec::new(0.25, 3.5, 1.7, SimParams::default()).unwrap()
    }

    #[test]
    fn char_poly_examples() {
        let p = example_problem(Requirement::Stability, tetra());
        let nominal = p.closed_loop_char_poly(&SamplePoint::zeros(3)).unwrap();
        assert_eq!(nominal.coeffs(), &[1.0, 20.0, 124.0, 1040.0, 1600.0]);
        assert_eq!(nominal.degree(), 4);
        let shifted = p
            .closed_loop_char_poly(&SamplePoint::new(vec![10.0, 0.0, 0.0]))
            .unwrap();
        assert_eq!(shifted.coeffs(), &[1.0, 20.0, 124.0, 1840.0, 3200.0]);
        assert!(matches!(
            p.closed_loop_char_poly(&SamplePoint::zeros(2)),
            Err(SystemError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn coeff_table_matches_factored_plant() {
        // 800 + 80 d0 over s^3 + (10 + 0.2 d1 + 0.3 d2) s^2 + (24 + 1.2 d1 + 1.2 d2 + 0.06 d1 d2) s
        let m = |terms: &[(f64, &[usize])]| MultiaffineCoeff {
            terms: terms
                .iter()
                .map(|(c, v)| Monomial {
                    coeff: *c,
                    vars: v.to_vec(),
                })
                .collect(),
        };
        let table = UncertainPlant::coeff_table(
            vec![m(&[(800.0, &[]), (80.0, &[0])])],
            vec![
                m(&[(1.0, &[])]),
                m(&[(10.0, &[]), (0.2, &[1]), (0.3, &[2])]),
                m(&[(24.0, &[]), (1.2, &[1]), (1.2, &[2]), (0.06, &[1, 2])]),
                m(&[(0.0, &[])]),
            ],
            3,
        )
        .unwrap();
        let mut rng = RngStream::new(4).rng();
        for _ in 0..50 {
            let d: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (n1, d1) = table.instantiate(&d).unwrap();
            let (n2, d2) = UncertainPlant::example().instantiate(&d).unwrap();
            assert!((n1.eval(0.7) - n2.eval(0.7)).abs() < 1e-9);
            for s in [-3.0, 0.3, 2.0] {
                assert!((d1.eval(s) - d2.eval(s)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn roots_simple_quadratic() {
        let r = poly_roots(&poly(&[1.0, 3.0, 2.0])).unwrap();
        assert!((r[0] - Complex64::new(-2.0, 0.0)).norm() < 1e-12);
        assert!((r[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn roots_nominal_closed_loop() {
        let r = poly_roots(&poly(&[1.0, 20.0, 124.0, 1040.0, 1600.0])).unwrap();
        let want = [
            Complex64::new(-15.9178, 0.0),
            Complex64::new(-1.8309, 0.0),
            Complex64::new(-1.1256, 7.3234),
            Complex64::new(-1.1256, -7.3234),
        ];
        for w in want {
            assert!(r.iter().any(|z| (z - w).norm() < 1e-3), "missing {w}");
        }
    }

    #[test]
    fn roots_with_zero_and_linear() {
        let r = poly_roots(&poly(&[2.0, -4.0, 0.0, 0.0])).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.iter().filter(|z| z.norm() == 0.0).count(), 2);
        assert!(r
            .iter()
            .any(|z| (z - Complex64::new(2.0, 0.0)).norm() < 1e-14));
        assert!(matches!(
            poly_roots(&poly(&[3.0])),
            Err(SystemError::ConstantPolynomial(0))
        ));
    }

    fn greedy_match(found: &[Complex64], want: &[Complex64]) -> f64 {
        let mut pool = found.to_vec();
        let mut worst = 0.0_f64;
        for w in want {
            let (idx, d) = pool
                .iter()
                .enumerate()
                .map(|(i, z)| (i, (z - w).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            worst = worst.max(d);
            pool.remove(idx);
        }
        worst
    }

    #[test]
    fn roots_of_constructed_degree_eight() {
        let mut rng = RngStream::new(12).rng();
        for _ in 0..200 {
            let mut want = Vec::new();
            let mut p = Polynomial { coeffs: vec![1.0] };
            while want.len() < 8 {
                if want.len() <= 6 && rng.random::<bool>() {
                    let z = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(0.2..3.0));
                    p = p.mul(&Polynomial {
                        coeffs: vec![1.0, -2.0 * z.re, z.norm_sqr()],
                    });
                    want.push(z);
                    want.push(z.conj());
                } else {
                    let x = rng.random_range(-3.0..3.0);
                    p = p.mul(&Polynomial {
                        coeffs: vec![1.0, -x],
                    });
                    want.push(Complex64::new(x, 0.0));
                }
            }
            // Skip draws with nearly coincident roots; those are ill-conditioned by nature.
            let min_gap = want
                .iter()
                .enumerate()
                .flat_map(|(i, a)| want[i + 1..].iter().map(move |b| (a - b).norm()))
                .fold(f64::INFINITY, f64::min);
            if min_gap < 0.05 {
                continue;
            }
            let found = poly_roots(&p).unwrap();
            assert!(greedy_match(&found, &want) < 1e-6, "{want:?}");
        }
    }

    #[test]
    fn pole_region_examples() {
        let nominal = poly_roots(&poly(&[1.0, 20.0, 124.0, 1040.0, 1600.0])).unwrap();
        assert!(check_pole_region(&nominal, &example_region()));
        let half = PoleRegion::new(Some(-1.5), vec![]).unwrap();
        assert!(!check_pole_region(&[Complex64::new(-1.4, 0.0)], &half));
        assert!(check_pole_region(&nominal, &PoleRegion::stability()));
        assert!(PoleRegion::new(None, vec![]).is_err());
    }

    #[test]
    fn first_order_step() {
        let s =
            step_response_specs(&poly(&[1.0]), &poly(&[1.0, 1.0]), &SimParams::default()).unwrap();
        assert!(s.peak <= 1.0 + 1e-12 && s.peak > 0.98);
        assert!((s.rise_time - 9.0_f64.ln()).abs() < 0.01 * 9.0_f64.ln());
        // Settling for 1 - e^{-t} into a 2% band: t = ln 50.
        assert!((s.settling_time - 50.0_f64.ln()).abs() < 1e-3);
        assert!(s.settled);
        let long = SimParams {
            hold: 1e9,
            ..SimParams::default()
        };
        let s = step_response_specs(&poly(&[1.0]), &poly(&[1.0, 1.0]), &long).unwrap();
        assert!((s.peak - 1.0).abs() < 1e-3 && s.peak <= 1.0 + 1e-12);
    }

    #[test]
    fn second_order_overshoot() {
        let zeta: f64 = 0.5;
        let s = step_response_specs(
            &poly(&[1.0]),
            &poly(&[1.0, 2.0 * zeta, 1.0]),
            &SimParams::default(),
        )
        .unwrap();
        let want = 1.0 + (-std::f64::consts::PI * zeta / (1.0 - zeta * zeta).sqrt()).exp();
        assert!((s.peak - want).abs() < 0.01 * want);
        assert!((s.peak - 1.16303).abs() < 0.01 * 1.16303);
    }

    #[test]
    fn nominal_closed_loop_specs() {
        let p = example_problem(
            Requirement::TimeDomain(time_spec()),
            UncertaintySet::box_set(3).unwrap(),
        );
        let (num, den) = p.closed_loop(&SamplePoint::zeros(3)).unwrap();
        let s = step_response_specs(&num, &den, &SimParams::default()).unwrap();
        assert!((s.peak - 1.47).abs() < 0.05 * 1.47, "{s:?}");
        assert!((s.rise_time - 0.185).abs() < 0.05 * 0.185, "{s:?}");
        assert!((s.settling_time - 3.175).abs() < 0.05 * 3.175, "{s:?}");
    }

    #[test]
    fn unstable_denominator_rejected() {
        assert!(matches!(
            step_response_specs(&poly(&[1.0]), &poly(&[1.0, -1.0]), &SimParams::default()),
            Err(SystemError::Unstable(_))
        ));
        assert!(matches!(
            step_response_specs(
                &poly(&[1.0]),
                &poly(&[1.0, 0.0, 1.0]),
                &SimParams::default()
            ),
            Err(SystemError::Unstable(_))
        ));
    }

    #[test]
    fn slow_system_not_settled() {
        let sim = SimParams {
            horizon: 2.0,
            ..SimParams::default()
        };
        let s = step_response_specs(&poly(&[0.1]), &poly(&[1.0, 0.1]), &sim).unwrap();
        assert!(!s.settled);
        assert!(s.settling_time.is_infinite());
    }

    #[test]
    fn dc_convergence() {
        let mut rng = RngStream::new(17).rng();
        for _ in 0..50 {
            let a = rng.random_range(0.5..3.0);
            let b = rng.random_range(0.5..3.0);
            let c = rng.random_range(0.5..3.0);
            let k = rng.random_range(0.2..5.0);
            let num = poly(&[k]);
            let den = poly(&[1.0, a, b]).mul(&poly(&[1.0, c]));
            let sim = SimParams {
                hold: 3.0,
                horizon: 60.0,
                ..SimParams::default()
            };
            let s = step_response_specs(&num, &den, &sim).unwrap();
            if s.settled {
                let dc = num.eval(0.0) / den.eval(0.0);
                assert!((s.final_value - dc).abs() <= 0.02 * dc.abs() + 1e-12);
            }
        }
        // With a long horizon and no early exit the final value converges tightly.
        let sim = SimParams {
            hold: 1e9,
            horizon: 40.0,
            ..SimParams::default()
        };
        let s = step_response_specs(&poly(&[3.0]), &poly(&[1.0, 1.2, 2.0]), &sim).unwrap();
        assert!((s.final_value - 1.5).abs() < 1.5e-3);
    }

    #[test]
    fn predicate_examples() {
        let d1 = example_problem(Requirement::DStability(example_region()), tetra());
        assert!(d1.evaluate_predicate(&SamplePoint::zeros(3)));
        let d2 = example_problem(
            Requirement::TimeDomain(time_spec()),
            UncertaintySet::box_set(3).unwrap(),
        );
        assert!(d2.evaluate_predicate(&SamplePoint::zeros(3)));
        let far = SamplePoint::new(vec![0.0, -50.0, 0.0]); // 4 + 0.2 * (-50) < 0
        let char_poly = d1.closed_loop_char_poly(&far).unwrap();
        let roots = poly_roots(&char_poly).unwrap();
        assert!(roots.iter().any(|z| z.re >= 0.0));
        assert!(!d1.evaluate_predicate(&far));
        let stab = example_problem(Requirement::Stability, tetra());
        assert!(!stab.evaluate_predicate(&far));
    }

    #[test]
    fn region_stability_equals_sign_test() {
        let set = tetra();
        let p = example_problem(Requirement::Stability, set.clone());
        let mut rng = RngStream::new(2).rng();
        for _ in 0..2000 {
            let x = set.sample_uniform(3.0, &mut rng).unwrap();
            let roots = poly_roots(&p.closed_loop_char_poly(&x).unwrap()).unwrap();
            let sign = roots.iter().all(|z| z.re < 0.0);
            assert_eq!(check_pole_region(&roots, &PoleRegion::stability()), sign);
        }
    }

    #[test]
    fn residuals_bounded_for_sampled_examples() {
        let sets = [tetra(), UncertaintySet::box_set(3).unwrap()];
        for (i, set) in sets.into_iter().enumerate() {
            let p = example_problem(Requirement::Stability, set.clone());
            let mut rng = RngStream::new(40).child(i as u64).rng();
            for _ in 0..10_000 {
                let x = set.sample_uniform(2.0, &mut rng).unwrap();
                let cp = p.closed_loop_char_poly(&x).unwrap();
                // poly_roots enforces the residual bound itself.
                assert_eq!(poly_roots(&cp).unwrap().len(), 4);
            }
        }
    }

    #[test]
    fn predicate_is_deterministic() {
        let set = UncertaintySet::box_set(3).unwrap();
        let p = example_problem(Requirement::TimeDomain(time_spec()), set.clone());
        let mut rng = RngStream::new(6).rng();
        let points: Vec<SamplePoint> = (0..200)
            .map(|_| set.sample_uniform(0.3, &mut rng).unwrap())
            .collect();
        let first: Vec<bool> = points.iter().map(|x| p.evaluate_predicate(x)).collect();
        let second: Vec<bool> = std::thread::scope(|s| {
            s.spawn(|| {
                points
                    .iter()
                    .rev()
                    .map(|x| p.evaluate_predicate(x))
                    .collect::<Vec<_>>()
            })
            .join()
            .unwrap()
        });
        assert_eq!(first, second.into_iter().rev().collect::<Vec<_>>());
    }
}

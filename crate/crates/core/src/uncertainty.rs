//! Uncertainty bounding sets, uniform sampling at a given radius, and the
//! size function `size_of(x) = min { r : x in B(r) }`.
//!
//! Every set here is homogeneous: `B(r)` is the image of `B(1)` under a
//! scaling by `r` (about the origin, or about the centroid for
//! [`StarSimplex`]). Two consequences are relied on elsewhere:
//!
//! * for a uniform sample `q` from `B(r)` in `d` real dimensions,
//!   `Pr{size_of(q) <= s r} = s^d`;
//! * a uniform sample from `B(r)` conditioned on `size_of(q) <= r'` is uniform
//!   on `B(r')`, which is what makes sample reuse across radii sound.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("point has dimension {got}, set has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("simplex vertices are affinely dependent")]
    DegenerateSimplex,
    #[error("invalid uncertainty set: {0}")]
    Invalid(String),
}

/// A point in uncertainty space. Complex scalar blocks occupy two consecutive
/// coordinates (real part, imaginary part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub coords: Vec<f64>,
}

impl SamplePoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl From<Vec<f64>> for SamplePoint {
    fn from(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Real,
    Complex,
}

/// A repeated scalar block `delta * I_m`. Only the scalar is sampled; the
/// multiplicity is carried for the structured model that consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarBlock {
    pub field: Field,
    pub multiplicity: usize,
}

impl ScalarBlock {
    fn real_dim(&self) -> usize {
        match self.field {
            Field::Real => 1,
            Field::Complex => 2,
        }
    }
}

/// Simplex contracted about its centroid:
/// `B(r) = { r x + (1 - r) c : x in conv(vertices) }`.
#[derive(Debug, Clone, PartialEq)]
pub struct StarSimplex {
    vertices: Vec<Vec<f64>>,
    center: Vec<f64>,
    // Row-major inverse of [v1 - v0, ..., vd - v0].
    edge_inverse: Vec<f64>,
}

impl StarSimplex {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self, SetError> {
        let n_vertices = vertices.len();
        if n_vertices < 2 {
            return Err(SetError::Invalid(
                "a simplex needs at least two vertices".into(),
            ));
        }
        let dim = n_vertices - 1;
        if vertices.iter().any(|v| v.len() != dim) {
            return Err(SetError::Invalid(format!(
                "{n_vertices} vertices must each have dimension {dim}"
            )));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(SetError::Invalid(
                "vertex coordinates must be finite".into(),
            ));
        }
        let mut center = vec![0.0; dim];
        for v in &vertices {
            for (c, x) in center.iter_mut().zip(v) {
                *c += x / n_vertices as f64;
            }
        }
        let mut edges = vec![0.0; dim * dim];
        for j in 0..dim {
            for i in 0..dim {
                edges[i * dim + j] = vertices[j + 1][i] - vertices[0][i];
            }
        }
        let edge_inverse = invert(&edges, dim).ok_or(SetError::DegenerateSimplex)?;
        Ok(Self {
            vertices,
            center,
            edge_inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Barycentric coordinates of `x` with respect to the vertices.
    pub fn barycentric(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        let rel: Vec<f64> = x
            .iter()
            .zip(&self.vertices[0])
            .map(|(a, b)| a - b)
            .collect();
        let mut lambda = vec![0.0; dim + 1];
        let mut rest = 0.0;
        for i in 0..dim {
            let li: f64 = (0..dim)
                .map(|j| self.edge_inverse[i * dim + j] * rel[j])
                .sum();
            lambda[i + 1] = li;
            rest += li;
        }
        lambda[0] = 1.0 - rest;
        lambda
    }

    // Writing x = c + r (y - c) with y in the simplex gives barycentric
    // weights lambda(x) = (1 - r)/(d+1) + r lambda(y), so the smallest r with
    // all lambda(y) >= 0 is 1 - (d+1) min lambda(x).
    fn size(&self, x: &[f64]) -> f64 {
        let min = self
            .barycentric(x)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        (1.0 - (self.dim() + 1) as f64 * min).max(0.0)
    }
}

/// Gauss-Jordan inverse with partial pivoting; `None` when (near) singular.
fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))
            .unwrap();
        if m[pivot * n + col].abs() <= 1e-12 * scale {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(pivot * n + j, col * n + j);
                inv.swap(pivot * n + j, col * n + j);
            }
        }
        let d = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for row in 0..n {
            if row != col {
                let f = m[row * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[row * n + j] -= f * m[col * n + j];
                        inv[row * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    Some(inv)
}

#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySet {
    /// `{ x in R^dim : ||x||_p <= r }`, `p` in `[1, inf]`.
    LpBall {
        p: f64,
        dim: usize,
    },
    /// `{ x : ||x||_inf <= r }`.
    Box {
        dim: usize,
    },
    /// Block-diagonal `diag(delta_1 I, ..., delta_m I)` with spectral norm
    /// `<= r`. For scalar blocks that is `max |delta_i| <= r`.
    ScalarBlockSpectral {
        blocks: Vec<ScalarBlock>,
    },
    StarSimplex(StarSimplex),
}

impl UncertaintySet {
    pub fn lp_ball(p: f64, dim: usize) -> Result<Self, SetError> {
        if !(p >= 1.0) {
            return Err(SetError::Invalid(format!(
                "norm order p = {p} must be >= 1"
            )));
        }
        if dim == 0 {
            return Err(SetError::Invalid("dimension must be positive".into()));
        }
        Ok(Self::LpBall { p, dim })
    }

    pub fn box_set(dim: usize) -> Result<Self, SetError> {
        if dim == 0 {
            return Err(SetError::Invalid("dimension must be positive".into()));
        }
        Ok(Self::Box { dim })
    }

    pub fn scalar_blocks(blocks: Vec<ScalarBlock>) -> Result<Self, SetError> {
        if blocks.is_empty() {
            return Err(SetError::Invalid("at least one block is required".into()));
        }
        if blocks.iter().any(|b| b.multiplicity == 0) {
            return Err(SetError::Invalid(
                "block multiplicity must be positive".into(),
            ));
        }
        Ok(Self::ScalarBlockSpectral { blocks })
    }

    pub fn star_simplex(vertices: Vec<Vec<f64>>) -> Result<Self, SetError> {
        StarSimplex::new(vertices).map(Self::StarSimplex)
    }

    /// Number of real coordinates of a point in this set.
    pub fn dim(&self) -> usize {
        match self {
            Self::LpBall { dim, .. } | Self::Box { dim } => *dim,
            Self::ScalarBlockSpectral { blocks } => blocks.iter().map(ScalarBlock::real_dim).sum(),
            Self::StarSimplex(s) => s.dim(),
        }
    }

    /// Point of size zero.
    pub fn center(&self) -> SamplePoint {
        match self {
            Self::StarSimplex(s) => SamplePoint::new(s.center().to_vec()),
            _ => SamplePoint::zeros(self.dim()),
        }
    }

    /// Draws a point uniformly distributed over `B(r)`.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        r: f64,
        rng: &mut R,
    ) -> Result<SamplePoint, SetError> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(SetError::NonPositiveRadius(r));
        }
        let coords = match self {
            Self::Box { dim } => uniform_box(*dim, r, rng),
            Self::LpBall { p, dim } if p.is_infinite() => uniform_box(*dim, r, rng),
            Self::LpBall { p, dim } => uniform_lp(*p, *dim, r, rng),
            Self::ScalarBlockSpectral { blocks } => {
                let mut coords = Vec::with_capacity(self.dim());
                for block in blocks {
                    match block.field {
                        Field::Real => coords.push(rng.random_range(-r..=r)),
                        Field::Complex => {
                            let radius = r * rng.random::<f64>().sqrt();
                            let angle = std::f64::consts::TAU * rng.random::<f64>();
                            coords.push(radius * angle.cos());
                            coords.push(radius * angle.sin());
                        }
                    }
                }
                coords
            }
            Self::StarSimplex(s) => {
                // Symmetric Dirichlet(1, ..., 1) weights are uniform on the simplex.
                let weights: Vec<f64> = (0..=s.dim()).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = weights.iter().sum();
                let mut y = vec![0.0; s.dim()];
                for (w, v) in weights.iter().zip(&s.vertices) {
                    for (yi, vi) in y.iter_mut().zip(v) {
                        *yi += w / total * vi;
                    }
                }
                y.iter()
                    .zip(&s.center)
                    .map(|(yi, ci)| ci + r * (yi - ci))
                    .collect()
            }
        };
        Ok(SamplePoint { coords })
    }

    /// Smallest radius `r` with `x in B(r)`.
    pub fn size_of(&self, x: &SamplePoint) -> Result<f64, SetError> {
        let expected = self.dim();
        if x.dim() != expected {
            return Err(SetError::DimensionMismatch {
                expected,
                got: x.dim(),
            });
        }
        let c = &x.coords;
        Ok(match self {
            Self::Box { .. } => max_abs(c),
            Self::LpBall { p, .. } => lp_norm(c, *p),
            Self::ScalarBlockSpectral { blocks } => {
                let mut size = 0.0_f64;
                let mut at = 0;
                for block in blocks {
                    let modulus = match block.field {
                        Field::Real => c[at].abs(),
                        Field::Complex => c[at].hypot(c[at + 1]),
                    };
                    size = size.max(modulus);
                    at += block.real_dim();
                }
                size
            }
            Self::StarSimplex(s) => s.size(c),
        })
    }
}

fn uniform_box<R: Rng + ?Sized>(dim: usize, r: f64, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-r..=r)).collect()
}

// Generalized-Gaussian direction (density ~ exp(-|t|^p)) normalized onto the
// unit sphere of the p-norm, then a radial factor U^{1/dim}.
fn uniform_lp<R: Rng + ?Sized>(p: f64, dim: usize, r: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(1.0 / p, 1.0).expect("shape 1/p is positive and finite");
    let mut g: Vec<f64> = (0..dim)
        .map(|_| {
            let magnitude = gamma.sample(rng).powf(1.0 / p);
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();
    let norm = lp_norm(&g, p);
    let radial = r * rng.random::<f64>().powf(1.0 / dim as f64);
    if norm == 0.0 {
        // Probability zero; fall back to a point on an axis.
        g[0] = radial;
        return g;
    }
    g.iter_mut().for_each(|x| *x *= radial / norm);
    g
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn lp_norm(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return max_abs(x);
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    if p == 2.0 {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let m = max_abs(x);
    if m == 0.0 {
        return 0.0;
    }
    m * x
        .iter()
        .map(|v| (v.abs() / m).powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

/// The tetrahedron used in the D-stability example: three vertices on a
/// circle of radius 1/2 at height -sqrt(3)/2, and the apex (0, 0, 1).
pub fn example_tetrahedron() -> Vec<Vec<f64>> {
    let mut vertices: Vec<Vec<f64>> = (1..=3)
        .map(|i| {
            let angle = (2 * i - 1) as f64 / 3.0 * std::f64::consts::PI;
            vec![
                0.5 * angle.sin(),
                0.5 * angle.cos(),
                -(3.0_f64.sqrt()) / 2.0,
            ]
        })
        .collect();
    vertices.push(vec![0.0, 0.0, 1.0]);
    vertices
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn all_sets() -> Vec<UncertaintySet> {
        vec![
            UncertaintySet::lp_ball(1.0, 3).unwrap(),
            UncertaintySet::lp_ball(2.0, 3).unwrap(),
            UncertaintySet::lp_ball(3.5, 3).unwrap(),
            UncertaintySet::lp_ball(f64::INFINITY, 3).unwrap(),
            UncertaintySet::box_set(3).unwrap(),
            UncertaintySet::scalar_blocks(vec![
                ScalarBlock {
                    field: Field::Real,
                    multiplicity: 2,
                },
                ScalarBlock {
                    field: Field::Complex,
                    multiplicity: 1,
                },
            ])
            .unwrap(),
            UncertaintySet::star_simplex(example_tetrahedron()).unwrap(),
        ]
    }

    #[test]
    fn box_samples_within_bounds() {
        let set = UncertaintySet::box_set(3).unwrap();
        let mut rng = RngStream::new(1).rng();
        for _ in 0..1000 {
            let x = set.sample_uniform(1.0, &mut rng).unwrap();
            assert!(x.coords.iter().all(|c| c.abs() <= 1.0));
            assert!(set.size_of(&x).unwrap() <= 1.0);
        }
    }

    #[test]
    fn box_size_is_max_abs() {
        let set = UncertaintySet::box_set(3).unwrap();
        let x = SamplePoint::new(vec![0.5, -0.3, 0.2]);
        assert_eq!(set.size_of(&x).unwrap(), 0.5);
    }

    #[test]
    fn simplex_center_and_vertices() {
        let set = UncertaintySet::star_simplex(example_tetrahedron()).unwrap();
        assert!(set.size_of(&set.center()).unwrap().abs() < 1e-12);
        for v in example_tetrahedron() {
            let size = set.size_of(&SamplePoint::new(v)).unwrap();
            assert!((size - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_sample_mean_is_centroid() {
        let set = UncertaintySet::star_simplex(example_tetrahedron()).unwrap();
        let center = set.center();
        let mut rng = RngStream::new(11).rng();
        let n = 100_000;
        let samples: Vec<SamplePoint> = (0..n)
            .map(|_| set.sample_uniform(1.0, &mut rng).unwrap())
            .collect();
        for i in 0..3 {
            let mean = samples.iter().map(|s| s.coords[i]).sum::<f64>() / n as f64;
            let var = samples
                .iter()
                .map(|s| (s.coords[i] - mean).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - center.coords[i]).abs() < 3.0 * se,
                "axis {i}: {mean} vs {}",
                center.coords[i]
            );
        }
    }

    #[test]
    fn errors() {
        let set = UncertaintySet::box_set(3).unwrap();
        let mut rng = RngStream::new(0).rng();
        assert_eq!(
            set.sample_uniform(0.0, &mut rng),
            Err(SetError::NonPositiveRadius(0.0))
        );
        assert!(set.sample_uniform(-1.0, &mut rng).is_err());
        assert!(matches!(
            set.size_of(&SamplePoint::zeros(2)),
            Err(SetError::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
        let flat = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(
            UncertaintySet::star_simplex(flat),
            Err(SetError::DegenerateSimplex)
        );
        assert!(UncertaintySet::scalar_blocks(vec![]).is_err());
        assert!(UncertaintySet::lp_ball(0.5, 2).is_err());
    }

    #[test]
    fn samples_respect_radius() {
        for set in all_sets() {
            let mut rng = RngStream::new(5).rng();
            for &r in &[0.1, 1.0, 7.0] {
                for _ in 0..10_000 {
                    let x = set.sample_uniform(r, &mut rng).unwrap();
                    assert!(set.size_of(&x).unwrap() <= r + 1e-12, "{set:?} r={r}");
                }
            }
        }
    }

    #[test]
    fn size_is_homogeneous() {
        let mut rng = RngStream::new(8).rng();
        for set in all_sets() {
            let center = set.center();
            for _ in 0..200 {
                let x = set.sample_uniform(2.0, &mut rng).unwrap();
                let size = set.size_of(&x).unwrap();
                for c in [0.25, 1.7, 4.0] {
                    let scaled: Vec<f64> = x
                        .coords
                        .iter()
                        .zip(&center.coords)
                        .map(|(xi, ci)| ci + c * (xi - ci))
                        .collect();
                    let scaled_size = set.size_of(&SamplePoint::new(scaled)).unwrap();
                    assert!(
                        (scaled_size - c * size).abs() < 1e-10 * (1.0 + size),
                        "{set:?}"
                    );
                }
            }
        }
    }

    /// Facet half-space membership for a tetrahedron, independent of the
    /// barycentric solve.
    fn inside_tetrahedron(v: &[Vec<f64>], x: &[f64]) -> bool {
        let sub = |a: &[f64], b: &[f64]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let cross = |a: [f64; 3], b: [f64; 3]| {
            [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ]
        };
        let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        for skip in 0..4 {
            let f: Vec<&Vec<f64>> = (0..4).filter(|&i| i != skip).map(|i| &v[i]).collect();
            let normal = cross(sub(f[1], f[0]), sub(f[2], f[0]));
            let side_opposite = dot(normal, sub(&v[skip], f[0]));
            let side_x = dot(normal, sub(x, f[0]));
            if side_x * side_opposite < 0.0 {
                return false;
            }
        }
        true
    }

    #[test]
    fn simplex_size_matches_membership_oracle() {
        let vertices = example_tetrahedron();
        let set = UncertaintySet::star_simplex(vertices.clone()).unwrap();
        let center = set.center().coords;
        let mut rng = RngStream::new(21).rng();
        let mut checked = 0;
        for _ in 0..20_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r: f64 = rng.random_range(0.05..2.5);
            let pulled: Vec<f64> = x
                .iter()
                .zip(&center)
                .map(|(xi, ci)| (xi - ci) / r + ci)
                .collect();
            let member = inside_tetrahedron(&vertices, &pulled);
            let size = set.size_of(&SamplePoint::new(x)).unwrap();
            if (size - r).abs() > 1e-9 {
                assert_eq!(member, size <= r, "size {size} vs r {r}");
                checked += 1;
            }
        }
        assert!(checked > 19_000);
    }

    #[test]
    fn volume_law_for_each_set() {
        let n = 100_000;
        for (i, set) in all_sets().into_iter().enumerate() {
            let d = set.dim() as i32;
            let mut rng = RngStream::new(77).child(i as u64).rng();
            let mut ratios: Vec<f64> = (0..n)
                .map(|_| {
                    set.size_of(&set.sample_uniform(2.0, &mut rng).unwrap())
                        .unwrap()
                        / 2.0
                })
                .collect();
            let ks = ks_statistic(&mut ratios, |s| s.clamp(0.0, 1.0).powi(d));
            assert!(ks < ks_critical_1pct(n), "{set:?}: KS = {ks}");
        }
    }

    #[test]
    fn conditioned_samples_follow_smaller_ball_law() {
        for set in all_sets() {
            let d = set.dim() as i32;
            let mut rng = RngStream::new(31).rng();
            let (big, small) = (2.0, 1.2);
            let mut ratios = Vec::new();
            while ratios.len() < 20_000 {
                let x = set.sample_uniform(big, &mut rng).unwrap();
                let size = set.size_of(&x).unwrap();
                if size <= small {
                    ratios.push(size / small);
                }
            }
            let n = ratios.len();
            let ks = ks_statistic(&mut ratios, |s| s.clamp(0.0, 1.0).powi(d));
            assert!(ks < ks_critical_1pct(n), "{set:?}: KS = {ks}");
        }
    }

    /// Two-sample KS between the generalized-Gaussian sampler and plain
    /// rejection from the enclosing cube, on the first coordinate.
    #[test]
    fn lp_sampler_agrees_with_rejection() {
        for p in [1.0, 2.0] {
            let set = UncertaintySet::lp_ball(p, 3).unwrap();
            let mut rng = RngStream::new(3).rng();
            let n = 20_000;
            let mut direct: Vec<f64> = (0..n)
                .map(|_| set.sample_uniform(1.0, &mut rng).unwrap().coords[0])
                .collect();
            let mut rejected = Vec::with_capacity(n);
            while rejected.len() < n {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
                if lp_norm(&x, p) <= 1.0 {
                    rejected.push(x[0]);
                }
            }
            direct.sort_by(f64::total_cmp);
            rejected.sort_by(f64::total_cmp);
            let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
            while i < n && j < n {
                if direct[i] <= rejected[j] {
                    i += 1;
                } else {
                    j += 1;
                }
                d = d.max((i as f64 - j as f64).abs() / n as f64);
            }
            let critical = 1.628 * (2.0 / n as f64).sqrt();
            assert!(d < critical, "p={p}: D = {d}");
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let set = UncertaintySet::star_simplex(example_tetrahedron()).unwrap();
        let draw = |s: &RngStream| {
            let mut rng = s.rng();
            (0..16)
                .map(|_| set.sample_uniform(1.3, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let stream = RngStream::new(99).child(4);
        assert_eq!(draw(&stream), draw(&stream.clone()));
    }
}

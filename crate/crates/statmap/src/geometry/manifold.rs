//! Statistical manifolds on a single coordinate chart.
//!
//! A [`ChartManifold`] couples a Riemannian metric `g` with a torsion-free
//! affine connection `∇` such that `∇g` is totally symmetric. The zoo covers
//! flat spaces, round spheres, the univariate normal family and the open
//! probability simplex, the latter two carrying their α-connections.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Christoffel, CurvatureTensor, DifferenceTensor};
use crate::error::{Error, Result};

/// Relative finite-difference step, multiplied by the local box extent.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

/// Codazzi residual tolerance used when validating a constructed manifold.
const CODAZZI_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureSource {
    /// Curvature of the statistical connection `∇`.
    #[default]
    Connection,
    /// Curvature of the Levi-Civita connection of the metric.
    LeviCivita,
}

/// Connection carried by a manifold descriptor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConnectionSpec {
    /// The family's own connection: the α-connection for statistical
    /// families, Levi-Civita otherwise.
    #[default]
    Family,
    LeviCivita,
    Alpha { alpha: f64 },
    /// `Γ^k_ij = value` for every index triple (flat metrics only).
    Constant { value: f64 },
    /// `Γ^k_ij = −amplitude·δ_ijk·cos(2π x_k / P_k)` (flat metrics only).
    CubicSine { amplitude: f64 },
}

/// JSON manifold descriptor, e.g. `{"type": "normal_family", "alpha": 0.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldDescriptor {
    Euclidean {
        dim: usize,
        #[serde(default)]
        connection: ConnectionSpec,
        #[serde(default)]
        curvature_source: CurvatureSource,
    },
    FlatTorus {
        dim: usize,
        lengths: Vec<f64>,
        /// Constant factor `s` in `g = s² e^{2f} δ`.
        #[serde(default = "one")]
        scale: f64,
        /// Amplitude `a` of the conformal factor `f = a Σ_k sin(2π x_k / L_k)`.
        #[serde(default)]
        conformal_amplitude: f64,
        #[serde(default)]
        connection: ConnectionSpec,
        #[serde(default)]
        curvature_source: CurvatureSource,
    },
    Sphere {
        radius: f64,
        #[serde(default)]
        connection: ConnectionSpec,
        #[serde(default)]
        curvature_source: CurvatureSource,
    },
    NormalFamily {
        alpha: f64,
        #[serde(default)]
        connection: ConnectionSpec,
        #[serde(default)]
        curvature_source: CurvatureSource,
    },
    Simplex {
        alpha: f64,
        dim: usize,
        #[serde(default)]
        connection: ConnectionSpec,
        #[serde(default)]
        curvature_source: CurvatureSource,
    },
}

fn one() -> f64 {
    1.0
}

impl ManifoldDescriptor {
    pub fn euclidean(dim: usize) -> Self {
        Self::Euclidean {
            dim,
            connection: ConnectionSpec::Family,
            curvature_source: CurvatureSource::Connection,
        }
    }

    pub fn flat_torus(lengths: &[f64]) -> Self {
        Self::FlatTorus {
            dim: lengths.len(),
            lengths: lengths.to_vec(),
            scale: 1.0,
            conformal_amplitude: 0.0,
            connection: ConnectionSpec::Family,
            curvature_source: CurvatureSource::Connection,
        }
    }

    pub fn sphere(radius: f64) -> Self {
        Self::Sphere {
            radius,
            connection: ConnectionSpec::Family,
            curvature_source: CurvatureSource::Connection,
        }
    }

    pub fn normal_family(alpha: f64) -> Self {
        Self::NormalFamily {
            alpha,
            connection: ConnectionSpec::Family,
            curvature_source: CurvatureSource::Connection,
        }
    }

    pub fn simplex(alpha: f64, dim: usize) -> Self {
        Self::Simplex {
            alpha,
            dim,
            connection: ConnectionSpec::Family,
            curvature_source: CurvatureSource::Connection,
        }
    }

    pub fn with_connection(mut self, spec: ConnectionSpec) -> Self {
        match &mut self {
            Self::Euclidean { connection, .. }
            | Self::FlatTorus { connection, .. }
            | Self::Sphere { connection, .. }
            | Self::NormalFamily { connection, .. }
            | Self::Simplex { connection, .. } => *connection = spec,
        }
        self
    }

    pub fn with_curvature_source(mut self, source: CurvatureSource) -> Self {
        match &mut self {
            Self::Euclidean {
                curvature_source, ..
            }
            | Self::FlatTorus {
                curvature_source, ..
            }
            | Self::Sphere {
                curvature_source, ..
            }
            | Self::NormalFamily {
                curvature_source, ..
            }
            | Self::Simplex {
                curvature_source, ..
            } => *curvature_source = source,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Euclidean,
    FlatTorus {
        lengths: Vec<f64>,
        scale: f64,
        amplitude: f64,
    },
    Sphere {
        radius: f64,
    },
    Normal,
    Simplex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Connection {
    LeviCivita,
    Alpha(f64),
    Constant(f64),
    CubicSine(f64),
}

/// How metric and connection derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Closed forms where the zoo provides them, central differences otherwise.
    Analytic,
    /// Always central differences.
    FiniteDifference,
}

/// A validated chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint(Vec<f64>);

impl ChartPoint {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for ChartPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A statistical manifold `(N, h, ∇)` on one global chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartManifold {
    descriptor: ManifoldDescriptor,
    name: String,
    dim: usize,
    family: Family,
    connection: Connection,
    curvature_source: CurvatureSource,
}

/// Builds a zoo manifold from its descriptor and checks the Codazzi condition.
pub fn make_manifold(descriptor: &ManifoldDescriptor) -> Result<ChartManifold> {
    ChartManifold::new(descriptor.clone())
}

impl ChartManifold {
    pub fn new(descriptor: ManifoldDescriptor) -> Result<Self> {
        let (name, dim, family, spec, source) = match &descriptor {
            ManifoldDescriptor::Euclidean {
                dim,
                connection,
                curvature_source,
            } => {
                if *dim == 0 {
                    return Err(Error::Config("euclidean dimension must be positive".into()));
                }
                (
                    format!("euclidean({dim})"),
                    *dim,
                    Family::Euclidean,
                    connection,
                    curvature_source,
                )
            }
            ManifoldDescriptor::FlatTorus {
                dim,
                lengths,
                scale,
                conformal_amplitude,
                connection,
                curvature_source,
            } => {
                if *dim == 0 || lengths.len() != *dim {
                    return Err(Error::Config(format!(
                        "flat_torus of dimension {dim} needs {dim} lengths, got {}",
                        lengths.len()
                    )));
                }
                if lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                    return Err(Error::Config("flat_torus lengths must be positive".into()));
                }
                if !(*scale > 0.0) {
                    return Err(Error::Config("flat_torus scale must be positive".into()));
                }
                (
                    format!("flat_torus({dim}, {lengths:?})"),
                    *dim,
                    Family::FlatTorus {
                        lengths: lengths.clone(),
                        scale: *scale,
                        amplitude: *conformal_amplitude,
                    },
                    connection,
                    curvature_source,
                )
            }
            ManifoldDescriptor::Sphere {
                radius,
                connection,
                curvature_source,
            } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("sphere radius must be positive".into()));
                }
                (
                    format!("sphere({radius})"),
                    2,
                    Family::Sphere { radius: *radius },
                    connection,
                    curvature_source,
                )
            }
            ManifoldDescriptor::NormalFamily {
                alpha,
                connection,
                curvature_source,
            } => (
                format!("normal_family({alpha})"),
                2,
                Family::Normal,
                connection,
                curvature_source,
            ),
            ManifoldDescriptor::Simplex {
                alpha,
                dim,
                connection,
                curvature_source,
            } => {
                if *dim == 0 {
                    return Err(Error::Config("simplex dimension must be positive".into()));
                }
                (
                    format!("simplex({alpha}, {dim})"),
                    *dim,
                    Family::Simplex,
                    connection,
                    curvature_source,
                )
            }
        };

        let family_alpha = match &descriptor {
            ManifoldDescriptor::NormalFamily { alpha, .. }
            | ManifoldDescriptor::Simplex { alpha, .. } => Some(*alpha),
            _ => None,
        };
        let statistical = family_alpha.is_some();
        let connection = match spec {
            ConnectionSpec::Family => match family_alpha {
                Some(a) => Connection::Alpha(a),
                None => Connection::LeviCivita,
            },
            ConnectionSpec::LeviCivita => Connection::LeviCivita,
            ConnectionSpec::Alpha { alpha } => {
                if !statistical {
                    return Err(Error::Config(format!(
                        "{name} carries no α-connection family"
                    )));
                }
                Connection::Alpha(*alpha)
            }
            ConnectionSpec::Constant { value } => Connection::Constant(*value),
            ConnectionSpec::CubicSine { amplitude } => Connection::CubicSine(*amplitude),
        };
        let family = family.clone();
        let name = name.clone();
        if let Connection::Alpha(a) = connection {
            if !a.is_finite() {
                return Err(Error::Config("alpha must be finite".into()));
            }
        }

        let curvature_source = *source;
        let m = Self {
            descriptor,
            name,
            dim,
            family,
            connection,
            curvature_source,
        };
        m.validate_codazzi()?;
        Ok(m)
    }

    fn validate_codazzi(&self) -> Result<()> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..16 {
            let p = self.sample_point(&mut rng);
            let r = self.codazzi_residual(&p, DerivativeMode::Analytic)?;
            if r > CODAZZI_TOLERANCE {
                return Err(Error::Config(format!(
                    "{}: connection violates the Codazzi condition (residual {r:.3e} at {p:?})",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self) -> &ManifoldDescriptor {
        &self.descriptor
    }

    pub fn curvature_source(&self) -> CurvatureSource {
        self.curvature_source
    }

    /// True when the connection is the Levi-Civita connection of the metric.
    pub fn is_levi_civita(&self) -> bool {
        match self.connection {
            Connection::LeviCivita => true,
            Connection::Alpha(a) => a == 0.0,
            Connection::Constant(c) => c == 0.0,
            Connection::CubicSine(a) => a == 0.0,
        }
    }

    /// Parameter of an α-connection.
    pub fn alpha(&self) -> Option<f64> {
        match self.connection {
            Connection::Alpha(a) => Some(a),
            _ => None,
        }
    }

    /// True for the flat-torus family, whose chart is periodic in every coordinate.
    pub fn is_flat_torus(&self) -> bool {
        matches!(self.family, Family::FlatTorus { .. })
    }

    /// Open validity interval of coordinate `a`.
    pub fn bounds(&self, a: usize) -> (f64, f64) {
        match &self.family {
            Family::Euclidean | Family::FlatTorus { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Sphere { .. } => {
                if a == 0 {
                    (0.0, PI)
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                }
            }
            Family::Normal => {
                if a == 0 {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    (0.0, f64::INFINITY)
                }
            }
            Family::Simplex => (0.0, 1.0),
        }
    }

    /// Period of coordinate `a` when the chart wraps in that coordinate.
    pub fn period(&self, a: usize) -> Option<f64> {
        match &self.family {
            Family::FlatTorus { lengths, .. } => Some(lengths[a]),
            Family::Sphere { .. } if a == 1 => Some(2.0 * PI),
            _ => None,
        }
    }

    pub fn periods(&self) -> Vec<Option<f64>> {
        (0..self.dim).map(|a| self.period(a)).collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        if p.len() != self.dim || p.iter().any(|x| !x.is_finite()) {
            return false;
        }
        let inside = (0..self.dim).all(|a| {
            let (lo, hi) = self.bounds(a);
            p[a] > lo && p[a] < hi
        });
        match self.family {
            Family::Simplex => inside && p.iter().sum::<f64>() < 1.0,
            _ => inside,
        }
    }

    pub fn check(&self, p: &[f64]) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::DomainViolation {
                manifold: self.name.clone(),
                coords: p.to_vec(),
                node: None,
            })
        }
    }

    pub fn point(&self, coords: &[f64]) -> Result<ChartPoint> {
        self.check(coords)?;
        Ok(ChartPoint(coords.to_vec()))
    }

    /// Central-difference step for coordinate `a` at `p`.
    pub fn fd_step(&self, p: &[f64], a: usize) -> f64 {
        let (lo, hi) = self.bounds(a);
        let extent = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => hi - lo,
            (true, false) => (p[a] - lo).min(1.0),
            (false, true) => (hi - p[a]).min(1.0),
            (false, false) => 1.0,
        };
        FD_RELATIVE_STEP * extent
    }

    fn stencil_points(&self, p: &[f64], a: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        self.check(p)?;
        let h = self.fd_step(p, a);
        let mut far = p.to_vec();
        for s in [-2.0, 2.0] {
            far[a] = p[a] + s * h;
            if !self.contains(&far) {
                return Err(Error::DomainViolation {
                    manifold: self.name.clone(),
                    coords: p.to_vec(),
                    node: None,
                });
            }
        }
        let mut plus = p.to_vec();
        let mut minus = p.to_vec();
        plus[a] += h;
        minus[a] -= h;
        Ok((plus, minus, h))
    }

    // ---------------------------------------------------------------- metric

    fn metric_unchecked(&self, p: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.family {
            Family::Euclidean => DMatrix::identity(d, d),
            Family::FlatTorus {
                lengths,
                scale,
                amplitude,
            } => {
                let f = conformal_exponent(p, lengths, *amplitude);
                DMatrix::identity(d, d) * (scale * scale * (2.0 * f).exp())
            }
            Family::Sphere { radius } => {
                let s = p[0].sin();
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    radius * radius,
                    radius * radius * s * s,
                ]))
            }
            Family::Normal => {
                let s2 = p[1] * p[1];
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0 / s2, 2.0 / s2]))
            }
            Family::Simplex => {
                let p0 = 1.0 - p.iter().sum::<f64>();
                DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / p[i] } else { 0.0 } + 1.0 / p0)
            }
        }
    }

    /// Metric components `g_ij(p)`; rejects points outside the box and
    /// non-positive-definite values.
    pub fn metric(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.check(p)?;
        let g = self.metric_unchecked(p);
        if Cholesky::new(g.clone()).is_none() {
            return Err(Error::DegenerateMetric {
                manifold: self.name.clone(),
                coords: p.to_vec(),
            });
        }
        Ok(g)
    }

    pub fn metric_inverse(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.metric(p)?;
        let d = self.dim;
        Ok(match &self.family {
            Family::Simplex => {
                DMatrix::from_fn(d, d, |i, j| if i == j { p[i] } else { 0.0 } - p[i] * p[j])
            }
            Family::Euclidean | Family::FlatTorus { .. } | Family::Sphere { .. } | Family::Normal => {
                DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / g[(i, i)] } else { 0.0 })
            }
        })
    }

    fn metric_derivatives_analytic(&self, p: &[f64]) -> Vec<DMatrix<f64>> {
        let d = self.dim;
        match &self.family {
            Family::Euclidean => vec![DMatrix::zeros(d, d); d],
            Family::FlatTorus {
                lengths, amplitude, ..
            } => {
                let g = self.metric_unchecked(p);
                (0..d)
                    .map(|a| {
                        let w = 2.0 * PI / lengths[a];
                        let df = amplitude * w * (w * p[a]).cos();
                        &g * (2.0 * df)
                    })
                    .collect()
            }
            Family::Sphere { radius } => {
                let mut dth = DMatrix::zeros(2, 2);
                dth[(1, 1)] = radius * radius * (2.0 * p[0]).sin();
                vec![dth, DMatrix::zeros(2, 2)]
            }
            Family::Normal => {
                let s3 = p[1] * p[1] * p[1];
                let mut ds = DMatrix::zeros(2, 2);
                ds[(0, 0)] = -2.0 / s3;
                ds[(1, 1)] = -4.0 / s3;
                vec![DMatrix::zeros(2, 2), ds]
            }
            Family::Simplex => {
                let p0 = 1.0 - p.iter().sum::<f64>();
                (0..d)
                    .map(|a| {
                        DMatrix::from_fn(d, d, |i, j| {
                            let diag = if i == j && j == a { -1.0 / (p[a] * p[a]) } else { 0.0 };
                            diag + 1.0 / (p0 * p0)
                        })
                    })
                    .collect()
            }
        }
    }

    /// `∂_a g_ij` for every coordinate `a`.
    pub fn metric_derivatives(&self, p: &[f64], mode: DerivativeMode) -> Result<Vec<DMatrix<f64>>> {
        self.check(p)?;
        match mode {
            DerivativeMode::Analytic => Ok(self.metric_derivatives_analytic(p)),
            DerivativeMode::FiniteDifference => (0..self.dim)
                .map(|a| {
                    let (plus, minus, h) = self.stencil_points(p, a)?;
                    Ok((self.metric(&plus)? - self.metric(&minus)?) / (2.0 * h))
                })
                .collect(),
        }
    }

    /// Amari–Chentsov cubic form `T_ijk = E[∂_iℓ ∂_jℓ ∂_kℓ]` of the statistical families.
    pub fn cubic_form(&self, p: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim;
        match self.family {
            Family::Normal => {
                let s3 = p[1] * p[1] * p[1];
                let mut t = vec![0.0; 8];
                // (μ, μ, σ) and permutations
                for (i, j, k) in [(0, 0, 1), (0, 1, 0), (1, 0, 0)] {
                    t[(i * 2 + j) * 2 + k] = 2.0 / s3;
                }
                t[7] = 8.0 / s3;
                Some(t)
            }
            Family::Simplex => {
                let p0 = 1.0 - p.iter().sum::<f64>();
                let mut t = vec![-1.0 / (p0 * p0); d * d * d];
                for i in 0..d {
                    t[(i * d + i) * d + i] += 1.0 / (p[i] * p[i]);
                }
                Some(t)
            }
            _ => None,
        }
    }

    // ----------------------------------------------------------- connections

    /// Levi-Civita Christoffel symbols `Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
    pub fn levi_civita(&self, p: &[f64], mode: DerivativeMode) -> Result<Christoffel> {
        let ginv = self.metric_inverse(p)?;
        let dg = self.metric_derivatives(p, mode)?;
        let d = self.dim;
        let mut gamma = Christoffel::zeros(d);
        for i in 0..d {
            for j in i..d {
                for k in 0..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    gamma.set_sym(k, i, j, 0.5 * s);
                }
            }
        }
        Ok(gamma)
    }

    /// Christoffel symbols of the manifold's statistical connection.
    pub fn christoffel(&self, p: &[f64]) -> Result<Christoffel> {
        self.check(p)?;
        let d = self.dim;
        match self.connection {
            Connection::LeviCivita => self.levi_civita(p, DerivativeMode::Analytic),
            Connection::Alpha(alpha) => {
                let lc = self.levi_civita(p, DerivativeMode::Analytic)?;
                if alpha == 0.0 {
                    return Ok(lc);
                }
                let t = self.cubic_form(p).expect("α-connection on a statistical family");
                let ginv = self.metric_inverse(p)?;
                let mut gamma = lc;
                for i in 0..d {
                    for j in i..d {
                        for k in 0..d {
                            let mut s = 0.0;
                            for l in 0..d {
                                s += ginv[(k, l)] * t[(i * d + j) * d + l];
                            }
                            gamma.set_sym(k, i, j, gamma.get(k, i, j) - 0.5 * alpha * s);
                        }
                    }
                }
                Ok(gamma)
            }
            Connection::Constant(c) => {
                let mut gamma = Christoffel::zeros(d);
                for k in 0..d {
                    for i in 0..d {
                        for j in 0..d {
                            gamma.set_sym(k, i, j, c);
                        }
                    }
                }
                Ok(gamma)
            }
            Connection::CubicSine(amp) => {
                let mut gamma = Christoffel::zeros(d);
                for k in 0..d {
                    let w = self.angular_rate(k);
                    gamma.set_sym(k, k, k, -amp * (w * p[k]).cos());
                }
                Ok(gamma)
            }
        }
    }

    fn angular_rate(&self, k: usize) -> f64 {
        match self.period(k) {
            Some(l) => 2.0 * PI / l,
            None => 1.0,
        }
    }

    /// `K = Γ − Γ^LC`.
    pub fn difference_tensor(&self, p: &[f64]) -> Result<DifferenceTensor> {
        let gamma = self.christoffel(p)?;
        let lc = self.levi_civita(p, DerivativeMode::Analytic)?;
        Ok(gamma.combine(1.0, &lc, -1.0))
    }

    /// Dual connection `Γ* = 2Γ^LC − Γ`.
    pub fn dual_connection(&self, p: &[f64]) -> Result<Christoffel> {
        let gamma = self.christoffel(p)?;
        let lc = self.levi_civita(p, DerivativeMode::Analytic)?;
        Ok(lc.combine(2.0, &gamma, -1.0))
    }

    /// The manifold carrying the dual connection, when it stays inside the zoo.
    pub fn dual(&self) -> Option<ChartManifold> {
        let mut m = self.clone();
        m.connection = match self.connection {
            Connection::LeviCivita => Connection::LeviCivita,
            Connection::Alpha(a) => Connection::Alpha(-a),
            Connection::Constant(c) if self.is_flat_metric() => Connection::Constant(-c),
            Connection::CubicSine(a) if self.is_flat_metric() => Connection::CubicSine(-a),
            _ => return None,
        };
        Some(m)
    }

    fn is_flat_metric(&self) -> bool {
        match &self.family {
            Family::Euclidean => true,
            Family::FlatTorus { amplitude, .. } => *amplitude == 0.0,
            _ => false,
        }
    }

    fn christoffel_derivatives_analytic(&self, p: &[f64], lc: bool) -> Option<Vec<Christoffel>> {
        let d = self.dim;
        let conn = if lc { Connection::LeviCivita } else { self.connection };
        match (&self.family, conn) {
            (_, Connection::Constant(_)) => Some(vec![Christoffel::zeros(d); d]),
            (_, Connection::CubicSine(amp)) => Some(
                (0..d)
                    .map(|a| {
                        let mut t = Christoffel::zeros(d);
                        let w = self.angular_rate(a);
                        t.set_sym(a, a, a, amp * w * (w * p[a]).sin());
                        t
                    })
                    .collect(),
            ),
            (Family::Euclidean, _) => Some(vec![Christoffel::zeros(d); d]),
            (Family::FlatTorus { amplitude, .. }, _) if *amplitude == 0.0 => {
                Some(vec![Christoffel::zeros(d); d])
            }
            (Family::Sphere { .. }, Connection::LeviCivita) => {
                let mut dth = Christoffel::zeros(2);
                dth.set_sym(0, 1, 1, -(2.0 * p[0]).cos());
                let s = p[0].sin();
                dth.set_sym(1, 0, 1, -1.0 / (s * s));
                Some(vec![dth, Christoffel::zeros(2)])
            }
            (Family::Normal, Connection::LeviCivita) => Some(normal_dgamma(p[1], 0.0)),
            (Family::Normal, Connection::Alpha(a)) => Some(normal_dgamma(p[1], a)),
            (Family::Simplex, Connection::LeviCivita) => Some(simplex_dgamma(p, 0.0)),
            (Family::Simplex, Connection::Alpha(a)) => Some(simplex_dgamma(p, a)),
            _ => None,
        }
    }

    fn connection_field(&self, p: &[f64], lc: bool) -> Result<Christoffel> {
        if lc {
            self.levi_civita(p, DerivativeMode::Analytic)
        } else {
            self.christoffel(p)
        }
    }

    fn christoffel_derivatives_of(
        &self,
        p: &[f64],
        lc: bool,
        mode: DerivativeMode,
    ) -> Result<Vec<Christoffel>> {
        self.check(p)?;
        if mode == DerivativeMode::Analytic {
            if let Some(dg) = self.christoffel_derivatives_analytic(p, lc) {
                return Ok(dg);
            }
        }
        (0..self.dim)
            .map(|a| {
                let (plus, minus, h) = self.stencil_points(p, a)?;
                let gp = self.connection_field(&plus, lc)?;
                let gm = self.connection_field(&minus, lc)?;
                Ok(gp.combine(0.5 / h, &gm, -0.5 / h))
            })
            .collect()
    }

    /// `∂_a Γ^k_ij` of the statistical connection.
    pub fn christoffel_derivatives(&self, p: &[f64], mode: DerivativeMode) -> Result<Vec<Christoffel>> {
        self.christoffel_derivatives_of(p, false, mode)
    }

    /// Curvature of either connection, independent of the configured source.
    pub fn curvature_of(
        &self,
        p: &[f64],
        source: CurvatureSource,
        mode: DerivativeMode,
    ) -> Result<CurvatureTensor> {
        let lc = source == CurvatureSource::LeviCivita;
        let gamma = self.connection_field(p, lc)?;
        let dgamma = self.christoffel_derivatives_of(p, lc, mode)?;
        Ok(CurvatureTensor::from_connection(&gamma, &dgamma))
    }

    /// Curvature `R^{(N,h)}` as selected by the manifold's curvature source.
    pub fn curvature(&self, p: &[f64]) -> Result<CurvatureTensor> {
        self.curvature_of(p, self.curvature_source, DerivativeMode::Analytic)
    }

    /// `h(R(U,V)V,U) / (|U|²|V|² − h(U,V)²)`.
    pub fn sectional_curvature(&self, p: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        let g = self.metric(p)?;
        let r = self.curvature(p)?;
        let num = curvature_form(&g, &r, u, v);
        let uu = quad(&g, u, u);
        let vv = quad(&g, v, v);
        let uv = quad(&g, u, v);
        Ok(num / (uu * vv - uv * uv))
    }

    /// Endpoint at unit time of the `∇`-geodesic from `p` with velocity `v`
    /// (classical RK4 on `ẍ^k + Γ^k_ij ẋ^i ẋ^j = 0`).
    pub fn exponential(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        const STEPS: usize = 32;
        let d = self.dim;
        if v.iter().all(|x| *x == 0.0) {
            return Ok(p.to_vec());
        }
        let rhs = |x: &[f64], xd: &[f64]| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; d];
            self.christoffel(x)?.contract(xd, xd, &mut acc);
            Ok(acc.into_iter().map(|a| -a).collect())
        };
        let dt = 1.0 / STEPS as f64;
        let mut x = p.to_vec();
        let mut xd = v.to_vec();
        let shift = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + s * b).collect() };
        for _ in 0..STEPS {
            let k1x = xd.clone();
            let k1v = rhs(&x, &xd)?;
            let (x2, v2) = (shift(&x, &k1x, dt / 2.0), shift(&xd, &k1v, dt / 2.0));
            let k2v = rhs(&x2, &v2)?;
            let (x3, v3) = (shift(&x, &v2, dt / 2.0), shift(&xd, &k2v, dt / 2.0));
            let k3v = rhs(&x3, &v3)?;
            let (x4, v4) = (shift(&x, &v3, dt), shift(&xd, &k3v, dt));
            let k4v = rhs(&x4, &v4)?;
            for c in 0..d {
                x[c] += dt / 6.0 * (k1x[c] + 2.0 * v2[c] + 2.0 * v3[c] + v4[c]);
                xd[c] += dt / 6.0 * (k1v[c] + 2.0 * k2v[c] + 2.0 * k3v[c] + k4v[c]);
            }
        }
        self.check(&x)?;
        Ok(x)
    }

    /// Largest violation of total symmetry of `C_kij = (∇_k g)_ij`,
    /// relative to `max(1, max|∂g|)`.
    pub fn codazzi_residual(&self, p: &[f64], mode: DerivativeMode) -> Result<f64> {
        let g = self.metric(p)?;
        let dg = self.metric_derivatives(p, mode)?;
        let gamma = self.christoffel(p)?;
        let d = self.dim;
        let mut c = vec![0.0; d * d * d];
        let mut scale: f64 = 1.0;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut v = dg[k][(i, j)];
                    scale = scale.max(v.abs());
                    for l in 0..d {
                        v -= gamma.get(l, k, i) * g[(l, j)] + gamma.get(l, k, j) * g[(i, l)];
                    }
                    c[(k * d + i) * d + j] = v;
                }
            }
        }
        let mut res: f64 = 0.0;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let a = c[(k * d + i) * d + j];
                    res = res
                        .max((a - c[(i * d + k) * d + j]).abs())
                        .max((a - c[(j * d + i) * d + k]).abs());
                }
            }
        }
        Ok(res / scale)
    }

    /// Draws a point from a fixed compact region inside the validity box.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.family {
            Family::Euclidean => (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            Family::FlatTorus { lengths, .. } => {
                lengths.iter().map(|l| rng.random_range(0.0..*l)).collect()
            }
            Family::Sphere { .. } => vec![rng.random_range(0.3..PI - 0.3), rng.random_range(0.0..2.0 * PI)],
            Family::Normal => vec![rng.random_range(-2.0..2.0), rng.random_range(0.3..3.0)],
            Family::Simplex => loop {
                let p: Vec<f64> = (0..self.dim).map(|_| rng.random_range(0.05..0.95)).collect();
                if p.iter().sum::<f64>() < 0.95 {
                    break p;
                }
            },
        }
    }
}

fn conformal_exponent(p: &[f64], lengths: &[f64], amplitude: f64) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    p.iter()
        .zip(lengths)
        .map(|(x, l)| (2.0 * PI * x / l).sin())
        .sum::<f64>()
        * amplitude
}

/// `∂_a Γ` for the normal family α-connection; every nonzero symbol is `c/σ`.
fn normal_dgamma(sigma: f64, alpha: f64) -> Vec<Christoffel> {
    let s2 = sigma * sigma;
    let mut ds = Christoffel::zeros(2);
    ds.set_sym(1, 0, 0, -(1.0 - alpha) / (2.0 * s2));
    ds.set_sym(0, 0, 1, (1.0 + alpha) / s2);
    ds.set_sym(1, 1, 1, (1.0 + 2.0 * alpha) / s2);
    vec![Christoffel::zeros(2), ds]
}

/// `∂_a Γ` for the simplex α-connection, `Γ^l_ij = −(1+α)/2 · g^{lk} T_ijk`.
fn simplex_dgamma(p: &[f64], alpha: f64) -> Vec<Christoffel> {
    let d = p.len();
    let p0 = 1.0 - p.iter().sum::<f64>();
    let c = -(1.0 + alpha) / 2.0;
    let t = |i: usize, j: usize, k: usize| {
        let diag = if i == j && j == k { 1.0 / (p[i] * p[i]) } else { 0.0 };
        diag - 1.0 / (p0 * p0)
    };
    let dt = |a: usize, i: usize, j: usize, k: usize| {
        let diag = if i == j && j == k && k == a { -2.0 / p[i].powi(3) } else { 0.0 };
        diag - 2.0 / p0.powi(3)
    };
    let ginv = |l: usize, k: usize| if l == k { p[l] } else { 0.0 } - p[l] * p[k];
    let dginv = |a: usize, l: usize, k: usize| {
        let diag = if l == k && l == a { 1.0 } else { 0.0 };
        diag - if l == a { p[k] } else { 0.0 } - if k == a { p[l] } else { 0.0 }
    };
    (0..d)
        .map(|a| {
            let mut out = Christoffel::zeros(d);
            for l in 0..d {
                for i in 0..d {
                    for j in i..d {
                        let mut s = 0.0;
                        for k in 0..d {
                            s += dginv(a, l, k) * t(i, j, k) + ginv(l, k) * dt(a, i, j, k);
                        }
                        out.set_sym(l, i, j, c * s);
                    }
                }
            }
            out
        })
        .collect()
}

pub(crate) fn quad(g: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let d = u.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += g[(i, j)] * u[i] * v[j];
        }
    }
    s
}

/// `h(R(U,V)V, U)`.
pub fn curvature_form(g: &DMatrix<f64>, r: &CurvatureTensor, u: &[f64], v: &[f64]) -> f64 {
    let mut w = vec![0.0; u.len()];
    r.apply(u, v, v, &mut w);
    quad(g, &w, u)
}

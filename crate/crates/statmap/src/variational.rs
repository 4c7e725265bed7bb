//! Tension field, energy, bi-energy, variation families and the
//! finite-difference first-variation oracle.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{MapField, Section};
use crate::geometry::{make_manifold, Christoffel, CurvatureSource};
use crate::pullback::PullbackGeometry;

/// `∇̃_{∂_i} V`.
pub fn pullback_derivative(u: &MapField, v: &Section, axis: usize) -> Result<Section> {
    u.check_section(v)?;
    PullbackGeometry::new(u, false)?.covariant_derivative(v, axis)
}

pub fn tension(u: &MapField) -> Result<Section> {
    Ok(tension_of(&PullbackGeometry::new(u, false)?))
}

/// `τ^γ = g^{ij}(∂_i∂_j u^γ + Γ^γ_{αβ}∂_i u^α ∂_j u^β − Γ^{M,k}_{ij}∂_k u^γ)`.
pub fn tension_of(pb: &PullbackGeometry) -> Section {
    tension_with(pb, |node| pb.gamma(node))
}

fn tension_with<'a>(pb: &'a PullbackGeometry, gamma: impl Fn(usize) -> &'a Christoffel) -> Section {
    let grid = pb.grid();
    let m = grid.dim();
    let d = pb.target_dim();
    let mut out = Section::zeros(pb.nodes(), d);
    let mut quad = vec![0.0; d];
    for node in 0..pb.nodes() {
        let ginv = grid.metric_inverse(node);
        let gm = grid.christoffel(node);
        let gn = gamma(node);
        let tau = &mut out.values_mut()[node * d..(node + 1) * d];
        for i in 0..m {
            for j in 0..m {
                let gij = ginv[i * m + j];
                if gij == 0.0 {
                    continue;
                }
                gn.contract(pb.du(node, i), pb.du(node, j), &mut quad);
                let ddu = pb.ddu(node, i, j);
                for c in 0..d {
                    let mut s = ddu[c] + quad[c];
                    for k in 0..m {
                        s -= gm.get(k, i, j) * pb.du(node, k)[c];
                    }
                    tau[c] += gij * s;
                }
            }
        }
    }
    out
}

/// Tension taken with the Levi-Civita connection of the target metric.
pub fn levi_civita_tension(u: &MapField) -> Result<Section> {
    let target = u.target();
    if target.is_levi_civita() {
        return tension(u);
    }
    let lc_target = Arc::new(make_manifold(
        &target
            .descriptor()
            .clone()
            .with_connection(crate::geometry::ConnectionSpec::LeviCivita)
            .with_curvature_source(CurvatureSource::Connection),
    )?);
    let lc = MapField::new(u.grid().clone(), lc_target, u.values().to_vec())?;
    tension(&lc)
}

/// `E(u) = ½∫ g^{ij} h(∂_i u, ∂_j u) dμ_g`.
pub fn energy(u: &MapField) -> Result<f64> {
    Ok(energy_of(&PullbackGeometry::new(u, false)?))
}

pub fn energy_of(pb: &PullbackGeometry) -> f64 {
    let grid = pb.grid();
    let m = grid.dim();
    let weights = grid.weights();
    let mut e = 0.0;
    for node in 0..pb.nodes() {
        let ginv = grid.metric_inverse(node);
        let mut density = 0.0;
        for i in 0..m {
            for j in 0..m {
                density += ginv[i * m + j] * pb.inner(node, pb.du(node, i), pb.du(node, j));
            }
        }
        e += weights[node] * density;
    }
    0.5 * e
}

/// `E₂(u) = ½∫ h(τ, τ) dμ_g`.
pub fn bienergy(u: &MapField) -> Result<f64> {
    let pb = PullbackGeometry::new(u, false)?;
    let tau = tension_of(&pb);
    Ok(0.5 * pb.l2_inner(&tau, &tau))
}

/// Largest pointwise `|τ|_h`.
pub fn tension_sup(pb: &PullbackGeometry, tau: &Section) -> f64 {
    (0..pb.nodes())
        .map(|node| pb.inner(node, tau.at(node), tau.at(node)).max(0.0).sqrt())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "E2")]
    pub bienergy: f64,
    pub tension_sup: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip)]
    pub tension: Section,
}

pub fn energy_report(u: &MapField) -> Result<EnergyReport> {
    let pb = PullbackGeometry::new(u, false)?;
    let tau = tension_of(&pb);
    Ok(EnergyReport {
        energy: energy_of(&pb),
        bienergy: 0.5 * pb.l2_inner(&tau, &tau),
        tension_sup: tension_sup(&pb, &tau),
        converged: None,
        tension: tau,
    })
}

/// Custom two-parameter family `(s, t, u, V, W) ↦ u_{s,t}`.
pub type Generator = Arc<dyn Fn(f64, f64, &MapField, &Section, &Section) -> Result<MapField> + Send + Sync>;

/// Two-parameter variation `u_{s,t}` with `∂_s u|₀ = V`, `∂_t u|₀ = W`.
#[derive(Clone)]
pub struct VariationFamily {
    base: MapField,
    v: Section,
    w: Section,
    generator: Option<Generator>,
}

impl fmt::Debug for VariationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VariationFamily")
            .field("base", &self.base)
            .field("v", &self.v)
            .field("w", &self.w)
            .field("custom_generator", &self.generator.is_some())
            .finish()
    }
}

impl VariationFamily {
    /// `u + sV + tW` in chart coordinates.
    pub fn chart_linear(base: MapField, v: Section, w: Section) -> Result<Self> {
        base.check_section(&v)?;
        base.check_section(&w)?;
        Ok(Self {
            base,
            v,
            w,
            generator: None,
        })
    }

    /// A family from a custom generator; its value and parameter derivatives
    /// at the origin are checked against `u`, `V`, `W`.
    pub fn with_generator(base: MapField, v: Section, w: Section, generator: Generator) -> Result<Self> {
        let fam = Self {
            generator: Some(generator),
            ..Self::chart_linear(base, v, w)?
        };
        let origin = fam.at(0.0, 0.0)?;
        if origin.values() != fam.base.values() {
            return Err(Error::Config("variation generator does not reproduce u at s = t = 0".into()));
        }
        let h = 1e-5;
        for (dir, target) in [((1.0, 0.0), &fam.v), ((0.0, 1.0), &fam.w)] {
            let plus = fam.at(h * dir.0, h * dir.1)?;
            let minus = fam.at(-h * dir.0, -h * dir.1)?;
            let scale = 1.0 + target.max_abs();
            let err = plus
                .values()
                .iter()
                .zip(minus.values())
                .zip(target.values())
                .map(|((p, q), t)| ((p - q) / (2.0 * h) - t).abs())
                .fold(0.0, f64::max);
            if err > 1e-6 * scale {
                return Err(Error::Config(format!(
                    "variation generator derivative differs from its direction by {err:.3e}"
                )));
            }
        }
        Ok(fam)
    }

    /// Geodesic family `exp_u(sV + tW)` of the target connection.
    pub fn geodesic(base: MapField, v: Section, w: Section) -> Result<Self> {
        let gen: Generator = Arc::new(|s, t, u, v, w| {
            let d = u.target_dim();
            let target = u.target();
            let mut values = Vec::with_capacity(u.values().len());
            for node in 0..u.grid().len() {
                let vel: Vec<f64> = (0..d).map(|c| s * v.at(node)[c] + t * w.at(node)[c]).collect();
                let end = target.exponential(u.value(node), &vel).map_err(|e| e.at_node(node))?;
                values.extend(end);
            }
            MapField::new(u.grid().clone(), target.clone(), values)
        });
        Self::with_generator(base, v, w, gen)
    }

    pub fn base(&self) -> &MapField {
        &self.base
    }

    pub fn v(&self) -> &Section {
        &self.v
    }

    pub fn w(&self) -> &Section {
        &self.w
    }

    pub fn at(&self, s: f64, t: f64) -> Result<MapField> {
        match &self.generator {
            Some(g) => g(s, t, &self.base, &self.v, &self.w),
            None => {
                let values = self
                    .base
                    .values()
                    .iter()
                    .zip(self.v.values())
                    .zip(self.w.values())
                    .map(|((u, v), w)| u + s * v + t * w)
                    .collect();
                MapField::new(self.base.grid().clone(), self.base.target().clone(), values)
            }
        }
    }
}

pub const DEFAULT_FD_STEPS: [f64; 5] = [1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4];

/// Result of comparing the finite-difference derivative of `E(u_{s,0})` in
/// `s` against `−∫h(V, τ(u))`.
#[derive(Debug, Clone, Serialize)]
pub struct FirstVariationReport {
    pub steps: Vec<f64>,
    pub derivatives: Vec<f64>,
    /// `|FD − predicted| / scale` per step.
    pub residuals: Vec<f64>,
    /// Local orders between consecutive steps; `None` where a residual sits at
    /// the cancellation floor of the difference quotient.
    pub orders: Vec<Option<f64>>,
    /// Least-squares slope of log residual against log step.
    pub observed_order: Option<f64>,
    pub predicted: f64,
    pub scale: f64,
    /// Finite differences reproduce the prediction to round-off at every step.
    pub exact: bool,
    /// Final residual against the Levi-Civita tension instead.
    pub levi_civita_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}


pub fn first_variation_check(fam: &VariationFamily, steps: &[f64], tolerance: f64) -> Result<FirstVariationReport> {
    if steps.is_empty() || steps.windows(2).any(|w| w[1] >= w[0]) || steps[steps.len() - 1] <= 0.0 {
        return Err(Error::Config("first-variation steps must be positive and strictly decreasing".into()));
    }
    let u = fam.base();
    let v = fam.v();
    let pb = PullbackGeometry::new(u, false)?;
    let tau = tension_of(&pb);
    let predicted = -pb.l2_inner(v, &tau);
    let lc_predicted = -pb.l2_inner(v, &levi_civita_tension(u)?);

    let m = u.grid().dim();
    let mut du_sq = 0.0;
    let mut dv_sq = 0.0;
    let weights = u.grid().weights();
    let mut dvs = Vec::with_capacity(m);
    for a in 0..m {
        dvs.push(pb.covariant_derivative(v, a)?);
    }
    for node in 0..pb.nodes() {
        let ginv = u.grid().metric_inverse(node);
        for i in 0..m {
            for j in 0..m {
                du_sq += weights[node] * ginv[i * m + j] * pb.inner(node, pb.du(node, i), pb.du(node, j));
                dv_sq += weights[node] * ginv[i * m + j] * pb.inner(node, dvs[i].at(node), dvs[j].at(node));
            }
        }
    }
    // |dE/ds| is bounded by both products (Cauchy–Schwarz on either side of
    // the integration by parts)
    let scale = predicted
        .abs()
        .max((du_sq * dv_sq).max(0.0).sqrt())
        .max(pb.l2_norm(v) * pb.l2_norm(&tau));

    let mut used = Vec::with_capacity(steps.len());
    let mut derivatives = Vec::with_capacity(steps.len());
    let mut noise = Vec::with_capacity(steps.len());
    for &h0 in steps {
        let mut h = h0;
        let mut attempt = 0;
        let d = loop {
            match (fam.at(h, 0.0), fam.at(-h, 0.0)) {
                (Ok(p), Ok(q)) => break (energy(&p)?, energy(&q)?),
                (Err(e @ Error::DomainViolation { .. }), _) | (_, Err(e @ Error::DomainViolation { .. })) => {
                    attempt += 1;
                    if attempt > 8 {
                        return Err(e);
                    }
                    h *= 0.5;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        };
        used.push(h);
        derivatives.push((d.0 - d.1) / (2.0 * h));
        // cancellation error of the difference quotient
        noise.push(16.0 * f64::EPSILON * d.0.abs().max(d.1.abs()) / (2.0 * h));
    }
    let floor = scale.max(1e-300);
    let residuals: Vec<f64> = derivatives.iter().map(|d| (d - predicted).abs() / floor).collect();
    let lc_residual = (derivatives[derivatives.len() - 1] - lc_predicted).abs() / floor;

    let noisy: Vec<bool> = residuals.iter().zip(&noise).map(|(r, e)| *r <= e / floor).collect();
    let orders = (1..residuals.len())
        .map(|k| {
            if noisy[k - 1] || noisy[k] {
                None
            } else {
                Some((residuals[k - 1].max(1e-300) / residuals[k].max(1e-300)).ln() / (used[k - 1] / used[k]).ln())
            }
        })
        .collect();
    let exact = noisy.iter().all(|x| *x);
    let fit: Vec<(f64, f64)> = used
        .iter()
        .zip(&residuals)
        .zip(&noisy)
        .filter(|(_, x)| !**x)
        .map(|((h, r), _)| (h.ln(), r.ln()))
        .collect();
    let observed_order = (fit.len() >= 2).then(|| slope(&fit));
    let last = residuals[residuals.len() - 1];
    let passed = last <= tolerance && (exact || observed_order.is_some_and(|p| p >= 1.8) || noisy[noisy.len() - 1]);
    Ok(FirstVariationReport {
        steps: used,
        derivatives,
        residuals,
        orders,
        observed_order,
        predicted,
        scale,
        exact,
        levi_civita_residual: lc_residual,
        tolerance,
        passed,
    })
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::manifold::{ChartManifold, DerivativeMode};
use crate::error::Result;

/// Structural residuals of `(g, ∇)` at sampled points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub manifold: String,
    pub points: usize,
    pub seed: u64,
    /// Largest relative Codazzi residual.
    pub codazzi_max: f64,
    /// Largest `|∂_i g_jk − Γ^l_ij g_lk − g_jl Γ*^l_ik|`.
    pub duality_max: f64,
    /// Largest `|(Γ*)* − Γ|`; absent when the dual leaves the zoo.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub involution_max: Option<f64>,
    /// Largest `|Γ* − Γ^{(−α)}|` for α-connections.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_mirror_max: Option<f64>,
    pub curvature_max: f64,
    pub levi_civita: bool,
}

impl StructureReport {
    pub fn passed(&self, codazzi_tolerance: f64) -> bool {
        self.codazzi_max <= codazzi_tolerance
            && self.duality_max <= 1e-8
            && self.involution_max.is_none_or(|r| r <= 1e-10)
            && self.alpha_mirror_max.is_none_or(|r| r <= 1e-10)
    }
}

pub fn structure_report(m: &ChartManifold, points: usize, seed: u64) -> Result<StructureReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = m.dim();
    let dual = m.dual();
    let mut report = StructureReport {
        manifold: m.name().to_string(),
        points,
        seed,
        codazzi_max: 0.0,
        duality_max: 0.0,
        involution_max: dual.as_ref().map(|_| 0.0),
        alpha_mirror_max: None,
        curvature_max: 0.0,
        levi_civita: m.is_levi_civita(),
    };
    let alpha_mirror = dual.as_ref().filter(|_| m.alpha().is_some());
    if alpha_mirror.is_some() {
        report.alpha_mirror_max = Some(0.0);
    }
    for _ in 0..points {
        let q = m.sample_point(&mut rng);
        report.codazzi_max = report.codazzi_max.max(m.codazzi_residual(&q, DerivativeMode::Analytic)?);
        let g = m.metric(&q)?;
        let dg = m.metric_derivatives(&q, DerivativeMode::Analytic)?;
        let gamma = m.christoffel(&q)?;
        let gstar = m.dual_connection(&q)?;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let mut v = dg[i][(j, k)];
                    for l in 0..d {
                        v -= gamma.get(l, i, j) * g[(l, k)] + g[(j, l)] * gstar.get(l, i, k);
                    }
                    report.duality_max = report.duality_max.max(v.abs());
                }
            }
        }
        if let Some(dm) = &dual {
            let twice = dm.dual_connection(&q)?;
            report.involution_max = report.involution_max.map(|r| r.max(twice.max_abs_diff(&gamma)));
        }
        if let Some(mirror) = alpha_mirror {
            let r = gstar.max_abs_diff(&mirror.christoffel(&q)?);
            report.alpha_mirror_max = report.alpha_mirror_max.map(|x| x.max(r));
        }
        report.curvature_max = report.curvature_max.max(m.curvature(&q)?.max_abs());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_manifold, ManifoldDescriptor};

    #[test]
    fn dually_flat_normal_family_report() {
        for alpha in [1.0, -1.0] {
            let m = make_manifold(&ManifoldDescriptor::normal_family(alpha)).unwrap();
            let r = structure_report(&m, 100, 7).unwrap();
            assert!(r.curvature_max < 1e-8, "{r:?}");
            assert!(r.passed(1e-8), "{r:?}");
            assert!(r.alpha_mirror_max.unwrap() < 1e-10);
        }
    }

    #[test]
    fn sphere_is_curved_and_self_dual() {
        let m = make_manifold(&ManifoldDescriptor::sphere(1.0)).unwrap();
        let r = structure_report(&m, 20, 1).unwrap();
        assert!(r.levi_civita && r.passed(1e-8));
        assert!(r.curvature_max > 0.5);
        assert!(r.alpha_mirror_max.is_none());
    }
}

//! Explicit-Euler harmonic map heat flow `∂_t u = τ(u)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::MapField;
use crate::grid::{DiffScheme, DomainGrid};
use crate::pullback::PullbackGeometry;
use crate::variational::{energy_of, tension_of, tension_sup};

/// Consecutive energy increases tolerated before the flow is declared divergent.
pub const DIVERGENCE_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    /// Time step; `None` picks `0.8 / stiffness`.
    pub dt: Option<f64>,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: None,
            tol: 1e-6,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowOutcome {
    #[serde(skip)]
    pub map: MapField,
    pub converged: bool,
    pub steps: usize,
    pub dt: f64,
    pub tension_sup: f64,
    pub energy: f64,
    #[serde(skip)]
    pub energies: Vec<f64>,
}

/// Largest eigenvalue magnitude of the discrete leading operator `g^{aa}∂_a²`.
pub fn stiffness(grid: &DomainGrid) -> f64 {
    let symbol = match grid.scheme() {
        DiffScheme::Central => 4.0,
        DiffScheme::Spectral => std::f64::consts::PI.powi(2),
    };
    grid.dim() as f64 * symbol * grid.max_inverse_metric_over_spacing()
}

pub fn default_dt(grid: &DomainGrid) -> f64 {
    0.8 / stiffness(grid)
}

pub fn harmonic_flow(u0: &MapField, config: &FlowConfig) -> Result<FlowOutcome> {
    let stiff = stiffness(u0.grid());
    let dt = config.dt.unwrap_or(0.8 / stiff);
    if !(dt > 0.0) || dt * stiff >= 1.0 {
        return Err(Error::Config(format!(
            "flow step {dt:.3e} violates the stability bound dt·stiffness < 1 (stiffness {stiff:.3e})"
        )));
    }
    let mut u = u0.clone();
    let mut energies = Vec::new();
    let mut rising = 0;
    let mut step = 0;
    loop {
        let pb = PullbackGeometry::new(&u, false)?;
        let tau = tension_of(&pb);
        let sup = tension_sup(&pb, &tau);
        let e = energy_of(&pb);
        if let Some(&prev) = energies.last() {
            if e > prev {
                rising += 1;
                if rising >= DIVERGENCE_WINDOW {
                    return Err(Error::FlowDivergence {
                        step,
                        window: DIVERGENCE_WINDOW,
                    });
                }
            } else {
                rising = 0;
            }
        }
        energies.push(e);
        let converged = sup < config.tol;
        if converged || step >= config.max_steps || !sup.is_finite() {
            if !sup.is_finite() {
                return Err(Error::Numeric(format!("tension became non-finite at flow step {step}")));
            }
            return Ok(FlowOutcome {
                map: u,
                converged,
                steps: step,
                dt,
                tension_sup: sup,
                energy: e,
                energies,
            });
        }
        u = u.displaced(&tau, dt)?;
        step += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_manifold, ManifoldDescriptor};
    use crate::variational::energy_report;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid(n: usize, scheme: DiffScheme) -> Arc<DomainGrid> {
        let dom = Arc::new(make_manifold(&ManifoldDescriptor::flat_torus(&[2.0 * PI])).unwrap());
        Arc::new(DomainGrid::new(dom, n, scheme).unwrap())
    }

    #[test]
    fn harmonic_and_constant_maps_do_not_move() {
        let g = grid(32, DiffScheme::Spectral);
        let sphere = Arc::new(make_manifold(&ManifoldDescriptor::sphere(1.0)).unwrap());
        let eq = MapField::from_fn(g.clone(), sphere.clone(), |x| vec![PI / 2.0, x[0]]).unwrap();
        let out = harmonic_flow(&eq, &FlowConfig::default()).unwrap();
        assert!(out.converged && out.steps == 0);
        let c = MapField::constant(g, sphere, &[1.0, 1.0]).unwrap();
        let out = harmonic_flow(&c, &FlowConfig { max_steps: 10, ..Default::default() }).unwrap();
        assert_eq!(out.map.values(), c.values());
    }

    #[test]
    fn default_dt_matches_the_central_rule() {
        let g = grid(64, DiffScheme::Central);
        let h = 2.0 * PI / 64.0;
        assert!((default_dt(&g) - 0.2 * h * h).abs() < 1e-15);
    }

    #[test]
    fn unstable_step_is_rejected() {
        let g = grid(32, DiffScheme::Central);
        let flat = Arc::new(make_manifold(&ManifoldDescriptor::euclidean(1)).unwrap());
        let u = MapField::constant(g.clone(), flat, &[0.0]).unwrap();
        let cfg = FlowConfig { dt: Some(1.0 / stiffness(&g)), ..Default::default() };
        assert!(matches!(harmonic_flow(&u, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn perturbed_geodesic_in_normal_family_converges() {
        // u(θ) = (0.3 cos θ, 1 + 0.3 sin θ) is not a closed geodesic; the flow
        // shrinks it towards a point, its energy decreasing monotonically
        let g = grid(16, DiffScheme::Spectral);
        let target = Arc::new(make_manifold(&ManifoldDescriptor::normal_family(0.0)).unwrap());
        let u0 = MapField::from_fn(g, target, |x| {
            vec![0.3 * x[0].cos() + 0.05 * (2.0 * x[0]).sin(), 1.0 + 0.3 * x[0].sin()]
        })
        .unwrap();
        let out = harmonic_flow(&u0, &FlowConfig::default()).unwrap();
        assert!(out.converged, "{:?}", (out.steps, out.tension_sup));
        assert!(energy_report(&out.map).unwrap().tension_sup < 1e-6);
        for w in out.energies.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} > {}", w[1], w[0]);
        }
    }
}

//! Finite-difference dE/ds against the predicted first variation −∫h(V, τ).
//!
//! For α ≠ 0 targets the prediction uses the statistical tension; the report
//! also carries the residual against the Levi-Civita tension.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statmap::fields::{MapField, Section};
use statmap::geometry::{make_manifold, ManifoldDescriptor};
use statmap::grid::{DiffScheme, DomainGrid};
use statmap::variational::{first_variation_check, VariationFamily, DEFAULT_FD_STEPS};

fn main() -> statmap::Result<()> {
    let circle = Arc::new(make_manifold(&ManifoldDescriptor::flat_torus(&[2.0 * PI]))?);
    let grid = Arc::new(DomainGrid::new(circle, 64, DiffScheme::Spectral)?);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let loop_in = |desc: ManifoldDescriptor, f: fn(f64) -> Vec<f64>| -> statmap::Result<MapField> {
        MapField::from_fn(grid.clone(), Arc::new(make_manifold(&desc)?), |x| f(x[0]))
    };
    let cases = [
        ("circle -> euclidean(2)", loop_in(ManifoldDescriptor::euclidean(2), |t| vec![t.cos(), 0.5 * (2.0 * t).sin()])?),
        ("circle -> sphere(1)", loop_in(ManifoldDescriptor::sphere(1.0), |t| vec![1.3 + 0.2 * t.sin(), t])?),
        ("circle -> normal(0)", loop_in(ManifoldDescriptor::normal_family(0.0), |t| vec![t.cos(), 1.0 + 0.3 * t.sin()])?),
        ("circle -> normal(1)", loop_in(ManifoldDescriptor::normal_family(1.0), |t| vec![t.cos(), 1.0 + 0.3 * t.sin()])?),
    ];

    for (name, u) in cases {
        let v = Section::random_smooth(&grid, 2, 3, &mut rng);
        let v = v.scaled(0.1 / v.max_abs());
        let fam = VariationFamily::chart_linear(u, v.clone(), v)?;
        let r = first_variation_check(&fam, &DEFAULT_FD_STEPS, 1e-6)?;
        println!("{name}: predicted {:.6e}, passed {}", r.predicted, r.passed);
        for (h, res) in r.steps.iter().zip(&r.residuals) {
            println!("    h = {h:.3e}  residual {res:.3e}");
        }
        println!(
            "    observed order {:?}, residual against Levi-Civita tension {:.3e}",
            r.observed_order, r.levi_civita_residual
        );
    }
    Ok(())
}

//! Stability verdicts: a non-positively curved target certifies weak
//! stability, a positively curved one needs the spectrum.

use std::f64::consts::PI;
use std::sync::Arc;

use statmap::fields::MapField;
use statmap::geometry::{make_manifold, ManifoldDescriptor};
use statmap::grid::{DiffScheme, DomainGrid};
use statmap::spectral::{spectrum, stability_report, JacobiOperator, SpectrumConfig, StabilityConfig};

fn main() -> statmap::Result<()> {
    let circle = Arc::new(make_manifold(&ManifoldDescriptor::flat_torus(&[2.0 * PI]))?);
    let grid = Arc::new(DomainGrid::new(circle, 32, DiffScheme::Spectral)?);

    let normal = Arc::new(make_manifold(&ManifoldDescriptor::normal_family(0.0))?);
    let sphere = Arc::new(make_manifold(&ManifoldDescriptor::sphere(1.0))?);
    let cases = [
        ("constant map into normal_family(0)", MapField::constant(grid.clone(), normal, &[0.2, 1.5])?),
        ("equator of sphere(1)", MapField::from_fn(grid.clone(), sphere.clone(), |x| vec![PI / 2.0, x[0]])?),
        ("constant map into sphere(1)", MapField::constant(grid, sphere, &[1.0, 2.0])?),
    ];
    for (name, u) in cases {
        let op = JacobiOperator::new(&u)?;
        let spec = spectrum(&op, &SpectrumConfig::default())?;
        let r = stability_report(&op, &spec, &StabilityConfig::new(17))?;
        println!("{name}");
        println!(
            "    verdict {:?} via {:?}; sampled curvature max {:.3}, λ_min {:.6}, min ∫h(JV,V)/|V|² {:.4}",
            r.verdict, r.route, r.certificate.max_normalized, r.lambda_min, r.quadratic_form_min
        );
    }
    Ok(())
}

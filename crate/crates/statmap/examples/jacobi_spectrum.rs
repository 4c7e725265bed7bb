//! Spectrum of the Jacobi operator at the equator of the unit sphere:
//! tangential modes k², normal modes k² − 1, so index 1 and nullity 3.

use std::f64::consts::PI;
use std::sync::Arc;

use statmap::fields::MapField;
use statmap::geometry::{make_manifold, ManifoldDescriptor};
use statmap::grid::{DiffScheme, DomainGrid};
use statmap::spectral::{spectrum, JacobiOperator, SpectrumConfig};

fn main() -> statmap::Result<()> {
    let circle = Arc::new(make_manifold(&ManifoldDescriptor::flat_torus(&[2.0 * PI]))?);
    let sphere = Arc::new(make_manifold(&ManifoldDescriptor::sphere(1.0))?);
    for n in [32, 64] {
        let grid = Arc::new(DomainGrid::new(circle.clone(), n, DiffScheme::Spectral)?);
        let u = MapField::from_fn(grid, sphere.clone(), |x| vec![PI / 2.0, x[0]])?;
        let op = JacobiOperator::new(&u)?;
        let s = spectrum(&op, &SpectrumConfig::default())?;
        println!(
            "n = {n}: index {}, nullity {}, verdict {:?}, asymmetry {:.1e}, harmonic {}",
            s.index, s.nullity, s.verdict, s.asymmetry, s.harmonicity_gate
        );
        let head: Vec<String> = s
            .clusters
            .iter()
            .take(5)
            .map(|c| format!("{:.6} (×{})", c.value, c.multiplicity))
            .collect();
        println!("    lowest clusters: {}", head.join(", "));
    }
    Ok(())
}

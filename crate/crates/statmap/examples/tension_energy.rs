//! Tension, energy and bi-energy of a few loops.

use std::f64::consts::PI;
use std::sync::Arc;

use statmap::fields::MapField;
use statmap::geometry::{make_manifold, ManifoldDescriptor};
use statmap::grid::{DiffScheme, DomainGrid};
use statmap::variational::energy_report;

fn main() -> statmap::Result<()> {
    let circle = Arc::new(make_manifold(&ManifoldDescriptor::flat_torus(&[2.0 * PI]))?);
    let grid = Arc::new(DomainGrid::new(circle, 128, DiffScheme::Spectral)?);

    let plane = Arc::new(make_manifold(&ManifoldDescriptor::euclidean(2))?);
    let sphere = Arc::new(make_manifold(&ManifoldDescriptor::sphere(1.0))?);
    let normal = Arc::new(make_manifold(&ManifoldDescriptor::normal_family(0.0))?);

    let maps = [
        ("plane circle, k=1", MapField::from_fn(grid.clone(), plane.clone(), |x| vec![x[0].cos(), x[0].sin()])?),
        ("plane circle, k=3", MapField::from_fn(grid.clone(), plane, |x| vec![(3.0 * x[0]).cos(), (3.0 * x[0]).sin()])?),
        ("sphere equator", MapField::from_fn(grid.clone(), sphere.clone(), |x| vec![PI / 2.0, x[0]])?),
        ("sphere latitude 1.0", MapField::from_fn(grid.clone(), sphere, |x| vec![1.0, x[0]])?),
        ("normal loop", MapField::from_fn(grid, normal, |x| vec![0.5 * x[0].cos(), 1.0 + 0.3 * x[0].sin()])?),
    ];

    println!("{:<22} {:>14} {:>14} {:>12}", "map", "E", "E2", "sup|τ|");
    for (name, u) in &maps {
        let r = energy_report(u)?;
        println!("{name:<22} {:>14.10} {:>14.6e} {:>12.3e}", r.energy, r.bienergy, r.tension_sup);
    }
    println!("closed forms: πk² = {:.10}, {:.10}; latitude E = π sin²1 = {:.10}", PI, 9.0 * PI, PI * 1f64.sin().powi(2));
    Ok(())
}

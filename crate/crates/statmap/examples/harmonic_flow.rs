//! Harmonic map heat flow from a loop in the Fisher normal family and from a
//! winding map into a conformally flat torus.

use std::f64::consts::PI;
use std::sync::Arc;

use statmap::fields::MapField;
use statmap::flow::{harmonic_flow, FlowConfig};
use statmap::geometry::{make_manifold, ManifoldDescriptor};
use statmap::grid::{DiffScheme, DomainGrid};

fn report(name: &str, u: &MapField) -> statmap::Result<()> {
    let out = harmonic_flow(u, &FlowConfig::default())?;
    let e = &out.energies;
    println!(
        "{name}: converged {} after {} steps (dt {:.2e}), E {:.6} -> {:.6e}, sup|τ| {:.2e}",
        out.converged, out.steps, out.dt, e[0], out.energy, out.tension_sup
    );
    let monotone = e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    println!("    energy non-increasing: {monotone}");
    Ok(())
}

fn main() -> statmap::Result<()> {
    let circle = Arc::new(make_manifold(&ManifoldDescriptor::flat_torus(&[2.0 * PI]))?);
    let grid = Arc::new(DomainGrid::new(circle, 32, DiffScheme::Spectral)?);

    // the half-plane is contractible: loops shrink to a point
    let normal = Arc::new(make_manifold(&ManifoldDescriptor::normal_family(0.0))?);
    let u = MapField::from_fn(grid.clone(), normal, |x| vec![0.5 * x[0].cos(), 1.0 + 0.3 * x[0].sin()])?;
    report("loop in normal_family(0)", &u)?;

    // a winding loop in a bumpy torus relaxes to a closed geodesic
    let mut desc = ManifoldDescriptor::flat_torus(&[2.0 * PI, 2.0 * PI]);
    if let ManifoldDescriptor::FlatTorus { conformal_amplitude, .. } = &mut desc {
        *conformal_amplitude = 0.2;
    }
    let torus = Arc::new(make_manifold(&desc)?);
    let u = MapField::from_fn(grid, torus, |x| vec![x[0], (1.0 + 0.3 * x[0].sin()).rem_euclid(2.0 * PI)])?;
    report("winding loop in a conformal torus", &u)?;
    Ok(())
}

//! Dual connections and curvature across the α-family of the normal model.

use statmap::geometry::{make_manifold, structure_report, ManifoldDescriptor};

fn main() -> statmap::Result<()> {
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "alpha", "codazzi", "duality", "alpha_mirror", "max|R|");
    for alpha in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let m = make_manifold(&ManifoldDescriptor::normal_family(alpha))?;
        let r = structure_report(&m, 100, 42)?;
        println!(
            "{alpha:>6.2} {:>12.2e} {:>12.2e} {:>12.2e} {:>12.2e}",
            r.codazzi_max,
            r.duality_max,
            r.alpha_mirror_max.unwrap_or(0.0),
            r.curvature_max
        );
    }

    // the Levi-Civita member has constant sectional curvature -1/2
    let m = make_manifold(&ManifoldDescriptor::normal_family(0.0))?;
    let k = m.sectional_curvature(&[0.3, 1.7], &[1.0, 0.2], &[-0.4, 1.0])?;
    println!("sectional curvature of normal_family(0) at (0.3, 1.7): {k:.12}");

    let sphere = make_manifold(&ManifoldDescriptor::sphere(2.0))?;
    let k = sphere.sectional_curvature(&[1.0, 0.5], &[1.0, 0.0], &[0.0, 1.0])?;
    println!("sectional curvature of sphere(2): {k:.12}");
    Ok(())
}

use super::*;
use crate::fields::{MapField, Section};
use crate::geometry::{make_manifold, ChartManifold, ManifoldDescriptor};
use crate::grid::{DiffScheme, DomainGrid};
use crate::variational::VariationFamily;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

fn torus(lengths: &[f64], n: usize, scheme: DiffScheme) -> Arc<DomainGrid> {
    let dom = Arc::new(make_manifold(&ManifoldDescriptor::flat_torus(lengths)).unwrap());
    Arc::new(DomainGrid::new(dom, n, scheme).unwrap())
}

fn circle(n: usize) -> Arc<DomainGrid> {
    torus(&[2.0 * PI], n, DiffScheme::Spectral)
}

fn target(desc: ManifoldDescriptor) -> Arc<ChartManifold> {
    Arc::new(make_manifold(&desc).unwrap())
}

fn equator(n: usize) -> MapField {
    MapField::from_fn(circle(n), target(ManifoldDescriptor::sphere(1.0)), |x| vec![PI / 2.0, x[0]]).unwrap()
}

fn max_diff(a: &Section, b: &Section) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn rough_laplacian_of_flat_fourier_modes() {
    for scheme in [DiffScheme::Spectral, DiffScheme::Central] {
        let g = torus(&[2.0 * PI], 64, scheme);
        let u = MapField::constant(g.clone(), target(ManifoldDescriptor::euclidean(2)), &[0.0, 0.0]).unwrap();
        for k in 1..=3 {
            let kf = k as f64;
            let v = Section::from_fn(&g, 2, |x| vec![(kf * x[0]).sin(), 0.0]);
            let lap = rough_laplacian(&u, &v).unwrap();
            let h = g.spacing(0);
            let tol = match scheme {
                DiffScheme::Spectral => 1e-10,
                DiffScheme::Central => kf.powi(4) * h * h / 12.0 * 1.01,
            };
            assert!(max_diff(&lap, &v.scaled(kf * kf)) < tol, "{scheme:?} k={k}");
        }
    }
}

#[test]
fn rough_laplacian_at_a_constant_map_matches_the_stencil() {
    let g = torus(&[2.0 * PI], 32, DiffScheme::Central);
    let u = MapField::constant(g.clone(), target(ManifoldDescriptor::sphere(1.0)), &[1.0, 0.5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = Section::random_smooth(&g, 2, 5, &mut rng);
    let lap = rough_laplacian(&u, &v).unwrap();
    let h = g.spacing(0);
    let n = g.n();
    for i in 0..n {
        for c in 0..2 {
            let at = |j: usize| v.values()[(j % n) * 2 + c];
            let oracle = -(at(i + 1) - 2.0 * at(i) + at(i + n - 1)) / (h * h);
            assert!((lap.values()[i * 2 + c] - oracle).abs() < 1e-10);
        }
    }
}

#[test]
fn curvature_term_cases() {
    let g = circle(32);
    let v = Section::from_fn(&g, 2, |x| vec![x[0].sin(), 0.3]);
    let still = MapField::constant(g.clone(), target(ManifoldDescriptor::sphere(1.0)), &[1.0, 0.5]).unwrap();
    assert_eq!(curvature_term(&still, &v).unwrap().max_abs(), 0.0);
    let flat = MapField::from_fn(g.clone(), target(ManifoldDescriptor::euclidean(2)), |x| vec![x[0].cos(), x[0].sin()]).unwrap();
    assert_eq!(curvature_term(&flat, &v).unwrap().max_abs(), 0.0);
    let normal = Section::from_fn(&g, 2, |x| vec![(2.0 * x[0]).cos(), 0.0]);
    assert!(max_diff(&curvature_term(&equator(32), &normal).unwrap(), &normal) < 1e-12);
}

#[test]
fn jacobi_fields_along_the_equator() {
    let u = equator(64);
    for k in 0..4 {
        let kf = k as f64;
        let v = Section::from_fn(u.grid(), 2, |x| vec![(kf * x[0]).sin() + (kf * x[0]).cos(), 0.0]);
        let jv = jacobi_apply(&u, &v).unwrap();
        assert!(max_diff(&jv, &v.scaled(kf * kf - 1.0)) < 1e-10, "k={k}");
    }
}

#[test]
fn flat_identity_jacobi_is_minus_laplacian() {
    let g = torus(&[2.0 * PI, 2.0 * PI], 16, DiffScheme::Spectral);
    let u = MapField::from_fn(g.clone(), g.domain().clone(), |x| x.to_vec()).unwrap();
    let v = Section::from_fn(&g, 2, |x| vec![(x[0] + 2.0 * x[1]).sin(), (3.0 * x[1]).cos()]);
    let expected = Section::from_fn(&g, 2, |x| vec![5.0 * (x[0] + 2.0 * x[1]).sin(), 9.0 * (3.0 * x[1]).cos()]);
    assert!(max_diff(&jacobi_apply(&u, &v).unwrap(), &expected) < 1e-10);
}

#[test]
fn flat_hessian_is_pi() {
    let g = circle(64);
    let u = MapField::constant(g.clone(), target(ManifoldDescriptor::euclidean(2)), &[0.0, 0.0]).unwrap();
    let v = Section::from_fn(&g, 2, |x| vec![x[0].sin(), 0.0]);
    let h = hessian(&u, &v, &v).unwrap();
    assert!((h.value - PI).abs() < 1e-12 && h.harmonicity_gate);
    assert_eq!(hessian(&u, &v, &Section::zeros(64, 2)).unwrap().value, 0.0);
}

#[test]
fn hessian_matches_mixed_differences_on_the_equator() {
    let u = equator(64);
    let op = JacobiOperator::new(&u).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let v = Section::random_smooth(u.grid(), 2, 3, &mut rng).scaled(0.1);
        let w = Section::random_smooth(u.grid(), 2, 3, &mut rng).scaled(0.1);
        let fam = VariationFamily::chart_linear(u.clone(), v, w).unwrap();
        let check = hessian_check(&op, &fam, DEFAULT_HESSIAN_STEP).unwrap();
        assert!(check.passed, "{check:?}");
    }
}

#[test]
fn assembly_reproduces_the_operator() {
    let g = circle(24);
    let u = MapField::from_fn(g.clone(), target(ManifoldDescriptor::normal_family(0.4)), |x| {
        vec![0.3 * x[0].cos(), 1.0 + 0.2 * x[0].sin()]
    })
    .unwrap();
    let op = JacobiOperator::new(&u).unwrap();
    let asm = JacobiAssembly::new(&op, DEFAULT_DOF_CAP).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = Section::random_smooth(&g, 2, 4, &mut rng);
    let direct = op.apply(&v).unwrap();
    assert!(max_diff(&asm.apply(&v), &direct) < 1e-12 * (1.0 + direct.max_abs()));
    assert!(asm.weight_blocks().iter().all(|b| b.clone().cholesky().is_some()));
    let wt = asm.weight_matrix();
    assert_eq!(wt, wt.transpose());
}

#[test]
fn central_flat_assembly_is_the_circulant_second_difference() {
    let g = torus(&[2.0 * PI], 12, DiffScheme::Central);
    let u = MapField::constant(g.clone(), target(ManifoldDescriptor::euclidean(2)), &[0.0, 0.0]).unwrap();
    let asm = JacobiAssembly::new(&JacobiOperator::new(&u).unwrap(), DEFAULT_DOF_CAP).unwrap();
    let h2 = g.spacing(0).powi(2);
    let n = 12;
    for i in 0..n {
        for j in 0..n {
            let stencil = if i == j {
                2.0 / h2
            } else if (i + 1) % n == j || (j + 1) % n == i {
                -1.0 / h2
            } else {
                0.0
            };
            for c in 0..2 {
                for e in 0..2 {
                    let expect = if c == e { stencil } else { 0.0 };
                    assert!((asm.matrix()[(i * 2 + c, j * 2 + e)] - expect).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn asymmetry_vanishes_for_metric_connections() {
    let g = circle(24);
    let f = |x: &[f64]| vec![0.3 * x[0].cos(), 1.0 + 0.2 * x[0].sin()];
    let asym = |alpha: f64| {
        let u = MapField::from_fn(g.clone(), target(ManifoldDescriptor::normal_family(alpha)), f).unwrap();
        JacobiAssembly::new(&JacobiOperator::new(&u).unwrap(), DEFAULT_DOF_CAP).unwrap().asymmetry()
    };
    assert!(asym(0.0) < 1e-8);
    assert!(asym(0.8) > 1e-6);
}

#[test]
fn circulant_route_agrees_with_dense() {
    let g2 = torus(&[2.0 * PI, 3.0], 8, DiffScheme::Spectral);
    let identity = MapField::from_fn(g2.clone(), g2.domain().clone(), |x| x.to_vec()).unwrap();
    let tilted = MapField::from_fn(circle(16), target(ManifoldDescriptor::sphere(1.3)), |x| vec![1.2, 2.0 * x[0]]).unwrap();
    let central = MapField::constant(torus(&[2.0 * PI], 16, DiffScheme::Central), target(ManifoldDescriptor::simplex(0.0, 2)), &[0.2, 0.3]).unwrap();
    for u in [identity, equator(16), tilted, central] {
        let op = JacobiOperator::new(&u).unwrap();
        let dense = spectrum(&op, &SpectrumConfig::default()).unwrap();
        let circ = spectrum(&op, &SpectrumConfig { prefer_circulant: true, ..Default::default() }).unwrap();
        assert_eq!(dense.route, SpectrumRoute::Dense);
        assert_eq!(circ.route, SpectrumRoute::Circulant);
        for (a, b) in dense.eigenvalues.iter().zip(&circ.eigenvalues) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        }
        assert!((dense.asymmetry - circ.asymmetry).abs() < 1e-9);
        assert_eq!((dense.index, dense.nullity), (circ.index, circ.nullity));
    }
}

#[test]
fn size_cap_applies_to_varying_operators() {
    let u = MapField::from_fn(circle(16), target(ManifoldDescriptor::normal_family(0.0)), |x| vec![x[0].sin(), 1.0]).unwrap();
    let op = JacobiOperator::new(&u).unwrap();
    let cfg = SpectrumConfig { cap: 10, ..Default::default() };
    assert!(matches!(spectrum(&op, &cfg), Err(crate::Error::SizeCap { ndof: 32, cap: 10 })));
    let still = MapField::constant(circle(16), target(ManifoldDescriptor::normal_family(0.0)), &[0.0, 1.0]).unwrap();
    assert_eq!(spectrum(&JacobiOperator::new(&still).unwrap(), &cfg).unwrap().route, SpectrumRoute::Circulant);
}

#[test]
fn constant_map_spectrum() {
    let u = MapField::constant(circle(32), target(ManifoldDescriptor::euclidean(3)), &[0.1, 0.2, 0.3]).unwrap();
    let s = spectrum(&JacobiOperator::new(&u).unwrap(), &SpectrumConfig::default()).unwrap();
    assert_eq!((s.index, s.nullity), (0, 3));
    assert!((s.smallest_positive().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(s.verdict, Verdict::WeaklyStable);
    assert_eq!(s.clusters[0], Cluster { value: s.clusters[0].value, multiplicity: 3 });
    assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(s.eigenvalues_csv().lines().count(), 96);
}

#[test]
fn spectrum_scales_under_domain_rescaling() {
    let build = |scale: f64| {
        let desc = match ManifoldDescriptor::flat_torus(&[2.0 * PI]) {
            ManifoldDescriptor::FlatTorus { dim, lengths, conformal_amplitude, connection, curvature_source, .. } => {
                ManifoldDescriptor::FlatTorus { dim, lengths, scale, conformal_amplitude, connection, curvature_source }
            }
            _ => unreachable!(),
        };
        let g = Arc::new(DomainGrid::new(Arc::new(make_manifold(&desc).unwrap()), 16, DiffScheme::Spectral).unwrap());
        let u = MapField::constant(g, target(ManifoldDescriptor::sphere(1.0)), &[1.0, 0.0]).unwrap();
        spectrum(&JacobiOperator::new(&u).unwrap(), &SpectrumConfig::default()).unwrap()
    };
    let (a, b) = (build(1.0), build(2.5));
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((x / 6.25 - y).abs() < 1e-10 * (1.0 + x.abs()));
    }
    assert_eq!((a.index, a.nullity), (b.index, b.nullity));
}

#[test]
fn equator_is_unstable_with_eigenvalue_minus_one() {
    let s = spectrum(&JacobiOperator::new(&equator(32)).unwrap(), &SpectrumConfig::default()).unwrap();
    assert_eq!(s.index, 1);
    assert!((s.lambda_min() + 1.0).abs() < 1e-10);
    assert_eq!(s.nullity, 3);
    assert_eq!(s.verdict, Verdict::Unstable);
}

#[test]
fn cluster_grouping() {
    let c = clusters(&[-1.0, 0.0, 1e-9, 1.0, 1.0 + 1e-9, 1.0 + 2e-9, 4.0], 1e-6);
    let mult: Vec<usize> = c.iter().map(|c| c.multiplicity).collect();
    assert_eq!(mult, [1, 2, 3, 1]);
}

#[test]
fn stability_verdicts() {
    let cfg = StabilityConfig { samples: 200, sections: 20, ..StabilityConfig::new(7) };
    let run = |u: &MapField| {
        let op = JacobiOperator::new(u).unwrap();
        let s = spectrum(&op, &SpectrumConfig::default()).unwrap();
        stability_report(&op, &s, &cfg).unwrap()
    };
    let still = run(&MapField::constant(circle(16), target(ManifoldDescriptor::sphere(1.0)), &[1.0, 0.0]).unwrap());
    assert_eq!(still.verdict, Verdict::WeaklyStable);
    assert_eq!(still.route, StabilityRoute::Spectrum);

    let g = torus(&[2.0 * PI, 2.0 * PI], 8, DiffScheme::Spectral);
    let id = run(&MapField::from_fn(g.clone(), g.domain().clone(), |x| x.to_vec()).unwrap());
    assert_eq!(id.verdict, Verdict::WeaklyStable);

    let eq = run(&equator(32));
    assert_eq!(eq.verdict, Verdict::Unstable);
    assert!(!eq.certificate.nonpositive && eq.integrated_curvature_max > 0.0);

    let h2 = run(&MapField::constant(circle(16), target(ManifoldDescriptor::normal_family(0.0)), &[0.0, 1.0]).unwrap());
    assert_eq!(h2.route, StabilityRoute::Certificate);
    assert_eq!(h2.verdict, Verdict::WeaklyStable);
    assert!(h2.integrated_nonpositive && !h2.contradiction);
    assert!(h2.quadratic_form_min >= -1e-10);
}

#[test]
fn report_json_fields() {
    let s = spectrum(&JacobiOperator::new(&equator(16)).unwrap(), &SpectrumConfig::default()).unwrap();
    let json = serde_json::to_value(&s).unwrap();
    for key in ["eigenvalues", "index", "nullity", "asymmetry", "verdict", "harmonicity_gate"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["verdict"], "unstable");
}

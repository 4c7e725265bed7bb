use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifold::{curvature_form, quad, ChartManifold};
use crate::error::Result;

/// Normalized curvature values above this count as positive witnesses.
pub const STRUCTURAL_TOLERANCE: f64 = 1e-10;

/// Outcome of a Monte-Carlo search for positive curvature.
///
/// This samples, it does not prove: a `nonpositive` verdict means no sampled
/// 2-plane had `h(R(U,V)V,U)/(|U|²|V|²)` above [`STRUCTURAL_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonpositivityCertificate {
    pub samples: usize,
    pub seed: u64,
    pub max_normalized: f64,
    pub min_normalized: f64,
    pub nonpositive: bool,
    /// Up to five sampled points with positive normalized curvature.
    pub witnesses: Vec<CurvatureWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureWitness {
    pub point: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub value: f64,
}

pub fn nonpositivity_certificate(
    m: &ChartManifold,
    samples: usize,
    seed: u64,
) -> Result<NonpositivityCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = m.dim();
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    let mut witnesses = Vec::new();
    for _ in 0..samples {
        let p = m.sample_point(&mut rng);
        let u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let g = m.metric(&p)?;
        let r = m.curvature(&p)?;
        let value = curvature_form(&g, &r, &u, &v) / (quad(&g, &u, &u) * quad(&g, &v, &v));
        max = max.max(value);
        min = min.min(value);
        if value > STRUCTURAL_TOLERANCE && witnesses.len() < 5 {
            witnesses.push(CurvatureWitness {
                point: p,
                u,
                v,
                value,
            });
        }
    }
    if samples == 0 {
        max = 0.0;
        min = 0.0;
    }
    Ok(NonpositivityCertificate {
        samples,
        seed,
        max_normalized: max,
        min_normalized: min,
        nonpositive: max <= STRUCTURAL_TOLERANCE,
        witnesses,
    })
}

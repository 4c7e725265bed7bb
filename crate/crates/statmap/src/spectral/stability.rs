use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assembly::{CirculantJacobi, JacobiAssembly, DEFAULT_DOF_CAP};
use super::jacobi::JacobiOperator;
use crate::error::{Error, Result};
use crate::fields::Section;
use crate::geometry::{nonpositivity_certificate, NonpositivityCertificate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    WeaklyStable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumRoute {
    Dense,
    Circulant,
}

/// Eigenvalues equal within the cluster gap, reported once with multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub value: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub index: usize,
    pub nullity: usize,
    pub asymmetry: f64,
    pub verdict: Verdict,
    pub harmonicity_gate: bool,
    pub tau_zero: f64,
    pub ndof: usize,
    pub route: SpectrumRoute,
    pub clusters: Vec<Cluster>,
}

impl SpectrumReport {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Smallest eigenvalue above the zero threshold.
    pub fn smallest_positive(&self) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|v| *v > self.tau_zero)
    }

    /// One line per eigenvalue.
    pub fn eigenvalues_csv(&self) -> String {
        let mut s = String::with_capacity(self.eigenvalues.len() * 24);
        for v in &self.eigenvalues {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    /// Zero threshold; `None` uses `1e-6·max(1, |λ|_max)`.
    pub tau_zero: Option<f64>,
    pub cap: usize,
    /// Use the Fourier route even below the cap when the operator allows it.
    pub prefer_circulant: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            tau_zero: None,
            cap: DEFAULT_DOF_CAP,
            prefer_circulant: false,
        }
    }
}

pub fn default_tau_zero(eigenvalues: &[f64]) -> f64 {
    let radius = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    1e-6 * radius.max(1.0)
}

/// Spectrum of `J_u`: dense below the cap, Fourier-diagonalized above it when
/// the operator is translation invariant.
pub fn spectrum(op: &JacobiOperator, config: &SpectrumConfig) -> Result<SpectrumReport> {
    let ndof = op.ndof();
    if ndof > config.cap || config.prefer_circulant {
        if let Some(circ) = CirculantJacobi::new(op) {
            return Ok(summarize(
                circ.eigenvalues()?,
                circ.asymmetry(),
                op.is_harmonic(),
                config.tau_zero,
                SpectrumRoute::Circulant,
            ));
        }
    }
    if ndof > config.cap {
        return Err(Error::SizeCap { ndof, cap: config.cap });
    }
    let asm = JacobiAssembly::new(op, config.cap)?;
    spectrum_of(&asm, op.is_harmonic(), config.tau_zero)
}

pub fn spectrum_of(asm: &JacobiAssembly, harmonic: bool, tau_zero: Option<f64>) -> Result<SpectrumReport> {
    Ok(summarize(
        asm.eigenvalues()?,
        asm.asymmetry(),
        harmonic,
        tau_zero,
        SpectrumRoute::Dense,
    ))
}

fn summarize(
    eigenvalues: Vec<f64>,
    asymmetry: f64,
    harmonic: bool,
    tau_zero: Option<f64>,
    route: SpectrumRoute,
) -> SpectrumReport {
    let tau = tau_zero.unwrap_or_else(|| default_tau_zero(&eigenvalues));
    let index = eigenvalues.iter().filter(|v| **v < -tau).count();
    let nullity = eigenvalues.iter().filter(|v| v.abs() <= tau).count();
    SpectrumReport {
        ndof: eigenvalues.len(),
        clusters: clusters(&eigenvalues, 10.0 * tau),
        eigenvalues,
        index,
        nullity,
        asymmetry,
        verdict: if index == 0 {
            Verdict::WeaklyStable
        } else {
            Verdict::Unstable
        },
        harmonicity_gate: harmonic,
        tau_zero: tau,
        route,
    }
}

pub fn clusters(sorted: &[f64], gap: f64) -> Vec<Cluster> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for &v in sorted {
        match out.last_mut() {
            Some((sum, count)) if v - last <= gap => {
                *sum += v;
                *count += 1;
            }
            _ => out.push((v, 1)),
        }
        last = v;
    }
    out.into_iter()
        .map(|(sum, count)| Cluster {
            value: sum / count as f64,
            multiplicity: count,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConfig {
    /// Sampled 2-planes for the curvature certificate.
    pub samples: usize,
    /// Random smooth sections for the integrated checks.
    pub sections: usize,
    pub max_mode: usize,
    pub seed: u64,
}

impl StabilityConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            samples: 2000,
            sections: 200,
            max_mode: 3,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityRoute {
    /// Non-positive target curvature at a harmonic map.
    Certificate,
    Spectrum,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub route: StabilityRoute,
    pub harmonicity_gate: bool,
    pub certificate: NonpositivityCertificate,
    pub lambda_min: f64,
    pub tau_zero: f64,
    /// Largest `∫h(ℜV, V)/‖V‖²` over the sampled sections.
    pub integrated_curvature_max: f64,
    pub integrated_nonpositive: bool,
    /// Smallest `∫h(J V, V)/‖V‖²` over the sampled sections.
    pub quadratic_form_min: f64,
    /// Certified non-positive target yet a negative eigenvalue.
    pub contradiction: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advice: Option<String>,
}

pub fn stability_report(op: &JacobiOperator, spec: &SpectrumReport, config: &StabilityConfig) -> Result<StabilityReport> {
    let pb = op.geometry();
    let certificate = nonpositivity_certificate(pb.target(), config.samples, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut curv_max = f64::NEG_INFINITY;
    let mut form_min = f64::INFINITY;
    for _ in 0..config.sections {
        let v = Section::random_smooth(pb.grid(), pb.target_dim(), config.max_mode, &mut rng);
        let norm = pb.l2_inner(&v, &v);
        if norm == 0.0 {
            continue;
        }
        curv_max = curv_max.max(pb.l2_inner(&op.curvature_term(&v), &v) / norm);
        form_min = form_min.min(op.hessian(&v, &v)? / norm);
    }
    let integrated_nonpositive = curv_max <= crate::geometry::STRUCTURAL_TOLERANCE;
    let lambda_min = spec.lambda_min();
    let certified = certificate.nonpositive && op.is_harmonic();
    let contradiction = certified && lambda_min < -spec.tau_zero;
    let (route, verdict) = if certified && !contradiction {
        (StabilityRoute::Certificate, Verdict::WeaklyStable)
    } else {
        (StabilityRoute::Spectrum, spec.verdict)
    };
    let advice = contradiction.then(|| {
        format!(
            "λ_min = {lambda_min:.3e} below −τ_zero on a non-positively curved target: \
             the grid under-resolves the map; refine n and confirm the flow converged"
        )
    });
    Ok(StabilityReport {
        verdict,
        route,
        harmonicity_gate: op.is_harmonic(),
        certificate,
        lambda_min,
        tau_zero: spec.tau_zero,
        integrated_curvature_max: curv_max,
        integrated_nonpositive,
        quadratic_form_min: form_min,
        contradiction,
        advice,
    })
}

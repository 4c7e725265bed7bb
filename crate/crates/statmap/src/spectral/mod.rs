//! Jacobi operator `J_u = Δ̄_u − ℜ^u`, its matrix realization, spectra, index,
//! nullity and stability verdicts.

mod assembly;
mod jacobi;
mod stability;

pub use assembly::{CirculantJacobi, JacobiAssembly, DEFAULT_DOF_CAP};
pub use jacobi::{
    curvature_term, energy_scale, hessian, hessian_check, jacobi_apply, rough_laplacian, HessianCheck,
    HessianValue, JacobiOperator, DEFAULT_HESSIAN_STEP, HARMONICITY_GATE,
};
pub use stability::{
    clusters, default_tau_zero, spectrum, spectrum_of, stability_report, Cluster, SpectrumConfig, SpectrumReport,
    SpectrumRoute, StabilityConfig, StabilityReport, StabilityRoute, Verdict,
};

#[cfg(test)]
mod tests;

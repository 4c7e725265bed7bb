//! Statistical structures `(g, ∇)` on coordinate charts.

mod certificate;
mod manifold;
mod structure;
mod tensor;

pub use certificate::{
    nonpositivity_certificate, CurvatureWitness, NonpositivityCertificate, STRUCTURAL_TOLERANCE,
};
pub use manifold::{
    curvature_form, make_manifold, ChartManifold, ChartPoint, ConnectionSpec, CurvatureSource,
    DerivativeMode, ManifoldDescriptor, FD_RELATIVE_STEP,
};
pub use structure::{structure_report, StructureReport};
pub use tensor::{Christoffel, CurvatureTensor, DifferenceTensor};

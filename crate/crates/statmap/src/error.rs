use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    #[error("{}", domain_violation_message(.manifold, .coords, .node))]
    DomainViolation {
        manifold: String,
        coords: Vec<f64>,
        node: Option<usize>,
    },

    #[error("metric of {manifold} is not positive definite at {coords:?}")]
    DegenerateMetric { manifold: String, coords: Vec<f64> },

    #[error("{ndof} degrees of freedom exceed the dense assembly cap of {cap}")]
    SizeCap { ndof: usize, cap: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("harmonic flow diverged at step {step}: energy increased for {window} consecutive steps")]
    FlowDivergence { step: usize, window: usize },

    #[error("field is not periodic along axis {axis}: wrap jump {jump:.3e} against interior increments up to {interior:.3e}")]
    NonPeriodic { axis: usize, jump: f64, interior: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn domain_violation_message(manifold: &str, coords: &[f64], node: &Option<usize>) -> String {
    match node {
        Some(n) => format!("node {n}: point {coords:?} leaves the validity box of {manifold}"),
        None => format!("point {coords:?} leaves the validity box of {manifold}"),
    }
}

impl Error {
    /// Attach a grid node index to a domain violation.
    pub fn at_node(self, node: usize) -> Self {
        match self {
            Error::DomainViolation {
                manifold, coords, ..
            } => Error::DomainViolation {
                manifold,
                coords,
                node: Some(node),
            },
            other => other,
        }
    }

    /// Stable snake_case name used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Schema { .. } => "schema",
            Error::DomainViolation { .. } => "domain_violation",
            Error::DegenerateMetric { .. } => "degenerate_metric",
            Error::SizeCap { .. } => "size_cap",
            Error::Numeric(_) => "numeric",
            Error::FlowDivergence { .. } => "flow_divergence",
            Error::NonPeriodic { .. } => "non_periodic",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema { .. } | Error::Io(_) | Error::SizeCap { .. } => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

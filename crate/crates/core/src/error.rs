use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain box")]
    OutsideDomain { point: Vec<f64> },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("quadrature capacity exceeded: degree {degree} > {capacity}")]
    Capacity { degree: usize, capacity: usize },

    /// A numerical kernel failed; `point` is set when the failure is tied to a
    /// location in the domain.
    #[error("numerical failure: {message}{}", point.as_ref().map(|p| format!(" at {p:?}")).unwrap_or_default())]
    Numerical {
        message: String,
        point: Option<Vec<f64>>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("test-function support of half-width {delta} around {center:?} leaves the domain")]
    Geometry { center: Vec<f64>, delta: f64 },

    #[error("witness did not localize at {point:?} after {steps} halvings; try another point")]
    WitnessNotLocalized { point: Vec<f64>, steps: usize },

    #[error("system is not elliptic: smallest Hermitian-part eigenvalue {lambda_min} < declared {mu}")]
    NotElliptic { lambda_min: f64, mu: f64 },

    #[error("probe did not converge at any scheduled delta around {point:?}")]
    Indeterminate { point: Vec<f64> },

    #[error("unknown catalog entry `{0}`")]
    UnknownEntry(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            point: None,
        }
    }
}

impl Error {
    /// Process exit status: 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_)
            | Error::Shape(_)
            | Error::OutsideDomain { .. }
            | Error::UnknownEntry(_)
            | Error::Config(_)
            | Error::NotElliptic { .. }
            | Error::Unsupported(_)
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

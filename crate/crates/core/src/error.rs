use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample budget {budget} is below the minimum {minimum}")]
    BudgetTooSmall { budget: usize, minimum: usize },
    #[error("exponent {exponent} out of range for roots of unity of order {order}")]
    ExponentOutOfRange { exponent: u32, order: u32 },
    #[error("activation is not a polynomial")]
    NonPolynomialActivation,
    #[error("activation has a vanishing Taylor coefficient up to degree {degree}")]
    ZeroCoefficient { degree: usize },
    #[error("negative variance {0}")]
    NegativeVariance(f64),
    #[error("unsupported dimensions: {0}")]
    UnsupportedDimensions(String),
    #[error("unsupported constraint: {0}")]
    UnsupportedConstraint(String),
    #[error("too many active variables: {got} > {max}")]
    TooManyActiveVariables { got: usize, max: usize },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no interpolator of degree at most {degree} exists")]
    EmptySpace { degree: u32 },
    #[error("reduced system is singular (condition number {condition:e})")]
    SingularReducedSystem { condition: f64 },
    #[error("kernel matrix is singular (min eigenvalue {min_eigenvalue:e}, trace {trace:e})")]
    SingularKernel { min_eigenvalue: f64, trace: f64 },
    #[error("design matrix is rank deficient: rank {rank} < {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("Gram matrix is ill-conditioned: {0}")]
    IllConditionedGram(String),
    #[error("objective became non-finite or the step size collapsed at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::EmptySpace { .. }
                | Error::SingularReducedSystem { .. }
                | Error::SingularKernel { .. }
                | Error::RankDeficient { .. }
                | Error::IllConditionedGram(_)
                | Error::NonFiniteObjective { .. }
                | Error::LinearAlgebra(_)
        )
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Io(_) => 1,
            e if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

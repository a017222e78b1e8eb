use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grading: {0}")]
    InvalidGrading(String),

    #[error("invalid mesh parameter: {0}")]
    InvalidMesh(String),

    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported quadrature order {order} (supported: {supported})")]
    UnsupportedOrder { order: usize, supported: &'static str },

    #[error("point {point:?} lies outside cell {cell}")]
    PointOutsideCell { cell: usize, point: [f64; 3] },

    #[error("degenerate system: {0}")]
    DegenerateSystem(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("solution does not belong to this mesh ({0})")]
    MeshMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdmError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("mask selects no nodes")]
    EmptyMask,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("CFL violated: dt*max|v|/h = {cfl:.4} > {limit}")]
    Cfl { cfl: f64, limit: f64 },
    #[error("zero pivot at row {row}")]
    ZeroPivot { row: usize },
    #[error("solver did not converge: {iterations} cycles, residual {residual:.3e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("data not extended: non-finite value at node {node}")]
    MissingExtension { node: usize },
    #[error("problem invariant violated: {0}")]
    Invariant(String),
    #[error("no plateau: spread {spread:.3e} exceeds {limit:.3e}")]
    NoPlateau { spread: f64, limit: f64 },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<DdmError>,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DdmError {
    pub fn context(self, context: impl Into<String>) -> Self {
        DdmError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &DdmError {
        match self {
            DdmError::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, DdmError>;

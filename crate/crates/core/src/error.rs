use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-manifold edge ({0}, {1}) is shared by {2} triangles")]
    NonManifoldEdge(usize, usize, usize),

    #[error("mesh is disconnected ({0} components)")]
    Disconnected(usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("degenerate angle in triangle {0}")]
    DegenerateTriangle(usize),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("metric is inadmissible: {c} is within tolerance of Dirichlet eigenvalue {nearest}")]
    Inadmissible { c: f64, nearest: f64 },

    #[error("eigenvalue {index} is not simple (cluster {cluster:?})")]
    ClusteredEigenvalue { index: usize, cluster: Vec<usize> },

    #[error("eigensolver did not converge after {iterations} restarts (worst residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("factorization breakdown: pivot {pivot:e} at row {row}")]
    Singular { row: usize, pivot: f64 },

    #[error("requested {requested} eigenpairs but only {available} degrees of freedom")]
    CountTooLarge { requested: usize, available: usize },

    #[error("no candidate immersion: {0}")]
    NoCandidate(String),

    #[error("boundary strip unresolvable: {0}")]
    StripUnresolvable(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

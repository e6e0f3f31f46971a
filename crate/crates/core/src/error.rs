use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is not chordal")]
    NotChordal,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("clique node {node} out of range for {n} blocks")]
    BadClique { node: usize, n: usize },
    #[error("matrix is not positive semidefinite within tolerance (min eigenvalue {min_eig:.3e})")]
    NotDecomposable { min_eig: f64 },
    #[error("eigensolver failed to converge: {0}")]
    ConvergenceFailure(String),
    #[error("H2 analysis requires D = 0, but D_{block} is nonzero")]
    NonzeroD { block: usize },
    #[error("sparsity pattern mismatch: {0}")]
    PatternMismatch(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("system is not asymptotically stable (spectral abscissa {abscissa:.6e})")]
    Unstable { abscissa: f64 },
    #[error("H-infinity bisection could not bracket the norm below {upper:.6e}")]
    BracketFailure { upper: f64 },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("problem too large for dense oracle: state dimension {n} exceeds {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

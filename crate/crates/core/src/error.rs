use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate element {element}: signed area {area:e}")]
    DegenerateElement { element: usize, area: f64 },

    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("Cholesky factorization failed at pivot {pivot} (value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("singular matrix at pivot {0}")]
    Singular(usize),

    #[error("singular rank-one update: |1 + v^T A^-1 u| = {0:e}")]
    SingularUpdate(f64),

    #[error("dense size guard exceeded: {entries} entries > {limit}")]
    SizeGuard { entries: usize, limit: usize },

    #[error("NaN or infinity encountered in {0}")]
    NonFinite(&'static str),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("{solver} diverged: residual grew for {cycles} consecutive cycles (last {residual:e})")]
    Diverged {
        solver: &'static str,
        cycles: usize,
        residual: f64,
    },

    #[error("infeasible iterate at index {index}: {value} not in [{lower}, {upper}]")]
    Infeasible {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

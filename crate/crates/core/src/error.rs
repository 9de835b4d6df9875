use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point cloud bounding box has zero extent along axis {axis}")]
    DegenerateCloud { axis: usize },
    #[error("invalid sample counts: n0={n0}, n_plus={n_plus}, n_minus={n_minus}, cloud={cloud} (need n0 <= cloud, n_plus < n0, n_minus <= n_plus)")]
    InvalidCounts {
        n0: usize,
        n_plus: usize,
        n_minus: usize,
        cloud: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(&'static str),
    #[error("kernel derivative requested {distance:e} m from a centre (guard is 1e-8 m)")]
    SingularPoint { distance: f64 },
    #[error("covariance not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("pseudo-input count {m} must satisfy 1 <= m <= {n}")]
    InvalidM { m: usize, n: usize },
    #[error("point set is empty")]
    EmptySet,
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
}

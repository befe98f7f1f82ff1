use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The flux ratio reached 1 at an interior radius: no classical solution
    /// exists for this right-hand side.
    #[error("supercritical flux: ratio {ratio} at r = {radius}")]
    SupercriticalFlux { radius: f64, ratio: f64 },

    #[error("no spherical cap: H0 * R / n = {0} exceeds 1")]
    NoCap(f64),

    #[error("inconsistent bracket: {0}")]
    Inconsistency(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("no fold: the branch has no turning point")]
    NoFold,

    #[error("second solution collapsed onto the minimal branch (distance {distance:e})")]
    DistanceTooSmall { distance: f64 },

    #[error("no barrier pair (eps, delta) satisfies the boundary inequality")]
    BarrierUnavailable,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

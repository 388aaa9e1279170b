//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Failures reported by the geometric queries, integrators and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A NaN or infinite value appeared where a finite one is required.
    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    /// A vector had the wrong number of components.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The vector field is (numerically) tangent to the guard, so the
    /// flow/guard decomposition of the tangent space is singular.
    #[error("vector field is tangent to the guard (|ds(X)| = {ds_x:e})")]
    TangentFlow { ds_x: f64 },

    /// The guard gradient vanishes, so no tangent basis exists.
    #[error("degenerate guard: gradient norm {norm:e}")]
    DegenerateGuard { norm: f64 },

    /// The frame built from the guard basis and the vector field is singular.
    #[error("singular frame: |det| = {det:e}")]
    SingularFrame { det: f64 },

    /// A crossing search was requested on an interval without a sign change.
    #[error("no sign change of the guard level on the bracket")]
    NoBracket,

    /// Too many resets occurred within a single solver step.
    #[error("Zeno limit: {impacts} resets within one step")]
    ZenoLimit { impacts: usize },

    /// The preimage enumerator reported an unbounded preimage set.
    #[error("reset has infinitely many preimages at the requested point")]
    InfinitePreimage,

    /// Branching over preimages produced more feet than allowed per node.
    #[error("too many characteristic feet ({count} > {cap})")]
    TooManyFeet { count: usize, cap: usize },

    /// Two density fields live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Rejection sampling accepted too few proposals.
    #[error("sampling stalled: acceptance rate below {rate:e}")]
    SamplingStall { rate: f64 },

    /// A density exceeded its declared upper bound during sampling.
    #[error("density value {value} exceeds declared bound {bound}")]
    DensityBound { value: f64, bound: f64 },

    /// A state or parameter lies outside the admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A specification (grid, algebra, configuration) is invalid.
    #[error("invalid specification: {0}")]
    Invalid(String),

    /// A text file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// An I/O operation failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Returns `Err(NonFinite)` unless every entry of `v` is finite.
pub(crate) fn ensure_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what.to_string() })
    }
}

use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frequency vector must be nonzero")]
    ZeroOmega,

    #[error("not a rational number: {0:?}")]
    NotRational(String),

    #[error("integer overflow while building the lattice base")]
    Overflow,

    #[error("grid cannot be made commensurate: {0}")]
    Incommensurable(String),

    #[error("translation by {k:?} is not commensurate with the grid: {reason}")]
    IncommensurateTranslation { k: Vec<i64>, reason: String },

    #[error("vertical shift {shift} is not a multiple of the vertical spacing {spacing}")]
    VerticalShift { shift: f64, spacing: f64 },

    #[error("potential value requested outside [-1, 1]: u = {0}")]
    OutOfRange(f64),

    #[error("potential of kind {0} has no derivative")]
    NoDerivative(&'static str),

    #[error("ball of radius {radius} around a = {center_a} leaves the computational extent [{lo}, {hi}]")]
    BallOverflow {
        radius: f64,
        center_a: f64,
        lo: f64,
        hi: f64,
    },

    #[error("ball center is off the interface: |u(center)| = {value} > {theta0}")]
    OffInterface { value: f64, theta0: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("window leaves the computational domain after rescaling by eps = {eps}")]
    WindowOverflow { eps: f64 },

    #[error("slab half-width {needed} does not fit inside the half extent {extent}")]
    ExtentTooSmall { needed: f64, extent: f64 },

    #[error("field file: {0}")]
    Format(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

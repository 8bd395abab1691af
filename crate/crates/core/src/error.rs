use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // generator / chain
    #[error("generator matrix is not square (row {row} has {len} entries, expected {expected})")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("generator needs at least two modes, got {0}")]
    TooFewModes(usize),
    #[error("row {row} of the generator sums to {sum:e}, expected 0")]
    RowSumViolation { row: usize, sum: f64 },
    #[error("off-diagonal rate c[{i}][{j}] = {value} must be strictly positive")]
    NonpositiveOffDiagonal { i: usize, j: usize, value: f64 },
    #[error("mode {mode} out of range for {modes} modes")]
    ModeOutOfRange { mode: usize, modes: usize },
    #[error("chain time must be finite and nonnegative, got {0}")]
    InvalidTime(f64),

    // geometry
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("lattice spacing {h} too coarse for domain of diameter {diameter}")]
    SpacingTooCoarse { h: f64, diameter: f64 },
    #[error("point {0:?} lies outside the closed domain")]
    OutOfDomain(Vec<f64>),
    #[error("point {0:?} is not an interior point")]
    NotInterior(Vec<f64>),
    #[error("direction is not a unit vector (norm {0})")]
    NotUnit(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    // closed forms
    #[error("point with |x| = {0} lies outside the unit ball")]
    OutOfBall(f64),
    #[error("finite-difference step {step} must be smaller than the radius {radius}")]
    StepTooLarge { step: f64, radius: f64 },
    #[error("|x| = {norm} outside the annulus ({inner}, {outer})")]
    OutOfAnnulus { norm: f64, inner: f64, outer: f64 },
    #[error("radius must be positive, got {0}")]
    NonpositiveRadius(f64),
    #[error("barrier exponent must be positive, got {0}")]
    NonpositiveExponent(f64),

    // solver / residuals
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("field does not match problem: {0}")]
    FieldMismatch(String),
    #[error("point {0:?} is within the finite-difference stencil of the boundary")]
    TooCloseToBoundary(Vec<f64>),
    #[error("boundary data evaluated to a non-finite value at {0:?}")]
    NonFiniteBoundary(Vec<f64>),

    // game
    #[error("game did not terminate after {steps} steps (episode {episode:?})")]
    StalledGame { steps: u64, episode: Option<usize> },
    #[error("need at least two episodes, got {0}")]
    TooFewEpisodes(usize),

    // analysis
    #[error("closed ball B({center:?}, {radius}) is not contained in the domain")]
    BallNotContained { center: Vec<f64>, radius: f64 },
    #[error("radius order violated: {0}")]
    RadiusOrder(String),
    #[error("need at least {min} sphere samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("analysis requires exactly two modes, got {0}")]
    NotTwoModes(usize),

    // expressions / config
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

use thiserror::Error;

/// Errors raised while building or verifying a forward performance process.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no-arbitrage violated: need 0 < d < 1 < u, got u={u}, d={d}")]
    ArbitrageViolation { u: f64, d: f64 },

    #[error("probability p={p} is not in (0, 1)")]
    ProbabilityOutOfRange { p: f64 },

    #[error("wealth must be positive, got {x}")]
    NonpositiveWealth { x: f64 },

    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("could not bracket I(y) = {target} after {expansions} expansions")]
    BracketFailure { target: f64, expansions: usize },

    #[error("inversion of I at {target} did not reach tolerance (residual {residual:e})")]
    InversionFailure { target: f64, residual: f64 },

    #[error("theta = {theta} equals -log_a b = {critical}: solution exists but is not unique")]
    PathologicalTheta { theta: f64, critical: f64 },

    #[error("series diverged or stalled at y={y} after {terms} terms")]
    DivergenceDetected { y: f64, terms: usize },

    #[error("neither series condition holds (phi {phi}, branch {branch})")]
    NoConstructiveBranch { phi: String, branch: String },

    #[error("non-uniqueness construction needs log_a b < 0, got {log_a_b}")]
    WrongSignRegime { log_a_b: f64 },

    #[error("theta = 1 is log utility; use UtilityFn::log")]
    ThetaOne,

    #[error("invalid exponent theta = {theta}")]
    InvalidTheta { theta: f64 },

    #[error("quadrature on [{lo}, {hi}] did not converge within {evals} evaluations")]
    QuadratureFailure { lo: f64, hi: f64, evals: usize },

    #[error("allocation {pi} outside admissible range [{lo}, {hi}]")]
    AdmissibilityViolation { pi: f64, lo: f64, hi: f64 },

    #[error("objective is not unimodal on the allocation grid")]
    NonConcaveDetected,

    #[error("invalid tabulation: {0}")]
    InvalidTable(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::ArbitrageViolation { .. }
            | Error::ProbabilityOutOfRange { .. }
            | Error::NonpositiveWealth { .. }
            | Error::Domain { .. }
            | Error::InvalidTheta { .. }
            | Error::ThetaOne
            | Error::InvalidTable(_)
            | Error::InvalidConfig(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Io(_)
            | Error::Csv(_) => true,
            Error::Step { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

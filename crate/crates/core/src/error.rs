use thiserror::Error;

/// Errors reported by the solvers, the study drivers and the configuration reader.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature root finding did not converge for node {index} (last step {last_step:e})")]
    QuadratureNotConverged { index: usize, last_step: f64 },

    /// `1 + ε φ(μ σ)` must stay positive for the tumbling operator to be a relaxation.
    #[error("relaxation rate 1 + eps*phi = {rate} is not positive (mu = {mu}, sigma = {sigma})")]
    InvalidRelaxationRate { rate: f64, mu: f64, sigma: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("dispersion root check failed: {0}")]
    DispersionRoot(String),

    #[error("linear system is singular or ill-conditioned (condition estimate {condition:e}): {context}")]
    IllConditioned { condition: f64, context: String },

    #[error("nonlinear iteration did not converge after {iterations} passes (residual {residual:e}): {context}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        context: String,
    },

    #[error("time step {dt:e} violates the stability limit {limit:e} of {solver}")]
    Cfl {
        dt: f64,
        limit: f64,
        solver: &'static str,
    },

    #[error("steady problem failed in cell {cell}: {source}")]
    Cell {
        cell: isize,
        #[source]
        source: Box<Error>,
    },

    #[error("solver failure at step {step} (t = {time}): {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    /// `line` is absent for a missing required key.
    #[error("config{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_cell(self, cell: isize) -> Self {
        Error::Cell {
            cell,
            source: Box::new(self),
        }
    }
}

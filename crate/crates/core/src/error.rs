use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid fading model `{0}`: {1}")]
    Model(String, String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Adaptive quadrature hit its refinement cap before meeting tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error:e}, tolerance {tolerance:e}")]
    Quadrature {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    /// An iterative solver exhausted its iteration cap.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate budget: {0}")]
    DegenerateBudget(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::NoConvergence { .. }
                | Error::DegenerateBudget(_)
                | Error::Infeasible(_)
        )
    }
}

use thiserror::Error;

/// Errors raised by the analytic, numerical and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid traffic model: {0}")]
    InvalidTraffic(String),

    #[error("invalid link configuration: {0}")]
    InvalidLink(String),

    #[error("argument outside the supported domain: {0}")]
    Domain(String),

    #[error("degenerate moments: {0}")]
    DegenerateMoments(String),

    #[error("series did not converge within {terms} terms")]
    NoConvergence { terms: usize },

    #[error("quadrature tolerance not met: estimate {estimate:e} with error {error:e}")]
    ToleranceNotMet { estimate: f64, error: f64 },

    #[error("mean delay diverges: success probability {success:e} underflows")]
    DivergentDelay { success: f64 },

    #[error("delay series not converged: last partial sums {last} and {previous}")]
    NotConverged { last: f64, previous: f64 },

    #[error("working precision of {given} digits is below the {required} digits needed")]
    PrecisionInsufficient { required: u32, given: u32 },

    #[error("{fraction:.3} of the delay runs hit the slot cap")]
    ExcessCensoring { fraction: f64 },
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::ToleranceNotMet { .. }
                | Error::DivergentDelay { .. }
                | Error::NotConverged { .. }
                | Error::PrecisionInsufficient { .. }
                | Error::ExcessCensoring { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{quantity} = {value} outside admissible window [{lo}, {hi}]")]
    Domain {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("constraint `{constraint}` violated: {detail}")]
    Constraint {
        constraint: &'static str,
        detail: String,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("Newton iteration did not converge (dt = {dt:.3e} s, residual = {residual:.3e})")]
    NonConvergence { dt: f64, residual: f64 },

    #[error("time step fell below minimum {dt_min:.3e} s at t = {time:.3} s")]
    StepTooSmall { time: f64, dt_min: f64 },

    #[error("electrolyte depleted at x = {x:.3e} m, t = {time:.3} s (c_e = {c_e:.3e} mol/m^3)")]
    Depletion { x: f64, time: f64, c_e: f64 },

    #[error("equalization failed: {0}")]
    Equalization(String),

    #[error("study infeasible: {0}")]
    Infeasible(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn constraint(constraint: &'static str, detail: impl Into<String>) -> Self {
        Error::Constraint {
            constraint,
            detail: detail.into(),
        }
    }

    /// True for errors that originate in the numerical solver rather than in the inputs.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::StepTooSmall { .. }
                | Error::Depletion { .. }
                | Error::State(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

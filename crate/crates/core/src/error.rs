use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input: bad files, bad frames, violated preconditions.
    Input,
    /// A numerical procedure failed or the data lies outside the model.
    Numeric,
    /// The surrounding environment failed (I/O, sockets).
    Environment,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("sensor index {index} out of range (have {count} sensors)")]
    SensorIndex { index: usize, count: usize },

    #[error("stiffness below model intercept (k = {k})")]
    StiffnessBelowIntercept { k: f64 },

    #[error("likelihood annihilated prior support")]
    AnnihilatedSupport,

    #[error("observation inconsistent with model support")]
    InconsistentObservation,

    #[error("could not identify two modes")]
    ModesNotFound,

    #[error("Levenberg-Marquardt did not converge after {iterations} iterations (cost {cost:e})")]
    FitNotConverged {
        iterations: usize,
        cost: f64,
        params: [f64; 6],
    },

    #[error("masses not identifiable under this config")]
    MassesNotIdentifiable,

    #[error("modal calibration failed on sample {index}: {source}")]
    ModalSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular Rayleigh system (omega1 = omega2 = {omega})")]
    SingularRayleigh { omega: f64 },

    #[error("value iteration did not converge in {iterations} sweeps (residual {residual:e})")]
    ValueIterationNotConverged { iterations: usize, residual: f64 },

    #[error("history length mismatch: {controls} controls for {observations} observations")]
    HistoryMismatch { controls: usize, observations: usize },

    #[error("timestep {t} outside ground-truth schedule")]
    OutsideSchedule { t: u64 },

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid(_)
            | Error::SensorIndex { .. }
            | Error::HistoryMismatch { .. }
            | Error::OutsideSchedule { .. }
            | Error::Frame(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorKind::Input,
            Error::Io(_) | Error::Transport(_) => ErrorKind::Environment,
            Error::ModalSample { source, .. } => source.kind(),
            _ => ErrorKind::Numeric,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

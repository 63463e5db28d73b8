use thiserror::Error;

/// Everything that can go wrong in estimation, testing and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("simulation diverged: non-finite value at index {index}")]
    SimulationDiverged { index: usize },

    #[error("degenerate kernel window at t = {t}: every kernel weight is zero (bandwidth {bandwidth})")]
    DegenerateWindow { t: usize, bandwidth: f64 },

    #[error("bandwidth selection failed: {0}")]
    SelectionFailed(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("matrix inversion failed: {0}")]
    Singular(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("experiment failed: {failures} of {total} replications errored ({first})")]
    ExperimentFailed { failures: usize, total: usize, first: String },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// configuration or input files.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SimulationDiverged { .. }
                | Error::DegenerateWindow { .. }
                | Error::SelectionFailed(_)
                | Error::DegenerateInput(_)
                | Error::RankDeficient(_)
                | Error::Singular(_)
                | Error::CalibrationFailed(_)
                | Error::ExperimentFailed { .. }
        )
    }

    /// True for malformed or missing input data.
    pub fn is_data(&self) -> bool {
        matches!(self, Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the solvers, diagnostics and run orchestration.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("band {j} outside the representable range [{min}, {max}]")]
    BandOutOfRange { j: i32, min: i32, max: i32 },

    #[error("map leaves the sphere: max ||u|-1| = {defect:.3e}")]
    OffSphere { defect: f64 },

    #[error("frame is not an orthonormal tangent frame: defect {defect:.3e}")]
    NotTangent { defect: f64 },

    #[error("degenerate frame projection: |P e| = {norm:.3e}")]
    DegenerateFrame { norm: f64 },

    #[error("solution blew up (non-finite state) at t = {t}")]
    BlowUp { t: f64 },

    #[error("heat flow did not reach a constant map: sup distance {sup_dist:.3e} at s = {s}")]
    HeatNotConverged { s: f64, sup_dist: f64 },

    #[error("heat flow energy increased at s = {s} after {halvings} step halvings")]
    EnergyIncrease { s: f64, halvings: u32 },

    #[error("time grids are not aligned")]
    MisalignedTimes,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("{what}: measured {measured:.3e} exceeds tolerance {tolerance:.3e} (worst at t = {worst_t})")]
    ToleranceBreach {
        what: String,
        measured: f64,
        tolerance: f64,
        worst_t: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> LabError {
    LabError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

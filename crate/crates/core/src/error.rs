use std::path::PathBuf;

use thiserror::Error;

use crate::scenarios::Role;

#[derive(Debug, Error)]
pub enum EmsError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sealing violation: {operation} requires a {expected} set, got {actual}")]
    Sealing {
        operation: &'static str,
        expected: Role,
        actual: Role,
    },

    #[error("no admissible control at step {t} (state soc={soc:.6}, pm10={pm10:.6})")]
    NoAdmissibleControl { t: usize, soc: f64, pm10: f64 },

    #[error("policy `{policy}` returned an inadmissible control at step {t}: u_b={u_b}, u_v={u_v}")]
    InadmissibleControl {
        policy: String,
        t: usize,
        u_b: f64,
        u_v: f64,
    },

    #[error("integrator step size underflow at t={t_hours} h (h={step_hours:e})")]
    StepUnderflow { t_hours: f64, step_hours: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("no residuals stored for step {0}")]
    MissingResiduals(usize),

    #[error("scenario set mismatch: {0}")]
    ScenarioMismatch(String),

    #[error("artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error("stale artifact {path}: built for config {found}, current config is {expected}")]
    StaleArtifact {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("MPS parse error at line {line}: {reason}")]
    MpsParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = EmsError> = std::result::Result<T, E>;

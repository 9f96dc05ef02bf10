use std::path::PathBuf;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("network model is not well-formed: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("island containing bus {bus} is unbalanced by {mismatch_mw} MW")]
    UnbalancedIsland { bus: u32, mismatch_mw: f64 },

    #[error("dc power flow failed: {0}")]
    Flow(String),

    #[error("sensitivity factors were computed for a different topology")]
    StaleSensitivity,

    #[error("line {0} is not in service")]
    LineOutOfService(u32),

    #[error("simulation aborted at t={time_h:.4} h: {msg}")]
    Aborted { time_h: f64, msg: String },

    #[error(transparent)]
    Transition(#[from] crate::fsm::IllegalTransition),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

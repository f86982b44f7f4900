use std::io;

use thiserror::Error;

/// Errors produced anywhere in the navigation workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chord endpoints coincide (distance {0:e} m)")]
    DegenerateChord(f64),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("invalid region primitive: {0}")]
    InvalidPrimitive(String),
    #[error("beam {beam}: lower bound {min} exceeds upper bound {max}")]
    BoundsViolation { beam: usize, min: f64, max: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, batch: usize, last_loss: f64 },
    #[error("no collision-free path from start to goal")]
    NoPath,
    #[error("world generation infeasible after {attempts} attempts")]
    Infeasible { attempts: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

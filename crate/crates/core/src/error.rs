use std::io;

use thiserror::Error;

/// Errors produced by the training, geometry and diagnostics routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is not linearly separable")]
    NotSeparable,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("operation requires binary labels")]
    NotBinary,

    #[error("operation requires multiclass labels")]
    NotMulticlass,

    #[error("no subset of the support set spans its {rank}-dimensional span")]
    DegenerateSupport { rank: usize },

    #[error("zero vector")]
    ZeroVector,

    #[error("direction is parallel to the hyperplane")]
    ParallelDirection,

    #[error("no support hyperplane crossed within {budget} flow events")]
    NoCrossing { budget: usize },

    #[error("flow direction never reaches another hyperplane")]
    NoPositiveCrossing,

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("cannot normalize a zero gradient")]
    ZeroGradient,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite or exploding iterate at t = {t} (max |coordinate| = {magnitude:e})")]
    NonFinite { t: usize, magnitude: f64 },

    #[error("beta never updated in {iters} iterations (final hinge risk {final_hinge}); data is probably not separable")]
    NotSeparableSuspected { iters: usize, final_hinge: f64 },

    #[error("need at least two beta updates, found {found}")]
    InsufficientUpdates { found: usize },

    #[error("rate fit needs at least {needed} points in window, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("non-positive value {value} at t = {t}; shrink the fit window")]
    NonPositiveValues { t: usize, value: f64 },

    #[error("diagnostics require a margin certificate")]
    MissingCertificate,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("dataset generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

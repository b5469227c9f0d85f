//! Complete hinge loss: gradient descent that drives linear classifiers to
//! the max-margin separator, with an exact max-margin oracle, an event-driven
//! flow integrator, convergence diagnostics and a small ReLU network.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod datasets;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod losses;
pub mod neural;
pub mod optimizer;

pub use dataset::{Dataset, Labels};
pub use error::{Error, Result};
pub use geometry::{solve_max_margin, Hyperplane, MarginCertificate};
pub use optimizer::{train, LinearLoss, RecordSchedule, Trace, TrainConfig};

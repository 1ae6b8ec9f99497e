//! Compound weakly supervised learning (CWSL).
//!
//! Learns one weight in `[0, 1]` per training instance so that a logistic
//! model fit on the weighted training set ranks a small clean validation set
//! well. The validation objective is the pairwise squared AUC surrogate in its
//! closed quadratic form, and the weights follow implicit gradients obtained
//! from the stationarity condition of the weighted inner problem.
//!
//! Modules, bottom-up:
//!
//! - [`data`]: datasets, CSV ingestion, standardization, splits and synthetic
//!   corruption generators.
//! - [`model`]: the weighted logistic inner model (loss, gradient, per-instance
//!   gradient matrix and matrix-free Hessian-vector products).
//! - [`aucloss`]: exact AUC and the quadratic AUC surrogate.
//! - [`bilevel`]: conjugate gradient, implicit weight gradients and the
//!   alternating trainer.
//! - [`metrics`]: thresholded classification metrics and prior-shift
//!   probability calibration.
//! - [`cli`]: the experiment harness behind the `cwsl` binary.

pub mod aucloss;
pub mod bilevel;
pub mod cli;
pub mod data;
mod error;
mod linalg;
pub mod metrics;
pub mod model;

pub use aucloss::{compute_stats, exact_auc, surrogate_grad, surrogate_loss, ValidationStats};
pub use bilevel::{
    alternating_step, cg_solve, implicit_grad_w, project_weights, train, train_baseline_erm,
    CgSolution, EpochRecord, HyperParams, TrainReport,
};
pub use data::{Dataset, SplitSpec, StandardizerStats};
pub use error::{Error, Result};
pub use model::{InstanceWeights, ModelParams};

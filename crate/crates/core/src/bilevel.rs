//! Bi-level instance reweighting.
//!
//! The inner problem fits θ to the weighted training loss; the outer problem
//! moves the weights `w ∈ [0, 1]ⁿ` to lower the validation surrogate `L(θ)`.
//! Differentiating the stationarity condition `g(w, θ) = 0` gives
//!
//! ```text
//! ∂θ/∂w = −H⁻¹ G        ∂L/∂w = −Gᵀ H⁻¹ ∇L(θ)
//! ```
//!
//! which is evaluated adjoint-first: one `d`-dimensional conjugate-gradient
//! solve `(H + εI) v = ∇L(θ)` using Hessian-vector products, then `n` dot
//! products `−G_jᵀ v`.
//!
//! [`train`] alternates one gradient step on θ (with the previous weights) and
//! one projected gradient step on `w` (with the new θ) for a fixed number of
//! epochs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;

use crate::aucloss::{compute_stats, exact_auc, surrogate_grad, surrogate_loss, ValidationStats};
use crate::data::{rng_from_seed, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2};
use crate::model::{
    per_instance_grad_matrix, scores, training_grad, weighted_hvp, weighted_training_loss,
    write_theta_csv, InstanceWeights, ModelParams,
};

/// Optimizer settings. The defaults are step sizes 0.1 (θ) and 0.4 (w),
/// 100 epochs and initial weights of 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub lambda_theta: f64,
    pub lambda_w: f64,
    pub epochs: usize,
    pub w_init: f64,
    /// ε added to the Hessian diagonal before the implicit solve.
    pub damping: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda_theta: 0.1,
            lambda_w: 0.4,
            epochs: 100,
            w_init: 0.5,
            damping: 1e-6,
            cg_tol: 1e-10,
            cg_max_iter: 1000,
            batch_size: None,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must be finite and >= 0 (got {v})"
                )))
            }
        };
        nonneg("lambda_theta", self.lambda_theta)?;
        nonneg("lambda_w", self.lambda_w)?;
        nonneg("damping", self.damping)?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.w_init) {
            return Err(Error::invalid(format!(
                "w_init {} outside [0, 1]",
                self.w_init
            )));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol.is_finite()) {
            return Err(Error::invalid(format!(
                "cg_tol must be positive (got {})",
                self.cg_tol
            )));
        }
        if self.cg_max_iter == 0 {
            return Err(Error::invalid("cg_max_iter must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Metrics recorded at the end of an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_surrogate: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub final_theta: ModelParams,
    pub final_weights: InstanceWeights,
}

impl TrainReport {
    pub fn write_curves_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_lines(
            path.as_ref(),
            "epoch,train_loss,val_surrogate,val_auc",
            |out| {
                for r in &self.epochs {
                    writeln!(
                        out,
                        "{},{:?},{:?},{:?}",
                        r.epoch, r.train_loss, r.val_surrogate, r.val_auc
                    )?;
                }
                Ok(())
            },
        )
    }

    pub fn write_weights_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_lines(path.as_ref(), "index,weight", |out| {
            for (i, w) in self.final_weights.as_slice().iter().enumerate() {
                writeln!(out, "{i},{w:?}")?;
            }
            Ok(())
        })
    }

    pub fn write_theta_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_theta_csv(path, &self.final_theta)
    }
}

fn write_lines(
    path: &Path,
    header: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(out, "{header}").map_err(io_err)?;
    body(&mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Result of [`cg_solve`]. `converged` is false when `max_iter` ran out, in
/// which case `x` is the last iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Conjugate gradient for a symmetric positive definite operator, starting
/// from zero. Stops once `‖b − Ax‖₂ ≤ tol · max(1, ‖b‖₂)`.
pub fn cg_solve<F>(mut apply_a: F, b: &[f64], tol: f64, max_iter: usize) -> Result<CgSolution>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("right-hand side entry {i}")));
    }
    let threshold = tol * norm2(b).max(1.0);
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut iterations = 0;
    while rs.sqrt() > threshold && iterations < max_iter {
        let ap = apply_a(&p)?;
        if ap.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                found: ap.len(),
            });
        }
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() || curvature <= 0.0 {
            return Err(Error::NonFinite(format!(
                "conjugate gradient curvature {curvature:e} at iteration {} (operator not positive definite)",
                iterations + 1
            )));
        }
        let alpha = rs / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rs_next = dot(&r, &r);
        if !rs_next.is_finite() {
            return Err(Error::NonFinite(format!(
                "conjugate gradient residual at iteration {}",
                iterations + 1
            )));
        }
        let beta = rs_next / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_next;
        iterations += 1;
    }
    let residual_norm = rs.sqrt();
    Ok(CgSolution {
        x,
        iterations,
        residual_norm,
        converged: residual_norm <= threshold,
    })
}

/// `∂L(θ)/∂w` through the implicit function theorem, one entry per training
/// instance.
pub fn implicit_grad_w(
    theta: &ModelParams,
    w: &InstanceWeights,
    train: &Dataset,
    stats: &ValidationStats,
    hp: &HyperParams,
) -> Result<Vec<f64>> {
    if stats.dim() != train.n_features() {
        return Err(Error::DimensionMismatch {
            expected: train.n_features(),
            found: stats.dim(),
        });
    }
    let outer = surrogate_grad(theta, stats)?;
    let damping = hp.damping;
    let solution = cg_solve(
        |v| {
            let mut hv = weighted_hvp(theta, w, train, v)?;
            axpy(damping, v, &mut hv);
            Ok(hv)
        },
        &outer,
        hp.cg_tol,
        hp.cg_max_iter,
    )?;
    if !solution.converged {
        return Err(Error::NotConverged {
            iterations: solution.iterations,
            residual: solution.residual_norm,
        });
    }
    let mut grad = per_instance_grad_matrix(theta, train)?.transpose_mul(&solution.x)?;
    grad.iter_mut().for_each(|g| *g = -*g);
    Ok(grad)
}

/// Euclidean projection onto the box `[0, 1]ⁿ`.
pub fn project_weights(w: Vec<f64>) -> Result<InstanceWeights> {
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("weight {i}")));
    }
    InstanceWeights::new(w.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

fn theta_step(
    theta: &ModelParams,
    w: &InstanceWeights,
    train: &Dataset,
    lambda: f64,
) -> Result<ModelParams> {
    let grad = training_grad(theta, w, train)?;
    let mut next = theta.as_slice().to_vec();
    axpy(-lambda, &grad, &mut next);
    ModelParams::new(next)
}

/// One θ step with the current weights, then one projected weight step with
/// the implicit gradient at the new θ.
pub fn alternating_step(
    theta: &ModelParams,
    w: &InstanceWeights,
    train: &Dataset,
    stats: &ValidationStats,
    hp: &HyperParams,
) -> Result<(ModelParams, InstanceWeights)> {
    let next_theta = theta_step(theta, w, train, hp.lambda_theta)?;
    if hp.lambda_w == 0.0 {
        return Ok((next_theta, w.clone()));
    }
    let grad = implicit_grad_w(&next_theta, w, train, stats, hp)?;
    let mut next_w = w.as_slice().to_vec();
    axpy(-hp.lambda_w, &grad, &mut next_w);
    Ok((next_theta, project_weights(next_w)?))
}

fn check_finite(epoch: usize, metric: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged { epoch, metric })
    }
}

fn as_divergence(epoch: usize, err: Error) -> Error {
    match err {
        Error::NonFinite(_) => Error::Diverged {
            epoch,
            metric: "parameters",
        },
        other => other,
    }
}

/// Runs the alternating scheme from θ = 0 and `w = w_init` for `hp.epochs`
/// epochs.
///
/// With `hp.batch_size` set, each epoch draws a seeded minibatch; the θ step
/// and the implicit gradient are computed on that batch alone, and only the
/// weights of its members change.
pub fn train(train: &Dataset, validation: &Dataset, hp: &HyperParams) -> Result<TrainReport> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if validation.n_features() != train.n_features() {
        return Err(Error::DimensionMismatch {
            expected: train.n_features(),
            found: validation.n_features(),
        });
    }
    let stats = compute_stats(validation)?;
    let n = train.len();
    let mut theta = ModelParams::zeros(train.n_features());
    let mut weights = InstanceWeights::constant(n, hp.w_init)?;
    let mut rng = rng_from_seed(hp.seed);
    let mut records = Vec::with_capacity(hp.epochs);

    for epoch in 1..=hp.epochs {
        match hp.batch_size.filter(|&b| b < n) {
            None => {
                let (t, w) = alternating_step(&theta, &weights, train, &stats, hp)
                    .map_err(|e| as_divergence(epoch, e))?;
                theta = t;
                weights = w;
            }
            Some(batch_size) => {
                let mut batch = index::sample(&mut rng, n, batch_size).into_vec();
                batch.sort_unstable();
                let subset = train.select(&batch);
                let sub_w =
                    InstanceWeights::new(batch.iter().map(|&i| weights.as_slice()[i]).collect())?;
                let (t, w) = alternating_step(&theta, &sub_w, &subset, &stats, hp)
                    .map_err(|e| as_divergence(epoch, e))?;
                let mut all = weights.into_inner();
                for (&i, wi) in batch.iter().zip(w.as_slice()) {
                    all[i] = *wi;
                }
                theta = t;
                weights = InstanceWeights::new(all)?;
            }
        }

        let train_loss = check_finite(
            epoch,
            "train_loss",
            weighted_training_loss(&theta, &weights, train)?,
        )?;
        let val_surrogate = check_finite(epoch, "val_surrogate", surrogate_loss(&theta, &stats)?)?;
        let val_auc = check_finite(
            epoch,
            "val_auc",
            exact_auc(&scores(&theta, validation)?, validation.labels())?,
        )?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_surrogate,
            val_auc,
        });
    }

    Ok(TrainReport {
        epochs: records,
        final_theta: theta,
        final_weights: weights,
    })
}

/// Unweighted empirical risk minimization: `hp.epochs` gradient steps of size
/// `hp.lambda_theta` with every weight fixed at 1.
pub fn train_baseline_erm(train: &Dataset, hp: &HyperParams) -> Result<ModelParams> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ones = InstanceWeights::constant(train.len(), 1.0)?;
    let mut theta = ModelParams::zeros(train.n_features());
    for epoch in 1..=hp.epochs {
        theta = theta_step(&theta, &ones, train, hp.lambda_theta)
            .map_err(|e| as_divergence(epoch, e))?;
        check_finite(
            epoch,
            "train_loss",
            weighted_training_loss(&theta, &ones, train)?,
        )?;
    }
    Ok(theta)
}

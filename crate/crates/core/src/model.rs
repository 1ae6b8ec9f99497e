//! Weighted logistic inner model.
//!
//! Scores are linear, `f(θ, x) = θᵀx`, and every training instance carries a
//! weight `w_i ∈ [0, 1]` on its negative log-likelihood. The weighted training
//! gradient is
//!
//! ```text
//! g(w, θ) = (1/n) Σ_i w_i x_i (p_i − y_i),     p_i = σ(θᵀx_i)
//! ```
//!
//! and its Jacobians are `∂g/∂w = G` (column `j` is `(1/n) x_j (p_j − y_j)`)
//! and `∂g/∂θ = H = (1/n) Σ_i w_i p_i (1 − p_i) x_i x_iᵀ`. `H` is only ever
//! applied to vectors, never assembled.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};

/// Parameter vector θ of the linear scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams(Vec<f64>);

impl ModelParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("model parameter {i}")));
        }
        Ok(Self(theta))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Per-instance training weights, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceWeights(Vec<f64>);

impl InstanceWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "weight {i} is {} (outside [0, 1])",
                w[i]
            )));
        }
        Ok(Self(w))
    }

    /// `n` copies of `value`.
    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow or cancellation.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn check_dim(theta: &ModelParams, d: usize) -> Result<()> {
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            found: d,
        });
    }
    Ok(())
}

fn check_weights(w: &InstanceWeights, n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: w.len(),
        });
    }
    Ok(())
}

fn check_train(theta: &ModelParams, w: &InstanceWeights, train: &Dataset) -> Result<()> {
    check_dim(theta, train.n_features())?;
    check_weights(w, train.len())?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// `θᵀx`
pub fn score(theta: &ModelParams, x: &[f64]) -> Result<f64> {
    check_dim(theta, x.len())?;
    Ok(dot(theta.as_slice(), x))
}

/// Scores of every row of `data`.
pub fn scores(theta: &ModelParams, data: &Dataset) -> Result<Vec<f64>> {
    check_dim(theta, data.n_features())?;
    Ok(data.iter().map(|(x, _)| dot(theta.as_slice(), x)).collect())
}

/// `Pr{ŷ = 1 | x, θ}`, kept inside the open interval `(0, 1)` even when the
/// logistic function saturates in double precision.
pub fn predict_prob(theta: &ModelParams, x: &[f64]) -> Result<f64> {
    const UPPER: f64 = 1.0 - f64::EPSILON / 2.0;
    Ok(sigmoid(score(theta, x)?).clamp(f64::MIN_POSITIVE, UPPER))
}

/// Negative log-likelihood `−y θᵀx + log(1 + e^{θᵀx})`.
pub fn instance_loss(theta: &ModelParams, x: &[f64], y: u8) -> Result<f64> {
    Ok(nll(score(theta, x)?, y))
}

#[inline]
fn nll(s: f64, y: u8) -> f64 {
    // softplus(s) − s = softplus(−s); using it for y = 1 avoids cancellation.
    if y == 1 {
        softplus(-s)
    } else {
        softplus(s)
    }
}

/// `(1/n) Σ w_i ℓ_i(θ)`
pub fn weighted_training_loss(
    theta: &ModelParams,
    w: &InstanceWeights,
    train: &Dataset,
) -> Result<f64> {
    check_train(theta, w, train)?;
    let total: f64 = train
        .iter()
        .zip(w.as_slice())
        .map(|((x, y), wi)| wi * nll(dot(theta.as_slice(), x), y))
        .sum();
    Ok(total / train.len() as f64)
}

/// `g(w, θ) = (1/n) Σ w_i x_i (p_i − y_i)`, the gradient of
/// [`weighted_training_loss`] in θ.
pub fn training_grad(
    theta: &ModelParams,
    w: &InstanceWeights,
    train: &Dataset,
) -> Result<Vec<f64>> {
    check_train(theta, w, train)?;
    let mut grad = vec![0.0; train.n_features()];
    for ((x, y), wi) in train.iter().zip(w.as_slice()) {
        let residual = sigmoid(dot(theta.as_slice(), x)) - f64::from(y);
        axpy(wi * residual, x, &mut grad);
    }
    let inv_n = 1.0 / train.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    Ok(grad)
}

/// The `d × n` matrix `∂g/∂w`, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMatrix {
    d: usize,
    columns: Vec<f64>,
}

impl GradMatrix {
    pub fn n_rows(&self) -> usize {
        self.d
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len().checked_div(self.d).unwrap_or(0)
    }

    /// Column `j`: `(1/n) x_j (p_j − y_j)`.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.d..(j + 1) * self.d]
    }

    /// `G w`
    pub fn mul(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.n_cols() {
            return Err(Error::LengthMismatch {
                expected: self.n_cols(),
                found: w.len(),
            });
        }
        let mut out = vec![0.0; self.d];
        for (j, wj) in w.iter().enumerate() {
            axpy(*wj, self.column(j), &mut out);
        }
        Ok(out)
    }

    /// `Gᵀ v`
    pub fn transpose_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: v.len(),
            });
        }
        Ok((0..self.n_cols()).map(|j| dot(self.column(j), v)).collect())
    }
}

pub fn per_instance_grad_matrix(theta: &ModelParams, train: &Dataset) -> Result<GradMatrix> {
    check_dim(theta, train.n_features())?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let inv_n = 1.0 / train.len() as f64;
    let mut columns = Vec::with_capacity(train.features().len());
    for (x, y) in train.iter() {
        let coef = inv_n * (sigmoid(dot(theta.as_slice(), x)) - f64::from(y));
        columns.extend(x.iter().map(|xi| coef * xi));
    }
    Ok(GradMatrix {
        d: train.n_features(),
        columns,
    })
}

/// `H v` with `H = (1/n) Σ w_i p_i (1 − p_i) x_i x_iᵀ`, one pass over the
/// instances.
pub fn weighted_hvp(
    theta: &ModelParams,
    w: &InstanceWeights,
    train: &Dataset,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_train(theta, w, train)?;
    check_dim(theta, v.len())?;
    let mut out = vec![0.0; v.len()];
    for ((x, _), wi) in train.iter().zip(w.as_slice()) {
        if *wi == 0.0 {
            continue;
        }
        let p = sigmoid(dot(theta.as_slice(), x));
        axpy(wi * p * (1.0 - p) * dot(x, v), x, &mut out);
    }
    let inv_n = 1.0 / train.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv_n);
    Ok(out)
}

/// Writes θ as `index,value` rows.
pub fn write_theta_csv(path: impl AsRef<Path>, theta: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(out, "index,value").map_err(io_err)?;
    for (i, t) in theta.as_slice().iter().enumerate() {
        writeln!(out, "{i},{t:?}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_theta_csv(path: impl AsRef<Path>) -> Result<ModelParams> {
    let rows = crate::cli::read_index_value_csv(path.as_ref(), "value")?;
    for (expected, (index, _)) in rows.iter().enumerate() {
        if *index != expected {
            return Err(Error::invalid(format!(
                "{}: coefficient index {index} out of order (expected {expected})",
                path.as_ref().display()
            )));
        }
    }
    ModelParams::new(rows.into_iter().map(|(_, v)| v).collect())
}

//! Validation objective: the exact (Mann–Whitney) AUC and the pairwise
//! squared surrogate `φ(t) = (1 − t)²` averaged over all positive/negative
//! pairs.
//!
//! For a linear scorer the surrogate collapses to the quadratic
//!
//! ```text
//! L(θ) = 1 − 2 θᵀμ + θᵀΣθ
//! μ = mean over pairs of (x⁺ − x⁻)
//! Σ = mean over pairs of (x⁺ − x⁻)(x⁺ − x⁻)ᵀ
//! ```
//!
//! so the validation set only needs to be visited once.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::ModelParams;

/// First and second moments of positive-minus-negative feature differences.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationStats {
    /// μ, length d.
    pub mu: Vec<f64>,
    /// Σ, row-major d × d, exactly symmetric.
    pub sigma: Vec<f64>,
    pub m_plus: usize,
    pub m_minus: usize,
}

impl ValidationStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Entry `(r, c)` of Σ.
    pub fn sigma_at(&self, r: usize, c: usize) -> f64 {
        self.sigma[r * self.dim() + c]
    }

    /// `Σ v`
    pub fn sigma_mul(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|r| dot(&self.sigma[r * d..(r + 1) * d], v))
            .collect()
    }

    fn check(&self, theta: &ModelParams) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        Ok(())
    }
}

/// Builds μ and Σ from class means and per-class second moments:
/// `Σ = E⁺[aaᵀ] + E⁻[bbᵀ] − ā b̄ᵀ − b̄ āᵀ`, which equals the double sum over
/// all `m⁺ m⁻` pairs.
pub fn compute_stats(validation: &Dataset) -> Result<ValidationStats> {
    let (m_plus, m_minus) = validation.class_counts();
    if m_plus == 0 {
        return Err(Error::MissingClass("positive"));
    }
    if m_minus == 0 {
        return Err(Error::MissingClass("negative"));
    }
    let d = validation.n_features();
    let mut mean_pos = vec![0.0; d];
    let mut mean_neg = vec![0.0; d];
    // Upper triangles of the per-class second moments.
    let mut second_pos = vec![0.0; d * d];
    let mut second_neg = vec![0.0; d * d];
    for (x, y) in validation.iter() {
        let (mean, second) = if y == 1 {
            (&mut mean_pos, &mut second_pos)
        } else {
            (&mut mean_neg, &mut second_neg)
        };
        for r in 0..d {
            mean[r] += x[r];
            for c in r..d {
                second[r * d + c] += x[r] * x[c];
            }
        }
    }
    let (mp, mn) = (m_plus as f64, m_minus as f64);
    mean_pos.iter_mut().for_each(|v| *v /= mp);
    mean_neg.iter_mut().for_each(|v| *v /= mn);

    let mu: Vec<f64> = mean_pos.iter().zip(&mean_neg).map(|(a, b)| a - b).collect();
    let mut sigma = vec![0.0; d * d];
    for r in 0..d {
        for c in r..d {
            let v = second_pos[r * d + c] / mp + second_neg[r * d + c] / mn
                - mean_pos[r] * mean_neg[c]
                - mean_neg[r] * mean_pos[c];
            sigma[r * d + c] = v;
            sigma[c * d + r] = v;
        }
    }
    Ok(ValidationStats {
        mu,
        sigma,
        m_plus,
        m_minus,
    })
}

/// `1 − 2θᵀμ + θᵀΣθ`
pub fn surrogate_loss(theta: &ModelParams, stats: &ValidationStats) -> Result<f64> {
    stats.check(theta)?;
    let t = theta.as_slice();
    Ok(1.0 - 2.0 * dot(t, &stats.mu) + dot(t, &stats.sigma_mul(t)))
}

/// `−2μ + 2Σθ`
pub fn surrogate_grad(theta: &ModelParams, stats: &ValidationStats) -> Result<Vec<f64>> {
    stats.check(theta)?;
    Ok(stats
        .sigma_mul(theta.as_slice())
        .iter()
        .zip(&stats.mu)
        .map(|(s, m)| 2.0 * s - 2.0 * m)
        .collect())
}

/// Fraction of positive/negative pairs ranked correctly, ties counting one
/// half. Computed from average ranks in `O(m log m)`.
pub fn exact_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {i} is NaN")));
    }
    let m_plus = labels.iter().filter(|&&y| y == 1).count();
    let m_minus = labels.len() - m_plus;
    if m_plus == 0 {
        return Err(Error::MissingClass("positive"));
    }
    if m_minus == 0 {
        return Err(Error::MissingClass("negative"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum of positives keeps tie ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share the average (start + 1 + end) / 2.
        let twice_avg = (start + 1 + end) as u128;
        let pos_in_block = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == 1)
            .count() as u128;
        twice_rank_sum += twice_avg * pos_in_block;
        start = end;
    }
    let mp = m_plus as u128;
    let twice_u = twice_rank_sum - mp * (mp + 1);
    Ok(twice_u as f64 / (2.0 * m_plus as f64 * m_minus as f64))
}

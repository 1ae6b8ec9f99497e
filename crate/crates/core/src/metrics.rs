//! Thresholded classification metrics and prior-shift probability calibration.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassificationCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl ClassificationCounts {
    pub fn from_predictions(predicted: &[u8], truth: &[u8]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        let mut counts = Self::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p == 1, t == 1) {
                (true, true) => counts.true_positive += 1,
                (true, false) => counts.false_positive += 1,
                (false, false) => counts.true_negative += 1,
                (false, true) => counts.false_negative += 1,
            }
        }
        Ok(counts)
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positive + self.true_negative) as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecallF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// 1 where `score > tau`, else 0.
pub fn threshold_scores(scores: &[f64], tau: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > tau)).collect()
}

/// Precision `TP / (TP + FP)` (0 when nothing is predicted positive),
/// recall `TP / (TP + FN)`, and their harmonic mean (0 when both are 0).
pub fn precision_recall_f1(predicted: &[u8], truth: &[u8]) -> Result<PrecisionRecallF1> {
    let c = ClassificationCounts::from_predictions(predicted, truth)?;
    let actual_pos = c.true_positive + c.false_negative;
    if actual_pos == 0 {
        return Err(Error::MissingClass("positive"));
    }
    let predicted_pos = c.true_positive + c.false_positive;
    let precision = if predicted_pos == 0 {
        0.0
    } else {
        c.true_positive as f64 / predicted_pos as f64
    };
    let recall = c.true_positive as f64 / actual_pos as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PrecisionRecallF1 {
        precision,
        recall,
        f1,
    })
}

/// Corrects a probability estimated under a training set whose positives were
/// sampled at rate `beta`: `p = p_s β / (p_s β − p_s + 1)`.
pub fn calibrate_probability(p_s: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_s) {
        return Err(Error::invalid(format!("probability {p_s} outside [0, 1]")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!(
            "sampling ratio {beta} outside (0, 1]"
        )));
    }
    if beta == 1.0 {
        return Ok(p_s);
    }
    Ok(p_s * beta / (p_s * beta + (1.0 - p_s)))
}

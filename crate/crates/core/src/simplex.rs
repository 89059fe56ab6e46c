//! Probability vectors, logits, and two-class soft labels.
//!
//! All probability mass in this crate lives in `f64`. A [`ProbVector`] is
//! validated on construction: entries in [0, 1] and total mass within
//! `SIMPLEX_TOL` of 1. [`normalize`](ProbVector::normalized) repairs small
//! drift (at most `NORMALIZE_MAX_DRIFT`) and rejects anything larger, so a
//! genuinely malformed row can never be laundered into a valid vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` for an already-valid probability vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Largest `|sum - 1|` that [`ProbVector::normalized`] will repair.
pub const NORMALIZE_MAX_DRIFT: f64 = 1e-6;

/// Probabilities are clamped to `[LOG_CLAMP, 1]` inside every logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates `values` as-is: every entry in [0, 1] (within `SIMPLEX_TOL`
    /// below 0 or above 1 is still rejected) and mass within `SIMPLEX_TOL`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("probability vector must be nonempty"));
        }
        let mut sum = 0.0;
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "probability entry {k} is {v}, outside [0, 1]"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "probability mass sums to {sum}, off by more than {SIMPLEX_TOL}"
            )));
        }
        Ok(ProbVector(values))
    }

    /// Divides through by the total mass when the drift `|sum - 1|` is at most
    /// `NORMALIZE_MAX_DRIFT`; larger drift is an error, as is any entry
    /// outside [0, 1] by more than the drift budget. Vectors that already
    /// satisfy the strict checks pass through unchanged, so repair is
    /// idempotent and reading a written file reproduces values exactly.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("probability vector must be nonempty"));
        }
        let mut sum = 0.0;
        let mut in_range = true;
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < -NORMALIZE_MAX_DRIFT || v > 1.0 + NORMALIZE_MAX_DRIFT {
                return Err(Error::invalid(format!(
                    "probability entry {k} is {v}, outside [0, 1]"
                )));
            }
            in_range &= (0.0..=1.0).contains(&v);
            sum += v;
        }
        if (sum - 1.0).abs() > NORMALIZE_MAX_DRIFT {
            return Err(Error::invalid(format!(
                "probability mass sums to {sum}; drift above {NORMALIZE_MAX_DRIFT} is not repaired"
            )));
        }
        if in_range && (sum - 1.0).abs() <= SIMPLEX_TOL {
            return Ok(ProbVector(values));
        }
        let repaired = values
            .into_iter()
            .map(|v| (v / sum).clamp(0.0, 1.0))
            .collect();
        Ok(ProbVector(repaired))
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

    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = k;
            }
        }
        best
    }

    /// The largest entry.
    pub fn max_prob(&self) -> f64 {
        self.0[self.argmax()]
    }

    /// Shannon entropy in nats, with the usual `0 ln 0 = 0` convention.
    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * ln_clamped(p))
            .sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `ln` of a probability clamped to `[LOG_CLAMP, 1]`.
pub fn ln_clamped(p: f64) -> f64 {
    p.clamp(LOG_CLAMP, 1.0).ln()
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A vector of raw scores, finite but otherwise unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("logit vector must be nonempty"));
        }
        if let Some((k, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("logit entry {k} is {v}, not finite")));
        }
        Ok(LogitVector(values))
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
}

/// Temperature-scaled softmax, computed as `softmax(z / T)` with the usual
/// max-subtraction so inputs of any magnitude stay finite.
pub fn softmax(logits: &LogitVector, temperature: f64) -> Result<ProbVector> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    let scaled: Vec<f64> = logits.as_slice().iter().map(|z| z / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs = exps.into_iter().map(|e| e / sum).collect();
    ProbVector::new(probs)
}

/// A two-class soft label: mass `lambda` on `class_i`, `1 - lambda` on
/// `class_j`, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    pub class_i: usize,
    pub class_j: usize,
    pub lambda: f64,
}

impl SoftLabel {
    pub fn new(class_i: usize, class_j: usize, lambda: f64) -> Result<Self> {
        if class_i == class_j {
            return Err(Error::invalid(format!(
                "soft label classes must differ, both are {class_i}"
            )));
        }
        if !(lambda.is_finite() && (0.0..=1.0).contains(&lambda)) {
            return Err(Error::invalid(format!(
                "soft label lambda is {lambda}, outside [0, 1]"
            )));
        }
        Ok(SoftLabel {
            class_i,
            class_j,
            lambda,
        })
    }

    /// Expand to a dense vector over `k_total` classes.
    pub fn expand(&self, k_total: usize) -> Result<ProbVector> {
        if self.class_i >= k_total || self.class_j >= k_total {
            return Err(Error::invalid(format!(
                "soft label classes ({}, {}) do not fit in {k_total} classes",
                self.class_i, self.class_j
            )));
        }
        let mut dense = vec![0.0; k_total];
        dense[self.class_i] = self.lambda;
        dense[self.class_j] = 1.0 - self.lambda;
        ProbVector::new(dense)
    }
}

/// Dense one-hot vector for `class` over `k_total` classes.
pub fn one_hot(class: usize, k_total: usize) -> Result<ProbVector> {
    if class >= k_total {
        return Err(Error::invalid(format!(
            "class {class} does not fit in {k_total} classes"
        )));
    }
    let mut dense = vec![0.0; k_total];
    dense[class] = 1.0;
    ProbVector::new(dense)
}

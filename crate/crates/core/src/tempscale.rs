//! Post-hoc temperature scaling.
//!
//! A single scalar `T` rescales validation logits to `z / T`; the best `T`
//! is found by exhaustive grid search, which is cheap at these scales and
//! immune to the non-differentiability of binned objectives like ECE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ece, nll, PredictionSet, DEFAULT_BINS};
use crate::simplex::{softmax, LogitVector, ProbVector};

/// What the grid search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Nll,
    Ece,
}

/// Inclusive search grid `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: 0.5,
            hi: 5.0,
            step: 0.01,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite()) {
            return Err(Error::invalid("grid bounds and step must be finite"));
        }
        if self.lo <= 0.0 || self.hi < self.lo || self.step <= 0.0 {
            return Err(Error::invalid(format!(
                "grid must satisfy 0 < lo <= hi and step > 0, got {}:{}:{}",
                self.lo, self.hi, self.step
            )));
        }
        Ok(())
    }

    /// Grid points, inclusive of `hi` up to half a step of rounding slack.
    pub fn points(&self) -> Vec<f64> {
        let mut points = Vec::new();
        let mut i = 0u64;
        loop {
            let t = self.lo + self.step * i as f64;
            if t > self.hi + self.step * 0.5 {
                break;
            }
            points.push(t.min(self.hi));
            i += 1;
        }
        points
    }
}

/// Result of fitting a temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub objective: Objective,
    pub objective_value: f64,
    pub objective_at_unit: f64,
    pub n_bins: usize,
    pub grid: GridSpec,
}

fn evaluate(
    logits: &[LogitVector],
    labels: &[usize],
    t: f64,
    objective: Objective,
    n_bins: usize,
) -> Result<f64> {
    let probs = apply_temperature(logits, t)?;
    let set = PredictionSet::new(probs, labels.to_vec())?;
    match objective {
        Objective::Nll => Ok(nll(&set)),
        Objective::Ece => ece(&set, n_bins),
    }
}

/// Scale every logit row by `1 / temperature` and softmax.
pub fn apply_temperature(logits: &[LogitVector], temperature: f64) -> Result<Vec<ProbVector>> {
    logits.iter().map(|z| softmax(z, temperature)).collect()
}

/// Grid-search the temperature that minimizes `objective` on the validation
/// logits. Ties are broken toward the temperature closest to 1.0, then
/// toward the smaller temperature.
pub fn fit_temperature(
    logits: &[LogitVector],
    labels: &[usize],
    objective: Objective,
    grid: GridSpec,
    n_bins: usize,
) -> Result<TemperatureFit> {
    grid.validate()?;
    if logits.is_empty() {
        return Err(Error::invalid("need at least one validation sample"));
    }
    if logits.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} logit rows but {} labels",
            logits.len(),
            labels.len()
        )));
    }

    let mut best: Option<(f64, f64)> = None;
    for t in grid.points() {
        let value = evaluate(logits, labels, t, objective, n_bins)?;
        let replace = match best {
            None => true,
            Some((best_value, best_t)) => {
                if value < best_value {
                    true
                } else if value == best_value {
                    let d = (t - 1.0).abs();
                    let best_d = (best_t - 1.0).abs();
                    d < best_d || (d == best_d && t < best_t)
                } else {
                    false
                }
            }
        };
        if replace {
            best = Some((value, t));
        }
    }
    let (objective_value, temperature) =
        best.ok_or_else(|| Error::invalid("temperature grid is empty"))?;
    let objective_at_unit = evaluate(logits, labels, 1.0, objective, n_bins)?;
    Ok(TemperatureFit {
        temperature,
        objective,
        objective_value,
        objective_at_unit,
        n_bins,
        grid,
    })
}

/// Convenience wrapper with the default grid and bin count.
pub fn fit_temperature_default(
    logits: &[LogitVector],
    labels: &[usize],
    objective: Objective,
) -> Result<TemperatureFit> {
    fit_temperature(logits, labels, objective, GridSpec::default(), DEFAULT_BINS)
}

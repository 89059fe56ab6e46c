//! Calibration and discrimination metrics.
//!
//! ECE uses equal-width confidence bins; AECE uses equal-count (adaptive)
//! bins. Both weight each bin by its sample share, so overconfidence and
//! underconfidence components decompose exactly: `oe + ue = ece` on the
//! same binning. AUROC is computed with the rank-sum formula and midranks
//! for ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{ln_clamped, ProbVector};

/// Default number of confidence bins.
pub const DEFAULT_BINS: usize = 15;

/// Predictions paired with integer ground-truth labels.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    probs: Vec<ProbVector>,
    labels: Vec<usize>,
    k: usize,
}

impl PredictionSet {
    pub fn new(probs: Vec<ProbVector>, labels: Vec<usize>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("prediction set must be nonempty"));
        }
        if probs.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} probability rows but {} labels",
                probs.len(),
                labels.len()
            )));
        }
        let k = probs[0].len();
        for (row, p) in probs.iter().enumerate() {
            if p.len() != k {
                return Err(Error::Validation {
                    row,
                    message: format!("row has {} classes, expected {k}", p.len()),
                });
            }
        }
        for (row, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::Validation {
                    row,
                    message: format!("label {y} out of range for {k} classes"),
                });
            }
        }
        Ok(PredictionSet { probs, labels, k })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[ProbVector] {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Predicted class (argmax, ties to lowest index) and its confidence.
    pub fn predict(&self, row: usize) -> (usize, f64) {
        let class = self.probs[row].argmax();
        (class, self.probs[row].get(class))
    }

    fn confidences_and_hits(&self) -> Vec<(f64, bool)> {
        (0..self.len())
            .map(|row| {
                let (class, conf) = self.predict(row);
                (conf, class == self.labels[row])
            })
            .collect()
    }
}

/// One confidence bin of a reliability diagram.
///
/// `accuracy` and `mean_confidence` are 0 for an empty bin; they only carry
/// meaning when `count > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub accuracy: f64,
    pub mean_confidence: f64,
}

fn bin_index(confidence: f64, n_bins: usize) -> usize {
    ((confidence * n_bins as f64).floor() as usize).min(n_bins - 1)
}

fn check_bins(n_bins: usize) -> Result<()> {
    if n_bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    Ok(())
}

/// Equal-width reliability diagram over `[0, 1/M), ..., [(M-1)/M, 1]`;
/// confidence 1.0 lands in the top bin.
pub fn reliability_diagram(predictions: &PredictionSet, n_bins: usize) -> Result<Vec<BinStats>> {
    check_bins(n_bins)?;
    let mut counts = vec![0usize; n_bins];
    let mut conf_sums = vec![0.0; n_bins];
    let mut hit_sums = vec![0.0; n_bins];
    for (conf, hit) in predictions.confidences_and_hits() {
        let m = bin_index(conf, n_bins);
        counts[m] += 1;
        conf_sums[m] += conf;
        hit_sums[m] += if hit { 1.0 } else { 0.0 };
    }
    Ok((0..n_bins)
        .map(|m| {
            let count = counts[m];
            let denom = count.max(1) as f64;
            BinStats {
                lower: m as f64 / n_bins as f64,
                upper: (m + 1) as f64 / n_bins as f64,
                count,
                accuracy: hit_sums[m] / denom,
                mean_confidence: conf_sums[m] / denom,
            }
        })
        .collect())
}

fn gap_sum(bins: &[BinStats], n: usize, signed: Signed) -> f64 {
    bins.iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let w = b.count as f64 / n as f64;
            let gap = b.mean_confidence - b.accuracy;
            match signed {
                Signed::Abs => w * gap.abs(),
                Signed::Over => w * gap.max(0.0),
                Signed::Under => w * (-gap).max(0.0),
            }
        })
        .sum()
}

#[derive(Clone, Copy)]
enum Signed {
    Abs,
    Over,
    Under,
}

/// Expected calibration error: sample-weighted mean absolute gap between
/// per-bin accuracy and mean confidence, equal-width bins.
pub fn ece(predictions: &PredictionSet, n_bins: usize) -> Result<f64> {
    let bins = reliability_diagram(predictions, n_bins)?;
    Ok(gap_sum(&bins, predictions.len(), Signed::Abs))
}

/// Overconfidence error: only bins where confidence exceeds accuracy count.
pub fn oe(predictions: &PredictionSet, n_bins: usize) -> Result<f64> {
    let bins = reliability_diagram(predictions, n_bins)?;
    Ok(gap_sum(&bins, predictions.len(), Signed::Over))
}

/// Underconfidence error: only bins where accuracy exceeds confidence count.
pub fn ue(predictions: &PredictionSet, n_bins: usize) -> Result<f64> {
    let bins = reliability_diagram(predictions, n_bins)?;
    Ok(gap_sum(&bins, predictions.len(), Signed::Under))
}

/// Adaptive (equal-count) binning: samples sorted by confidence, ties kept
/// in input order, split into `n_bins` groups whose sizes differ by at most
/// one; the first `N mod M` groups take the extra sample.
pub fn adaptive_bins(predictions: &PredictionSet, n_bins: usize) -> Result<Vec<BinStats>> {
    check_bins(n_bins)?;
    let n = predictions.len();
    if n < n_bins {
        return Err(Error::invalid(format!(
            "need at least {n_bins} samples for {n_bins} adaptive bins, got {n}"
        )));
    }
    let mut samples = predictions.confidences_and_hits();
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("confidences are finite"));

    let base = n / n_bins;
    let extra = n % n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for m in 0..n_bins {
        let size = base + usize::from(m < extra);
        let group = &samples[start..start + size];
        let count = group.len();
        let conf_sum: f64 = group.iter().map(|s| s.0).sum();
        let hit_sum: f64 = group.iter().filter(|s| s.1).count() as f64;
        bins.push(BinStats {
            lower: group[0].0,
            upper: group[count - 1].0,
            count,
            accuracy: hit_sum / count as f64,
            mean_confidence: conf_sum / count as f64,
        });
        start += size;
    }
    Ok(bins)
}

/// Adaptive expected calibration error over equal-count bins.
pub fn aece(predictions: &PredictionSet, n_bins: usize) -> Result<f64> {
    let bins = adaptive_bins(predictions, n_bins)?;
    Ok(gap_sum(&bins, predictions.len(), Signed::Abs))
}

/// Mean negative log-likelihood of the true labels, with probabilities
/// clamped to `[1e-12, 1]` inside the logarithm.
pub fn nll(predictions: &PredictionSet) -> f64 {
    let total: f64 = predictions
        .labels()
        .iter()
        .zip(predictions.probs())
        .map(|(&y, p)| -ln_clamped(p.get(y)))
        .sum();
    total / predictions.len() as f64
}

/// Top-1 accuracy.
pub fn accuracy(predictions: &PredictionSet) -> f64 {
    let hits = predictions
        .confidences_and_hits()
        .iter()
        .filter(|s| s.1)
        .count();
    hits as f64 / predictions.len() as f64
}

/// Mean Shannon entropy of the predictive distributions.
pub fn mean_entropy(predictions: &PredictionSet) -> f64 {
    let total: f64 = predictions.probs().iter().map(|p| p.entropy()).sum();
    total / predictions.len() as f64
}

/// AUROC for separating out-of-distribution from in-distribution samples by
/// score, where higher scores should flag OOD. Rank-sum formula; tied pairs
/// contribute one half.
pub fn auroc_ood(in_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if in_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::invalid("both score sets must be nonempty"));
    }
    if let Some(&bad) = in_scores
        .iter()
        .chain(ood_scores)
        .find(|v| !v.is_finite())
    {
        return Err(Error::invalid(format!("scores must be finite, got {bad}")));
    }

    let mut pooled: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores are finite"));

    // Midranks over tie groups, then the Mann-Whitney statistic.
    let mut ood_rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &pooled[i..j] {
            if item.1 {
                ood_rank_sum += midrank;
            }
        }
        i = j;
    }
    let n_ood = ood_scores.len() as f64;
    let n_in = in_scores.len() as f64;
    let u = ood_rank_sum - n_ood * (n_ood + 1.0) / 2.0;
    Ok(u / (n_in * n_ood))
}

/// Everything the toolkit reports about one prediction set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub n_classes: usize,
    pub n_bins: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub aece: f64,
    pub oe: f64,
    pub ue: f64,
    pub nll: f64,
    pub mean_entropy: f64,
    pub bins: Vec<BinStats>,
}

impl MetricsReport {
    pub fn compute(predictions: &PredictionSet, n_bins: usize) -> Result<Self> {
        Ok(MetricsReport {
            n_samples: predictions.len(),
            n_classes: predictions.n_classes(),
            n_bins,
            accuracy: accuracy(predictions),
            ece: ece(predictions, n_bins)?,
            aece: aece(predictions, n_bins)?,
            oe: oe(predictions, n_bins)?,
            ue: ue(predictions, n_bins)?,
            nll: nll(predictions),
            mean_entropy: mean_entropy(predictions),
            bins: reliability_diagram(predictions, n_bins)?,
        })
    }
}

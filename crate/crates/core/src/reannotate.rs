//! Debiased soft-label reannotation from embeddings.
//!
//! A mixed sample inherits a nominal mixing coefficient from its generator,
//! but the generator's warp means that coefficient rarely matches what the
//! sample actually looks like. Projecting the sample's embedding onto the
//! segment between its two class prototypes gives a geometric estimate
//! `lambda_e`, and a logistic squash centered at 1/2 turns it into a
//! calibrated coefficient `lambda = sigmoid(s * (lambda_e - 1/2))`.
//!
//! When prototype norms are equal, this is exactly the confidence-ratio
//! form `sigmoid((1/tau) * (|Pi - Pj|^2 (lambda_e - 1/2) + (|Pi|^2 - |Pj|^2)/2))`
//! with `s = |Pi - Pj|^2 / tau`; the crate exposes both entry points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{sigmoid, SoftLabel};

/// Squared-distance threshold below which two prototypes are degenerate.
pub const DEGENERATE_DIST_SQ: f64 = 1e-12;

/// How class prototypes are aggregated from member embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrototypeMode {
    /// Mean of member embeddings (default; keeps scale comparable across
    /// classes of different sizes).
    Mean,
    /// Plain sum of member embeddings.
    Sum,
}

/// Labeled embedding collection with a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    vectors: Vec<Vec<f64>>,
    labels: Vec<usize>,
    dim: usize,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::invalid("embedding set must be nonempty"));
        }
        if vectors.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} embeddings but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        for (row, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Validation {
                    row,
                    message: format!("embedding has dimension {}, expected {dim}", v.len()),
                });
            }
            if let Some(&bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::Validation {
                    row,
                    message: format!("embedding entry is {bad}, not finite"),
                });
            }
        }
        Ok(EmbeddingSet {
            vectors,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copy of this set with every embedding scaled to unit length.
    /// Zero vectors are left unchanged.
    pub fn l2_normalized(&self) -> Self {
        let vectors = self
            .vectors
            .iter()
            .map(|v| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter().map(|x| x / norm).collect()
                } else {
                    v.clone()
                }
            })
            .collect();
        EmbeddingSet {
            vectors,
            labels: self.labels.clone(),
            dim: self.dim,
        }
    }
}

/// Per-class prototype vectors, indexed by class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub prototypes: Vec<Vec<f64>>,
    pub mode: PrototypeMode,
    pub dim: usize,
}

impl PrototypeSet {
    pub fn n_classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn get(&self, class: usize) -> Result<&[f64]> {
        self.prototypes
            .get(class)
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "class {class} out of range for {} prototypes",
                    self.prototypes.len()
                ))
            })
    }
}

/// Aggregate per-class prototypes. The class count is `max(label) + 1` and
/// every class below it must be present.
pub fn class_prototypes(embeddings: &EmbeddingSet, mode: PrototypeMode) -> Result<PrototypeSet> {
    let k = embeddings.labels().iter().max().unwrap() + 1;
    let dim = embeddings.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &y) in embeddings.vectors().iter().zip(embeddings.labels()) {
        counts[y] += 1;
        for (acc, x) in sums[y].iter_mut().zip(v) {
            *acc += x;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "class {missing} has no embeddings; classes 0..{k} must all be present"
        )));
    }
    let prototypes = sums
        .into_iter()
        .zip(&counts)
        .map(|(sum, &count)| match mode {
            PrototypeMode::Sum => sum,
            PrototypeMode::Mean => sum.into_iter().map(|x| x / count as f64).collect(),
        })
        .collect();
    Ok(PrototypeSet {
        prototypes,
        mode,
        dim,
    })
}

fn dim_check(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "{what}: dimensions {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Scalar projection of `e` onto the segment from `proto_j` to `proto_i`:
/// 0 at `proto_j`, 1 at `proto_i`. Unclamped, so values outside [0, 1]
/// indicate the embedding lies beyond a prototype.
pub fn lambda_e(e: &[f64], proto_i: &[f64], proto_j: &[f64]) -> Result<f64> {
    dim_check(e, proto_i, "lambda_e")?;
    dim_check(proto_i, proto_j, "lambda_e")?;
    let mut dot = 0.0;
    let mut dist_sq = 0.0;
    for ((&ek, &pi), &pj) in e.iter().zip(proto_i).zip(proto_j) {
        let axis = pi - pj;
        dot += (ek - pj) * axis;
        dist_sq += axis * axis;
    }
    if dist_sq <= DEGENERATE_DIST_SQ {
        return Err(Error::DegeneratePrototypes {
            class_i: usize::MAX,
            class_j: usize::MAX,
            dist_sq,
        });
    }
    Ok(dot / dist_sq)
}

/// Debias a geometric coefficient: `sigmoid(s * (lambda_e - 1/2))`.
pub fn debias_lambda(lambda_e: f64, scale_s: f64) -> Result<f64> {
    if !lambda_e.is_finite() {
        return Err(Error::invalid(format!("lambda_e is {lambda_e}, not finite")));
    }
    if !(scale_s.is_finite() && scale_s > 0.0) {
        return Err(Error::invalid(format!(
            "scale s must be positive and finite, got {scale_s}"
        )));
    }
    Ok(sigmoid(scale_s * (lambda_e - 0.5)))
}

/// Full confidence-ratio form of the debias map, parameterized by a
/// temperature `tau` instead of a premultiplied scale. Reduces to
/// [`debias_lambda`] with `s = |Pi - Pj|^2 / tau` when the prototype norms
/// are equal.
pub fn debias_lambda_full(
    lambda_e: f64,
    proto_i: &[f64],
    proto_j: &[f64],
    tau: f64,
) -> Result<f64> {
    dim_check(proto_i, proto_j, "debias_lambda_full")?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!(
            "tau must be positive and finite, got {tau}"
        )));
    }
    let mut dist_sq = 0.0;
    let mut norm_i_sq = 0.0;
    let mut norm_j_sq = 0.0;
    for (&pi, &pj) in proto_i.iter().zip(proto_j) {
        dist_sq += (pi - pj) * (pi - pj);
        norm_i_sq += pi * pi;
        norm_j_sq += pj * pj;
    }
    if dist_sq <= DEGENERATE_DIST_SQ {
        return Err(Error::DegeneratePrototypes {
            class_i: usize::MAX,
            class_j: usize::MAX,
            dist_sq,
        });
    }
    Ok(sigmoid(
        (dist_sq * (lambda_e - 0.5) + 0.5 * (norm_i_sq - norm_j_sq)) / tau,
    ))
}

/// One sample awaiting reannotation: its embedding and its class pair.
#[derive(Debug, Clone)]
pub struct MixedSample {
    pub embedding: Vec<f64>,
    pub class_i: usize,
    pub class_j: usize,
}

/// A reannotated sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reannotation {
    pub class_i: usize,
    pub class_j: usize,
    pub lambda_e: f64,
    pub lambda: f64,
    pub scale_s: f64,
}

impl Reannotation {
    pub fn soft_label(&self) -> Result<SoftLabel> {
        SoftLabel::new(self.class_i, self.class_j, self.lambda)
    }
}

/// Reannotate one sample against a prototype set.
pub fn reannotate(
    sample: &MixedSample,
    prototypes: &PrototypeSet,
    scale_s: f64,
) -> Result<Reannotation> {
    if sample.class_i == sample.class_j {
        return Err(Error::invalid(format!(
            "mixed sample classes must differ, both are {}",
            sample.class_i
        )));
    }
    let proto_i = prototypes.get(sample.class_i)?;
    let proto_j = prototypes.get(sample.class_j)?;
    let le = lambda_e(&sample.embedding, proto_i, proto_j).map_err(|e| match e {
        Error::DegeneratePrototypes { dist_sq, .. } => Error::DegeneratePrototypes {
            class_i: sample.class_i,
            class_j: sample.class_j,
            dist_sq,
        },
        other => other,
    })?;
    let lambda = debias_lambda(le, scale_s)?;
    Ok(Reannotation {
        class_i: sample.class_i,
        class_j: sample.class_j,
        lambda_e: le,
        lambda,
        scale_s,
    })
}

/// Reannotate a batch. Failures (for example a degenerate class pair) are
/// reported per item; one bad pair never poisons the rest of the batch.
pub fn reannotate_batch(
    samples: &[MixedSample],
    prototypes: &PrototypeSet,
    scale_s: f64,
) -> Vec<Result<Reannotation>> {
    samples
        .iter()
        .map(|s| reannotate(s, prototypes, scale_s))
        .collect()
}

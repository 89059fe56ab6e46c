//! Shared instance builders for the criterion benches.

use calmix_core::balance::{LossKind, MixPairProblem};
use calmix_core::metrics::PredictionSet;
use calmix_core::reannotate::{EmbeddingSet, MixedSample};
use calmix_core::streams::stream;
use calmix_core::{LogitVector, ProbVector};
use rand::Rng;

/// A pair problem whose proximity budget binds (delta = D/2).
pub fn binding_problem(loss: LossKind, k: usize) -> MixPairProblem {
    let (alpha1, alpha2) = (0.9, 0.6);
    let delta = (alpha1 - alpha2) * (alpha1 - alpha2);
    MixPairProblem::new(loss, alpha1, alpha2, delta, k).expect("valid instance")
}

/// A seeded prediction set with mildly miscalibrated rows.
pub fn synthetic_predictions(n: usize, k: usize, seed: u64) -> PredictionSet {
    let mut rng = stream(seed, "bench-predictions", 0);
    let mut probs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        probs.push(
            ProbVector::normalized(raw.into_iter().map(|v| v / total).collect())
                .expect("valid row"),
        );
        labels.push(rng.gen_range(0..k));
    }
    PredictionSet::new(probs, labels).expect("valid set")
}

/// Seeded logit rows for the temperature-scaling bench.
pub fn synthetic_logits(n: usize, k: usize, seed: u64) -> (Vec<LogitVector>, Vec<usize>) {
    let mut rng = stream(seed, "bench-logits", 0);
    let mut logits = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.gen_range(0..k);
        let row: Vec<f64> = (0..k)
            .map(|class| {
                let lift = if class == label { 2.5 } else { 0.0 };
                lift + rng.gen_range(-1.0..1.0)
            })
            .collect();
        logits.push(LogitVector::new(row).expect("finite logits"));
        labels.push(label);
    }
    (logits, labels)
}

/// A labeled embedding pool and mixed samples along the prototype chord.
pub fn reannotation_inputs(
    n_classes: usize,
    dim: usize,
    n_samples: usize,
    seed: u64,
) -> (EmbeddingSet, Vec<MixedSample>) {
    let mut rng = stream(seed, "bench-reannotate", 0);
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for class in 0..n_classes {
        for _ in 0..8 {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.05..0.05)).collect();
            v[class] += 1.0;
            vectors.push(v);
            labels.push(class);
        }
    }
    let embeddings = EmbeddingSet::new(vectors, labels).expect("valid pool");
    let samples = (0..n_samples)
        .map(|_| {
            let class_i = rng.gen_range(0..n_classes);
            let class_j = (class_i + rng.gen_range(1..n_classes)) % n_classes;
            let t: f64 = rng.gen_range(0.0..1.0);
            let mut embedding = vec![0.0; dim];
            embedding[class_i] += t;
            embedding[class_j] += 1.0 - t;
            MixedSample {
                embedding,
                class_i,
                class_j,
            }
        })
        .collect();
    (embeddings, samples)
}

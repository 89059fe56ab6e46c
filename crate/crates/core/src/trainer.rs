//! Linear softmax classifier trained on a one-hot pool plus a soft-label
//! pool, with per-epoch calibration tracking.
//!
//! The objective is `mean_ce(one-hot batch) + soft_ratio * mean_loss(soft
//! batch)`, where the soft-batch loss is pluggable (CE, focal, or L2 on
//! the probability vector). Gradients flow through the softmax by the
//! chain rule `dL/dz_k = p_k (g_k - sum_j p_j g_j)` with `g = dL/dp`, so
//! every supported loss shares one backward path.
//!
//! Training is deterministic: shuffles, the validation split, and nothing
//! else consume named substreams of the config seed.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::balance::LossKind;
use crate::balance::{loss_grad_p, loss_value_slices};
use crate::error::{Error, Result};
use crate::metrics::{ece, nll, oe, MetricsReport, PredictionSet, DEFAULT_BINS};
use crate::mixsim::{Benchmark, MixWorld};
use crate::reannotate::{
    class_prototypes, reannotate, EmbeddingSet, MixedSample, PrototypeMode,
};
use crate::simplex::{LogitVector, ProbVector, SoftLabel};
use crate::streams::stream;
use crate::tempscale::{fit_temperature, GridSpec, Objective, TemperatureFit};

/// A linear softmax classifier: `z = W x + b` with `W` of shape `K x d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(n_classes: usize, dim: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::invalid("model needs at least 2 classes"));
        }
        if dim == 0 {
            return Err(Error::invalid("model needs a positive input dimension"));
        }
        Ok(LinearModel {
            weights: vec![vec![0.0; dim]; n_classes],
            bias: vec![0.0; n_classes],
        })
    }

    pub fn from_parts(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 || weights.len() != bias.len() {
            return Err(Error::invalid(
                "weights and bias must agree on at least 2 classes",
            ));
        }
        let dim = weights[0].len();
        if dim == 0 || weights.iter().any(|row| row.len() != dim) {
            return Err(Error::invalid("weight rows must share a positive dimension"));
        }
        let finite = weights.iter().flatten().chain(bias.iter());
        for &v in finite {
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite parameter {v}")));
            }
        }
        Ok(LinearModel { weights, bias })
    }

    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn raw_logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| b + row.iter().zip(x).map(|(&w, &xv)| w * xv).sum::<f64>())
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Result<LogitVector> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        LogitVector::new(self.raw_logits(x))
    }

    pub fn probs(&self, x: &[f64]) -> Result<ProbVector> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let mut z = self.raw_logits(x);
        softmax_in_place(&mut z);
        ProbVector::new(z)
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// A sample carrying a full soft target distribution.
#[derive(Debug, Clone)]
pub struct SoftSample {
    pub x: Vec<f64>,
    pub target: ProbVector,
}

/// Training data: a labeled one-hot pool and a soft-target pool over the
/// same feature space.
#[derive(Debug, Clone)]
pub struct Dataset {
    dim: usize,
    n_classes: usize,
    onehot: Vec<(Vec<f64>, usize)>,
    soft: Vec<SoftSample>,
}

impl Dataset {
    pub fn new(dim: usize, n_classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        if n_classes < 2 {
            return Err(Error::invalid("dataset needs at least 2 classes"));
        }
        Ok(Dataset {
            dim,
            n_classes,
            onehot: Vec::new(),
            soft: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_onehot(&self) -> usize {
        self.onehot.len()
    }

    pub fn n_soft(&self) -> usize {
        self.soft.len()
    }

    pub fn push_onehot(&mut self, x: Vec<f64>, label: usize) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "one-hot sample has dimension {}, dataset expects {}",
                x.len(),
                self.dim
            )));
        }
        if label >= self.n_classes {
            return Err(Error::invalid(format!(
                "label {label} out of range for {} classes",
                self.n_classes
            )));
        }
        self.onehot.push((x, label));
        Ok(())
    }

    pub fn push_soft(&mut self, x: Vec<f64>, target: ProbVector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "soft sample has dimension {}, dataset expects {}",
                x.len(),
                self.dim
            )));
        }
        if target.len() != self.n_classes {
            return Err(Error::invalid(format!(
                "soft target has {} classes, dataset expects {}",
                target.len(),
                self.n_classes
            )));
        }
        self.soft.push(SoftSample { x, target });
        Ok(())
    }

    /// Assemble a dataset from a generated benchmark: the one-hot pool is
    /// copied as-is, and the mixed sets become the soft pool labeled
    /// according to `targets`.
    pub fn from_benchmark(
        world: &MixWorld,
        benchmark: &Benchmark,
        targets: MixTargets,
    ) -> Result<Self> {
        let k = world.n_classes();
        let mut data = Dataset::new(world.dim(), k)?;
        for sample in &benchmark.onehot {
            data.push_onehot(sample.x.clone(), sample.label)?;
        }
        match targets {
            MixTargets::Ignore => {}
            MixTargets::Conditioning | MixTargets::Oracle => {
                for set in &benchmark.sets {
                    for sample in &set.samples {
                        let lambda = match targets {
                            MixTargets::Conditioning => sample.lambda_hat,
                            _ => sample.lambda_true,
                        };
                        let soft =
                            SoftLabel::new(set.class_i, set.class_j, lambda)?.expand(k)?;
                        data.push_soft(sample.x.clone(), soft)?;
                    }
                }
            }
            MixTargets::Debiased => {
                let vectors: Vec<Vec<f64>> =
                    benchmark.onehot.iter().map(|s| s.x.clone()).collect();
                let labels: Vec<usize> = benchmark.onehot.iter().map(|s| s.label).collect();
                let embeddings = EmbeddingSet::new(vectors, labels)?;
                let prototypes = class_prototypes(&embeddings, PrototypeMode::Mean)?;
                let sigma_sq = world.sigma() * world.sigma();
                for set in &benchmark.sets {
                    let pi = prototypes.get(set.class_i)?;
                    let pj = prototypes.get(set.class_j)?;
                    let scale_s = dist_sq(pi, pj) / sigma_sq;
                    for sample in &set.samples {
                        let note = reannotate(
                            &MixedSample {
                                embedding: sample.x.clone(),
                                class_i: set.class_i,
                                class_j: set.class_j,
                            },
                            &prototypes,
                            scale_s,
                        )?;
                        data.push_soft(sample.x.clone(), note.soft_label()?.expand(k)?)?;
                    }
                }
            }
        }
        Ok(data)
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// How to label the mixed pool when building a dataset from a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixTargets {
    /// Use the generator's conditioning coefficient as the label.
    Conditioning,
    /// Use the world's exact posterior (an upper bound no estimator beats).
    Oracle,
    /// Reannotate from one-hot-pool prototypes with the distance-scaled
    /// logistic debias.
    Debiased,
    /// Drop the mixed pool; one-hot training only.
    Ignore,
}

/// Parameter-shaped accumulator for gradients and momentum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Gradients {
    fn zeros(n_classes: usize, dim: usize) -> Self {
        Gradients {
            weights: vec![vec![0.0; dim]; n_classes],
            bias: vec![0.0; n_classes],
        }
    }

    fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (dst, src) in self.weights.iter_mut().zip(&other.weights) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        for (d, &s) in self.bias.iter_mut().zip(&other.bias) {
            *d += scale * s;
        }
    }
}

/// Backward pass for one sample: softmax forward, loss gradient in
/// probability space, chain rule into logit space, accumulate. Returns the
/// sample's loss value.
fn accumulate_sample(
    model: &LinearModel,
    x: &[f64],
    target: &[f64],
    loss: LossKind,
    grad: &mut Gradients,
) -> f64 {
    let mut p = model.raw_logits(x);
    softmax_in_place(&mut p);
    let value = loss_value_slices(loss, &p, target);
    let g = loss_grad_p(loss, &p, target);
    let inner: f64 = p.iter().zip(&g).map(|(&pk, &gk)| pk * gk).sum();
    for k in 0..p.len() {
        let dz = p[k] * (g[k] - inner);
        grad.bias[k] += dz;
        for (w, &xv) in grad.weights[k].iter_mut().zip(x) {
            *w += dz * xv;
        }
    }
    value
}

fn batch_objective_and_grad(
    model: &LinearModel,
    data: &Dataset,
    onehot_idx: &[usize],
    soft_idx: &[usize],
    soft_loss: LossKind,
    soft_ratio: f64,
) -> (f64, Gradients) {
    let (k, d) = (model.n_classes(), model.dim());
    let mut grad = Gradients::zeros(k, d);
    let mut total = 0.0;
    if !onehot_idx.is_empty() {
        let mut part = Gradients::zeros(k, d);
        let mut sum = 0.0;
        let mut target = vec![0.0; k];
        for &i in onehot_idx {
            let (x, label) = &data.onehot[i];
            target[*label] = 1.0;
            sum += accumulate_sample(model, x, &target, LossKind::Ce, &mut part);
            target[*label] = 0.0;
        }
        let scale = 1.0 / onehot_idx.len() as f64;
        total += sum * scale;
        grad.add_scaled(&part, scale);
    }
    if soft_ratio > 0.0 && !soft_idx.is_empty() {
        let mut part = Gradients::zeros(k, d);
        let mut sum = 0.0;
        for &i in soft_idx {
            let sample = &data.soft[i];
            sum += accumulate_sample(
                model,
                &sample.x,
                sample.target.as_slice(),
                soft_loss,
                &mut part,
            );
        }
        let scale = 1.0 / soft_idx.len() as f64;
        total += soft_ratio * sum * scale;
        grad.add_scaled(&part, soft_ratio * scale);
    }
    (total, grad)
}

/// Full-dataset objective and analytic gradient (data term only; weight
/// decay is part of the update rule, not of this objective).
pub fn objective_and_grad(
    model: &LinearModel,
    data: &Dataset,
    soft_loss: LossKind,
    soft_ratio: f64,
) -> Result<(f64, Gradients)> {
    soft_loss.validate()?;
    if model.dim() != data.dim() || model.n_classes() != data.n_classes() {
        return Err(Error::invalid("model and dataset shapes disagree"));
    }
    if !(soft_ratio.is_finite() && soft_ratio >= 0.0) {
        return Err(Error::invalid(format!(
            "soft ratio must be non-negative and finite, got {soft_ratio}"
        )));
    }
    let onehot_idx: Vec<usize> = (0..data.onehot.len()).collect();
    let soft_idx: Vec<usize> = (0..data.soft.len()).collect();
    Ok(batch_objective_and_grad(
        model,
        data,
        &onehot_idx,
        &soft_idx,
        soft_loss,
        soft_ratio,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Loss applied to the soft pool; the one-hot pool always trains with CE.
    pub soft_loss: LossKind,
    /// Weight of the soft term relative to the one-hot term.
    pub soft_ratio: f64,
    /// `(epoch, multiplier)` entries; when an epoch starts, every entry
    /// matching it multiplies the current learning rate.
    pub lr_schedule: Vec<(usize, f64)>,
    /// Fraction of each one-hot class held out for validation.
    pub val_fraction: f64,
    pub n_bins: usize,
    pub ts_objective: Objective,
    pub ts_grid: GridSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            soft_loss: LossKind::L2,
            soft_ratio: 2.0,
            lr_schedule: Vec::new(),
            val_fraction: 0.1,
            n_bins: DEFAULT_BINS,
            ts_objective: Objective::Nll,
            ts_grid: GridSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::invalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!(
                "weight decay must be non-negative and finite, got {}",
                self.weight_decay
            )));
        }
        self.soft_loss.validate()?;
        if !(self.soft_ratio.is_finite() && self.soft_ratio >= 0.0) {
            return Err(Error::invalid(format!(
                "soft ratio must be non-negative and finite, got {}",
                self.soft_ratio
            )));
        }
        for &(epoch, mult) in &self.lr_schedule {
            if epoch >= self.epochs {
                return Err(Error::invalid(format!(
                    "schedule epoch {epoch} is beyond the last epoch"
                )));
            }
            if !(mult.is_finite() && mult > 0.0) {
                return Err(Error::invalid(format!(
                    "schedule multiplier must be positive and finite, got {mult}"
                )));
            }
        }
        if !(self.val_fraction.is_finite() && self.val_fraction > 0.0 && self.val_fraction < 1.0)
        {
            return Err(Error::invalid(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.n_bins == 0 {
            return Err(Error::invalid("bin count must be at least 1"));
        }
        self.ts_grid.validate()
    }
}

/// Per-epoch trace of the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nll: f64,
    pub val_ece: f64,
    pub val_oe: f64,
}

/// Everything a finished run reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub n_onehot_train: usize,
    pub n_val: usize,
    pub n_soft: usize,
    pub epochs: Vec<EpochRecord>,
    pub metrics: MetricsReport,
    pub temperature: TemperatureFit,
    pub model: LinearModel,
}

/// Stratified holdout: per class, a seeded shuffle sends roughly
/// `fraction` of the indices (at least one, never all) to validation.
pub(crate) fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        by_class[label].push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} one-hot samples; need at least 2 to hold out validation",
                idx.len()
            )));
        }
        let mut rng = stream(seed, "val-split", class as u64);
        idx.shuffle(&mut rng);
        let want = (fraction * idx.len() as f64).round() as usize;
        let n_val = want.clamp(1, idx.len() - 1);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn params_finite(model: &LinearModel) -> bool {
    model.weights.iter().flatten().all(|v| v.is_finite())
        && model.bias.iter().all(|v| v.is_finite())
}

fn val_prediction_set(
    model: &LinearModel,
    data: &Dataset,
    val_idx: &[usize],
) -> Result<PredictionSet> {
    let mut probs = Vec::with_capacity(val_idx.len());
    let mut labels = Vec::with_capacity(val_idx.len());
    for &i in val_idx {
        let (x, label) = &data.onehot[i];
        probs.push(model.probs(x)?);
        labels.push(*label);
    }
    PredictionSet::new(probs, labels)
}

/// Train a linear model on `data` under `config`. The run is bitwise
/// deterministic for a fixed dataset and config.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if data.onehot.is_empty() {
        return Err(Error::invalid("training needs a non-empty one-hot pool"));
    }
    let labels: Vec<usize> = data.onehot.iter().map(|(_, label)| label).copied().collect();
    let (train_idx, val_idx) =
        stratified_split(&labels, data.n_classes, config.val_fraction, config.seed)?;

    let mut model = LinearModel::zeros(data.n_classes, data.dim)?;
    let mut velocity = Gradients::zeros(data.n_classes, data.dim);
    let mut lr = config.learning_rate;
    let use_soft = config.soft_ratio > 0.0 && !data.soft.is_empty();
    let soft_all: Vec<usize> = (0..data.soft.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        for &(at, mult) in &config.lr_schedule {
            if at == epoch {
                lr *= mult;
            }
        }
        let mut onehot_order = train_idx.clone();
        onehot_order.shuffle(&mut stream(config.seed, "shuffle-onehot", epoch as u64));
        let mut soft_order = soft_all.clone();
        if use_soft {
            soft_order.shuffle(&mut stream(config.seed, "shuffle-soft", epoch as u64));
        }

        let largest = if use_soft {
            onehot_order.len().max(soft_order.len())
        } else {
            onehot_order.len()
        };
        let steps = largest.div_ceil(config.batch_size);
        let mut epoch_loss = 0.0;
        for step in 0..steps {
            let lo = step * config.batch_size;
            let hi = (lo + config.batch_size).min(largest);
            let onehot_batch: Vec<usize> = (lo..hi)
                .map(|pos| onehot_order[pos % onehot_order.len()])
                .collect();
            let soft_batch: Vec<usize> = if use_soft {
                (lo..hi).map(|pos| soft_order[pos % soft_order.len()]).collect()
            } else {
                Vec::new()
            };
            let (value, mut grad) = batch_objective_and_grad(
                &model,
                data,
                &onehot_batch,
                &soft_batch,
                config.soft_loss,
                config.soft_ratio,
            );
            if !value.is_finite() {
                return Err(Error::TrainingFailure { epoch });
            }
            epoch_loss += value;
            if config.weight_decay > 0.0 {
                for (g_row, w_row) in grad.weights.iter_mut().zip(&model.weights) {
                    for (g, &w) in g_row.iter_mut().zip(w_row) {
                        *g += config.weight_decay * w;
                    }
                }
            }
            for (v_row, g_row) in velocity.weights.iter_mut().zip(&grad.weights) {
                for (v, &g) in v_row.iter_mut().zip(g_row) {
                    *v = config.momentum * *v + g;
                }
            }
            for (v, &g) in velocity.bias.iter_mut().zip(&grad.bias) {
                *v = config.momentum * *v + g;
            }
            for (w_row, v_row) in model.weights.iter_mut().zip(&velocity.weights) {
                for (w, &v) in w_row.iter_mut().zip(v_row) {
                    *w -= lr * v;
                }
            }
            for (b, &v) in model.bias.iter_mut().zip(&velocity.bias) {
                *b -= lr * v;
            }
            if !params_finite(&model) {
                return Err(Error::TrainingFailure { epoch });
            }
        }

        let val_set = val_prediction_set(&model, data, &val_idx)?;
        records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / steps as f64,
            val_nll: nll(&val_set),
            val_ece: ece(&val_set, config.n_bins)?,
            val_oe: oe(&val_set, config.n_bins)?,
        });
    }

    let val_set = val_prediction_set(&model, data, &val_idx)?;
    let metrics = MetricsReport::compute(&val_set, config.n_bins)?;
    let mut val_logits = Vec::with_capacity(val_idx.len());
    let mut val_labels = Vec::with_capacity(val_idx.len());
    for &i in &val_idx {
        let (x, label) = &data.onehot[i];
        val_logits.push(model.logits(x)?);
        val_labels.push(*label);
    }
    let temperature = fit_temperature(
        &val_logits,
        &val_labels,
        config.ts_objective,
        config.ts_grid.clone(),
        config.n_bins,
    )?;

    Ok(TrainReport {
        config: config.clone(),
        n_onehot_train: train_idx.len(),
        n_val: val_idx.len(),
        n_soft: data.soft.len(),
        epochs: records,
        metrics,
        temperature,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_dataset(seed: u64, n_per_class: usize, with_soft: bool) -> Dataset {
        let k = 3;
        let dim = 4;
        let mut data = Dataset::new(dim, k).unwrap();
        let mut rng = stream(seed, "toy-data", 0);
        for class in 0..k {
            for _ in 0..n_per_class {
                let x: Vec<f64> = (0..dim)
                    .map(|d| {
                        let center = if d == class { 2.0 } else { 0.0 };
                        center + rng.gen_range(-0.5..0.5)
                    })
                    .collect();
                data.push_onehot(x, class).unwrap();
            }
        }
        if with_soft {
            for _ in 0..n_per_class {
                let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let lam = rng.gen_range(0.05..0.95);
                let target = SoftLabel::new(0, 1, lam).unwrap().expand(k).unwrap();
                data.push_soft(x, target).unwrap();
            }
        }
        data
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 8,
            learning_rate: 0.2,
            val_fraction: 0.2,
            // Validation splits in these tests are tiny; equal-count binning
            // needs at least as many samples as bins.
            n_bins: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let data = toy_dataset(3, 6, true);
        let mut rng = stream(3, "toy-model", 0);
        let weights: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let bias: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let model = LinearModel::from_parts(weights, bias).unwrap();
        let h = 1e-5;
        for loss in [
            LossKind::Ce,
            LossKind::L2,
            LossKind::Focal { gamma: 3.0 },
        ] {
            let (_, grad) = objective_and_grad(&model, &data, loss, 2.0).unwrap();
            let check = |k: usize, d: Option<usize>, analytic: f64| {
                let bump = |delta: f64| {
                    let mut m = model.clone();
                    match d {
                        Some(d) => m.weights[k][d] += delta,
                        None => m.bias[k] += delta,
                    }
                    objective_and_grad(&m, &data, loss, 2.0).unwrap().0
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let rel = (analytic - fd).abs() / analytic.abs().max(1.0);
                assert!(rel < 1e-5, "loss {loss:?} grad {analytic} vs fd {fd}");
            };
            for k in 0..3 {
                for d in 0..4 {
                    check(k, Some(d), grad.weights[k][d]);
                }
                check(k, None, grad.bias[k]);
            }
        }
    }

    #[test]
    fn full_batch_descent_is_monotone() {
        let data = toy_dataset(5, 10, false);
        let config = TrainConfig {
            epochs: 30,
            batch_size: 1000,
            learning_rate: 0.05,
            momentum: 0.0,
            weight_decay: 0.0,
            soft_ratio: 0.0,
            val_fraction: 0.2,
            n_bins: 5,
            ..TrainConfig::default()
        };
        let report = train(&data, &config).unwrap();
        for pair in report.epochs.windows(2) {
            assert!(
                pair[1].train_loss <= pair[0].train_loss + 1e-12,
                "loss rose: {} -> {}",
                pair[0].train_loss,
                pair[1].train_loss
            );
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_dataset(7, 8, true);
        let a = train(&data, &small_config()).unwrap();
        let b = train(&data, &small_config()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn zero_soft_ratio_ignores_the_soft_pool() {
        let with_soft = toy_dataset(9, 8, true);
        let without = toy_dataset(9, 8, false);
        let config = TrainConfig {
            soft_ratio: 0.0,
            ..small_config()
        };
        let a = train(&with_soft, &config).unwrap();
        let b = train(&without, &config).unwrap();
        assert_eq!(
            serde_json::to_string(&a.model).unwrap(),
            serde_json::to_string(&b.model).unwrap()
        );
    }

    #[test]
    fn divergence_is_reported_with_its_epoch() {
        let data = toy_dataset(11, 8, false);
        // Large enough that either the update itself or the next logit
        // dot product leaves the finite range.
        let config = TrainConfig {
            learning_rate: 1e308,
            epochs: 3,
            ..small_config()
        };
        match train(&data, &config) {
            Err(Error::TrainingFailure { epoch }) => assert!(epoch < 3),
            other => panic!("expected a training failure, got {other:?}"),
        }
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let (train_idx, val_idx) = stratified_split(&labels, 3, 0.2, 42).unwrap();
        assert_eq!(val_idx.len(), 6);
        assert_eq!(train_idx.len(), 24);
        for class in 0..3 {
            let n = val_idx.iter().filter(|&&i| labels[i] == class).count();
            assert_eq!(n, 2, "class {class} holdout");
        }
        let mut all: Vec<usize> = train_idx.iter().chain(&val_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
        assert!(stratified_split(&[0, 0, 1], 2, 0.2, 0).is_err());
    }

    #[test]
    fn schedule_freezes_learning() {
        let data = toy_dataset(13, 8, false);
        let config = TrainConfig {
            epochs: 2,
            momentum: 0.0,
            lr_schedule: vec![(1, 1e-300)],
            ..small_config()
        };
        let report = train(&data, &config).unwrap();
        let a = &report.epochs[0];
        let b = &report.epochs[1];
        assert!((a.val_nll - b.val_nll).abs() < 1e-9);
    }

    #[test]
    fn learns_separable_classes_and_reports_shapes() {
        let data = toy_dataset(17, 20, true);
        let config = TrainConfig {
            epochs: 25,
            learning_rate: 0.3,
            val_fraction: 0.2,
            n_bins: 10,
            ..TrainConfig::default()
        };
        let report = train(&data, &config).unwrap();
        assert_eq!(report.epochs.len(), 25);
        assert_eq!(report.n_val, 12);
        assert_eq!(report.n_onehot_train, 48);
        assert!(report.metrics.accuracy > 0.8, "{}", report.metrics.accuracy);
        assert!(report.temperature.temperature > 0.0);
        assert!(report.metrics.ece <= 1.0);
    }

    #[test]
    fn softmax_path_matches_simplex_softmax() {
        let z = vec![1.5, -0.25, 0.0, 3.0];
        let via_simplex = crate::simplex::softmax(&LogitVector::new(z.clone()).unwrap(), 1.0)
            .unwrap()
            .into_vec();
        let mut inline = z;
        softmax_in_place(&mut inline);
        assert_eq!(via_simplex, inline);
    }

    #[test]
    fn benchmark_conversion_counts_and_targets() {
        let world = MixWorld::regular(3, 3, 2.0, 0.8, 1.0, 31).unwrap();
        let bench_config = crate::mixsim::BenchmarkConfig {
            n_sets: 5,
            lambdas: crate::mixsim::lambda_grid(4).unwrap(),
            onehot_per_class: 4,
        };
        let bench = crate::mixsim::build_benchmark(&world, &bench_config).unwrap();

        let ignore = Dataset::from_benchmark(&world, &bench, MixTargets::Ignore).unwrap();
        assert_eq!(ignore.n_onehot(), 12);
        assert_eq!(ignore.n_soft(), 0);

        let oracle = Dataset::from_benchmark(&world, &bench, MixTargets::Oracle).unwrap();
        assert_eq!(oracle.n_soft(), 20);
        let set = &bench.sets[0];
        let expected = SoftLabel::new(set.class_i, set.class_j, set.samples[0].lambda_true)
            .unwrap()
            .expand(3)
            .unwrap();
        assert_eq!(
            oracle.soft[0].target.as_slice(),
            expected.as_slice()
        );

        let debiased = Dataset::from_benchmark(&world, &bench, MixTargets::Debiased).unwrap();
        assert_eq!(debiased.n_soft(), 20);
        for s in &debiased.soft {
            let mass: f64 = s.target.as_slice().iter().sum();
            assert!((mass - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let base = TrainConfig::default();
        for bad in [
            TrainConfig { epochs: 0, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { learning_rate: 0.0, ..base.clone() },
            TrainConfig { momentum: 1.0, ..base.clone() },
            TrainConfig { weight_decay: -1.0, ..base.clone() },
            TrainConfig { soft_ratio: -0.5, ..base.clone() },
            TrainConfig { val_fraction: 0.0, ..base.clone() },
            TrainConfig { val_fraction: 1.0, ..base.clone() },
            TrainConfig { n_bins: 0, ..base.clone() },
            TrainConfig { lr_schedule: vec![(99, 0.5)], ..base.clone() },
            TrainConfig { lr_schedule: vec![(1, 0.0)], ..base.clone() },
            TrainConfig { soft_loss: LossKind::Focal { gamma: -1.0 }, ..base.clone() },
        ] {
            assert!(train(&toy_dataset(1, 4, false), &bad).is_err());
        }
    }
}

//! Confidence-balance lab.
//!
//! The object of study is a constrained pair problem: two soft labels
//! `q1, q2` share the same two support classes with coefficients
//! `alpha1 > alpha2` (q1 is the sharper label), and we minimize
//! `L(p1, q1) + L(p2, q2)` over the product of probability simplices
//! subject to the proximity constraint `|p1 - p2|^2 <= delta`. The balance
//! score `beta = |p1 - q1|^2 - |p2 - q2|^2` measures which label the
//! constrained optimum favors: beta < 0 means the sharper label wins the
//! tie-break, beta > 0 the softer one, beta = 0 means the loss is
//! confidence-balanced.
//!
//! Three routes to the optimum are provided and cross-checked: a closed
//! form for the L2 loss ([`solve_l2_closed`]), a two-class reduction with
//! a monotone root-finder for CE and Focal(gamma=1)
//! ([`solve_pair_2class`]), and a loss-agnostic projected solver
//! ([`solve_pair_numeric`]). [`t_ce`] and [`t_fl`] are the analytic sign
//! witnesses that decide the direction without solving anything.

mod closed;
mod numeric;
mod pair2;
mod verify;

pub use closed::solve_l2_closed;
pub use numeric::{solve_pair_numeric, NumericOptions};
pub use pair2::{solve_pair_2class, sweep_separation, SeparationSweep};
pub use verify::{verify_propositions, PropositionSummary, VerifyOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{ln_clamped, ProbVector, LOG_CLAMP};

/// Which per-sample loss the pair objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Focal { gamma: f64 },
    L2,
}

impl LossKind {
    pub(crate) fn validate(&self) -> Result<()> {
        if let LossKind::Focal { gamma } = self {
            if !(gamma.is_finite() && *gamma > 0.0) {
                return Err(Error::invalid(format!(
                    "focal gamma must be positive and finite, got {gamma}"
                )));
            }
        }
        Ok(())
    }
}

/// Loss of predicting `p` against soft target `q`.
///
/// CE and Focal are the soft-target forms `-sum_k q_k w_k(p) ln p_k` with
/// `w = 1` and `w = (1 - p_k)^gamma`; L2 is `(1/K) |p - q|^2`. Logs clamp
/// probabilities to `[1e-12, 1]`.
pub fn loss_value(loss: LossKind, p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "prediction has {} classes but target has {}",
            p.len(),
            q.len()
        )));
    }
    loss.validate()?;
    Ok(loss_value_slices(loss, p.as_slice(), q.as_slice()))
}

/// Unvalidated slice form of [`loss_value`] for solver and trainer inner
/// loops.
pub(crate) fn loss_value_slices(loss: LossKind, p: &[f64], q: &[f64]) -> f64 {
    match loss {
        LossKind::Ce => p
            .iter()
            .zip(q)
            .map(|(&pk, &qk)| -qk * ln_clamped(pk))
            .sum(),
        LossKind::Focal { gamma } => p
            .iter()
            .zip(q)
            .map(|(&pk, &qk)| -qk * (1.0 - pk).max(0.0).powf(gamma) * ln_clamped(pk))
            .sum(),
        LossKind::L2 => {
            let sq: f64 = p
                .iter()
                .zip(q)
                .map(|(&pk, &qk)| (pk - qk) * (pk - qk))
                .sum();
            sq / p.len() as f64
        }
    }
}

/// Gradient of [`loss_value`] with respect to `p`, on the clamped domain.
pub(crate) fn loss_grad_p(loss: LossKind, p: &[f64], q: &[f64]) -> Vec<f64> {
    match loss {
        LossKind::Ce => p
            .iter()
            .zip(q)
            .map(|(&pk, &qk)| -qk / pk.max(LOG_CLAMP))
            .collect(),
        LossKind::Focal { gamma } => p
            .iter()
            .zip(q)
            .map(|(&pk, &qk)| {
                let rest = (1.0 - pk).max(0.0);
                let bend = if rest == 0.0 {
                    0.0
                } else {
                    gamma * rest.powf(gamma - 1.0) * ln_clamped(pk)
                };
                qk * (bend - rest.powf(gamma) / pk.max(LOG_CLAMP))
            })
            .collect(),
        LossKind::L2 => {
            let scale = 2.0 / p.len() as f64;
            p.iter().zip(q).map(|(&pk, &qk)| scale * (pk - qk)).collect()
        }
    }
}

/// Balance score `|p1 - q1|^2 - |p2 - q2|^2`.
pub fn beta_score(
    p1: &ProbVector,
    p2: &ProbVector,
    q1: &ProbVector,
    q2: &ProbVector,
) -> Result<f64> {
    let lens = [p1.len(), p2.len(), q1.len(), q2.len()];
    if lens.iter().any(|&l| l != lens[0]) {
        return Err(Error::invalid(format!(
            "beta_score needs equal lengths, got {lens:?}"
        )));
    }
    let sq = |a: &ProbVector, b: &ProbVector| -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum()
    };
    Ok(sq(p1, q1) - sq(p2, q2))
}

/// A constrained soft-label pair instance.
///
/// `q1` puts mass `alpha1` on `class_s` and the rest on `class_t`; `q2`
/// does the same with `alpha2`. Validity requires
/// `0.5 <= alpha2 < alpha1 < 1`, so q1 is strictly sharper and both prefer
/// `class_s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixPairProblem {
    loss: LossKind,
    alpha1: f64,
    alpha2: f64,
    delta: f64,
    k: usize,
    class_s: usize,
    class_t: usize,
}

impl MixPairProblem {
    /// Instance over `k` classes with support on classes 0 and 1.
    pub fn new(loss: LossKind, alpha1: f64, alpha2: f64, delta: f64, k: usize) -> Result<Self> {
        Self::with_classes(loss, alpha1, alpha2, delta, k, 0, 1)
    }

    pub fn with_classes(
        loss: LossKind,
        alpha1: f64,
        alpha2: f64,
        delta: f64,
        k: usize,
        class_s: usize,
        class_t: usize,
    ) -> Result<Self> {
        loss.validate()?;
        if !(alpha1.is_finite() && alpha2.is_finite()) || !(0.5 <= alpha2 && alpha2 < alpha1 && alpha1 < 1.0)
        {
            return Err(Error::invalid(format!(
                "coefficients must satisfy 0.5 <= alpha2 < alpha1 < 1, got alpha1={alpha1}, alpha2={alpha2}"
            )));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::invalid(format!(
                "delta must be nonnegative and finite, got {delta}"
            )));
        }
        if k < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {k}")));
        }
        if class_s == class_t || class_s >= k || class_t >= k {
            return Err(Error::invalid(format!(
                "support classes ({class_s}, {class_t}) must be distinct and below {k}"
            )));
        }
        Ok(MixPairProblem {
            loss,
            alpha1,
            alpha2,
            delta,
            k,
            class_s,
            class_t,
        })
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class_s(&self) -> usize {
        self.class_s
    }

    pub fn class_t(&self) -> usize {
        self.class_t
    }

    /// Same instance with a different loss.
    pub fn with_loss(&self, loss: LossKind) -> Result<Self> {
        loss.validate()?;
        let mut out = self.clone();
        out.loss = loss;
        Ok(out)
    }

    /// The sharper target.
    pub fn q1(&self) -> ProbVector {
        self.support_vector(self.alpha1)
    }

    /// The softer target.
    pub fn q2(&self) -> ProbVector {
        self.support_vector(self.alpha2)
    }

    /// `D = |q1 - q2|^2 = 2 (alpha1 - alpha2)^2`.
    pub fn label_dist_sq(&self) -> f64 {
        2.0 * (self.alpha1 - self.alpha2) * (self.alpha1 - self.alpha2)
    }

    /// Dense vector with `mass` on `class_s` and the rest on `class_t`.
    pub(crate) fn support_vector(&self, mass: f64) -> ProbVector {
        let mut dense = vec![0.0; self.k];
        dense[self.class_s] = mass;
        dense[self.class_t] = 1.0 - mass;
        ProbVector::new(dense).expect("support coefficients are validated")
    }

    /// Objective `L(p1, q1) + L(p2, q2)` for this instance's loss.
    pub fn objective(&self, p1: &ProbVector, p2: &ProbVector) -> Result<f64> {
        Ok(loss_value(self.loss, p1, &self.q1())? + loss_value(self.loss, p2, &self.q2())?)
    }
}

/// Which route produced a [`BalanceReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    ClosedForm,
    RootFind,
    GridRefine,
    ProjectedGradient,
}

/// Solution of a pair problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceReport {
    pub p1_star: ProbVector,
    pub p2_star: ProbVector,
    pub beta: f64,
    pub constraint_active: bool,
    pub solver: SolverKind,
    pub objective_value: f64,
}

impl BalanceReport {
    pub(crate) fn build(
        problem: &MixPairProblem,
        p1_star: ProbVector,
        p2_star: ProbVector,
        constraint_active: bool,
        solver: SolverKind,
    ) -> Result<Self> {
        let beta = beta_score(&p1_star, &p2_star, &problem.q1(), &problem.q2())?;
        let objective_value = problem.objective(&p1_star, &p2_star)?;
        Ok(BalanceReport {
            p1_star,
            p2_star,
            beta,
            constraint_active,
            solver,
            objective_value,
        })
    }

    /// Squared distance between the two optimal predictions.
    pub fn pair_dist_sq(&self) -> f64 {
        self.p1_star
            .iter()
            .zip(self.p2_star.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    }

    /// Largest total probability either prediction puts outside the
    /// support pair.
    pub fn off_support_mass(&self, class_s: usize, class_t: usize) -> f64 {
        let mass = |p: &ProbVector| -> f64 {
            p.iter()
                .enumerate()
                .filter(|&(k, _)| k != class_s && k != class_t)
                .map(|(_, &v)| v)
                .sum()
        };
        mass(&self.p1_star).max(mass(&self.p2_star))
    }
}

fn check_witness_region(alpha1: f64, alpha2: f64, eps: f64) -> Result<()> {
    if !(0.5 <= alpha2 && alpha2 < alpha1 && alpha1 < 1.0) {
        return Err(Error::invalid(format!(
            "witness region needs 0.5 <= alpha2 < alpha1 < 1, got alpha1={alpha1}, alpha2={alpha2}"
        )));
    }
    if !(eps.is_finite() && (0.0..alpha1 - alpha2).contains(&eps)) {
        return Err(Error::invalid(format!(
            "witness region needs 0 <= eps < alpha1 - alpha2, got eps={eps}"
        )));
    }
    Ok(())
}

/// CE sign witness: the CE pair objective's derivative in the reduced
/// coordinate, evaluated at the balanced point. Negative means the CE
/// optimum overshoots toward the sharper label. Zero exactly at `eps = 0`
/// (the factored form carries a factor of `eps`), strictly negative for
/// `eps > 0` in the valid region.
pub fn t_ce(alpha1: f64, alpha2: f64, eps: f64) -> Result<f64> {
    check_witness_region(alpha1, alpha2, eps)?;
    let s = alpha1 + alpha2;
    let d1 = 2.0 - s - eps;
    let d2 = s + eps;
    let d3 = 2.0 - s + eps;
    let d4 = s - eps;
    Ok(2.0 * ((1.0 - alpha1) / d1 - alpha1 / d2 + (1.0 - alpha2) / d3 - alpha2 / d4))
}

fn mu(w: f64, x: f64) -> f64 {
    let inner = w + x;
    let outer = 1.0 - inner;
    (1.0 - w) * (inner / outer - outer.ln()) - w * (outer / inner - inner.ln())
}

/// Focal(gamma=1) sign witness, positive throughout the valid region:
/// the focal optimum undershoots toward the softer label.
pub fn t_fl(alpha1: f64, alpha2: f64, eps: f64) -> Result<f64> {
    check_witness_region(alpha1, alpha2, eps)?;
    let x = (alpha1 - alpha2 - eps) / 2.0;
    Ok(mu(alpha2, x) + mu(alpha1, -x))
}

//! Closed form for the L2 pair problem.
//!
//! With `D = |q1 - q2|^2`: when `delta >= D` the constraint is slack and
//! the optimum is `(q1, q2)` itself. Otherwise the optimum contracts both
//! targets toward their midpoint along the segment joining them:
//! `p1 = lam q1 + (1 - lam) q2` and symmetrically for `p2`, with
//! `lam = (1 + sqrt(delta / D)) / 2`. Either way the two fitting errors
//! are mirror images, so beta is 0 to machine precision.

use crate::error::{Error, Result};
use crate::simplex::ProbVector;

use super::{BalanceReport, LossKind, MixPairProblem, SolverKind};

pub fn solve_l2_closed(problem: &MixPairProblem) -> Result<BalanceReport> {
    if problem.loss() != LossKind::L2 {
        return Err(Error::invalid(
            "solve_l2_closed only handles the l2 loss; use solve_pair_2class or solve_pair_numeric",
        ));
    }
    let q1 = problem.q1();
    let q2 = problem.q2();
    let d = problem.label_dist_sq();
    if problem.delta() >= d {
        return BalanceReport::build(problem, q1, q2, false, SolverKind::ClosedForm);
    }
    let lam = (1.0 + (problem.delta() / d).sqrt()) / 2.0;
    let blend = |a: &ProbVector, b: &ProbVector| -> Result<ProbVector> {
        let mixed = a
            .iter()
            .zip(b.iter())
            .map(|(&x, &y)| lam * x + (1.0 - lam) * y)
            .collect();
        ProbVector::normalized(mixed)
    };
    let p1 = blend(&q1, &q2)?;
    let p2 = blend(&q2, &q1)?;
    BalanceReport::build(problem, p1, p2, true, SolverKind::ClosedForm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(delta: f64) -> MixPairProblem {
        MixPairProblem::new(LossKind::L2, 0.9, 0.6, delta, 2).unwrap()
    }

    #[test]
    fn quarter_distance_contracts_targets() {
        let report = solve_l2_closed(&l2(0.045)).unwrap();
        assert!((report.p1_star.get(0) - 0.825).abs() < 1e-12);
        assert!((report.p1_star.get(1) - 0.175).abs() < 1e-12);
        assert!((report.p2_star.get(0) - 0.675).abs() < 1e-12);
        assert!((report.p2_star.get(1) - 0.325).abs() < 1e-12);
        assert!((report.pair_dist_sq() - 0.045).abs() < 1e-12);
        assert!(report.beta.abs() <= 1e-10);
        assert!(report.constraint_active);
        assert_eq!(report.solver, SolverKind::ClosedForm);
    }

    #[test]
    fn zero_delta_lands_on_midpoint() {
        let report = solve_l2_closed(&l2(0.0)).unwrap();
        assert!((report.p1_star.get(0) - 0.75).abs() < 1e-12);
        assert!((report.p2_star.get(0) - 0.75).abs() < 1e-12);
        // Each squared fitting error is (alpha1 - alpha2)^2 / 2 = 0.045.
        let q1 = l2(0.0).q1();
        let err_sq: f64 = report
            .p1_star
            .iter()
            .zip(q1.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        assert!((err_sq - 0.045).abs() < 1e-12);
        assert!(report.beta.abs() <= 1e-10);
    }

    #[test]
    fn slack_constraint_returns_targets() {
        // The exact separation 2 (alpha1 - alpha2)^2 as f64 counts as slack.
        let boundary = 2.0 * (0.9 - 0.6) * (0.9 - 0.6);
        for delta in [boundary, 0.2, 5.0] {
            let report = solve_l2_closed(&l2(delta)).unwrap();
            assert_eq!(report.p1_star.as_slice(), &[0.9, 1.0 - 0.9]);
            assert_eq!(report.p2_star.as_slice(), &[0.6, 1.0 - 0.6]);
            assert_eq!(report.beta, 0.0);
            assert!(!report.constraint_active);
            assert_eq!(report.objective_value, 0.0);
        }
    }

    #[test]
    fn beta_is_recomputable_from_stored_fields() {
        let problem = l2(0.02);
        let report = solve_l2_closed(&problem).unwrap();
        let again = super::super::beta_score(
            &report.p1_star,
            &report.p2_star,
            &problem.q1(),
            &problem.q2(),
        )
        .unwrap();
        assert_eq!(report.beta, again);
    }

    #[test]
    fn rejects_other_losses() {
        let ce = MixPairProblem::new(LossKind::Ce, 0.9, 0.6, 0.045, 2).unwrap();
        assert!(solve_l2_closed(&ce).is_err());
    }

    #[test]
    fn wide_support_stays_on_pair() {
        let problem =
            MixPairProblem::with_classes(LossKind::L2, 0.85, 0.55, 0.01, 6, 4, 2).unwrap();
        let report = solve_l2_closed(&problem).unwrap();
        assert!(report.off_support_mass(4, 2) == 0.0);
        assert!(report.pair_dist_sq() <= problem.delta() + 1e-9);
        assert!(report.beta.abs() <= 1e-10);
    }
}

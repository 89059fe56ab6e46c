//! Two-class reduction for the CE and Focal(gamma=1) pair problems.
//!
//! At any optimum of these losses all mass sits on the two support
//! classes, so the problem collapses to one scalar: write `x` for the
//! softer prediction's mass on `class_s` and `x + eps` for the sharper
//! one's, where `eps = sqrt(delta / 2)` saturates the proximity
//! constraint. The pair objective's derivative in `x` is strictly
//! increasing and spans the whole real line on `(0, 1 - eps)`, so
//! bisection on that derivative nails the optimum.
//!
//! When the constraint cannot bind (the per-sample unconstrained optima
//! are already within `delta`), the reduction returns those optima
//! directly. For CE they are the targets themselves; Focal's sit strictly
//! between 1/2 and the target mass, which is why Focal stays biased even
//! with a slack constraint.

use crate::error::{Error, Result};

use super::numeric::solve_pair_numeric;
use super::{BalanceReport, LossKind, MixPairProblem, NumericOptions, SolverKind};

/// Derivative of the per-sample CE loss `-a ln p - (1-a) ln(1-p)`.
fn ce_prime(p: f64, a: f64) -> f64 {
    -a / p + (1.0 - a) / (1.0 - p)
}

/// Derivative of the per-sample Focal(gamma=1) loss
/// `-a (1-p) ln p - (1-a) p ln(1-p)`.
fn fl_prime(p: f64, a: f64) -> f64 {
    -a * ((1.0 - p) / p - p.ln()) + (1.0 - a) * (p / (1.0 - p) - (1.0 - p).ln())
}

/// Derivative of the constrained pair objective in the reduced coordinate.
fn pair_prime(loss: LossKind, x: f64, eps: f64, alpha1: f64, alpha2: f64) -> f64 {
    match loss {
        LossKind::Ce => ce_prime(x + eps, alpha1) + ce_prime(x, alpha2),
        LossKind::Focal { .. } => fl_prime(x + eps, alpha1) + fl_prime(x, alpha2),
        LossKind::L2 => unreachable!("two-class reduction is CE/Focal only"),
    }
}

const BRACKET_MARGIN: f64 = 1e-13;

/// Bisection for a strictly increasing function with a sign change on
/// `(lo, hi)`.
fn bisect(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let f_lo = f(lo);
    let f_hi = f(hi);
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::SolverFailure(format!(
            "bisection bracket invalid: f({lo}) = {f_lo}, f({hi}) = {f_hi}"
        )));
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Unconstrained per-sample optimum mass for target coefficient `a`.
fn unconstrained_mass(loss: LossKind, a: f64) -> Result<f64> {
    match loss {
        LossKind::Ce => Ok(a),
        LossKind::Focal { .. } => bisect(
            |p| fl_prime(p, a),
            BRACKET_MARGIN,
            1.0 - BRACKET_MARGIN,
        ),
        LossKind::L2 => unreachable!("two-class reduction is CE/Focal only"),
    }
}

#[derive(PartialEq)]
enum Reduction {
    Direct,
    RouteNumeric,
}

fn classify(problem: &MixPairProblem) -> Result<Reduction> {
    match problem.loss() {
        LossKind::L2 => Err(Error::invalid(
            "solve_pair_2class handles ce and focal; use solve_l2_closed for l2",
        )),
        LossKind::Focal { gamma } if (gamma - 1.0).abs() > 1e-12 => Ok(Reduction::RouteNumeric),
        _ => Ok(Reduction::Direct),
    }
}

/// Solve a CE or Focal(gamma=1) instance through the two-class reduction.
/// Focal with other gammas falls back to the projected solver.
pub fn solve_pair_2class(problem: &MixPairProblem) -> Result<BalanceReport> {
    if classify(problem)? == Reduction::RouteNumeric {
        return solve_pair_numeric(problem, &NumericOptions::default());
    }
    let loss = problem.loss();
    let (a1, a2) = (problem.alpha1(), problem.alpha2());

    let free1 = unconstrained_mass(loss, a1)?;
    let free2 = unconstrained_mass(loss, a2)?;
    let free_dist_sq = 2.0 * (free1 - free2) * (free1 - free2);
    if free_dist_sq <= problem.delta() {
        let p1 = problem.support_vector(free1);
        let p2 = problem.support_vector(free2);
        return BalanceReport::build(problem, p1, p2, false, SolverKind::RootFind);
    }

    let eps = (problem.delta() / 2.0).sqrt();
    let x = solve_at_separation(problem, eps)?;
    let p1 = problem.support_vector(x + eps);
    let p2 = problem.support_vector(x);
    BalanceReport::build(problem, p1, p2, true, SolverKind::RootFind)
}

/// Root of the reduced stationarity condition at a fixed separation `eps`.
fn solve_at_separation(problem: &MixPairProblem, eps: f64) -> Result<f64> {
    let loss = problem.loss();
    let (a1, a2) = (problem.alpha1(), problem.alpha2());
    let lo = BRACKET_MARGIN;
    let hi = 1.0 - eps - BRACKET_MARGIN;
    if hi <= lo {
        return Err(Error::SolverFailure(format!(
            "separation {eps} leaves no room for the softer mass"
        )));
    }
    bisect(|x| pair_prime(loss, x, eps, a1, a2), lo, hi)
}

/// Objectives along a grid of squared separations `A in [0, delta]`, each
/// solved with the constraint forced to that separation. Confirms where the
/// constraint wants to sit; when it binds, the best grid point is `delta`
/// itself.
#[derive(Debug, Clone)]
pub struct SeparationSweep {
    pub a_values: Vec<f64>,
    pub objectives: Vec<f64>,
    pub best_index: usize,
    pub report: BalanceReport,
}

pub fn sweep_separation(problem: &MixPairProblem, n_points: usize) -> Result<SeparationSweep> {
    if n_points < 2 {
        return Err(Error::invalid("sweep needs at least 2 grid points"));
    }
    if classify(problem)? == Reduction::RouteNumeric {
        return Err(Error::invalid(
            "sweep_separation supports ce and focal gamma = 1 only",
        ));
    }
    let mut a_values = Vec::with_capacity(n_points);
    let mut objectives = Vec::with_capacity(n_points);
    let mut candidates = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let a = problem.delta() * i as f64 / (n_points - 1) as f64;
        let eps = (a / 2.0).sqrt();
        let x = solve_at_separation(problem, eps)?;
        let p1 = problem.support_vector(x + eps);
        let p2 = problem.support_vector(x);
        let objective = problem.objective(&p1, &p2)?;
        a_values.push(a);
        objectives.push(objective);
        candidates.push((p1, p2));
    }
    let best_index = objectives
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("objectives are finite"))
        .map(|(i, _)| i)
        .expect("sweep grid is nonempty");
    let (p1, p2) = candidates.swap_remove(best_index);
    let active = (best_index + 1) == n_points;
    let report = BalanceReport::build(problem, p1, p2, active, SolverKind::GridRefine)?;
    Ok(SeparationSweep {
        a_values,
        objectives,
        best_index,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::beta_score;

    fn ce(delta: f64) -> MixPairProblem {
        MixPairProblem::new(LossKind::Ce, 0.9, 0.6, delta, 2).unwrap()
    }

    fn fl(delta: f64) -> MixPairProblem {
        MixPairProblem::new(LossKind::Focal { gamma: 1.0 }, 0.9, 0.6, delta, 2).unwrap()
    }

    #[test]
    fn ce_slack_returns_targets_exactly() {
        // The exact separation 2 (alpha1 - alpha2)^2 as f64 counts as slack.
        let boundary = 2.0 * (0.9 - 0.6) * (0.9 - 0.6);
        for delta in [boundary, 0.25, 1.0] {
            let report = solve_pair_2class(&ce(delta)).unwrap();
            assert_eq!(report.p1_star.as_slice(), &[0.9, 1.0 - 0.9]);
            assert_eq!(report.p2_star.as_slice(), &[0.6, 1.0 - 0.6]);
            assert_eq!(report.beta, 0.0);
            assert!(!report.constraint_active);
        }
    }

    #[test]
    fn ce_active_is_negative_and_feasible() {
        // delta = D/4 from the worked instance.
        let problem = ce(0.045);
        let report = solve_pair_2class(&problem).unwrap();
        assert!(report.constraint_active);
        assert!(report.beta < -1e-10, "beta = {}", report.beta);
        assert!((report.pair_dist_sq() - 0.045).abs() < 1e-12);
        assert_eq!(report.solver, SolverKind::RootFind);
    }

    #[test]
    fn ce_zero_delta_collapses_to_midpoint() {
        // With eps = 0 the stationarity root is (alpha1 + alpha2) / 2.
        let report = solve_pair_2class(&ce(0.0)).unwrap();
        assert!((report.p1_star.get(0) - 0.75).abs() < 1e-12);
        assert!((report.p2_star.get(0) - 0.75).abs() < 1e-12);
        assert!(report.beta.abs() < 1e-12);
    }

    #[test]
    fn focal_active_is_positive() {
        let problem = fl(0.045);
        let report = solve_pair_2class(&problem).unwrap();
        assert!(report.constraint_active);
        assert!(report.beta > 1e-10, "beta = {}", report.beta);
        assert!((report.pair_dist_sq() - 0.045).abs() < 1e-12);
    }

    #[test]
    fn focal_stays_biased_when_constraint_is_slack() {
        // The focal per-sample optima sit below the targets, so even with
        // delta >= D the pair is unbalanced toward the softer label.
        let problem = fl(0.18);
        let report = solve_pair_2class(&problem).unwrap();
        assert!(!report.constraint_active);
        assert!(report.pair_dist_sq() <= problem.delta() + 1e-12);
        assert!(report.beta > 1e-10);
        let p1 = report.p1_star.get(0);
        let p2 = report.p2_star.get(0);
        assert!(0.5 < p2 && p2 < 0.6, "softer mass {p2}");
        assert!(p2 < p1 && p1 < 0.9, "sharper mass {p1}");
    }

    #[test]
    fn focal_unconstrained_half_target_is_fixed() {
        // alpha = 1/2 is the symmetric fixed point of the focal
        // stationarity condition.
        let m = unconstrained_mass(LossKind::Focal { gamma: 1.0 }, 0.5).unwrap();
        assert!((m - 0.5).abs() < 1e-12);
    }

    #[test]
    fn beta_agrees_with_reduced_expression() {
        // beta = 2 (2t - a1 - a2) (eps + a2 - a1) with t the mean mass.
        let problem = ce(0.02);
        let report = solve_pair_2class(&problem).unwrap();
        let eps = (problem.delta() / 2.0).sqrt();
        let t = (report.p1_star.get(0) + report.p2_star.get(0)) / 2.0;
        let reduced = 2.0 * (2.0 * t - 0.9 - 0.6) * (eps + 0.6 - 0.9);
        assert!((report.beta - reduced).abs() < 1e-12);
    }

    #[test]
    fn sign_witness_matches_solver_direction() {
        for delta in [0.005, 0.02, 0.08, 0.12] {
            let eps = (delta / 2.0_f64).sqrt();
            let ce_beta = solve_pair_2class(&ce(delta)).unwrap().beta;
            let fl_beta = solve_pair_2class(&fl(delta)).unwrap().beta;
            let wit_ce = super::super::t_ce(0.9, 0.6, eps).unwrap();
            let wit_fl = super::super::t_fl(0.9, 0.6, eps).unwrap();
            assert!(ce_beta < 0.0 && wit_ce < 0.0);
            assert!(fl_beta > 0.0 && wit_fl > 0.0);
        }
    }

    #[test]
    fn witnesses_equal_pair_prime_at_balanced_point() {
        // t_ce and t_fl are the reduced derivative evaluated where the pair
        // would be balanced, x = (a1 + a2 - eps) / 2.
        let (a1, a2, eps) = (0.87, 0.66, 0.13);
        let x = (a1 + a2 - eps) / 2.0;
        let wit = super::super::t_ce(a1, a2, eps).unwrap();
        let direct = pair_prime(LossKind::Ce, x, eps, a1, a2);
        assert!((wit - direct).abs() < 1e-10, "{wit} vs {direct}");
        let wit = super::super::t_fl(a1, a2, eps).unwrap();
        let direct = pair_prime(LossKind::Focal { gamma: 1.0 }, x, eps, a1, a2);
        assert!((wit - direct).abs() < 1e-10, "{wit} vs {direct}");
    }

    #[test]
    fn k_padding_keeps_support_clean() {
        let problem =
            MixPairProblem::with_classes(LossKind::Ce, 0.8, 0.65, 0.002, 7, 5, 0).unwrap();
        let report = solve_pair_2class(&problem).unwrap();
        assert_eq!(report.off_support_mass(5, 0), 0.0);
        assert_eq!(report.p1_star.len(), 7);
        let beta = beta_score(
            &report.p1_star,
            &report.p2_star,
            &problem.q1(),
            &problem.q2(),
        )
        .unwrap();
        assert_eq!(beta, report.beta);
    }

    #[test]
    fn sweep_prefers_full_separation_when_constraint_binds() {
        let problem = ce(0.045);
        let sweep = sweep_separation(&problem, 32).unwrap();
        assert_eq!(sweep.best_index, 31);
        assert!(sweep.report.constraint_active);
        assert_eq!(sweep.report.solver, SolverKind::GridRefine);
        // Objectives decrease toward the full separation.
        for w in sweep.objectives.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let direct = solve_pair_2class(&problem).unwrap();
        assert!((sweep.report.objective_value - direct.objective_value).abs() < 1e-10);
    }

    #[test]
    fn rejects_l2_and_bad_grids() {
        let l2 = MixPairProblem::new(LossKind::L2, 0.9, 0.6, 0.045, 2).unwrap();
        assert!(solve_pair_2class(&l2).is_err());
        assert!(sweep_separation(&ce(0.01), 1).is_err());
    }
}

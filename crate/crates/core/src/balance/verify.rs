//! Randomized proposition verification.
//!
//! Draws pair instances from a fixed distribution over the valid region
//! and checks the three balance propositions with every applicable solver:
//! CE tilts toward the sharper label (beta < 0) whenever the constraint
//! binds, Focal(gamma=1) tilts toward the softer one (beta > 0) whenever
//! `delta < D`, and L2 is balanced (beta = 0) everywhere. The structured
//! and projected solvers must also agree on objectives, and projected
//! optima must keep their mass on the support pair.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::streams::stream;

use super::{
    solve_l2_closed, solve_pair_2class, solve_pair_numeric, LossKind, MixPairProblem,
    NumericOptions,
};

/// Pass thresholds, mirrored by the acceptance suite.
pub const BETA_SIGN_MARGIN: f64 = 1e-10;
pub const SLACK_COORD_TOL: f64 = 1e-6;
pub const SLACK_BETA_TOL: f64 = 1e-8;
pub const OBJECTIVE_AGREEMENT_TOL: f64 = 1e-6;
pub const SUPPORT_MASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub trials: usize,
    pub seed: u64,
    /// Also run the projected solver on every instance (slower, stronger).
    pub run_numeric: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            trials: 200,
            seed: 7,
            run_numeric: true,
        }
    }
}

/// Aggregated outcome of a verification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropositionSummary {
    pub trials: usize,
    pub seed: u64,
    pub ran_numeric: bool,
    /// CE instances with a binding constraint (delta < D) and how many of
    /// them produced beta < -1e-10 per solver route.
    pub ce_active_trials: usize,
    pub ce_negative_rootfind: usize,
    pub ce_negative_numeric: usize,
    /// CE instances with slack (delta >= D): optimum must be the targets.
    pub ce_slack_trials: usize,
    pub ce_slack_ok_rootfind: usize,
    pub ce_slack_ok_numeric: usize,
    /// Focal(gamma=1) instances with delta < D and beta > 1e-10 per route.
    pub fl_tilt_trials: usize,
    pub fl_positive_rootfind: usize,
    pub fl_positive_numeric: usize,
    /// Largest |beta| of the closed-form L2 solution over all trials.
    pub l2_max_abs_beta: f64,
    /// Largest objective gap between the structured and projected routes.
    pub max_objective_gap: f64,
    /// Largest off-support mass of any projected CE/Focal solution.
    pub max_off_support_mass: f64,
    /// Human-readable descriptions of the first few violations.
    pub failures: Vec<String>,
    pub all_passed: bool,
}

fn slack_ok(report: &super::BalanceReport, problem: &MixPairProblem) -> bool {
    let q1 = problem.q1();
    let q2 = problem.q2();
    let coord_ok = report
        .p1_star
        .iter()
        .zip(q1.iter())
        .chain(report.p2_star.iter().zip(q2.iter()))
        .all(|(&p, &q)| (p - q).abs() <= SLACK_COORD_TOL);
    coord_ok && report.beta.abs() <= SLACK_BETA_TOL
}

/// Run the proposition suite on `trials` seeded instances.
pub fn verify_propositions(options: &VerifyOptions) -> Result<PropositionSummary> {
    let mut summary = PropositionSummary {
        trials: options.trials,
        seed: options.seed,
        ran_numeric: options.run_numeric,
        ce_active_trials: 0,
        ce_negative_rootfind: 0,
        ce_negative_numeric: 0,
        ce_slack_trials: 0,
        ce_slack_ok_rootfind: 0,
        ce_slack_ok_numeric: 0,
        fl_tilt_trials: 0,
        fl_positive_rootfind: 0,
        fl_positive_numeric: 0,
        l2_max_abs_beta: 0.0,
        max_objective_gap: 0.0,
        max_off_support_mass: 0.0,
        failures: Vec::new(),
        all_passed: true,
    };
    let numeric_options = NumericOptions::default();
    let fail = |summary: &mut PropositionSummary, message: String| {
        summary.all_passed = false;
        if summary.failures.len() < 16 {
            summary.failures.push(message);
        }
    };

    for trial in 0..options.trials {
        let mut rng = stream(options.seed, "verify-trial", trial as u64);
        let alpha2 = rng.gen_range(0.5..0.95);
        let alpha1 = rng.gen_range(alpha2 + 0.02..0.99);
        let k = rng.gen_range(2..=8usize);
        let class_s = rng.gen_range(0..k);
        let class_t = (class_s + rng.gen_range(1..k)) % k;
        let d = 2.0 * (alpha1 - alpha2) * (alpha1 - alpha2);
        let delta = rng.gen_range(0.0..2.0 * d);
        let base = MixPairProblem::with_classes(
            LossKind::Ce,
            alpha1,
            alpha2,
            delta,
            k,
            class_s,
            class_t,
        )?;
        let tag = format!(
            "trial {trial}: alpha1={alpha1:.4}, alpha2={alpha2:.4}, delta={delta:.5}, k={k}"
        );

        // CE through both routes.
        let ce_reduced = solve_pair_2class(&base)?;
        let ce_numeric = if options.run_numeric {
            Some(solve_pair_numeric(&base, &numeric_options)?)
        } else {
            None
        };
        if let Some(n) = &ce_numeric {
            let gap = (n.objective_value - ce_reduced.objective_value).abs();
            summary.max_objective_gap = summary.max_objective_gap.max(gap);
            if gap > OBJECTIVE_AGREEMENT_TOL {
                fail(&mut summary, format!("{tag}: ce objective gap {gap:.3e}"));
            }
            summary.max_off_support_mass = summary
                .max_off_support_mass
                .max(n.off_support_mass(class_s, class_t));
        }
        if delta < d {
            summary.ce_active_trials += 1;
            if ce_reduced.beta < -BETA_SIGN_MARGIN {
                summary.ce_negative_rootfind += 1;
            } else {
                fail(
                    &mut summary,
                    format!("{tag}: ce rootfind beta {} not negative", ce_reduced.beta),
                );
            }
            if let Some(n) = &ce_numeric {
                if n.beta < -BETA_SIGN_MARGIN {
                    summary.ce_negative_numeric += 1;
                } else {
                    fail(
                        &mut summary,
                        format!("{tag}: ce numeric beta {} not negative", n.beta),
                    );
                }
            }
        } else {
            summary.ce_slack_trials += 1;
            if slack_ok(&ce_reduced, &base) {
                summary.ce_slack_ok_rootfind += 1;
            } else {
                fail(
                    &mut summary,
                    format!("{tag}: ce rootfind slack optimum is not the targets"),
                );
            }
            if let Some(n) = &ce_numeric {
                if slack_ok(n, &base) {
                    summary.ce_slack_ok_numeric += 1;
                } else {
                    fail(
                        &mut summary,
                        format!("{tag}: ce numeric slack optimum is not the targets"),
                    );
                }
            }
        }

        // Focal gamma = 1 through both routes.
        let fl_problem = base.with_loss(LossKind::Focal { gamma: 1.0 })?;
        let fl_reduced = solve_pair_2class(&fl_problem)?;
        let fl_numeric = if options.run_numeric {
            Some(solve_pair_numeric(&fl_problem, &numeric_options)?)
        } else {
            None
        };
        if let Some(n) = &fl_numeric {
            let gap = (n.objective_value - fl_reduced.objective_value).abs();
            summary.max_objective_gap = summary.max_objective_gap.max(gap);
            if gap > OBJECTIVE_AGREEMENT_TOL {
                fail(&mut summary, format!("{tag}: focal objective gap {gap:.3e}"));
            }
            summary.max_off_support_mass = summary
                .max_off_support_mass
                .max(n.off_support_mass(class_s, class_t));
        }
        if delta < d {
            summary.fl_tilt_trials += 1;
            if fl_reduced.beta > BETA_SIGN_MARGIN {
                summary.fl_positive_rootfind += 1;
            } else {
                fail(
                    &mut summary,
                    format!("{tag}: focal rootfind beta {} not positive", fl_reduced.beta),
                );
            }
            if let Some(n) = &fl_numeric {
                if n.beta > BETA_SIGN_MARGIN {
                    summary.fl_positive_numeric += 1;
                } else {
                    fail(
                        &mut summary,
                        format!("{tag}: focal numeric beta {} not positive", n.beta),
                    );
                }
            }
        }

        // L2 closed form against the projected solver.
        let l2_problem = base.with_loss(LossKind::L2)?;
        let l2_closed = solve_l2_closed(&l2_problem)?;
        summary.l2_max_abs_beta = summary.l2_max_abs_beta.max(l2_closed.beta.abs());
        if l2_closed.beta.abs() > BETA_SIGN_MARGIN {
            fail(
                &mut summary,
                format!("{tag}: l2 closed-form beta {} not balanced", l2_closed.beta),
            );
        }
        if options.run_numeric {
            let n = solve_pair_numeric(&l2_problem, &numeric_options)?;
            let gap = (n.objective_value - l2_closed.objective_value).abs();
            summary.max_objective_gap = summary.max_objective_gap.max(gap);
            if gap > OBJECTIVE_AGREEMENT_TOL {
                fail(&mut summary, format!("{tag}: l2 objective gap {gap:.3e}"));
            }
        }

        let worst_mass = summary.max_off_support_mass;
        if worst_mass > SUPPORT_MASS_TOL {
            fail(
                &mut summary,
                format!("{tag}: off-support mass {worst_mass:.3e}"),
            );
        }
    }
    Ok(summary)
}

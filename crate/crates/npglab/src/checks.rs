//! Verification harness: replay a run's traces against exact ground truth
//! and check the inequalities that drive the convergence guarantee.
//!
//! Checked per step, with the realized critic `q_hat = w_hat^T phi`:
//! - error bound: the visitation-weighted critic error
//!   `|E_d <Q - q_hat, pi - pi_t>|` stays below the recorded `tau_t`, for
//!   both comparator pairs `(d*, pi*)` and `(d^{t+1}, pi^{t+1})`;
//! - improvement: `<q_hat_s, pi^{t+1}_s - pi^t_s> >= 0` in every state, and
//!   the exact value drops by at most `tau_t / (1 - gamma)`;
//! - contraction: the potential shrinks by `(1 - 1/nu)` per step up to an
//!   additive `2 tau_t / (1 - gamma)`.
//!
//! The potential check takes `nu` as a parameter so a run can be audited
//! against a claimed contraction coefficient; claiming a smaller `nu` than
//! the measured mismatch coefficient is how a false claim gets caught.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{
    exact_q, exact_v, perf_diff, state_visitation, Mdp, StateDistribution, TabularPolicy,
};
use crate::policy::{three_point_residual, LogLinearPolicy};
use crate::solver::{IterateRecord, RunResult, StepSchedule};

/// Slack for replayed-inequality checks; the quantities involved are O(1)
/// to O(1/(1-gamma)) and assembled from linear solves.
pub const CHECK_SLACK: f64 = 1e-9;

fn policy_at(fm: &FeatureMap, theta: &nalgebra::DVector<f64>) -> Result<TabularPolicy> {
    LogLinearPolicy::with_theta(Arc::new(fm.clone()), theta.clone())?.to_tabular()
}

/// Signed excess of the critic-error bound: the largest value of
/// `|E_d <Q - q_hat, pi - pi_t>| - tau_t` over all steps and both
/// comparator pairs. At or below zero (up to slack) means the bound held.
pub fn critic_error_excess(mdp: &Mdp, fm: &FeatureMap, result: &RunResult) -> Result<f64> {
    let mu = mdp.start_distribution();
    let mut worst = f64::NEG_INFINITY;
    for t in 0..result.traces.len().saturating_sub(1) {
        let tr = &result.traces[t];
        let pi_t = policy_at(fm, &tr.theta)?;
        let pi_next = policy_at(fm, &result.traces[t + 1].theta)?;
        let q = exact_q(mdp, &pi_t)?;
        let q_hat = fm.q_values(&tr.w_hat);
        let d_next = state_visitation(mdp, &pi_next, &mu)?;

        let weighted = |d: &StateDistribution, pi: &TabularPolicy| -> f64 {
            let mut acc = 0.0;
            for s in 0..mdp.n_states() {
                let ds = d.prob(s);
                if ds == 0.0 {
                    continue;
                }
                for a in 0..mdp.n_actions() {
                    acc += ds * (q[(s, a)] - q_hat[(s, a)]) * (pi.prob(s, a) - pi_t.prob(s, a));
                }
            }
            acc.abs()
        };

        let tau_t = result.records[t].tau;
        let lhs_star = weighted(&result.d_star_mu, &result.pi_star);
        let lhs_next = weighted(&d_next, &pi_next);
        worst = worst.max(lhs_star - tau_t).max(lhs_next - tau_t);
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    Ok(worst)
}

/// Margins for the improvement guarantees.
#[derive(Clone, Copy, Debug)]
pub struct ImprovementMargins {
    /// Smallest per-state inner product `<q_hat_s, pi^{t+1}_s - pi^t_s>`
    /// over all steps; nonnegative (up to slack) means every state moved
    /// uphill for the realized critic.
    pub min_state_inner: f64,
    /// Smallest value of `V^{t+1}(mu) - V^t(mu) + tau_t / (1 - gamma)`;
    /// nonnegative means the exact value never dropped by more than the
    /// per-step error level allows.
    pub min_value_drop_margin: f64,
}

pub fn improvement_margins(mdp: &Mdp, fm: &FeatureMap, result: &RunResult) -> Result<ImprovementMargins> {
    let gamma = mdp.gamma();
    let mut min_inner = f64::INFINITY;
    let mut min_drop = f64::INFINITY;
    for t in 0..result.traces.len().saturating_sub(1) {
        let tr = &result.traces[t];
        let pi_t = policy_at(fm, &tr.theta)?;
        let pi_next = policy_at(fm, &result.traces[t + 1].theta)?;
        let q_hat = fm.q_values(&tr.w_hat);
        for s in 0..mdp.n_states() {
            let mut inner = 0.0;
            for a in 0..mdp.n_actions() {
                inner += q_hat[(s, a)] * (pi_next.prob(s, a) - pi_t.prob(s, a));
            }
            min_inner = min_inner.min(inner);
        }
        let drop = result.records[t + 1].v - result.records[t].v
            + result.records[t].tau / (1.0 - gamma);
        min_drop = min_drop.min(drop);
    }
    if result.traces.len() < 2 {
        min_inner = 0.0;
        min_drop = 0.0;
    }
    Ok(ImprovementMargins {
        min_state_inner: min_inner,
        min_value_drop_margin: min_drop,
    })
}

/// Signed excess of the potential contraction under a claimed coefficient:
/// the largest value of
/// `pot_{t+1} - (1 - 1/nu) pot_t - 2 tau_t / (1 - gamma)`
/// with potentials recomputed as
/// `pot_t = delta_t + kl*_t / ((1 - gamma) eta_t (nu - 1))`.
///
/// Holds (up to slack) when `nu` is at least the measured mismatch
/// coefficient and the step schedule grows at ratio `nu/(nu-1)` or faster.
pub fn potential_excess(records: &[IterateRecord], gamma: f64, nu: f64) -> Result<f64> {
    if nu.is_nan() || nu <= 1.0 {
        return Err(Error::Domain(format!(
            "contraction coefficient must be > 1, got {nu}"
        )));
    }
    let pot = |r: &IterateRecord| -> f64 {
        if nu.is_finite() {
            r.delta + r.kl_star / ((1.0 - gamma) * r.eta * (nu - 1.0))
        } else {
            r.delta
        }
    };
    let factor = if nu.is_finite() { 1.0 - 1.0 / nu } else { 1.0 };
    let mut worst = f64::NEG_INFINITY;
    for pair in records.windows(2) {
        let excess =
            pot(&pair[1]) - factor * pot(&pair[0]) - 2.0 * pair[0].tau / (1.0 - gamma);
        worst = worst.max(excess);
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    Ok(worst)
}

/// Largest residual of the performance-difference identity over random
/// MDP/policy/start-distribution triples.
pub fn perf_diff_sweep(n_instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..n_instances {
        let n_states = rng.gen_range(2..=8);
        let n_actions = rng.gen_range(2..=4);
        let gamma = [0.3, 0.6, 0.9][rng.gen_range(0..3)];
        let mdp = crate::generate::random_mdp(n_states, n_actions, gamma, &mut rng)?;
        let pi = crate::generate::random_policy(n_states, n_actions, &mut rng);
        let pi_bar = crate::generate::random_policy(n_states, n_actions, &mut rng);
        let mu = crate::generate::random_state_distribution(n_states, &mut rng);
        let lhs = {
            let v = exact_v(&mdp, &pi)?;
            let v_bar = exact_v(&mdp, &pi_bar)?;
            mu.as_slice()
                .iter()
                .enumerate()
                .map(|(s, m)| m * (v[s] - v_bar[s]))
                .sum::<f64>()
        };
        let rhs = perf_diff(&mdp, &pi, &pi_bar, &mu)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Largest residual of the mirror-step three-point identity over random
/// feature maps, parameters, critics, step sizes, and probe policies.
pub fn three_point_sweep(n_instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for i in 0..n_instances {
        let n_states = rng.gen_range(2..=6);
        let n_actions = rng.gen_range(2..=5);
        let fm = if i % 2 == 0 {
            crate::features::tabular_features(n_states, n_actions)
        } else {
            let dim = rng.gen_range(2..=n_states * n_actions);
            crate::features::random_projection(n_states, n_actions, dim, &mut rng)?
        };
        let theta = nalgebra::DVector::from_fn(fm.dim(), |_, _| rng.gen_range(-2.0..2.0));
        let w_hat = nalgebra::DVector::from_fn(fm.dim(), |_, _| rng.gen_range(-3.0..3.0));
        let eta = rng.gen_range(0.05..2.0);
        let policy = LogLinearPolicy::with_theta(Arc::new(fm.clone()), theta)?;
        let next = policy.npg_step(&w_hat, eta)?;
        let probe = crate::generate::random_policy(n_states, n_actions, &mut rng);
        let q_used = fm.q_values(&w_hat);
        let residual = three_point_residual(&policy, &next, &q_used, eta, &probe)?;
        worst = worst.max(residual);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Informational: the quantity is reported but nothing guarantees it.
    Report,
}

#[derive(Clone, Debug)]
pub struct CheckRow {
    pub name: String,
    pub status: CheckStatus,
    /// Worst-case value found (sign convention depends on the check).
    pub value: f64,
    /// Threshold the value was compared against (NaN for report rows).
    pub limit: f64,
    pub note: String,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != CheckStatus::Fail)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let status = match r.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Report => "INFO",
            };
            let _ = write!(out, "{status}  {:<26} value={: >13.6e}", r.name, r.value);
            if r.limit.is_finite() {
                let _ = write!(out, "  limit={: >13.6e}", r.limit);
            }
            if !r.note.is_empty() {
                let _ = write!(out, "  {}", r.note);
            }
            out.push('\n');
        }
        out
    }
}

/// Row that passes iff `value <= limit`.
pub fn bound_row(name: &str, value: f64, limit: f64, note: &str) -> CheckRow {
    CheckRow {
        name: name.into(),
        status: if value <= limit {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        value,
        limit,
        note: note.into(),
    }
}

/// Informational row carrying a measured value with no threshold.
pub fn report_row(name: &str, value: f64, note: &str) -> CheckRow {
    CheckRow {
        name: name.into(),
        status: CheckStatus::Report,
        value,
        limit: f64::NAN,
        note: note.into(),
    }
}

/// Audit a finished run: bound domination, both improvement claims, the
/// error-bound inequality, and (when the schedule supports it) the
/// potential contraction at the measured mismatch coefficient.
pub fn verify_run(
    mdp: &Mdp,
    fm: &FeatureMap,
    result: &RunResult,
    schedule: &StepSchedule,
) -> Result<VerifyReport> {
    let gamma = mdp.gamma();
    let nu = result.measured.nu_mu;
    let mut rows = Vec::new();

    let bound_excess = result
        .records
        .iter()
        .map(|r| r.delta - r.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    rows.push(bound_row(
        "value_gap_vs_bound",
        bound_excess,
        1e-8,
        "max delta - bound over iterations",
    ));

    rows.push(bound_row(
        "critic_error_bound",
        critic_error_excess(mdp, fm, result)?,
        CHECK_SLACK,
        "max weighted critic error minus tau",
    ));

    let margins = improvement_margins(mdp, fm, result)?;
    rows.push(bound_row(
        "state_improvement",
        -margins.min_state_inner,
        CHECK_SLACK,
        "negated min per-state update inner product",
    ));
    rows.push(bound_row(
        "value_drop",
        -margins.min_value_drop_margin,
        CHECK_SLACK,
        "negated min of value change plus tau/(1-gamma)",
    ));

    // The contraction argument needs the step ratio to keep up with
    // nu/(nu-1); otherwise the inequality is only informational.
    let schedule_matched = match schedule {
        StepSchedule::Geometric { ratio, .. } => {
            nu.is_finite() && nu > 1.0 && *ratio + 1e-9 >= nu / (nu - 1.0)
        }
        StepSchedule::Constant { .. } => !nu.is_finite(),
    };
    if nu > 1.0 {
        let excess = potential_excess(&result.records, gamma, nu)?;
        rows.push(if schedule_matched {
            bound_row(
                "potential_contraction",
                excess,
                CHECK_SLACK,
                "max recursion excess at measured nu",
            )
        } else {
            report_row(
                "potential_contraction",
                excess,
                "schedule ratio below nu/(nu-1); recursion not guaranteed",
            )
        });
    }

    let kl_rise = result
        .records
        .windows(2)
        .map(|p| p[1].kl_star - p[0].kl_star)
        .fold(0.0_f64, f64::max);
    rows.push(report_row(
        "kl_star_monotonicity",
        kl_rise,
        "max per-step KL* increase; not guaranteed by the theory",
    ));

    let last = result.records.last().expect("run has at least one record");
    rows.push(report_row(
        "final_gap",
        last.delta,
        &format!(
            "converged={} truncated={} iterations={}",
            result.converged,
            result.truncated,
            last.t
        ),
    ));

    Ok(VerifyReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tabular_features;
    use crate::mdp::StateActionDistribution;
    use crate::oracle::OracleConfig;
    use crate::solver::{default_eta0, geometric_schedule, run};

    fn matched_exact_run(
        seed: u64,
        gamma: f64,
        iterations: usize,
    ) -> (Mdp, FeatureMap, RunResult, StepSchedule) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = crate::generate::random_mdp(5, 3, gamma, &mut rng).unwrap();
        let fm = tabular_features(5, 3);
        let rho = StateActionDistribution::uniform(5, 3);
        // Probe run to measure nu, then the real run with a matched schedule.
        let probe = run(
            &mdp,
            &fm,
            &StepSchedule::Constant { eta0: 1.0 },
            &OracleConfig::Exact,
            0,
            &rho,
            None,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let nu = probe.measured.nu_mu;
        let schedule = geometric_schedule(nu, default_eta0(&mdp).unwrap()).unwrap();
        let result = run(
            &mdp,
            &fm,
            &schedule,
            &OracleConfig::Exact,
            iterations,
            &rho,
            None,
            &mut rng,
        )
        .unwrap();
        (mdp, fm, result, schedule)
    }

    #[test]
    fn exact_run_passes_all_asserted_checks() {
        let (mdp, fm, result, schedule) = matched_exact_run(21, 0.8, 40);
        let report = verify_run(&mdp, &fm, &result, &schedule).unwrap();
        assert!(report.passed(), "report:\n{}", report.render());
        let rendered = report.render();
        assert!(rendered.contains("value_gap_vs_bound"));
        assert!(rendered.contains("potential_contraction"));
    }

    #[test]
    fn noisy_run_satisfies_error_bound_and_improvement_margins() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mdp = crate::generate::random_mdp(4, 3, 0.8, &mut rng).unwrap();
        let fm = tabular_features(4, 3);
        let rho = StateActionDistribution::uniform(4, 3);
        let probe = run(
            &mdp,
            &fm,
            &StepSchedule::Constant { eta0: 1.0 },
            &OracleConfig::Exact,
            0,
            &rho,
            None,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let schedule = geometric_schedule(probe.measured.nu_mu, default_eta0(&mdp).unwrap()).unwrap();
        let oracle = OracleConfig::Noisy {
            eps_stat_target: 1e-3,
        };
        let result = run(&mdp, &fm, &schedule, &oracle, 30, &rho, None, &mut rng).unwrap();
        assert!(critic_error_excess(&mdp, &fm, &result).unwrap() <= CHECK_SLACK);
        let margins = improvement_margins(&mdp, &fm, &result).unwrap();
        assert!(margins.min_state_inner >= -CHECK_SLACK);
        assert!(margins.min_value_drop_margin >= -CHECK_SLACK);
        assert!(potential_excess(&result.records, 0.8, result.measured.nu_mu).unwrap() <= CHECK_SLACK);
    }

    #[test]
    fn contraction_check_flags_overclaimed_coefficient() {
        let (mdp, _fm, result, _schedule) = matched_exact_run(55, 0.9, 60);
        let nu = result.measured.nu_mu;
        let honest = potential_excess(&result.records, mdp.gamma(), nu).unwrap();
        assert!(honest <= CHECK_SLACK, "honest excess {honest}");
        // Claiming twice-as-fast contraction must be caught.
        let claimed = potential_excess(&result.records, mdp.gamma(), nu / 2.0).unwrap();
        assert!(
            claimed > CHECK_SLACK,
            "overclaimed nu should violate the recursion, excess {claimed}"
        );
    }

    #[test]
    fn identity_sweeps_stay_within_tolerance() {
        assert!(perf_diff_sweep(25, 7).unwrap() <= 1e-9);
        assert!(three_point_sweep(25, 7).unwrap() <= 1e-8);
    }

    #[test]
    fn potential_excess_rejects_bad_coefficient() {
        assert!(potential_excess(&[], 0.5, 1.0).is_err());
        assert!(potential_excess(&[], 0.5, 0.5).is_err());
        assert_eq!(potential_excess(&[], 0.5, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn report_rendering_shows_status_words() {
        let report = VerifyReport {
            rows: vec![
                bound_row("sample_pass", 0.0, 1.0, ""),
                bound_row("sample_fail", 2.0, 1.0, "over"),
                report_row("sample_info", 0.5, "fyi"),
            ],
        };
        assert!(!report.passed());
        let text = report.render();
        assert!(text.contains("PASS  sample_pass"));
        assert!(text.contains("FAIL  sample_fail"));
        assert!(text.contains("INFO  sample_info"));
    }
}

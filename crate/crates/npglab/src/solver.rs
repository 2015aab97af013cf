//! Natural policy gradient loop with per-iteration measurement.
//!
//! Each iteration of [`run`] records, against exact linear-solve ground
//! truth: the value gap `delta_t = V*(mu) - V^t(mu)`, the visitation-weighted
//! KL to the optimal policy, the realized approximation errors of the linear
//! critic (bias at the two comparison distributions, statistical error at the
//! fit distribution), the relative condition number of the involved
//! covariances, the per-iteration error level `tau_t`, and the potential
//! function whose contraction drives the convergence guarantee. A post-pass
//! fills the predicted upper bound on `delta_t` from the run's measured
//! constants (or from user-supplied nominal ones).

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{
    best_fit_q, covariance, relative_condition_number, weighted_loss, FeatureMap,
};
use crate::mdp::{
    exact_q_from_v, exact_v, mismatch_coefficient, optimal_policy, state_action_visitation,
    state_visitation, Mdp, StateActionDistribution, StateDistribution, TabularPolicy,
};
use crate::oracle::{
    default_horizon, measure_stat_error, oracle_monte_carlo, oracle_noisy, OracleConfig,
};
use crate::policy::{kl_star, LogLinearPolicy};
use crate::tol;

/// Step-size schedule `eta_t`.
#[derive(Clone, Debug, PartialEq)]
pub enum StepSchedule {
    Constant { eta0: f64 },
    /// `eta_t = eta0 * ratio^t`. The convergence guarantee uses
    /// `ratio = nu / (nu - 1)` for the measured mismatch coefficient `nu`.
    Geometric { eta0: f64, ratio: f64 },
}

impl StepSchedule {
    pub fn eta(&self, t: usize) -> f64 {
        match self {
            StepSchedule::Constant { eta0 } => *eta0,
            StepSchedule::Geometric { eta0, ratio } => eta0 * ratio.powi(t as i32),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (eta0, ratio) = match self {
            StepSchedule::Constant { eta0 } => (*eta0, 1.0),
            StepSchedule::Geometric { eta0, ratio } => (*eta0, *ratio),
        };
        if !eta0.is_finite() || eta0 <= 0.0 {
            return Err(Error::Config(format!(
                "step size eta0 must be finite and > 0, got {eta0}"
            )));
        }
        if !ratio.is_finite() || ratio < 1.0 {
            return Err(Error::Config(format!(
                "schedule ratio must be finite and >= 1, got {ratio}"
            )));
        }
        Ok(())
    }
}

/// Geometric schedule matched to a mismatch coefficient: ratio `nu/(nu-1)`.
pub fn geometric_schedule(nu: f64, eta0: f64) -> Result<StepSchedule> {
    if !nu.is_finite() || nu <= 1.0 {
        return Err(Error::Domain(format!(
            "geometric schedule needs a finite mismatch coefficient > 1, got {nu}"
        )));
    }
    let schedule = StepSchedule::Geometric {
        eta0,
        ratio: nu / (nu - 1.0),
    };
    schedule.validate()?;
    Ok(schedule)
}

/// Default initial step size `(1 - gamma)/gamma * ln |A|`.
///
/// Under a uniform initial policy this guarantees the step is large enough
/// for the potential contraction from the first iteration on.
pub fn default_eta0(mdp: &Mdp) -> Result<f64> {
    let gamma = mdp.gamma();
    if gamma <= 0.0 {
        return Err(Error::Domain(
            "default step size is undefined at gamma = 0; set eta0 explicitly".into(),
        ));
    }
    Ok((1.0 - gamma) / gamma * (mdp.n_actions() as f64).ln())
}

/// One CSV row of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateRecord {
    pub t: usize,
    pub eta: f64,
    /// `V^t(mu)`.
    pub v: f64,
    /// `V*(mu) - V^t(mu)`.
    pub delta: f64,
    /// `sum_s d*_mu(s) KL(pi*_s || pi^t_s)`.
    pub kl_star: f64,
    /// Critic loss at the optimal comparison distribution `d*_mu x Unif`.
    pub eps_bias_dstar: f64,
    /// Critic loss at the next iterate's distribution `d^{t+1}_mu x Unif`.
    pub eps_bias_next: f64,
    /// Realized statistical error of the oracle draw at `d_rho^t`.
    pub eps_stat: f64,
    /// Per-iteration error level combining the three sources above.
    pub tau: f64,
    /// Predicted upper bound on `delta` at this iteration.
    pub bound: f64,
    /// Potential `delta_t + KL*_t / ((1-gamma) eta_t (nu-1))`.
    pub potential: f64,
    /// True when this iterate's logit spread exceeded the saturation limit
    /// and the run stopped here.
    pub overflow: bool,
}

/// Per-iteration internals kept for the verification harness.
#[derive(Clone, Debug)]
pub struct IterationTrace {
    pub theta: DVector<f64>,
    /// Population least-squares critic at `d_rho^t`.
    pub w_exact: DVector<f64>,
    /// Oracle output actually used for the step.
    pub w_hat: DVector<f64>,
    pub eta: f64,
}

/// Maxima of the assumption quantities over a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasuredConstants {
    pub nu_mu: f64,
    pub kappa: f64,
    pub eps_stat: f64,
    pub eps_bias: f64,
}

/// User-supplied constants for the bound column instead of measured ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    pub nu: f64,
    pub kappa: f64,
    pub eps_stat: f64,
    pub eps_bias: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub records: Vec<IterateRecord>,
    pub traces: Vec<IterationTrace>,
    /// Policy at the last recorded iterate.
    pub policy: LogLinearPolicy,
    pub measured: MeasuredConstants,
    pub pi_star: TabularPolicy,
    pub d_star_mu: StateDistribution,
    pub v_star_mu: f64,
    /// Value gap fell below the convergence floor.
    pub converged: bool,
    /// Logits saturated (or a step overflowed) and the run stopped early.
    pub truncated: bool,
}

/// Per-iteration error level
/// `tau = 2 sqrt(|A| kappa eps_stat / (1-gamma)) + 2 sqrt(|A| eps_bias)`.
pub fn tau(n_actions: usize, gamma: f64, kappa: f64, eps_stat: f64, eps_bias: f64) -> f64 {
    let a = n_actions as f64;
    let stat_term = if eps_stat == 0.0 {
        0.0
    } else {
        2.0 * (a * kappa * eps_stat / (1.0 - gamma)).sqrt()
    };
    let bias_term = if eps_bias == 0.0 {
        0.0
    } else {
        2.0 * (a * eps_bias).sqrt()
    };
    stat_term + bias_term
}

/// Asymptotic part of the value-gap bound (what remains after the
/// transient has contracted away):
/// `2 nu sqrt(|A| kappa eps_stat / (1-gamma)^3)
///  + 2 nu sqrt(|A| eps_bias) / (1-gamma)`.
pub fn bound_floor(
    nu: f64,
    gamma: f64,
    n_actions: usize,
    kappa: f64,
    eps_stat: f64,
    eps_bias: f64,
) -> f64 {
    let a = n_actions as f64;
    let stat_term = if eps_stat == 0.0 {
        0.0
    } else {
        2.0 * nu * (a * kappa * eps_stat / (1.0 - gamma).powi(3)).sqrt()
    };
    let bias_term = if eps_bias == 0.0 {
        0.0
    } else {
        2.0 * nu * (a * eps_bias).sqrt() / (1.0 - gamma)
    };
    stat_term + bias_term
}

/// Predicted value-gap bound at iteration `t`:
/// `(1 - 1/nu)^t * 2/(1-gamma)` plus [`bound_floor`].
pub fn predicted_bound(
    t: usize,
    nu: f64,
    gamma: f64,
    n_actions: usize,
    kappa: f64,
    eps_stat: f64,
    eps_bias: f64,
) -> f64 {
    let contraction = if nu.is_finite() {
        (1.0 - 1.0 / nu).powi(t as i32)
    } else {
        1.0
    };
    let transient = contraction * 2.0 / (1.0 - gamma);
    transient + bound_floor(nu, gamma, n_actions, kappa, eps_stat, eps_bias)
}

/// Closed form for the linear recursion `a_{k+1} <= alpha a_k + b`:
/// `a_k <= alpha^k a_0 + b / (1 - alpha)`.
pub fn recursion_bound(alpha: f64, b: f64, a0: f64, k: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!(
            "contraction factor must lie in [0, 1), got {alpha}"
        )));
    }
    if b.is_nan() || a0.is_nan() || b < 0.0 || a0 < 0.0 {
        return Err(Error::Domain(
            "recursion bound needs b >= 0 and a0 >= 0".into(),
        ));
    }
    Ok(alpha.powi(k as i32) * a0 + b / (1.0 - alpha))
}

fn potential_value(delta: f64, kl: f64, gamma: f64, eta: f64, nu: f64) -> f64 {
    if !nu.is_finite() {
        return delta;
    }
    if nu <= 1.0 {
        return f64::INFINITY;
    }
    delta + kl / ((1.0 - gamma) * eta * (nu - 1.0))
}

/// Run natural policy gradient for up to `iterations` steps from a uniform
/// log-linear policy, measuring everything per iteration.
///
/// `rho` is the fit distribution for the critic; the value gap and the
/// mismatch coefficient use the MDP's start distribution `mu`. Stops early
/// when the gap falls below the convergence floor or a policy's logit
/// spread exceeds the saturation limit (the stop row carries `overflow`).
#[allow(clippy::too_many_arguments)]
pub fn run<R: Rng>(
    mdp: &Mdp,
    fm: &FeatureMap,
    schedule: &StepSchedule,
    oracle: &OracleConfig,
    iterations: usize,
    rho: &StateActionDistribution,
    bound_from: Option<&BoundConstants>,
    rng: &mut R,
) -> Result<RunResult> {
    fm.check_mdp(mdp)?;
    schedule.validate()?;
    oracle.validate()?;
    let gamma = mdp.gamma();
    let n_actions = mdp.n_actions();
    let mu = mdp.start_distribution();

    let (pi_star, v_star) = optimal_policy(mdp, tol::OPT_POLICY_TOL)?;
    let v_star_mu: f64 = mu
        .as_slice()
        .iter()
        .zip(v_star.iter())
        .map(|(m, v)| m * v)
        .sum();
    let d_star_mu = state_visitation(mdp, &pi_star, &mu)?;
    let nu_mu = mismatch_coefficient(&d_star_mu, &mu, gamma);
    let dstar_unif = d_star_mu.times_uniform_actions(n_actions);
    let sigma_star = covariance(fm, &dstar_unif)?;
    // The condition-number denominator is the covariance at the fit
    // distribution rho itself; the visitation from rho dominates
    // (1 - gamma) rho, which is where the 1/(1-gamma) in tau comes from.
    let sigma_rho_base = covariance(fm, rho)?;

    let mut policy = LogLinearPolicy::uniform_init(Arc::new(fm.clone()));
    let mut records: Vec<IterateRecord> = Vec::with_capacity(iterations + 1);
    let mut traces: Vec<IterationTrace> = Vec::with_capacity(iterations + 1);
    let mut kappa_max = 0.0_f64;
    let mut eps_stat_max = 0.0_f64;
    let mut eps_bias_max = 0.0_f64;
    let mut converged = false;
    let mut truncated = false;

    for t in 0..=iterations {
        let pi_t = policy.to_tabular()?;
        let v_t = exact_v(mdp, &pi_t)?;
        let q_t = exact_q_from_v(mdp, &v_t);
        let v_mu: f64 = mu
            .as_slice()
            .iter()
            .zip(v_t.iter())
            .map(|(m, v)| m * v)
            .sum();
        let delta = v_star_mu - v_mu;
        let kl_t = kl_star(&pi_star, &pi_t, &d_star_mu)?;
        let eta_t = schedule.eta(t);

        let d_rho = state_action_visitation(mdp, &pi_t, rho)?;
        let sigma_rho = covariance(fm, &d_rho)?;
        let (w_t, _) = best_fit_q(&q_t, fm, &d_rho)?;
        let eps_bias_dstar = weighted_loss(&q_t, fm, &w_t, &dstar_unif);

        let overflow = policy.max_logit_spread() > tol::LOGIT_SPREAD_LIMIT;
        let stop_here = overflow || delta <= tol::DELTA_FLOOR || t == iterations;

        // Step-dependent quantities only exist when another step is taken.
        let (w_hat, eps_stat, eps_bias_next, kappa_t, next_policy) = if stop_here {
            let kappa_t = relative_condition_number(&sigma_star, &sigma_rho_base)?;
            (w_t.clone(), 0.0, eps_bias_dstar, kappa_t, None)
        } else {
            let w_hat = match oracle {
                OracleConfig::Exact => w_t.clone(),
                OracleConfig::Noisy { eps_stat_target } => {
                    oracle_noisy(&w_t, &sigma_rho, *eps_stat_target, rng)?
                }
                OracleConfig::MonteCarlo {
                    n_samples,
                    horizon,
                    ridge,
                } => {
                    let h = horizon.unwrap_or_else(|| default_horizon(gamma));
                    oracle_monte_carlo(mdp, &pi_t, fm, rho, *n_samples, h, *ridge, rng)?.w_hat
                }
            };
            let eps_stat = measure_stat_error(&w_t, &w_hat, &sigma_rho);
            match policy.npg_step(&w_hat, eta_t) {
                Ok(next) => {
                    let pi_next = next.to_tabular()?;
                    let d_next = state_visitation(mdp, &pi_next, &mu)?;
                    let dnext_unif = d_next.times_uniform_actions(n_actions);
                    let eps_bias_next = weighted_loss(&q_t, fm, &w_t, &dnext_unif);
                    let sigma_next = covariance(fm, &dnext_unif)?;
                    let kappa_t = relative_condition_number(&sigma_star, &sigma_rho_base)?
                        .max(relative_condition_number(&sigma_next, &sigma_rho_base)?);
                    (w_hat, eps_stat, eps_bias_next, kappa_t, Some(next))
                }
                Err(Error::Overflow(_)) => {
                    // The step itself produced non-finite logits; stop at the
                    // current iterate and flag the run as truncated.
                    let kappa_t = relative_condition_number(&sigma_star, &sigma_rho_base)?;
                    (w_hat, eps_stat, eps_bias_dstar, kappa_t, None)
                }
                Err(e) => return Err(e),
            }
        };

        let eps_bias_iter = eps_bias_dstar.max(eps_bias_next);
        let tau_t = tau(n_actions, gamma, kappa_t, eps_stat, eps_bias_iter);
        let potential = potential_value(delta, kl_t, gamma, eta_t, nu_mu);

        kappa_max = kappa_max.max(kappa_t);
        eps_stat_max = eps_stat_max.max(eps_stat);
        eps_bias_max = eps_bias_max.max(eps_bias_iter);

        records.push(IterateRecord {
            t,
            eta: eta_t,
            v: v_mu,
            delta,
            kl_star: kl_t,
            eps_bias_dstar,
            eps_bias_next,
            eps_stat,
            tau: tau_t,
            bound: f64::NAN,
            potential,
            overflow,
        });
        traces.push(IterationTrace {
            theta: policy.theta().clone(),
            w_exact: w_t,
            w_hat,
            eta: eta_t,
        });

        if delta <= tol::DELTA_FLOOR {
            converged = true;
        }
        if overflow {
            truncated = true;
            break;
        }
        match next_policy {
            Some(next) if !stop_here => policy = next,
            Some(_) | None => {
                if !stop_here {
                    truncated = true;
                }
                break;
            }
        }
    }

    let measured = MeasuredConstants {
        nu_mu,
        kappa: kappa_max,
        eps_stat: eps_stat_max,
        eps_bias: eps_bias_max,
    };
    let (b_nu, b_kappa, b_stat, b_bias) = match bound_from {
        Some(c) => (c.nu, c.kappa, c.eps_stat, c.eps_bias),
        None => (nu_mu, kappa_max, eps_stat_max, eps_bias_max),
    };
    for rec in &mut records {
        rec.bound = predicted_bound(rec.t, b_nu, gamma, n_actions, b_kappa, b_stat, b_bias);
    }

    Ok(RunResult {
        records,
        traces,
        policy,
        measured,
        pi_star,
        d_star_mu,
        v_star_mu,
        converged,
        truncated,
    })
}

pub const CSV_HEADER: &str =
    "t,eta,v,delta,kl_star,eps_bias_dstar,eps_bias_next,eps_stat,tau,bound,potential,overflow";

fn format_float(x: f64) -> String {
    // 17 significant digits round-trip f64 exactly and keep output
    // byte-identical across runs.
    format!("{x:.16e}")
}

/// Serialize records to the run CSV format (byte-stable).
pub fn records_to_csv(records: &[IterateRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 256);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            format_float(r.eta),
            format_float(r.v),
            format_float(r.delta),
            format_float(r.kl_star),
            format_float(r.eps_bias_dstar),
            format_float(r.eps_bias_next),
            format_float(r.eps_stat),
            format_float(r.tau),
            format_float(r.bound),
            format_float(r.potential),
            u8::from(r.overflow),
        );
    }
    out
}

/// Parse the run CSV format back into records.
pub fn records_from_csv(text: &str) -> Result<Vec<IterateRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?;
    if header.trim_end() != CSV_HEADER {
        return Err(Error::Parse(format!(
            "unexpected CSV header: {header:?}"
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected 12",
                i + 2,
                fields.len()
            )));
        }
        let num = |j: usize| -> Result<f64> {
            fields[j]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {} field {}: {}", i + 2, j, e)))
        };
        records.push(IterateRecord {
            t: fields[0]
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("row {} field 0: {}", i + 2, e)))?,
            eta: num(1)?,
            v: num(2)?,
            delta: num(3)?,
            kl_star: num(4)?,
            eps_bias_dstar: num(5)?,
            eps_bias_next: num(6)?,
            eps_stat: num(7)?,
            tau: num(8)?,
            bound: num(9)?,
            potential: num(10)?,
            overflow: match fields[11].trim_end() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse(format!(
                        "row {}: overflow flag must be 0 or 1, got {:?}",
                        i + 2,
                        other
                    )))
                }
            },
        });
    }
    Ok(records)
}

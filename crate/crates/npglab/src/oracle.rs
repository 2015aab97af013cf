//! Critic oracles: ways of producing the update direction `w_hat`.
//!
//! The exact oracle returns the population least-squares minimizer `w_t`
//! under the current visitation distribution. The noisy oracle perturbs it so
//! the statistical error `(w_t - w_hat)^T Sigma (w_t - w_hat)` hits a target
//! exactly, which turns the statistical-error assumption into a controlled
//! experimental knob. The Monte-Carlo oracle estimates `w_hat` from sampled
//! visitation pairs and truncated rollout returns.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{best_fit, Covariance, FeatureMap};
use crate::linalg;
use crate::mdp::{
    rollout_return, sample_visitation, state_action_visitation, Mdp, StateActionDistribution,
    TabularPolicy,
};
use crate::tol;

/// Which critic oracle a run uses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleConfig {
    /// Population least squares under the exact visitation distribution.
    #[default]
    Exact,
    /// Exact fit plus calibrated noise with
    /// `(w - w_hat)^T Sigma (w - w_hat) = eps_stat_target` exactly.
    Noisy { eps_stat_target: f64 },
    /// Ridge regression on sampled pairs and truncated rollout returns.
    MonteCarlo {
        n_samples: usize,
        /// Rollout truncation; defaults to [`default_horizon`] of the MDP's
        /// discount when absent.
        #[serde(default)]
        horizon: Option<usize>,
        #[serde(default)]
        ridge: f64,
    },
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            OracleConfig::Exact => Ok(()),
            OracleConfig::Noisy { eps_stat_target } => {
                if !eps_stat_target.is_finite() || *eps_stat_target < 0.0 {
                    return Err(Error::Config(format!(
                        "eps_stat_target must be finite and >= 0, got {eps_stat_target}"
                    )));
                }
                Ok(())
            }
            OracleConfig::MonteCarlo {
                n_samples, ridge, ..
            } => {
                if *n_samples == 0 {
                    return Err(Error::Config("n_samples must be at least 1".into()));
                }
                if !ridge.is_finite() || *ridge < 0.0 {
                    return Err(Error::Config(format!(
                        "ridge must be finite and >= 0, got {ridge}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Default rollout horizon: truncation error of the discounted return is
/// below [`tol::MC_TRUNCATION`], i.e. `gamma^H / (1 - gamma) <= 1e-3`.
pub fn default_horizon(gamma: f64) -> usize {
    if gamma == 0.0 {
        return 1;
    }
    ((tol::MC_TRUNCATION * (1.0 - gamma)).ln() / gamma.ln()).ceil() as usize
}

/// Population least-squares critic: fit the exact action values of `pi`
/// under its visitation distribution from `rho`.
pub fn oracle_exact(
    mdp: &Mdp,
    pi: &TabularPolicy,
    fm: &FeatureMap,
    rho: &StateActionDistribution,
) -> Result<DVector<f64>> {
    let d_rho = state_action_visitation(mdp, pi, rho)?;
    Ok(best_fit(mdp, pi, fm, &d_rho)?.0)
}

/// Perturb `w` with isotropic noise restricted to the range of `sigma` and
/// rescaled so the statistical error equals `eps_target` exactly.
///
/// With `eps_target = 0` the input is returned unchanged. Errors when
/// `sigma` is numerically zero but a positive error is requested: no
/// direction carries any energy there.
pub fn oracle_noisy<R: Rng>(
    w: &DVector<f64>,
    sigma: &Covariance,
    eps_target: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !eps_target.is_finite() || eps_target < 0.0 {
        return Err(Error::Domain(format!(
            "eps_target must be finite and >= 0, got {eps_target}"
        )));
    }
    if sigma.nrows() != w.len() || sigma.ncols() != w.len() {
        return Err(Error::Shape("covariance size mismatch".into()));
    }
    if eps_target == 0.0 {
        return Ok(w.clone());
    }
    let (vals, vecs) = linalg::sym_eig(sigma);
    let lam_max = vals.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tol::EIG_RANK_REL * lam_max;
    let range_cols: Vec<usize> = (0..vals.len())
        .filter(|&j| vals[j] > cutoff && vals[j] > 0.0)
        .collect();
    if range_cols.is_empty() {
        return Err(Error::Domain(
            "covariance is numerically zero; positive noise target is unreachable".into(),
        ));
    }
    for _ in 0..16 {
        // Isotropic draw projected onto the range of sigma.
        let raw = DVector::from_fn(w.len(), |_, _| StandardNormal.sample(rng));
        let mut delta = DVector::zeros(w.len());
        for &j in &range_cols {
            let u = vecs.column(j);
            delta += u * u.dot(&raw);
        }
        let energy = delta.dot(&(sigma * &delta));
        if energy > 0.0 && energy.is_finite() {
            let scale = (eps_target / energy).sqrt();
            return Ok(w + delta * scale);
        }
    }
    Err(Error::Numerics(
        "noise direction with positive energy not found".into(),
    ))
}

/// Result of a Monte-Carlo critic fit.
#[derive(Clone, Debug)]
pub struct MonteCarloFit {
    pub w_hat: DVector<f64>,
    /// Rank of the sampled Gram matrix at the relative eigenvalue cutoff;
    /// below the feature dimension the ridge term (or the minimum-norm
    /// cutoff) decided the unidentified directions.
    pub effective_rank: usize,
    pub n_samples: usize,
}

/// Monte-Carlo critic: draw `n_samples` pairs from the visitation
/// distribution, label each with one truncated rollout return, and solve
/// ridge-regularized least squares in feature space.
#[allow(clippy::too_many_arguments)]
pub fn oracle_monte_carlo<R: Rng>(
    mdp: &Mdp,
    pi: &TabularPolicy,
    fm: &FeatureMap,
    rho: &StateActionDistribution,
    n_samples: usize,
    horizon: usize,
    ridge: f64,
    rng: &mut R,
) -> Result<MonteCarloFit> {
    fm.check_mdp(mdp)?;
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    if ridge < 0.0 {
        return Err(Error::Domain("ridge must be >= 0".into()));
    }
    let d = fm.dim();
    let mut gram = DMatrix::zeros(d, d);
    let mut moment = DVector::zeros(d);
    for _ in 0..n_samples {
        let (s, a) = sample_visitation(mdp, pi, rho, rng)?;
        let y = rollout_return(mdp, pi, s, a, horizon, rng);
        let row = fm.row(s, a).transpose();
        gram += &row * row.transpose();
        moment += row * y;
    }
    gram /= n_samples as f64;
    moment /= n_samples as f64;

    let (vals, vecs) = linalg::sym_eig(&gram);
    let lam_max = vals.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tol::EIG_RANK_REL * lam_max;
    let mut w_hat = DVector::zeros(d);
    let mut effective_rank = 0usize;
    for j in 0..vals.len() {
        let lam = vals[j].max(0.0);
        let identified = vals[j] > cutoff && vals[j] > 0.0;
        if identified {
            effective_rank += 1;
        }
        let denom = lam + ridge;
        // With no ridge, unidentified directions are dropped (minimum-norm
        // behaviour); with ridge they are shrunk like everything else.
        if denom > 0.0 && (ridge > 0.0 || identified) {
            let u = vecs.column(j);
            w_hat += u * (u.dot(&moment) / denom);
        }
    }
    Ok(MonteCarloFit {
        w_hat,
        effective_rank,
        n_samples,
    })
}

/// Realized statistical error `(w - w_hat)^T sigma (w - w_hat)`.
pub fn measure_stat_error(w: &DVector<f64>, w_hat: &DVector<f64>, sigma: &Covariance) -> f64 {
    let e = w - w_hat;
    e.dot(&(sigma * &e)).max(0.0)
}

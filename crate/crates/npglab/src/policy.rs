//! Log-linear policies `pi_theta(a|s) proportional to exp(theta^T phi(s, a))`
//! and the mirror-descent machinery around them.
//!
//! The update `theta <- theta + eta w` multiplies each state's distribution
//! by `exp(eta * w^T phi(s, a))` and renormalizes; that makes it an exact
//! entropy-mirror-descent step for the realized linear critic
//! `q(s, a) = w^T phi(s, a)`, which is what the three-point identity checks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{StateDistribution, TabularPolicy};
use crate::tol;

/// A policy parametrized by `theta` over a shared feature map.
#[derive(Clone, Debug)]
pub struct LogLinearPolicy {
    theta: DVector<f64>,
    features: Arc<FeatureMap>,
}

impl LogLinearPolicy {
    /// The zero-parameter policy: uniform over actions in every state.
    pub fn uniform_init(features: Arc<FeatureMap>) -> Self {
        let dim = features.dim();
        Self {
            theta: DVector::zeros(dim),
            features,
        }
    }

    pub fn with_theta(features: Arc<FeatureMap>, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != features.dim() {
            return Err(Error::Shape(format!(
                "theta has length {}, feature dimension is {}",
                theta.len(),
                features.dim()
            )));
        }
        Ok(Self { theta, features })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn features(&self) -> &Arc<FeatureMap> {
        &self.features
    }

    /// Raw logits `theta^T phi(s, a)` as a states-by-actions table.
    pub fn logits(&self) -> DMatrix<f64> {
        self.features.q_values(&self.theta)
    }

    /// Largest within-state logit spread `max_a z - min_a z`; the softmax is
    /// numerically deterministic once this passes ~700.
    pub fn max_logit_spread(&self) -> f64 {
        let z = self.logits();
        let mut spread = 0.0_f64;
        for s in 0..self.features.n_states() {
            let row = z.row(s);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            spread = spread.max(hi - lo);
        }
        spread
    }

    /// Per-state log-probabilities, computed with max-subtraction.
    pub fn log_probs(&self) -> Result<DMatrix<f64>> {
        let z = self.logits();
        let (n_s, n_a) = (self.features.n_states(), self.features.n_actions());
        let mut out = DMatrix::zeros(n_s, n_a);
        for s in 0..n_s {
            let row = z.row(s);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for a in 0..n_a {
                let zv = row[a];
                if !zv.is_finite() || zv.abs() > tol::LOGIT_OVERFLOW_LIMIT {
                    return Err(Error::Overflow(format!(
                        "logit at (s={s}, a={a}) is {zv}"
                    )));
                }
            }
            let log_z: f64 = row.iter().map(|&zv| (zv - m).exp()).sum::<f64>().ln();
            for a in 0..n_a {
                out[(s, a)] = (row[a] - m) - log_z;
            }
        }
        Ok(out)
    }

    /// Materialize the softmax distribution at every state.
    ///
    /// Errors with the overflow sentinel if any logit is non-finite or has
    /// magnitude beyond [`tol::LOGIT_OVERFLOW_LIMIT`]. Rows are normalized
    /// explicitly, so they sum to 1 to machine precision even at large
    /// spreads (where losing probabilities underflow to exact zero).
    pub fn to_tabular(&self) -> Result<TabularPolicy> {
        let log_p = self.log_probs()?;
        let (n_s, n_a) = (self.features.n_states(), self.features.n_actions());
        let mut rows = Vec::with_capacity(n_s);
        for s in 0..n_s {
            let mut row: Vec<f64> = (0..n_a).map(|a| log_p[(s, a)].exp()).collect();
            let sum: f64 = row.iter().sum();
            for x in row.iter_mut() {
                *x /= sum;
            }
            rows.push(row);
        }
        TabularPolicy::new(rows)
    }

    /// One natural-policy-gradient step: `theta <- theta + eta * w_hat`.
    pub fn npg_step(&self, w_hat: &DVector<f64>, eta: f64) -> Result<LogLinearPolicy> {
        if w_hat.len() != self.theta.len() {
            return Err(Error::Shape("update direction length mismatch".into()));
        }
        Ok(Self {
            theta: &self.theta + w_hat * eta,
            features: Arc::clone(&self.features),
        })
    }

    /// Serialize as `{theta, feature_ref}`; `feature_ref` names the feature
    /// map file the parameters belong to.
    pub fn to_json(&self, feature_ref: &str) -> String {
        let file = PolicyFile {
            theta: self.theta.iter().cloned().collect(),
            feature_ref: feature_ref.to_string(),
        };
        serde_json::to_string_pretty(&file).expect("policy serialization cannot fail")
    }

    /// Parse `{theta, feature_ref}` against an already-loaded feature map;
    /// returns the policy and the stored reference for the caller to check.
    pub fn from_json(s: &str, features: Arc<FeatureMap>) -> Result<(Self, String)> {
        let file: PolicyFile = serde_json::from_str(s)?;
        let theta = DVector::from_vec(file.theta);
        let policy = Self::with_theta(features, theta)?;
        Ok((policy, file.feature_ref))
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct PolicyFile {
    theta: Vec<f64>,
    feature_ref: String,
}

/// KL divergence between two categorical distributions, with the conventions
/// `0 log 0 = 0` and `p > 0, q = 0 => infinity`.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        acc += pi * (pi / qi).ln();
    }
    // Roundoff can leave a tiny negative value for near-identical inputs.
    acc.max(0.0)
}

/// Per-state KL divergences `KL(p_s, q_s)` between two tabular policies.
pub fn kl(p: &TabularPolicy, q: &TabularPolicy) -> Result<Vec<f64>> {
    if p.n_states() != q.n_states() || p.n_actions() != q.n_actions() {
        return Err(Error::Shape("policies have different shapes".into()));
    }
    Ok((0..p.n_states())
        .map(|s| kl_categorical(p.row(s), q.row(s)))
        .collect())
}

/// Comparator-weighted KL `E_{s ~ d_star} KL(pi_star_s, pi_s)`: the potential
/// term the step-size schedule has to pay down.
pub fn kl_star(
    pi_star: &TabularPolicy,
    pi: &TabularPolicy,
    d_star: &StateDistribution,
) -> Result<f64> {
    if d_star.len() != pi_star.n_states() {
        return Err(Error::Shape("weighting distribution length mismatch".into()));
    }
    let per_state = kl(pi_star, pi)?;
    let mut acc = 0.0;
    for (s, &k) in per_state.iter().enumerate() {
        let w = d_star.prob(s);
        if w == 0.0 {
            continue;
        }
        acc += w * k;
    }
    Ok(acc)
}

/// Residual of the three-point mirror-descent identity at every state,
/// reduced to its maximum absolute value:
///
/// ```text
/// KL(probe_s, pi_t_s) - KL(probe_s, pi_next_s) - KL(pi_next_s, pi_t_s)
///   + eta * <q_used(s, .), pi_next_s - probe_s>  =  0
/// ```
///
/// The identity is exact (up to roundoff) whenever `pi_next` came from an
/// `npg_step` and `q_used` is the realized linear critic `w_hat^T phi`; with
/// any other `q_used` (for example the true action values under general
/// features) the residual measures how far the executed update is from the
/// ideal mirror step and should be reported, not asserted.
pub fn three_point_residual(
    p_t: &LogLinearPolicy,
    p_next: &LogLinearPolicy,
    q_used: &DMatrix<f64>,
    eta: f64,
    probe: &TabularPolicy,
) -> Result<f64> {
    let fm = p_t.features();
    let (n_s, n_a) = (fm.n_states(), fm.n_actions());
    if q_used.nrows() != n_s || q_used.ncols() != n_a {
        return Err(Error::Shape("q table shape mismatch".into()));
    }
    if probe.n_states() != n_s || probe.n_actions() != n_a {
        return Err(Error::Shape("probe policy shape mismatch".into()));
    }
    let log_t = p_t.log_probs()?;
    let log_next = p_next.log_probs()?;
    let pi_next = p_next.to_tabular()?;

    let mut worst = 0.0_f64;
    for s in 0..n_s {
        // KL(probe, pi_t) - KL(probe, pi_next) telescopes to
        // sum_a probe(a) (log pi_next - log pi_t); the probe entropy cancels.
        let mut kl_probe_diff = 0.0;
        let mut kl_next_t = 0.0;
        let mut inner = 0.0;
        for a in 0..n_a {
            let diff_log = log_next[(s, a)] - log_t[(s, a)];
            let pr = probe.prob(s, a);
            if pr > 0.0 {
                kl_probe_diff += pr * diff_log;
            }
            let pn = pi_next.prob(s, a);
            if pn > 0.0 {
                kl_next_t += pn * diff_log;
            }
            inner += q_used[(s, a)] * (pn - pr);
        }
        let residual = kl_probe_diff - kl_next_t + eta * inner;
        worst = worst.max(residual.abs());
    }
    Ok(worst)
}

//! Feature maps over state-action pairs and the linear-fit machinery built
//! on them.
//!
//! A [`FeatureMap`] stores one row `phi(s, a)` per pair, flattened as
//! `s * n_actions + a`. On top of it live feature covariances
//! `Sigma_v = E_{(s,a) ~ v} [phi phi^T]`, the relative condition number
//! between two covariances (the largest generalized eigenvalue, infinite
//! when the numerator has energy outside the denominator's range), and
//! weighted least-squares fits of exact action values.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{Mdp, StateActionDistribution, TabularPolicy};
use crate::tol;

/// Symmetric positive semidefinite feature covariance.
pub type Covariance = DMatrix<f64>;

/// Dense feature map: row `s * n_actions + a` holds `phi(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    phi: DMatrix<f64>,
}

/// On-disk form of a feature map. `layout` documents the row convention for
/// readers of the file.
#[derive(Serialize, Deserialize)]
struct FeatureMapFile {
    dim: usize,
    n_states: usize,
    n_actions: usize,
    layout: String,
    phi: Vec<Vec<f64>>,
}

const LAYOUT: &str = "row = s * n_actions + a";

impl FeatureMap {
    pub fn new(n_states: usize, n_actions: usize, phi: DMatrix<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Domain("feature map needs at least one pair".into()));
        }
        if phi.nrows() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "phi has {} rows, expected n_states * n_actions = {}",
                phi.nrows(),
                n_states * n_actions
            )));
        }
        if phi.ncols() == 0 {
            return Err(Error::Shape("feature dimension must be at least 1".into()));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("phi entries must be finite".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            dim: phi.ncols(),
            phi,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// Feature row for the pair `(s, a)`.
    pub fn row(
        &self,
        s: usize,
        a: usize,
    ) -> nalgebra::MatrixView1xX<'_, f64, nalgebra::U1, nalgebra::Dyn> {
        self.phi.row(s * self.n_actions + a)
    }

    /// Largest squared feature norm `B = max_{s,a} ||phi(s, a)||^2`.
    pub fn max_sq_norm(&self) -> f64 {
        (0..self.phi.nrows())
            .map(|i| self.phi.row(i).norm_squared())
            .fold(0.0, f64::max)
    }

    /// The linear function `w` evaluated at every pair, as a states-by-actions
    /// table.
    pub fn q_values(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let flat = &self.phi * w;
        DMatrix::from_fn(self.n_states, self.n_actions, |s, a| {
            flat[s * self.n_actions + a]
        })
    }

    pub fn check_mdp(&self, mdp: &Mdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::Shape(format!(
                "feature map is {}x{}, MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let rows = (0..self.phi.nrows())
            .map(|i| self.phi.row(i).iter().cloned().collect())
            .collect();
        let file = FeatureMapFile {
            dim: self.dim,
            n_states: self.n_states,
            n_actions: self.n_actions,
            layout: LAYOUT.to_string(),
            phi: rows,
        };
        serde_json::to_string_pretty(&file).expect("feature serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: FeatureMapFile = serde_json::from_str(s)?;
        if file.phi.len() != file.n_states * file.n_actions {
            return Err(Error::Shape("phi row count disagrees with header".into()));
        }
        for row in &file.phi {
            if row.len() != file.dim {
                return Err(Error::Shape("phi row length disagrees with dim".into()));
            }
        }
        let phi = DMatrix::from_fn(file.phi.len(), file.dim, |i, j| file.phi[i][j]);
        Self::new(file.n_states, file.n_actions, phi)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// One-hot features: `dim = n_states * n_actions`, `phi` the identity. Linear
/// functions of these features are exactly the tabular functions, so the
/// approximation bias is zero.
pub fn tabular_features(n_states: usize, n_actions: usize) -> FeatureMap {
    let n = n_states * n_actions;
    FeatureMap::new(n_states, n_actions, DMatrix::identity(n, n)).expect("identity is valid")
}

/// Random projection features: i.i.d. Gaussian entries scaled by
/// `1/sqrt(dim)`. With `dim < n_states * n_actions` these induce genuine
/// approximation bias.
pub fn random_projection<R: Rng>(
    n_states: usize,
    n_actions: usize,
    dim: usize,
    rng: &mut R,
) -> Result<FeatureMap> {
    if dim == 0 {
        return Err(Error::Domain("projection dimension must be at least 1".into()));
    }
    let scale = 1.0 / (dim as f64).sqrt();
    let phi = DMatrix::from_fn(n_states * n_actions, dim, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        x * scale
    });
    FeatureMap::new(n_states, n_actions, phi)
}

/// Generate a Linear MDP and its feature map by the mixture-model
/// construction: `phi(s, a)` is a distribution over `dim` latent topics,
/// each topic `j` carries a next-state distribution `m_j` and a reward level
/// `v_j` in `[0, 1]`, and
///
/// ```text
/// P(s'|s, a) = sum_j phi_j(s, a) m_j(s'),    r(s, a) = sum_j phi_j(s, a) v_j.
/// ```
///
/// Action values of every policy are then exactly linear in `phi`, so the
/// best-fit loss is zero under any evaluation distribution. In the degenerate
/// case `dim = n_states * n_actions` the features are one-hot and the
/// construction reduces to an ordinary tabular MDP.
pub fn linear_mdp_generate<R: Rng>(
    dim: usize,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<(Mdp, FeatureMap)> {
    if dim == 0 || dim > n_states * n_actions {
        return Err(Error::Domain(format!(
            "linear MDP dimension must lie in [1, n_states * n_actions], got {dim}"
        )));
    }
    let n_pairs = n_states * n_actions;
    let phi = if dim == n_pairs {
        DMatrix::identity(n_pairs, n_pairs)
    } else {
        let mut m = DMatrix::zeros(n_pairs, dim);
        for i in 0..n_pairs {
            let row = dirichlet(dim, rng);
            for j in 0..dim {
                m[(i, j)] = row[j];
            }
        }
        m
    };
    let topics: Vec<Vec<f64>> = (0..dim).map(|_| dirichlet(n_states, rng)).collect();
    let levels: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();

    let mut reward = vec![vec![0.0; n_actions]; n_states];
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let i = s * n_actions + a;
            let mut r = 0.0;
            for j in 0..dim {
                let w = phi[(i, j)];
                r += w * levels[j];
                for sp in 0..n_states {
                    transition[s][a][sp] += w * topics[j][sp];
                }
            }
            reward[s][a] = r.clamp(0.0, 1.0);
            // Renormalize away accumulated roundoff so validation at 1e-12
            // cannot trip on a long mixture sum.
            let sum: f64 = transition[s][a].iter().sum();
            for x in transition[s][a].iter_mut() {
                *x /= sum;
            }
        }
    }
    let mu = vec![1.0 / n_states as f64; n_states];
    let mdp = Mdp::new(n_states, n_actions, gamma, mu, reward, transition)?;
    let fm = FeatureMap::new(n_states, n_actions, phi)?;
    Ok((mdp, fm))
}

fn dirichlet<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n)
        .map(|_| -(rng.gen::<f64>().max(1e-300)).ln())
        .collect();
    let sum: f64 = row.iter().sum();
    for x in row.iter_mut() {
        *x /= sum;
    }
    row
}

/// Feature covariance under a state-action distribution:
/// `Sigma_v = sum_{s,a} v(s, a) phi(s, a) phi(s, a)^T`.
pub fn covariance(fm: &FeatureMap, v: &StateActionDistribution) -> Result<Covariance> {
    if v.len() != fm.n_states() * fm.n_actions() {
        return Err(Error::Shape("distribution length mismatch".into()));
    }
    // Scale rows by v and contract: Sigma = Phi^T diag(v) Phi.
    let mut scaled = fm.phi().clone();
    for (i, &w) in v.as_slice().iter().enumerate() {
        scaled.row_mut(i).scale_mut(w);
    }
    Ok(fm.phi().transpose() * scaled)
}

/// Relative condition number between two covariances:
/// `kappa = sup_w (w^T num w) / (w^T den w)`, the largest generalized
/// eigenvalue of the pair.
///
/// Returns infinity when `num` has more than [`tol::RANGE_RESIDUAL_TOL`]
/// energy outside the range of `den` (the supremum is unbounded there).
/// Returns 0 for a numerically zero numerator. Equals 1 when both arguments
/// are the same positive semidefinite matrix.
pub fn relative_condition_number(num: &Covariance, den: &Covariance) -> Result<f64> {
    if num.nrows() != num.ncols() || den.nrows() != den.ncols() || num.nrows() != den.nrows() {
        return Err(Error::Shape("covariances must be square and same size".into()));
    }
    let (vals, vecs) = linalg::sym_eig(den);
    let lam_max = vals.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tol::EIG_RANK_REL * lam_max;

    // Energy of the numerator along the denominator's null space.
    let mut null_residual = 0.0_f64;
    let mut range_cols = Vec::new();
    for (j, &lam) in vals.iter().enumerate() {
        if lam > cutoff && lam > 0.0 {
            range_cols.push(j);
        } else {
            let u = vecs.column(j);
            null_residual = null_residual.max((num * u).abs().max());
        }
    }
    if null_residual > tol::RANGE_RESIDUAL_TOL {
        return Ok(f64::INFINITY);
    }
    if range_cols.is_empty() {
        // Denominator is numerically zero; the numerator passed the residual
        // check, so it is numerically zero too.
        return Ok(0.0);
    }

    // Whiten the range of the denominator and take the top eigenvalue there.
    let d = den.nrows();
    let r = range_cols.len();
    let mut w = DMatrix::zeros(d, r);
    for (k, &j) in range_cols.iter().enumerate() {
        let scale = 1.0 / vals[j].sqrt();
        for i in 0..d {
            w[(i, k)] = vecs[(i, j)] * scale;
        }
    }
    let m = w.transpose() * num * &w;
    // Symmetrize away the roundoff asymmetry before the eigensolve.
    let m = (&m + m.transpose()) * 0.5;
    Ok(linalg::max_eigenvalue_sym(&m).max(0.0))
}

/// Crude upper bound for the relative condition number that needs no
/// numerator: `B / sigma_min(Sigma_rho)` with `B` the largest squared feature
/// norm. Infinite when `Sigma_rho` is singular to working precision.
///
/// Dominates `relative_condition_number(Sigma_v, Sigma_rho)` for any
/// distribution `v`, because `lambda_max(Sigma_v) <= B`.
pub fn kappa_bound_crude(fm: &FeatureMap, rho: &StateActionDistribution) -> Result<f64> {
    let sigma = covariance(fm, rho)?;
    let (vals, _) = linalg::sym_eig(&sigma);
    let lam_max = vals.iter().cloned().fold(0.0_f64, f64::max);
    let lam_min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if lam_min <= tol::EIG_RANK_REL * lam_max || lam_min <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(fm.max_sq_norm() / lam_min)
}

/// Weighted squared-error loss of the linear function `w` against an action
/// value table: `L = sum_{s,a} v(s, a) (q(s, a) - phi(s, a)^T w)^2`.
pub fn weighted_loss(
    q: &DMatrix<f64>,
    fm: &FeatureMap,
    w: &DVector<f64>,
    v: &StateActionDistribution,
) -> f64 {
    let pred = fm.phi() * w;
    let n_a = fm.n_actions();
    let mut loss = 0.0;
    for s in 0..fm.n_states() {
        for a in 0..n_a {
            let weight = v.as_slice()[s * n_a + a];
            if weight == 0.0 {
                continue;
            }
            let err = q[(s, a)] - pred[s * n_a + a];
            loss += weight * err * err;
        }
    }
    loss
}

/// Minimum-norm weighted least-squares fit of an action value table:
/// minimizes `weighted_loss` over `w`, returning the minimizer and its loss.
///
/// Pairs with zero weight do not constrain the fit; rank deficiency resolves
/// to the minimum-norm minimizer via the SVD cutoff.
pub fn best_fit_q(
    q: &DMatrix<f64>,
    fm: &FeatureMap,
    v: &StateActionDistribution,
) -> Result<(DVector<f64>, f64)> {
    if v.len() != fm.n_states() * fm.n_actions() {
        return Err(Error::Shape("distribution length mismatch".into()));
    }
    let n = v.len();
    let mut a = fm.phi().clone();
    let mut b = DVector::zeros(n);
    let n_act = fm.n_actions();
    for i in 0..n {
        let sqrt_w = v.as_slice()[i].sqrt();
        a.row_mut(i).scale_mut(sqrt_w);
        b[i] = sqrt_w * q[(i / n_act, i % n_act)];
    }
    let w = linalg::min_norm_lstsq(&a, &b)?;
    let loss = weighted_loss(q, fm, &w, v);
    Ok((w, loss))
}

/// [`best_fit_q`] with the action values of `pi` computed exactly first.
pub fn best_fit(
    mdp: &Mdp,
    pi: &TabularPolicy,
    fm: &FeatureMap,
    v: &StateActionDistribution,
) -> Result<(DVector<f64>, f64)> {
    fm.check_mdp(mdp)?;
    let q = crate::mdp::exact_q(mdp, pi)?;
    best_fit_q(&q, fm, v)
}

/// Transfer bias: fit the action values of `pi` under `fit_dist`, then
/// evaluate the loss of that fit under `eval_dist`. This is the quantity the
/// approximation-bias assumption controls.
pub fn bias_error(
    mdp: &Mdp,
    pi: &TabularPolicy,
    fm: &FeatureMap,
    fit_dist: &StateActionDistribution,
    eval_dist: &StateActionDistribution,
) -> Result<f64> {
    fm.check_mdp(mdp)?;
    let q = crate::mdp::exact_q(mdp, pi)?;
    let (w, _) = best_fit_q(&q, fm, fit_dist)?;
    Ok(weighted_loss(&q, fm, &w, eval_dist))
}

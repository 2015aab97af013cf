//! Finite discounted MDPs with exact evaluation by linear solves.
//!
//! Everything here is ground truth: value functions solve the Bellman system
//! `(I - gamma P_pi) V = r_pi`, discounted visitation measures solve the
//! adjoint system, and both are verified against their residuals. Monte-Carlo
//! entry points ([`sample_visitation`], [`rollout_return`]) exist so sampled
//! estimates can be compared against the same exact quantities.
//!
//! Conventions:
//! - rewards are bounded in `[0, 1]`, so values live in `[0, 1/(1-gamma)]`;
//! - state-action layouts are flattened row-major as `s * n_actions + a`;
//! - all distributions are dense probability vectors validated on entry.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// A finite discounted MDP with dense transition and reward tables.
///
/// `transition[s][a][s']` is the probability of moving to `s'` after taking
/// action `a` in state `s`; `reward[s][a]` is the deterministic reward;
/// `mu` is the start-state distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    mu: Vec<f64>,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
}

impl Mdp {
    /// Build and validate an MDP. Rejects malformed shapes, rewards outside
    /// `[0, 1]`, `gamma` outside `[0, 1)`, and rows that are not probability
    /// distributions.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        mu: Vec<f64>,
        reward: Vec<Vec<f64>>,
        transition: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let mdp = Self {
            n_states,
            n_actions,
            gamma,
            mu,
            reward,
            transition,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Parse an MDP from its JSON document form and validate it.
    pub fn from_json(s: &str) -> Result<Self> {
        let mdp: Mdp = serde_json::from_str(s)?;
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MDP serialization cannot fail")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::Domain(
                "n_states and n_actions must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Domain(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.mu.len() != self.n_states {
            return Err(Error::Shape(format!(
                "mu has length {}, expected n_states = {}",
                self.mu.len(),
                self.n_states
            )));
        }
        validate_distribution(&self.mu, "mu")?;
        if self.reward.len() != self.n_states {
            return Err(Error::Shape("reward must have n_states rows".into()));
        }
        for (s, row) in self.reward.iter().enumerate() {
            if row.len() != self.n_actions {
                return Err(Error::Shape(format!(
                    "reward row s={s} has length {}, expected n_actions = {}",
                    row.len(),
                    self.n_actions
                )));
            }
            for (a, &r) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Domain(format!(
                        "reward (s={s}, a={a}) = {r} outside [0, 1]"
                    )));
                }
            }
        }
        if self.transition.len() != self.n_states {
            return Err(Error::Shape("transition must have n_states rows".into()));
        }
        for (s, per_action) in self.transition.iter().enumerate() {
            if per_action.len() != self.n_actions {
                return Err(Error::Shape(format!(
                    "transition row s={s} has {} actions, expected {}",
                    per_action.len(),
                    self.n_actions
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != self.n_states {
                    return Err(Error::Shape(format!(
                        "transition (s={s}, a={a}) has length {}, expected n_states = {}",
                        row.len(),
                        self.n_states
                    )));
                }
                validate_distribution(row, &format!("transition (s={s}, a={a})"))?;
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Start-state distribution as a validated [`StateDistribution`].
    pub fn start_distribution(&self) -> StateDistribution {
        StateDistribution::new(self.mu.clone()).expect("validated at construction")
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    /// State-to-state transition matrix under `pi`:
    /// `P_pi[s][s'] = sum_a pi(a|s) P(s'|s, a)`.
    pub fn transition_matrix(&self, pi: &TabularPolicy) -> DMatrix<f64> {
        let n = self.n_states;
        let mut m = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let p_a = pi.prob(s, a);
                if p_a == 0.0 {
                    continue;
                }
                for sp in 0..n {
                    m[(s, sp)] += p_a * self.transition[s][a][sp];
                }
            }
        }
        m
    }

    /// Expected one-step reward under `pi`: `r_pi[s] = sum_a pi(a|s) r(s, a)`.
    pub fn reward_vector(&self, pi: &TabularPolicy) -> DVector<f64> {
        DVector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions)
                .map(|a| pi.prob(s, a) * self.reward[s][a])
                .sum()
        })
    }
}

fn validate_distribution(p: &[f64], what: &str) -> Result<()> {
    for (i, &x) in p.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Domain(format!(
                "{what}: entry {i} = {x} is not a valid probability"
            )));
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol::DIST_SUM_TOL {
        return Err(Error::Domain(format!(
            "{what}: entries sum to {sum}, expected 1 within {:.1e}",
            tol::DIST_SUM_TOL
        )));
    }
    Ok(())
}

/// Clamp solver roundoff: entries in `(-DIST_NEG_TOL, 0)` become 0; anything
/// more negative is a genuine numerical failure.
fn sanitize_solved_distribution(mut p: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    for x in p.iter_mut() {
        if *x < 0.0 {
            if *x < -tol::DIST_NEG_TOL {
                return Err(Error::Numerics(format!(
                    "{what}: solved entry {x} is negative beyond roundoff"
                )));
            }
            *x = 0.0;
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol::DIST_NEG_TOL {
        return Err(Error::Numerics(format!(
            "{what}: solved entries sum to {sum}"
        )));
    }
    Ok(p)
}

/// A probability distribution over states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDistribution(Vec<f64>);

impl StateDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        validate_distribution(&p, "state distribution")?;
        Ok(Self(p))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, s: usize) -> Self {
        let mut p = vec![0.0; n];
        p[s] = 1.0;
        Self(p)
    }

    pub fn prob(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Product with the uniform action distribution: the state-action
    /// distribution `v(s, a) = p(s) / n_actions`.
    pub fn times_uniform_actions(&self, n_actions: usize) -> StateActionDistribution {
        let mut v = Vec::with_capacity(self.0.len() * n_actions);
        for &ps in &self.0 {
            for _ in 0..n_actions {
                v.push(ps / n_actions as f64);
            }
        }
        StateActionDistribution(v)
    }
}

/// A probability distribution over state-action pairs, flattened as
/// `s * n_actions + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateActionDistribution(Vec<f64>);

impl StateActionDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        validate_distribution(&p, "state-action distribution")?;
        Ok(Self(p))
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let n = n_states * n_actions;
        Self(vec![1.0 / n as f64; n])
    }

    pub fn prob(&self, s: usize, a: usize, n_actions: usize) -> f64 {
        self.0[s * n_actions + a]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Marginal distribution over states.
    pub fn state_marginal(&self, n_actions: usize) -> StateDistribution {
        let n_states = self.0.len() / n_actions;
        let mut m = vec![0.0; n_states];
        for (i, &p) in self.0.iter().enumerate() {
            m[i / n_actions] += p;
        }
        StateDistribution(m)
    }
}

/// A stochastic tabular policy: `probs[s][a] = pi(a|s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape("policy must cover at least one state".into()));
        }
        let n_actions = probs[0].len();
        for (s, row) in probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Shape(format!(
                    "policy row s={s} has length {}, expected {}",
                    row.len(),
                    n_actions
                )));
            }
            validate_distribution(row, &format!("policy row s={s}"))?;
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    /// Deterministic policy taking `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![vec![0.0; n_actions]; actions.len()];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::Domain(format!(
                    "action {a} out of range at state {s}"
                )));
            }
            probs[s][a] = 1.0;
        }
        Ok(Self { probs })
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    /// The action a deterministic policy takes at `s`; the argmax entry for a
    /// stochastic one.
    pub fn greedy_action(&self, s: usize) -> usize {
        let mut best = 0;
        for a in 1..self.n_actions() {
            if self.probs[s][a] > self.probs[s][best] {
                best = a;
            }
        }
        best
    }

    fn check_compatible(&self, mdp: &Mdp) -> Result<()> {
        if self.n_states() != mdp.n_states() || self.n_actions() != mdp.n_actions() {
            return Err(Error::Shape(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states(),
                self.n_actions(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Exact state values of `pi`: solves `(I - gamma P_pi) V = r_pi` and checks
/// the residual. Entries land in `[0, 1/(1-gamma)]` because rewards are in
/// `[0, 1]`.
pub fn exact_v(mdp: &Mdp, pi: &TabularPolicy) -> Result<DVector<f64>> {
    pi.check_compatible(mdp)?;
    let n = mdp.n_states();
    let p_pi = mdp.transition_matrix(pi);
    let a = DMatrix::identity(n, n) - p_pi * mdp.gamma();
    let r_pi = mdp.reward_vector(pi);
    crate::linalg::solve_checked(&a, &r_pi, "Bellman value system")
}

/// Exact action values from an already-computed state value vector:
/// `Q(s, a) = r(s, a) + gamma * sum_s' P(s'|s, a) V(s')`.
pub fn exact_q_from_v(mdp: &Mdp, v: &DVector<f64>) -> DMatrix<f64> {
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    DMatrix::from_fn(n_s, n_a, |s, a| {
        let cont: f64 = mdp.transition_row(s, a)
            .iter()
            .enumerate()
            .map(|(sp, &p)| p * v[sp])
            .sum();
        mdp.reward(s, a) + mdp.gamma() * cont
    })
}

/// Exact action values of `pi` as an `n_states x n_actions` table.
pub fn exact_q(mdp: &Mdp, pi: &TabularPolicy) -> Result<DMatrix<f64>> {
    let v = exact_v(mdp, pi)?;
    Ok(exact_q_from_v(mdp, &v))
}

/// Discounted state visitation of `pi` from `start`:
/// `d(s) = (1-gamma) * sum_t gamma^t P(s_t = s)`, solved from
/// `(I - gamma P_pi^T) d = (1-gamma) start`.
pub fn state_visitation(
    mdp: &Mdp,
    pi: &TabularPolicy,
    start: &StateDistribution,
) -> Result<StateDistribution> {
    pi.check_compatible(mdp)?;
    if start.len() != mdp.n_states() {
        return Err(Error::Shape("start distribution length mismatch".into()));
    }
    let n = mdp.n_states();
    let p_pi_t = mdp.transition_matrix(pi).transpose();
    let a = DMatrix::identity(n, n) - p_pi_t * mdp.gamma();
    let b = DVector::from_column_slice(start.as_slice()) * (1.0 - mdp.gamma());
    let d = crate::linalg::solve_checked(&a, &b, "state visitation system")?;
    let d = sanitize_solved_distribution(d.iter().cloned().collect(), "state visitation")?;
    Ok(StateDistribution(d))
}

/// Discounted state-action visitation where the time-0 pair is drawn from
/// `rho` and all later actions follow `pi`:
/// `d(s, a) = (1-gamma) * sum_t gamma^t P(s_t = s, a_t = a)`.
///
/// Satisfies `d >= (1-gamma) * rho` elementwise: the time-0 term is kept in
/// full. The solve reduces to a state-space system because the pair chain
/// factorizes through the state after the first step; the full pair-level
/// fixed point is still verified against its residual.
pub fn state_action_visitation(
    mdp: &Mdp,
    pi: &TabularPolicy,
    rho: &StateActionDistribution,
) -> Result<StateActionDistribution> {
    pi.check_compatible(mdp)?;
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    if rho.len() != n_s * n_a {
        return Err(Error::Shape("rho length mismatch".into()));
    }
    let gamma = mdp.gamma();

    // Arrivals from the time-0 pair: m1(s') = sum_{s,a} rho(s,a) P(s'|s,a).
    let mut m1 = DVector::zeros(n_s);
    for s in 0..n_s {
        for a in 0..n_a {
            let w = rho.prob(s, a, n_a);
            if w == 0.0 {
                continue;
            }
            for sp in 0..n_s {
                m1[sp] += w * mdp.transition_row(s, a)[sp];
            }
        }
    }

    // g(s) = (1-gamma) sum_{t>=1} gamma^t P(s_t = s) solves
    // (I - gamma P_pi^T) g = gamma (1-gamma) m1.
    let p_pi_t = mdp.transition_matrix(pi).transpose();
    let a_mat = DMatrix::identity(n_s, n_s) - p_pi_t * gamma;
    let b = m1 * (gamma * (1.0 - gamma));
    let g = crate::linalg::solve_checked(&a_mat, &b, "state-action visitation system")?;

    let mut d = vec![0.0; n_s * n_a];
    for s in 0..n_s {
        for a in 0..n_a {
            d[s * n_a + a] = (1.0 - gamma) * rho.prob(s, a, n_a) + pi.prob(s, a) * g[s];
        }
    }

    // Verify the pair-level fixed point d = (1-gamma) rho + gamma M^T d,
    // where M[(s,a),(s',a')] = P(s'|s,a) pi(a'|s').
    let mut arrivals = vec![0.0; n_s];
    for s in 0..n_s {
        for a in 0..n_a {
            let w = d[s * n_a + a];
            if w == 0.0 {
                continue;
            }
            for (arr, p) in arrivals.iter_mut().zip(mdp.transition_row(s, a)) {
                *arr += w * p;
            }
        }
    }
    let mut max_residual = 0.0_f64;
    for s in 0..n_s {
        for a in 0..n_a {
            let rhs = (1.0 - gamma) * rho.prob(s, a, n_a) + gamma * pi.prob(s, a) * arrivals[s];
            max_residual = max_residual.max((d[s * n_a + a] - rhs).abs());
        }
    }
    if max_residual > tol::SOLVE_RESIDUAL_TOL {
        return Err(Error::Numerics(format!(
            "state-action visitation residual {max_residual:.3e}"
        )));
    }

    let d = sanitize_solved_distribution(d, "state-action visitation")?;
    Ok(StateActionDistribution(d))
}

/// Optimal policy by value iteration to sup-norm tolerance
/// `tol * (1-gamma) / (2 gamma)`, followed by greedy extraction with ties
/// broken toward the lowest action index.
///
/// The returned value vector is the exact evaluation of the extracted policy,
/// so it is itself a valid `V^pi` and sits within `tol` of the optimum.
pub fn optimal_policy(mdp: &Mdp, tol: f64) -> Result<(TabularPolicy, DVector<f64>)> {
    if tol <= 0.0 {
        return Err(Error::Domain("optimal_policy tolerance must be > 0".into()));
    }
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let threshold = if gamma > 0.0 {
        tol * (1.0 - gamma) / (2.0 * gamma)
    } else {
        f64::INFINITY
    };

    let mut v = DVector::zeros(n_s);
    let max_sweeps = 10_000_000usize;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let q = exact_q_from_v(mdp, &v);
        let v_next = DVector::from_fn(n_s, |s, _| {
            (0..n_a).map(|a| q[(s, a)]).fold(f64::NEG_INFINITY, f64::max)
        });
        let delta = (&v_next - &v).abs().max();
        v = v_next;
        if delta <= threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerics(
            "value iteration did not reach its stopping threshold".into(),
        ));
    }

    let q = exact_q_from_v(mdp, &v);
    let mut actions = vec![0usize; n_s];
    for s in 0..n_s {
        let mut best = 0usize;
        for a in 1..n_a {
            // Strict improvement only: ties keep the lowest action index.
            if q[(s, a)] > q[(s, best)] {
                best = a;
            }
        }
        actions[s] = best;
    }
    let pi_star = TabularPolicy::deterministic(&actions, n_a)?;
    let v_star = exact_v(mdp, &pi_star)?;
    Ok((pi_star, v_star))
}

/// Performance-difference form of the value gap:
/// `(1/(1-gamma)) E_{s ~ d_mu^{pi_bar}} sum_a Q^pi(s, a) (pi(a|s) - pi_bar(a|s))`.
///
/// Equals `V^pi(mu) - V^{pi_bar}(mu)` exactly; the identity tests pin the
/// residual below [`tol::PERF_DIFF_TOL`].
pub fn perf_diff(
    mdp: &Mdp,
    pi: &TabularPolicy,
    pi_bar: &TabularPolicy,
    mu: &StateDistribution,
) -> Result<f64> {
    let d = state_visitation(mdp, pi_bar, mu)?;
    let q = exact_q(mdp, pi)?;
    let mut acc = 0.0;
    for s in 0..mdp.n_states() {
        let ds = d.prob(s);
        if ds == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for a in 0..mdp.n_actions() {
            inner += q[(s, a)] * (pi.prob(s, a) - pi_bar.prob(s, a));
        }
        acc += ds * inner;
    }
    Ok(acc / (1.0 - mdp.gamma()))
}

/// Distribution-mismatch coefficient
/// `nu = (1/(1-gamma)) max_s d_star(s) / mu(s)`, with the convention
/// `0 / 0 = 0`. Returns infinity when `mu` has no mass on a state that
/// `d_star` visits. Always at least 1 for valid inputs.
pub fn mismatch_coefficient(d_star: &StateDistribution, mu: &StateDistribution, gamma: f64) -> f64 {
    let mut max_ratio = 0.0_f64;
    for s in 0..d_star.len() {
        let num = d_star.prob(s);
        let den = mu.prob(s);
        if num == 0.0 {
            continue;
        }
        if den == 0.0 {
            return f64::INFINITY;
        }
        max_ratio = max_ratio.max(num / den);
    }
    max_ratio / (1.0 - gamma)
}

/// Draw one index from a dense probability vector by inverse CDF.
///
/// Falls back to the last positive entry if accumulated roundoff leaves the
/// draw above the final cumulative sum.
pub(crate) fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draw one pair from the discounted state-action visitation of `pi` by
/// simulation: the time-0 pair comes from `rho`, the walk continues with
/// probability `gamma` per step, and later actions follow `pi`.
///
/// The returned pair is distributed exactly as `state_action_visitation`
/// computes in closed form.
pub fn sample_visitation<R: Rng>(
    mdp: &Mdp,
    pi: &TabularPolicy,
    rho: &StateActionDistribution,
    rng: &mut R,
) -> Result<(usize, usize)> {
    pi.check_compatible(mdp)?;
    let n_a = mdp.n_actions();
    if rho.len() != mdp.n_states() * n_a {
        return Err(Error::Shape("rho length mismatch".into()));
    }
    let flat = sample_index(rho.as_slice(), rng);
    let (mut s, mut a) = (flat / n_a, flat % n_a);
    loop {
        if rng.gen::<f64>() < 1.0 - mdp.gamma() {
            return Ok((s, a));
        }
        s = sample_index(mdp.transition_row(s, a), rng);
        a = sample_index(pi.row(s), rng);
    }
}

/// Truncated discounted return of one simulated trajectory:
/// `sum_{t < horizon} gamma^t r(s_t, a_t)` starting from the pair
/// `(s0, a0)`, with actions after time 0 drawn from `pi`.
pub fn rollout_return<R: Rng>(
    mdp: &Mdp,
    pi: &TabularPolicy,
    s0: usize,
    a0: usize,
    horizon: usize,
    rng: &mut R,
) -> f64 {
    let (mut s, mut a) = (s0, a0);
    let mut ret = 0.0;
    let mut disc = 1.0;
    for _ in 0..horizon {
        ret += disc * mdp.reward(s, a);
        disc *= mdp.gamma();
        s = sample_index(mdp.transition_row(s, a), rng);
        a = sample_index(pi.row(s), rng);
    }
    ret
}

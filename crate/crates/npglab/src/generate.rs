//! Deterministic instance generators for experiments and tests.
//!
//! Every generator takes an explicit RNG, so a seed fully determines the
//! instance. Start distributions default to uniform, which keeps the
//! distribution-mismatch coefficient finite for any optimal policy.

use rand::Rng;

use crate::error::Result;
use crate::mdp::{Mdp, StateActionDistribution, StateDistribution, TabularPolicy};

/// Draw a probability vector from the flat Dirichlet by normalizing
/// independent Exp(1) variates.
fn dirichlet_row<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n)
        .map(|_| {
            // -ln(U) with U in (0, 1]; clamp away from 0 to avoid ln(0).
            let u: f64 = rng.gen::<f64>().max(1e-300);
            -u.ln()
        })
        .collect();
    let sum: f64 = row.iter().sum();
    for x in row.iter_mut() {
        *x /= sum;
    }
    row
}

/// Dense random MDP: Dirichlet transition rows, uniform start distribution,
/// and per-state rewards spread across `[0, 1]`.
///
/// Rewards are a random permutation of an evenly spaced grid plus a small
/// jitter, so within every state the actions have well-separated rewards.
/// That keeps optimal-action gaps bounded away from zero, which the
/// double-precision convergence experiments rely on.
pub fn random_mdp<R: Rng>(n_states: usize, n_actions: usize, gamma: f64, rng: &mut R) -> Result<Mdp> {
    let mut reward = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let mut levels: Vec<f64> = (0..n_actions)
            .map(|a| {
                if n_actions == 1 {
                    0.5
                } else {
                    a as f64 / (n_actions - 1) as f64
                }
            })
            .collect();
        // Fisher-Yates shuffle driven by the caller's RNG.
        for i in (1..levels.len()).rev() {
            let j = rng.gen_range(0..=i);
            levels.swap(i, j);
        }
        let row: Vec<f64> = levels
            .into_iter()
            .map(|base| {
                let jitter = (rng.gen::<f64>() - 0.5) * 0.1;
                (base + jitter).clamp(0.0, 1.0)
            })
            .collect();
        reward.push(row);
    }
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| dirichlet_row(n_states, rng)).collect())
        .collect();
    let mu = vec![1.0 / n_states as f64; n_states];
    Mdp::new(n_states, n_actions, gamma, mu, reward, transition)
}

/// Random stochastic policy with Dirichlet rows.
pub fn random_policy<R: Rng>(n_states: usize, n_actions: usize, rng: &mut R) -> TabularPolicy {
    let rows = (0..n_states).map(|_| dirichlet_row(n_actions, rng)).collect();
    TabularPolicy::new(rows).expect("Dirichlet rows are valid distributions")
}

pub fn random_state_distribution<R: Rng>(n_states: usize, rng: &mut R) -> StateDistribution {
    StateDistribution::new(dirichlet_row(n_states, rng)).expect("Dirichlet row is valid")
}

pub fn random_state_action_distribution<R: Rng>(
    n_states: usize,
    n_actions: usize,
    rng: &mut R,
) -> StateActionDistribution {
    StateActionDistribution::new(dirichlet_row(n_states * n_actions, rng))
        .expect("Dirichlet row is valid")
}

/// Riverine chain: `n_states` in a line, action 0 drifts left, action 1
/// pushes right with success probability `1 - slip`. Only the far right
/// state pays reward 1. Uniform start distribution.
pub fn chain_mdp(n_states: usize, gamma: f64, slip: f64) -> Result<Mdp> {
    let n_a = 2;
    let mut reward = vec![vec![0.0; n_a]; n_states];
    for r in reward[n_states - 1].iter_mut() {
        *r = 1.0;
    }
    let mut transition = vec![vec![vec![0.0; n_states]; n_a]; n_states];
    for (s, row) in transition.iter_mut().enumerate() {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n_states - 1);
        // Action 0: move left deterministically.
        row[0][left] = 1.0;
        // Action 1: move right, slipping back left with probability `slip`.
        row[1][right] += 1.0 - slip;
        row[1][left] += slip;
    }
    let mu = vec![1.0 / n_states as f64; n_states];
    Mdp::new(n_states, n_a, gamma, mu, reward, transition)
}

/// Gridworld on `width x height` cells with four move actions
/// (0 = up, 1 = down, 2 = left, 3 = right). Moves succeed with probability
/// `1 - slip` and otherwise stay put; walls stop movement. The top-right
/// cell is absorbing with reward 1. Uniform start distribution.
pub fn gridworld_mdp(width: usize, height: usize, gamma: f64, slip: f64) -> Result<Mdp> {
    let n_states = width * height;
    let n_a = 4;
    let goal = width - 1; // top-right in row-major with row 0 on top
    let idx = |x: usize, y: usize| y * width + x;
    let mut reward = vec![vec![0.0; n_a]; n_states];
    let mut transition = vec![vec![vec![0.0; n_states]; n_a]; n_states];
    for y in 0..height {
        for x in 0..width {
            let s = idx(x, y);
            for a in 0..n_a {
                if s == goal {
                    reward[s][a] = 1.0;
                    transition[s][a][s] = 1.0;
                    continue;
                }
                let (tx, ty) = match a {
                    0 => (x, y.saturating_sub(1)),
                    1 => (x, (y + 1).min(height - 1)),
                    2 => (x.saturating_sub(1), y),
                    _ => ((x + 1).min(width - 1), y),
                };
                transition[s][a][idx(tx, ty)] += 1.0 - slip;
                transition[s][a][s] += slip;
            }
        }
    }
    let mu = vec![1.0 / n_states as f64; n_states];
    Mdp::new(n_states, n_a, gamma, mu, reward, transition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_mdp_is_valid_and_seed_deterministic() {
        let mut rng_a = ChaCha8Rng::seed_from_u64(11);
        let mut rng_b = ChaCha8Rng::seed_from_u64(11);
        let a = random_mdp(5, 3, 0.9, &mut rng_a).unwrap();
        let b = random_mdp(5, 3, 0.9, &mut rng_b).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        for s in 0..5 {
            for ac in 0..3 {
                let sum: f64 = a.transition_row(s, ac).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_mdp_rewards_are_separated_within_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = random_mdp(6, 4, 0.9, &mut rng).unwrap();
        for s in 0..6 {
            let mut rewards: Vec<f64> = (0..4).map(|a| mdp.reward(s, a)).collect();
            rewards.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in rewards.windows(2) {
                // Grid spacing 1/3 minus jitter of at most 0.1 total.
                assert!(w[1] - w[0] > 0.2);
            }
        }
    }

    #[test]
    fn chain_mdp_shape_and_absorbing_reward() {
        let mdp = chain_mdp(5, 0.9, 0.1).unwrap();
        assert_eq!(mdp.n_states(), 5);
        assert_eq!(mdp.reward(4, 1), 1.0);
        assert_eq!(mdp.reward(0, 1), 0.0);
        // Pushing right from state 2 reaches 3 with probability 0.9.
        assert!((mdp.transition_row(2, 1)[3] - 0.9).abs() < 1e-12);
        assert!((mdp.transition_row(2, 1)[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn gridworld_goal_is_absorbing() {
        let mdp = gridworld_mdp(3, 3, 0.9, 0.0).unwrap();
        let goal = 2;
        for a in 0..4 {
            assert_eq!(mdp.reward(goal, a), 1.0);
            assert_eq!(mdp.transition_row(goal, a)[goal], 1.0);
        }
    }

    #[test]
    fn gridworld_optimal_value_decreases_with_distance() {
        let mdp = gridworld_mdp(4, 4, 0.9, 0.0).unwrap();
        let (_, v) = crate::mdp::optimal_policy(&mdp, 1e-10).unwrap();
        // The goal cell is worth 1/(1-gamma); the far corner strictly less.
        assert!((v[3] - 10.0).abs() < 1e-8);
        assert!(v[12] < v[3]);
    }
}

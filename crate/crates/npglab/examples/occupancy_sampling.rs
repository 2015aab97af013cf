//! Monte-Carlo critic: sampled occupancy pairs plus rollout labels.
//!
//! The sampler draws state-action pairs from the discounted visitation
//! distribution (geometric stopping), labels each with one truncated
//! rollout return, and fits the critic by ridge regression in feature
//! space. This example shows the realized statistical error falling with
//! the sample count, and a full NPG run driven by the sampled critic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use npglab::features::{best_fit, covariance, tabular_features};
use npglab::generate::random_mdp;
use npglab::mdp::{state_action_visitation, StateActionDistribution, TabularPolicy};
use npglab::oracle::{default_horizon, measure_stat_error, oracle_monte_carlo, OracleConfig};
use npglab::solver::{default_eta0, geometric_schedule, run, StepSchedule};

fn main() -> Result<(), npglab::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (n_states, n_actions, gamma) = (5, 3, 0.8);
    let mdp = random_mdp(n_states, n_actions, gamma, &mut rng)?;
    let fm = tabular_features(n_states, n_actions);
    let rho = StateActionDistribution::uniform(n_states, n_actions);
    let pi = TabularPolicy::uniform(n_states, n_actions);
    let horizon = default_horizon(gamma);
    println!("rollout horizon for gamma = {gamma}: {horizon} steps");

    let d_rho = state_action_visitation(&mdp, &pi, &rho)?;
    let sigma = covariance(&fm, &d_rho)?;
    let (w_exact, _) = best_fit(&mdp, &pi, &fm, &d_rho)?;

    println!("{:>9} {:>16} {:>6}", "samples", "stat error", "rank");
    for n in [100, 1_000, 10_000] {
        let fit = oracle_monte_carlo(
            &mdp,
            &pi,
            &fm,
            &rho,
            n,
            horizon,
            1e-8,
            &mut ChaCha8Rng::seed_from_u64(5),
        )?;
        let err = measure_stat_error(&w_exact, &fit.w_hat, &sigma);
        println!("{n:>9} {err:>16.6e} {:>6}", fit.effective_rank);
    }

    // A complete run on the sampled critic.
    let probe = run(
        &mdp,
        &fm,
        &StepSchedule::Constant { eta0: 1.0 },
        &OracleConfig::Exact,
        0,
        &rho,
        None,
        &mut rng.clone(),
    )?;
    let schedule = geometric_schedule(probe.measured.nu_mu, default_eta0(&mdp)?)?;
    let oracle = OracleConfig::MonteCarlo {
        n_samples: 2_000,
        horizon: Some(horizon),
        ridge: 1e-8,
    };
    let result = run(&mdp, &fm, &schedule, &oracle, 30, &rho, None, &mut rng)?;
    let last = result.records.last().unwrap();
    println!(
        "\nafter {} NPG iterations on the sampled critic: gap {:.4e} \
         (max stat error seen {:.3e})",
        last.t, last.delta, result.measured.eps_stat
    );
    Ok(())
}

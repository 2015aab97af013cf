//! Statistical-error floor: how close NPG gets with a noisy critic.
//!
//! The noisy oracle perturbs the exact least-squares critic so its
//! statistical error hits a target exactly. The guarantee then predicts a
//! gap floor of `2 nu sqrt(|A| kappa eps_stat / (1-gamma)^3)`; this
//! example runs several targets and compares the best gap reached against
//! that floor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use npglab::features::tabular_features;
use npglab::generate::random_mdp;
use npglab::mdp::StateActionDistribution;
use npglab::oracle::OracleConfig;
use npglab::solver::{bound_floor, default_eta0, geometric_schedule, run, StepSchedule};

fn main() -> Result<(), npglab::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n_states, n_actions, gamma) = (6, 3, 0.8);
    let mdp = random_mdp(n_states, n_actions, gamma, &mut rng)?;
    let fm = tabular_features(n_states, n_actions);
    let rho = StateActionDistribution::uniform(n_states, n_actions);

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
    let nu = probe.measured.nu_mu;
    let schedule = geometric_schedule(nu, default_eta0(&mdp)?)?;

    println!(
        "{:>10} {:>13} {:>13} {:>13} {:>13}",
        "eps_stat", "best (geom)", "best (const)", "final (const)", "floor"
    );
    for target in [1e-6, 1e-4, 1e-2] {
        let oracle = OracleConfig::Noisy {
            eps_stat_target: target,
        };
        let best_of = |result: &npglab::solver::RunResult| {
            result
                .records
                .iter()
                .map(|r| r.delta)
                .fold(f64::INFINITY, f64::min)
        };
        let geom = run(
            &mdp,
            &fm,
            &schedule,
            &oracle,
            200,
            &rho,
            None,
            &mut ChaCha8Rng::seed_from_u64(100),
        )?;
        // With a constant step the noise never stops mattering, so the gap
        // stalls at an empirical floor instead of hitting solver precision.
        let constant = run(
            &mdp,
            &fm,
            &StepSchedule::Constant {
                eta0: default_eta0(&mdp)?,
            },
            &oracle,
            200,
            &rho,
            None,
            &mut ChaCha8Rng::seed_from_u64(100),
        )?;
        let floor = bound_floor(
            nu,
            gamma,
            n_actions,
            geom.measured.kappa.max(constant.measured.kappa),
            target,
            0.0,
        );
        println!(
            "{target:>10.0e} {:>13.4e} {:>13.4e} {:>13.4e} {floor:>13.4e}",
            best_of(&geom),
            best_of(&constant),
            constant.records.last().unwrap().delta
        );
    }
    println!("\nthe predicted floor scales like sqrt(eps_stat) and upper-bounds every column;");
    println!("the geometric schedule's growing steps make the exact argmax win once noise");
    println!("stops flipping it, which is why its best gap can reach solver precision");
    Ok(())
}

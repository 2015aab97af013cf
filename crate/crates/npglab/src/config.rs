//! Experiment configuration: a JSON description of an MDP source, feature
//! source, step schedule, critic oracle, and run options, plus the
//! materialization step that turns it into concrete objects.
//!
//! Materialization resolves every defaulted or derived field (the initial
//! step size, the schedule's mismatch coefficient) and writes them back
//! into the echoed config, so loading the echo reproduces the experiment
//! exactly.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{
    mismatch_coefficient, optimal_policy, state_visitation, Mdp, StateActionDistribution,
};
use crate::oracle::OracleConfig;
use crate::solver::{default_eta0, geometric_schedule, BoundConstants, StepSchedule};
use crate::tol;

/// Where the MDP comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MdpSource {
    /// Load from a JSON file.
    File { path: PathBuf },
    /// Embedded directly in the config.
    Inline { mdp: Mdp },
    /// Random dense MDP with well-separated per-state rewards.
    Random {
        n_states: usize,
        n_actions: usize,
        gamma: f64,
    },
    /// Left/right chain with slip probability; reward at the far end.
    Chain {
        n_states: usize,
        gamma: f64,
        slip: f64,
    },
    /// Four-action gridworld with an absorbing rewarding goal.
    Gridworld {
        width: usize,
        height: usize,
        gamma: f64,
        slip: f64,
    },
    /// Mixture-model MDP whose action values are exactly linear in the
    /// generated features for every policy.
    LinearMdp {
        dim: usize,
        n_states: usize,
        n_actions: usize,
        gamma: f64,
    },
}

/// Where the feature map comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSource {
    /// One-hot indicator per state-action pair (no approximation).
    #[default]
    Tabular,
    /// Load from a JSON file.
    File { path: PathBuf },
    /// Dense Gaussian projection to `dim` dimensions.
    RandomProjection { dim: usize },
    /// The features produced by the `linear_mdp` MDP source.
    LinearMdp,
}

/// Step-size schedule with derivable fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta0: Option<f64>,
    },
    /// Ratio `nu/(nu-1)`; `nu` defaults to the measured mismatch
    /// coefficient of the materialized MDP, `eta0` to
    /// `(1-gamma)/gamma * ln |A|`.
    Geometric {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<f64>,
    },
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Geometric {
            eta0: None,
            nu: None,
        }
    }
}

/// Fit distribution for the critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoSpec {
    /// Uniform over state-action pairs.
    #[default]
    Uniform,
    /// The MDP's start distribution times uniform actions.
    StartActions,
    /// Explicit probabilities, row-major `s * n_actions + a`.
    Inline { values: Vec<f64> },
}

/// Which constants fill the bound column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum BoundSpec {
    /// Maxima measured over the run itself.
    #[default]
    Measured,
    /// User-supplied constants.
    Nominal {
        nu: f64,
        kappa: f64,
        eps_stat: f64,
        eps_bias: f64,
    },
}

/// One sweep axis; every other setting is shared across cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepSpec {
    /// Re-run with each seed.
    Seeds { values: Vec<u64> },
    /// Re-run with each statistical-error target (oracle must be noisy).
    EpsStat { values: Vec<f64> },
    /// Re-run with each step schedule.
    Schedule { values: Vec<ScheduleSpec> },
}

fn default_iterations() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    #[serde(default)]
    pub features: FeatureSource,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub rho: RhoSpec,
    #[serde(default)]
    pub bound: BoundSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// A fully materialized experiment: concrete objects plus the echo config
/// that reproduces them.
#[derive(Clone, Debug)]
pub struct Experiment {
    /// The input config with every derived field filled in.
    pub echo: ExperimentConfig,
    pub mdp: Mdp,
    pub features: FeatureMap,
    pub schedule: StepSchedule,
    pub oracle: OracleConfig,
    pub iterations: usize,
    pub rho: StateActionDistribution,
    pub bound: Option<BoundConstants>,
    pub seed: u64,
    /// RNG stream positioned after instance generation; the run continues
    /// from here so one seed drives the whole experiment.
    pub rng: ChaCha8Rng,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.oracle.validate()?;
        match (&self.features, &self.mdp) {
            (FeatureSource::LinearMdp, MdpSource::LinearMdp { .. }) => {}
            (FeatureSource::LinearMdp, _) => {
                return Err(Error::Config(
                    "features kind linear_mdp requires the linear_mdp MDP source".into(),
                ));
            }
            _ => {}
        }
        if let ScheduleSpec::Geometric { nu: Some(nu), .. } = &self.schedule {
            if !nu.is_finite() || *nu <= 1.0 {
                return Err(Error::Config(format!(
                    "schedule nu must be finite and > 1, got {nu}"
                )));
            }
        }
        match &self.schedule {
            ScheduleSpec::Constant { eta0: Some(e) }
            | ScheduleSpec::Geometric { eta0: Some(e), .. }
                if !e.is_finite() || *e <= 0.0 =>
            {
                return Err(Error::Config(format!(
                    "eta0 must be finite and > 0, got {e}"
                )));
            }
            _ => {}
        }
        if let BoundSpec::Nominal {
            nu,
            kappa,
            eps_stat,
            eps_bias,
        } = &self.bound
        {
            if *nu < 1.0 || *kappa < 0.0 || *eps_stat < 0.0 || *eps_bias < 0.0 {
                return Err(Error::Config(
                    "nominal bound constants need nu >= 1 and nonnegative errors".into(),
                ));
            }
        }
        if let Some(SweepSpec::EpsStat { .. }) = &self.sweep {
            if !matches!(self.oracle, OracleConfig::Noisy { .. }) {
                return Err(Error::Config(
                    "an eps_stat sweep requires the noisy oracle".into(),
                ));
            }
        }
        match &self.sweep {
            Some(SweepSpec::Seeds { values }) if values.is_empty() => {
                return Err(Error::Config("sweep axis has no values".into()));
            }
            Some(SweepSpec::EpsStat { values }) if values.is_empty() => {
                return Err(Error::Config("sweep axis has no values".into()));
            }
            Some(SweepSpec::Schedule { values }) if values.is_empty() => {
                return Err(Error::Config("sweep axis has no values".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Build the concrete experiment. `seed_override` replaces the config
    /// seed (the CLI's `--seed`). The returned echo has all derived fields
    /// resolved; materializing the echo yields the same experiment.
    pub fn materialize(&self, seed_override: Option<u64>) -> Result<Experiment> {
        self.validate()?;
        let seed = seed_override.unwrap_or(self.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let (mdp, generated_features) = match &self.mdp {
            MdpSource::File { path } => (Mdp::load(path)?, None),
            MdpSource::Inline { mdp } => (mdp.clone(), None),
            MdpSource::Random {
                n_states,
                n_actions,
                gamma,
            } => (
                crate::generate::random_mdp(*n_states, *n_actions, *gamma, &mut rng)?,
                None,
            ),
            MdpSource::Chain {
                n_states,
                gamma,
                slip,
            } => (crate::generate::chain_mdp(*n_states, *gamma, *slip)?, None),
            MdpSource::Gridworld {
                width,
                height,
                gamma,
                slip,
            } => (
                crate::generate::gridworld_mdp(*width, *height, *gamma, *slip)?,
                None,
            ),
            MdpSource::LinearMdp {
                dim,
                n_states,
                n_actions,
                gamma,
            } => {
                let (mdp, fm) =
                    crate::features::linear_mdp_generate(*dim, *n_states, *n_actions, *gamma, &mut rng)?;
                (mdp, Some(fm))
            }
        };

        let features = match &self.features {
            FeatureSource::Tabular => {
                crate::features::tabular_features(mdp.n_states(), mdp.n_actions())
            }
            FeatureSource::File { path } => {
                let fm = FeatureMap::load(path)?;
                fm.check_mdp(&mdp)?;
                fm
            }
            FeatureSource::RandomProjection { dim } => {
                crate::features::random_projection(mdp.n_states(), mdp.n_actions(), *dim, &mut rng)?
            }
            FeatureSource::LinearMdp => generated_features.ok_or_else(|| {
                Error::Config("linear_mdp features without the linear_mdp MDP source".into())
            })?,
        };

        let (schedule, schedule_echo) = match &self.schedule {
            ScheduleSpec::Constant { eta0 } => {
                let eta0 = match eta0 {
                    Some(e) => *e,
                    None => default_eta0(&mdp)?,
                };
                (
                    StepSchedule::Constant { eta0 },
                    ScheduleSpec::Constant { eta0: Some(eta0) },
                )
            }
            ScheduleSpec::Geometric { eta0, nu } => {
                let eta0 = match eta0 {
                    Some(e) => *e,
                    None => default_eta0(&mdp)?,
                };
                let nu = match nu {
                    Some(n) => *n,
                    None => {
                        let mu = mdp.start_distribution();
                        let (pi_star, _) = optimal_policy(&mdp, tol::OPT_POLICY_TOL)?;
                        let d_star = state_visitation(&mdp, &pi_star, &mu)?;
                        let measured = mismatch_coefficient(&d_star, &mu, mdp.gamma());
                        if !measured.is_finite() || measured <= 1.0 {
                            return Err(Error::Config(format!(
                                "measured mismatch coefficient {measured} cannot drive a \
                                 geometric schedule; set nu or eta0 explicitly"
                            )));
                        }
                        measured
                    }
                };
                (
                    geometric_schedule(nu, eta0)?,
                    ScheduleSpec::Geometric {
                        eta0: Some(eta0),
                        nu: Some(nu),
                    },
                )
            }
        };

        let rho = match &self.rho {
            RhoSpec::Uniform => StateActionDistribution::uniform(mdp.n_states(), mdp.n_actions()),
            RhoSpec::StartActions => mdp
                .start_distribution()
                .times_uniform_actions(mdp.n_actions()),
            RhoSpec::Inline { values } => {
                if values.len() != mdp.n_states() * mdp.n_actions() {
                    return Err(Error::Config(format!(
                        "inline rho has {} entries, expected {}",
                        values.len(),
                        mdp.n_states() * mdp.n_actions()
                    )));
                }
                StateActionDistribution::new(values.clone())?
            }
        };

        let bound = match &self.bound {
            BoundSpec::Measured => None,
            BoundSpec::Nominal {
                nu,
                kappa,
                eps_stat,
                eps_bias,
            } => Some(BoundConstants {
                nu: *nu,
                kappa: *kappa,
                eps_stat: *eps_stat,
                eps_bias: *eps_bias,
            }),
        };

        let mut echo = self.clone();
        echo.schedule = schedule_echo;
        echo.seed = seed;
        if let OracleConfig::MonteCarlo {
            n_samples,
            horizon: None,
            ridge,
        } = &self.oracle
        {
            echo.oracle = OracleConfig::MonteCarlo {
                n_samples: *n_samples,
                horizon: Some(crate::oracle::default_horizon(mdp.gamma())),
                ridge: *ridge,
            };
        }
        let oracle = echo.oracle.clone();

        Ok(Experiment {
            echo,
            mdp,
            features,
            schedule,
            oracle,
            iterations: self.iterations,
            rho,
            bound,
            seed,
            rng,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> &'static str {
        r#"{"mdp": {"kind": "random", "n_states": 4, "n_actions": 2, "gamma": 0.8}}"#
    }

    #[test]
    fn defaults_are_materialized() {
        let cfg = ExperimentConfig::from_json(minimal_json()).unwrap();
        assert_eq!(cfg.iterations, 100);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.features, FeatureSource::Tabular);
        assert_eq!(cfg.oracle, OracleConfig::Exact);
        let exp = cfg.materialize(None).unwrap();
        match &exp.echo.schedule {
            ScheduleSpec::Geometric { eta0, nu } => {
                assert!(eta0.is_some() && nu.is_some());
                assert!(nu.unwrap() > 1.0);
            }
            other => panic!("unexpected schedule {other:?}"),
        }
        assert_eq!(exp.rho.len(), 8);
    }

    #[test]
    fn echo_round_trip_is_lossless() {
        let cfg = ExperimentConfig::from_json(minimal_json()).unwrap();
        let exp = cfg.materialize(Some(7)).unwrap();
        let echo_json = exp.echo.to_json();
        let cfg2 = ExperimentConfig::from_json(&echo_json).unwrap();
        assert_eq!(cfg2, exp.echo);
        let exp2 = cfg2.materialize(None).unwrap();
        assert_eq!(exp2.echo, exp.echo);
        assert_eq!(exp2.mdp.to_json(), exp.mdp.to_json());
        assert_eq!(exp2.seed, 7);
        assert_eq!(exp2.schedule, exp.schedule);
    }

    #[test]
    fn inline_mdp_reports_missing_fields_by_name() {
        let bad = r#"{"mdp": {"kind": "inline", "mdp": {
            "n_states": 1, "n_actions": 1,
            "mu": [1.0], "reward": [[1.0]], "transition": [[[1.0]]]}}}"#;
        let err = ExperimentConfig::from_json(bad).unwrap_err();
        assert!(
            err.to_string().contains("gamma"),
            "error should name the missing field: {err}"
        );
    }

    #[test]
    fn linear_features_need_linear_mdp() {
        let bad = r#"{
            "mdp": {"kind": "random", "n_states": 3, "n_actions": 2, "gamma": 0.5},
            "features": {"kind": "linear_mdp"}
        }"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
        let good = r#"{
            "mdp": {"kind": "linear_mdp", "dim": 4, "n_states": 3, "n_actions": 2, "gamma": 0.5},
            "features": {"kind": "linear_mdp"}
        }"#;
        let cfg = ExperimentConfig::from_json(good).unwrap();
        let exp = cfg.materialize(None).unwrap();
        assert_eq!(exp.features.dim(), 4);
    }

    #[test]
    fn eps_stat_sweep_requires_noisy_oracle() {
        let bad = r#"{
            "mdp": {"kind": "random", "n_states": 3, "n_actions": 2, "gamma": 0.5},
            "sweep": {"axis": "eps_stat", "values": [0.01]}
        }"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
        let good = r#"{
            "mdp": {"kind": "random", "n_states": 3, "n_actions": 2, "gamma": 0.5},
            "oracle": {"mode": "noisy", "eps_stat_target": 0.01},
            "sweep": {"axis": "eps_stat", "values": [0.0001, 0.01]}
        }"#;
        ExperimentConfig::from_json(good).unwrap();
    }

    #[test]
    fn seed_override_wins_and_is_echoed() {
        let mut cfg = ExperimentConfig::from_json(minimal_json()).unwrap();
        cfg.seed = 3;
        let exp = cfg.materialize(Some(9)).unwrap();
        assert_eq!(exp.seed, 9);
        assert_eq!(exp.echo.seed, 9);
        let exp3 = cfg.materialize(None).unwrap();
        assert_eq!(exp3.seed, 3);
        // Different seeds give different random MDPs.
        assert_ne!(exp.mdp.to_json(), exp3.mdp.to_json());
    }

    #[test]
    fn monte_carlo_horizon_is_materialized_into_echo() {
        let json = r#"{
            "mdp": {"kind": "chain", "n_states": 4, "gamma": 0.9, "slip": 0.1},
            "oracle": {"mode": "monte_carlo", "n_samples": 50}
        }"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        let exp = cfg.materialize(None).unwrap();
        match exp.echo.oracle {
            OracleConfig::MonteCarlo { horizon, .. } => assert_eq!(horizon, Some(88)),
            other => panic!("unexpected oracle {other:?}"),
        }
    }

    #[test]
    fn rho_variants_materialize() {
        let inline = r#"{
            "mdp": {"kind": "random", "n_states": 2, "n_actions": 2, "gamma": 0.5},
            "rho": {"kind": "inline", "values": [0.4, 0.1, 0.3, 0.2]}
        }"#;
        let exp = ExperimentConfig::from_json(inline)
            .unwrap()
            .materialize(None)
            .unwrap();
        assert!((exp.rho.prob(0, 0, 2) - 0.4).abs() < 1e-15);
        let start = r#"{
            "mdp": {"kind": "random", "n_states": 2, "n_actions": 2, "gamma": 0.5},
            "rho": {"kind": "start_actions"}
        }"#;
        ExperimentConfig::from_json(start)
            .unwrap()
            .materialize(None)
            .unwrap();
        let wrong_len = r#"{
            "mdp": {"kind": "random", "n_states": 2, "n_actions": 2, "gamma": 0.5},
            "rho": {"kind": "inline", "values": [1.0]}
        }"#;
        assert!(ExperimentConfig::from_json(wrong_len)
            .unwrap()
            .materialize(None)
            .is_err());
    }
}

//! Run configuration: one flat TOML table covering every tunable. Missing
//! keys take their defaults, unknown keys are rejected, and path keys may be
//! overridden by `MULTIAC6_OUTPUT_DIR` and `MULTIAC6_DATASET_DIR`.

use std::path::{Path, PathBuf};

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::dataset::WorkspaceBox;
use crate::ddpg::Hyperparams;
use crate::error::{Error, Result};
use crate::sim::{DloParams, SimConfig, Simulator};
use crate::task::{EpisodeConfig, FEATURE_POINTS};
use crate::trainer::{ExecutionMode, TaskSetup, TrainerConfig};

pub const OUTPUT_DIR_ENV: &str = "MULTIAC6_OUTPUT_DIR";
pub const DATASET_DIR_ENV: &str = "MULTIAC6_DATASET_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // learner
    pub hidden_layers: usize,
    pub hidden_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub ou_dt: f64,

    // episodes
    pub feature_points: usize,
    pub max_steps_p: usize,
    pub max_steps_o: usize,
    pub delta_p: f64,
    pub delta_o: f64,
    pub max_lin_vel: f64,
    pub max_ang_vel: f64,
    /// Margin added around the large box to form the gripper clamp box.
    pub workspace_margin: f64,
    pub home: [f64; 3],
    pub initial_orientation: [f64; 3],

    // simulator
    pub num_particles: usize,
    pub total_length: f64,
    pub mass: f64,
    pub stretch_stiffness: f64,
    pub bend_stiffness: f64,
    pub damping_ratio: f64,
    pub gravity: [f64; 3],
    pub ground_anchor: [f64; 3],
    pub base_direction: [f64; 3],
    pub control_dt: f64,
    pub substeps: usize,
    pub settle_time: f64,

    // trainer
    pub num_workers: usize,
    pub episodes_p: usize,
    pub episodes_o: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub mode: ExecutionMode,
    pub sync_slack: usize,
    /// Fraction of the seen dataset used for training; the rest is held out.
    pub train_fraction: f64,

    // paths
    pub output_dir: PathBuf,
    pub dataset_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        let ep = EpisodeConfig::default();
        let p = DloParams::default();
        let s = SimConfig::default();
        let t = TrainerConfig::default();
        RunConfig {
            hidden_layers: hp.hidden_layers,
            hidden_size: hp.hidden_size,
            actor_lr: hp.actor_lr,
            critic_lr: hp.critic_lr,
            buffer_capacity: hp.buffer_capacity,
            batch_size: hp.batch_size,
            gamma: hp.gamma,
            tau: hp.tau,
            ou_theta: hp.ou_theta,
            ou_sigma: hp.ou_sigma,
            ou_dt: hp.ou_dt,
            feature_points: FEATURE_POINTS,
            max_steps_p: ep.max_steps_p,
            max_steps_o: ep.max_steps_o,
            delta_p: ep.delta_p,
            delta_o: ep.delta_o,
            max_lin_vel: ep.max_lin_vel,
            max_ang_vel: ep.max_ang_vel,
            workspace_margin: 0.05,
            home: ep.home.to_array(),
            initial_orientation: ep.initial_orientation.to_array(),
            num_particles: p.num_particles,
            total_length: p.total_length,
            mass: p.mass,
            stretch_stiffness: p.stretch_stiffness,
            bend_stiffness: p.bend_stiffness,
            damping_ratio: p.damping_ratio,
            gravity: p.gravity.to_array(),
            ground_anchor: p.ground_anchor.to_array(),
            base_direction: p.base_direction.to_array(),
            control_dt: s.control_dt,
            substeps: s.substeps,
            settle_time: s.settle_time,
            num_workers: t.num_workers,
            episodes_p: t.episodes_p,
            episodes_o: t.episodes_o,
            eval_every: t.eval_every,
            seed: t.seed,
            mode: t.mode,
            sync_slack: t.sync_slack,
            train_fraction: 0.8,
            output_dir: PathBuf::from("runs"),
            dataset_dir: PathBuf::from("data"),
        }
    }
}

impl RunConfig {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            hidden_layers: self.hidden_layers,
            hidden_size: self.hidden_size,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            buffer_capacity: self.buffer_capacity,
            batch_size: self.batch_size,
            gamma: self.gamma,
            tau: self.tau,
            ou_theta: self.ou_theta,
            ou_sigma: self.ou_sigma,
            ou_dt: self.ou_dt,
        }
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            max_steps_p: self.max_steps_p,
            max_steps_o: self.max_steps_o,
            delta_p: self.delta_p,
            delta_o: self.delta_o,
            max_lin_vel: self.max_lin_vel,
            max_ang_vel: self.max_ang_vel,
            workspace: WorkspaceBox::Large.aabb().grow(self.workspace_margin),
            home: DVec3::from_array(self.home),
            initial_orientation: DVec3::from_array(self.initial_orientation),
        }
    }

    pub fn dlo_params(&self) -> DloParams {
        DloParams {
            num_particles: self.num_particles,
            total_length: self.total_length,
            mass: self.mass,
            stretch_stiffness: self.stretch_stiffness,
            bend_stiffness: self.bend_stiffness,
            damping_ratio: self.damping_ratio,
            gravity: DVec3::from_array(self.gravity),
            ground_anchor: DVec3::from_array(self.ground_anchor),
            base_direction: DVec3::from_array(self.base_direction),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            control_dt: self.control_dt,
            substeps: self.substeps,
            settle_time: self.settle_time,
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            num_workers: self.num_workers,
            episodes_p: self.episodes_p,
            steps_p: self.max_steps_p,
            episodes_o: self.episodes_o,
            steps_o: self.max_steps_o,
            hyperparams: self.hyperparams(),
            eval_every: self.eval_every,
            seed: self.seed,
            mode: self.mode,
            sync_slack: self.sync_slack,
        }
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(self.dlo_params(), self.sim_config())
    }

    pub fn task_setup(&self) -> Result<TaskSetup> {
        Ok(TaskSetup {
            sim: self.simulator()?,
            episode: self.episode_config(),
            m: self.feature_points,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer_config().validate()?;
        self.episode_config().validate()?;
        let sim = self.simulator()?;
        crate::sim::feature_indices(sim.params().num_particles, self.feature_points)
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if !(self.workspace_margin.is_finite() && self.workspace_margin >= 0.0) {
            return Err(Error::Config("workspace_margin must be non-negative".into()));
        }
        Ok(())
    }

    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads `path`, applies path overrides from the environment, validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.apply_env_overrides();
        Ok(cfg)
    }

    pub fn apply_env_overrides(&mut self) {
        if let Some(v) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = v.into();
        }
        if let Some(v) = std::env::var_os(DATASET_DIR_ENV) {
            self.dataset_dir = v.into();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_learner_table() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!((c.hidden_layers, c.hidden_size), (3, 256));
        assert_eq!((c.actor_lr, c.critic_lr), (1e-4, 1e-3));
        assert_eq!((c.buffer_capacity, c.batch_size), (50_000, 128));
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.hyperparams(), Hyperparams::default());
        assert_eq!(c.episode_config(), EpisodeConfig::default());
        assert_eq!(c.dlo_params(), DloParams::default());
        assert_eq!(c.sim_config(), SimConfig::default());
        assert_eq!(c.trainer_config(), TrainerConfig::default());
    }

    #[test]
    fn empty_file_is_defaults_and_round_trips() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
        let c = RunConfig {
            seed: 9,
            gamma: 0.9,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml_str(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(matches!(RunConfig::from_toml_str("gamma = 1.5"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("gamma_typo = 0.5"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("substeps = 5"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("feature_points = 40"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("[section]\nx = 1"), Err(Error::Config(_))));
    }
}

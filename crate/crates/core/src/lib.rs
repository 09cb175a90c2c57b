//! Two-agent deep deterministic policy gradient toolkit for shaping a
//! deformable linear object held at one end by a 6-DOF gripper and fixed to
//! the ground at the other.
//!
//! An orientation agent first turns the object's tip toward a desired
//! orientation, then a position agent translates the gripper until sampled
//! feature points along the object match a target shape. The object is
//! simulated as a damped mass-spring chain.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod ddpg;
pub mod error;
pub mod geometry;
pub mod nn;
pub mod rewards;
pub mod rng;
pub mod sim;
pub mod task;
pub mod trainer;

pub use checkpoint::{Checkpoint, TrainingMetadata};
pub use config::RunConfig;
pub use dataset::{DatasetFile, DeformationRecord, GenerationConfig, WorkspaceBox};
pub use ddpg::{DdpgAgent, Hyperparams, Policy, ReplayBuffer, Transition};
pub use error::{Error, Result};
pub use glam::DVec3;
pub use nn::{Architecture, MlpNetwork, OutputActivation};
pub use rewards::{EvalOutcome, EvalReport, RewardKind};
pub use sim::{DloParams, DloState, GripperPose, SimConfig, Simulator};
pub use task::{DeformationGoal, EpisodeConfig, EpisodeTrace, Phase};
pub use trainer::{AgentRole, EvalMode, ExecutionMode, TaskSetup, TrainerConfig, TrainingLog};

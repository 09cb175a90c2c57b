//! Task logic: state vectors, action integration, the orientation and
//! position environments, and the episode runners for MultiAC6 and the
//! single-agent baselines.

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::ddpg::Policy;
use crate::dataset::WorkspaceBox;
use crate::error::{ensure_len, Error, Result};
use crate::geometry::{wrap_euler, Aabb};
use crate::rewards::{
    max_distance, orientation_rmse, reward_orientation, RewardKind, DELTA_O, DELTA_P,
};
use crate::sim::{DloState, GripperPose, Simulator};

/// Number of feature points describing a shape goal.
pub const FEATURE_POINTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationGoal {
    pub f_d: Vec<DVec3>,
    /// Desired tip orientation, wrapped.
    pub zeta: DVec3,
}

impl DeformationGoal {
    pub fn new(f_d: Vec<DVec3>, zeta: DVec3) -> Self {
        DeformationGoal {
            f_d,
            zeta: wrap_euler(zeta),
        }
    }

    pub fn m(&self) -> usize {
        self.f_d.len()
    }

    pub fn with_zeta(&self, zeta: DVec3) -> Self {
        DeformationGoal::new(self.f_d.clone(), zeta)
    }
}

pub fn state_p_dim(m: usize) -> usize {
    6 + 6 * m
}

pub fn state_o_dim(m: usize) -> usize {
    6 + 3 * m
}

/// `[X, Xdot, theta, F, F_d]` for the six-output single agent.
pub fn state_ac6_dim(m: usize) -> usize {
    9 + 6 * m
}

fn push_points(out: &mut Vec<f64>, points: &[DVec3]) {
    for p in points {
        out.extend_from_slice(&p.to_array());
    }
}

fn read_points(v: &[f64]) -> Vec<DVec3> {
    v.chunks_exact(3).map(DVec3::from_slice).collect()
}

/// Layout `[X(3), Xdot(3), F(3m), F_d(3m)]`.
pub fn build_state_p(gripper: &GripperPose, lin_vel: DVec3, f: &[DVec3], f_d: &[DVec3]) -> Result<Vec<f64>> {
    ensure_len("feature point sets", f_d.len(), f.len())?;
    let mut out = Vec::with_capacity(state_p_dim(f.len()));
    out.extend_from_slice(&gripper.position.to_array());
    out.extend_from_slice(&lin_vel.to_array());
    push_points(&mut out, f);
    push_points(&mut out, f_d);
    Ok(out)
}

/// Inverse of [`build_state_p`]: `(X, Xdot, F, F_d)`.
pub fn split_state_p(v: &[f64]) -> Result<(DVec3, DVec3, Vec<DVec3>, Vec<DVec3>)> {
    if v.len() < 6 || (v.len() - 6) % 6 != 0 {
        return Err(Error::Usage(format!("{} is not a position state length", v.len())));
    }
    let m = (v.len() - 6) / 6;
    Ok((
        DVec3::from_slice(&v[0..3]),
        DVec3::from_slice(&v[3..6]),
        read_points(&v[6..6 + 3 * m]),
        read_points(&v[6 + 3 * m..]),
    ))
}

/// Layout `[theta(3), zeta(3), F_d(3m)]`.
pub fn build_state_o(theta: DVec3, zeta: DVec3, f_d: &[DVec3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(state_o_dim(f_d.len()));
    out.extend_from_slice(&theta.to_array());
    out.extend_from_slice(&zeta.to_array());
    push_points(&mut out, f_d);
    out
}

/// Inverse of [`build_state_o`]: `(theta, zeta, F_d)`.
pub fn split_state_o(v: &[f64]) -> Result<(DVec3, DVec3, Vec<DVec3>)> {
    if v.len() < 6 || (v.len() - 6) % 3 != 0 {
        return Err(Error::Usage(format!("{} is not an orientation state length", v.len())));
    }
    Ok((
        DVec3::from_slice(&v[0..3]),
        DVec3::from_slice(&v[3..6]),
        read_points(&v[6..]),
    ))
}

/// Layout `[X(3), Xdot(3), theta(3), F(3m), F_d(3m)]`.
pub fn build_state_ac6(gripper: &GripperPose, lin_vel: DVec3, f: &[DVec3], f_d: &[DVec3]) -> Result<Vec<f64>> {
    ensure_len("feature point sets", f_d.len(), f.len())?;
    let mut out = Vec::with_capacity(state_ac6_dim(f.len()));
    out.extend_from_slice(&gripper.position.to_array());
    out.extend_from_slice(&lin_vel.to_array());
    out.extend_from_slice(&gripper.orientation.to_array());
    push_points(&mut out, f);
    push_points(&mut out, f_d);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub max_steps_p: usize,
    pub max_steps_o: usize,
    /// Meters.
    pub delta_p: f64,
    /// Radians.
    pub delta_o: f64,
    /// m/s at a unit action.
    pub max_lin_vel: f64,
    /// rad/s at a unit action.
    pub max_ang_vel: f64,
    /// Gripper positions are clamped into this box.
    pub workspace: Aabb,
    /// Gripper position at the start of every episode.
    pub home: DVec3,
    /// Gripper orientation at the start of every episode.
    pub initial_orientation: DVec3,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_steps_p: 300,
            max_steps_o: 100,
            delta_p: DELTA_P,
            delta_o: DELTA_O,
            max_lin_vel: 0.10,
            max_ang_vel: 0.5,
            workspace: WorkspaceBox::Large.aabb().grow(0.05),
            home: WorkspaceBox::Small.aabb().center(),
            initial_orientation: DVec3::ZERO,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps_p == 0 || self.max_steps_o == 0 {
            return Err(Error::Config("step caps must be positive".into()));
        }
        for (name, v) in [
            ("delta_p", self.delta_p),
            ("delta_o", self.delta_o),
            ("max_lin_vel", self.max_lin_vel),
            ("max_ang_vel", self.max_ang_vel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.workspace.min.cmple(self.workspace.max).all() {
            return Err(Error::Config("workspace min exceeds max".into()));
        }
        if !self.workspace.contains(self.home) {
            return Err(Error::Config("home position lies outside the workspace".into()));
        }
        Ok(())
    }

    pub fn with_delta_p(&self, delta_p: f64) -> Self {
        EpisodeConfig {
            delta_p,
            ..self.clone()
        }
    }

    pub fn start_pose(&self, orientation: DVec3) -> GripperPose {
        GripperPose::new(self.home, orientation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionKind {
    Translation,
    Rotation,
}

fn check_action(action: &[f64], expected: usize) -> Result<()> {
    ensure_len("action", expected, action.len())?;
    if action.iter().any(|a| !a.is_finite() || a.abs() > 1.0) {
        return Err(Error::Usage(format!("action components must lie in [-1, 1]: {action:?}")));
    }
    Ok(())
}

/// Scales a unit action by the velocity cap and advances the pose by one
/// control period. Translations are clamped into the workspace.
pub fn integrate_action(
    pose: &GripperPose,
    action: &[f64],
    kind: MotionKind,
    config: &EpisodeConfig,
    dt: f64,
) -> Result<GripperPose> {
    check_action(action, 3)?;
    let a = DVec3::from_slice(action);
    Ok(match kind {
        MotionKind::Translation => GripperPose::new(
            config.workspace.clamp(pose.position + a * (config.max_lin_vel * dt)),
            pose.orientation,
        ),
        MotionKind::Rotation => {
            GripperPose::new(pose.position, wrap_euler(pose.orientation + a * (config.max_ang_vel * dt)))
        }
    })
}

/// Outcome of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub success: bool,
    /// Success or step cap reached.
    pub done: bool,
}

/// Goal-conditioned episodic environment.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Starts an episode for `goal` with the gripper at home holding
    /// `orientation`, returning the initial state.
    fn reset(&mut self, goal: &DeformationGoal, orientation: DVec3) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
    fn is_success(&self) -> bool;
    /// The quantity `is_success` thresholds: max feature point distance for
    /// position tasks, orientation RMSE for the orientation task.
    fn error(&self) -> f64;
    fn steps(&self) -> usize;
    fn gripper(&self) -> GripperPose;
}

/// Kinematic environment for the orientation agent; no simulator involved.
#[derive(Clone, Debug)]
pub struct OrientationEnv {
    config: EpisodeConfig,
    dt: f64,
    m: usize,
    pose: GripperPose,
    goal: Option<DeformationGoal>,
    steps: usize,
}

impl OrientationEnv {
    pub fn new(config: EpisodeConfig, dt: f64, m: usize) -> Result<Self> {
        config.validate()?;
        Ok(OrientationEnv {
            pose: config.start_pose(config.initial_orientation),
            config,
            dt,
            m,
            goal: None,
            steps: 0,
        })
    }

    fn goal(&self) -> &DeformationGoal {
        self.goal.as_ref().expect("reset before step")
    }

    fn observe(&self) -> Vec<f64> {
        let g = self.goal();
        build_state_o(self.pose.orientation, g.zeta, &g.f_d)
    }
}

impl Environment for OrientationEnv {
    fn state_dim(&self) -> usize {
        state_o_dim(self.m)
    }

    fn action_dim(&self) -> usize {
        3
    }

    fn reset(&mut self, goal: &DeformationGoal, orientation: DVec3) -> Result<Vec<f64>> {
        ensure_len("goal feature points", self.m, goal.m())?;
        self.goal = Some(goal.clone());
        self.pose = self.config.start_pose(orientation);
        self.steps = 0;
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.goal.is_none() {
            return Err(Error::Usage("step called before reset".into()));
        }
        self.pose = integrate_action(&self.pose, action, MotionKind::Rotation, &self.config, self.dt)?;
        self.steps += 1;
        let reward = reward_orientation(self.pose.orientation, self.goal().zeta);
        let success = self.is_success();
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            success,
            done: success || self.steps >= self.config.max_steps_o,
        })
    }

    fn is_success(&self) -> bool {
        self.error() <= self.config.delta_o
    }

    fn error(&self) -> f64 {
        orientation_rmse(self.pose.orientation, self.goal().zeta)
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn gripper(&self) -> GripperPose {
        self.pose
    }
}

/// Which gripper degrees of freedom the position-task agent drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actuation {
    /// Translation only, orientation held (Agent_p and AC3).
    Translation,
    /// Translation then rotation in one six-vector (AC6).
    Full,
}

/// Simulated shape-control environment shared by Agent_p and the baselines.
#[derive(Clone, Debug)]
pub struct PositionEnv {
    sim: Simulator,
    config: EpisodeConfig,
    reward: RewardKind,
    actuation: Actuation,
    m: usize,
    state: Option<DloState>,
    goal: Option<DeformationGoal>,
    features: Vec<DVec3>,
    lin_vel: DVec3,
    steps: usize,
}

impl PositionEnv {
    pub fn new(sim: Simulator, config: EpisodeConfig, reward: RewardKind, actuation: Actuation, m: usize) -> Result<Self> {
        config.validate()?;
        crate::sim::feature_indices(sim.params().num_particles, m)?;
        Ok(PositionEnv {
            sim,
            config,
            reward,
            actuation,
            m,
            state: None,
            goal: None,
            features: Vec::new(),
            lin_vel: DVec3::ZERO,
            steps: 0,
        })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn sim_state(&self) -> Option<&DloState> {
        self.state.as_ref()
    }

    pub fn features(&self) -> &[DVec3] {
        &self.features
    }

    pub fn reward_kind(&self) -> RewardKind {
        self.reward
    }

    fn parts(&self) -> Result<(&DloState, &DeformationGoal)> {
        match (&self.state, &self.goal) {
            (Some(s), Some(g)) => Ok((s, g)),
            _ => Err(Error::Usage("step called before reset".into())),
        }
    }

    fn observe(&self) -> Result<Vec<f64>> {
        let (s, g) = self.parts()?;
        match self.actuation {
            Actuation::Translation => build_state_p(&s.gripper, self.lin_vel, &self.features, &g.f_d),
            Actuation::Full => build_state_ac6(&s.gripper, self.lin_vel, &self.features, &g.f_d),
        }
    }
}

impl Environment for PositionEnv {
    fn state_dim(&self) -> usize {
        match self.actuation {
            Actuation::Translation => state_p_dim(self.m),
            Actuation::Full => state_ac6_dim(self.m),
        }
    }

    fn action_dim(&self) -> usize {
        match self.actuation {
            Actuation::Translation => 3,
            Actuation::Full => 6,
        }
    }

    fn reset(&mut self, goal: &DeformationGoal, orientation: DVec3) -> Result<Vec<f64>> {
        ensure_len("goal feature points", self.m, goal.m())?;
        let state = self.sim.reset(self.config.start_pose(orientation))?;
        self.features = state.feature_points(self.m)?;
        self.state = Some(state);
        self.goal = Some(goal.clone());
        self.lin_vel = DVec3::ZERO;
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.parts()?;
        check_action(action, self.action_dim())?;
        let mut state = self.state.take().expect("checked above");
        let before = state.gripper;
        let translated =
            integrate_action(&before, &action[..3], MotionKind::Translation, &self.config, self.sim.config().control_dt)?;
        let command = match self.actuation {
            Actuation::Translation => translated,
            Actuation::Full => integrate_action(
                &translated,
                &action[3..],
                MotionKind::Rotation,
                &self.config,
                self.sim.config().control_dt,
            )?,
        };
        self.steps += 1;
        let stepped = self.sim.step_in_place(&mut state, command);
        self.state = Some(state);
        stepped?;
        let s = self.state.as_ref().expect("just set");
        self.lin_vel = (command.position - before.position) / self.sim.config().control_dt;
        self.features = s.feature_points(self.m)?;
        let goal = self.goal.as_ref().expect("checked above");
        let reward = self.reward.evaluate(&self.features, &goal.f_d)?;
        let success = self.is_success();
        Ok(StepResult {
            next_state: self.observe()?,
            reward,
            success,
            done: success || self.steps >= self.config.max_steps_p,
        })
    }

    fn is_success(&self) -> bool {
        self.error() <= self.config.delta_p
    }

    fn error(&self) -> f64 {
        match &self.goal {
            Some(g) => max_distance(&self.features, &g.f_d).unwrap_or(f64::INFINITY),
            None => f64::INFINITY,
        }
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn gripper(&self) -> GripperPose {
        self.state
            .as_ref()
            .map(|s| s.gripper)
            .unwrap_or_else(|| self.config.start_pose(self.config.initial_orientation))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Orientation,
    Position,
    /// A single-agent baseline episode.
    Single,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Orientation => "orientation",
            Phase::Position => "position",
            Phase::Single => "single",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub phase: Phase,
    pub step: usize,
    /// Pose after the action was applied.
    pub gripper: GripperPose,
    pub action: Vec<f64>,
    pub reward: f64,
    /// Feature points after the step; empty in the kinematic phase.
    pub features: Vec<DVec3>,
    /// Full particle positions when recorded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub particles: Vec<DVec3>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub phase: Phase,
    pub success: bool,
    pub steps: usize,
    /// Orientation RMSE (radians) for the orientation phase, max feature
    /// point distance (meters) otherwise.
    pub final_error: f64,
    pub final_gripper: GripperPose,
    /// Diagnostic when the simulator diverged and the phase was aborted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub outcomes: Vec<PhaseOutcome>,
}

pub const TRACE_VERSION: u32 = 1;

impl EpisodeTrace {
    pub fn outcome(&self, phase: Phase) -> Option<&PhaseOutcome> {
        self.outcomes.iter().find(|o| o.phase == phase)
    }

    /// The last outcome: the one that decides a shape-control episode.
    pub fn final_outcome(&self) -> Option<&PhaseOutcome> {
        self.outcomes.last()
    }

    /// CSV with a version comment line. Columns: `phase, step, x, y, z, roll,
    /// pitch, yaw, a0..a5, reward`, then `3m` feature coordinates and `3n`
    /// particle coordinates; absent values are empty cells.
    pub fn to_csv(&self, m: usize, num_particles: usize) -> String {
        let mut out = format!("# multiac6 trace v{TRACE_VERSION}\n");
        let mut cols: Vec<String> = ["phase", "step", "x", "y", "z", "roll", "pitch", "yaw"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((0..6).map(|i| format!("a{i}")));
        cols.push("reward".into());
        for (prefix, count) in [("f", m), ("p", num_particles)] {
            for i in 0..count {
                for axis in ["x", "y", "z"] {
                    cols.push(format!("{prefix}{i}_{axis}"));
                }
            }
        }
        out.push_str(&cols.join(","));
        out.push('\n');
        let cells = |points: &[DVec3], count: usize| -> Vec<String> {
            if points.is_empty() {
                vec![String::new(); 3 * count]
            } else {
                points
                    .iter()
                    .flat_map(|p| p.to_array())
                    .map(|v| v.to_string())
                    .collect()
            }
        };
        for s in &self.steps {
            let g = s.gripper;
            let mut row = vec![s.phase.as_str().to_string(), s.step.to_string()];
            row.extend(
                [g.position, g.orientation]
                    .iter()
                    .flat_map(|v| v.to_array())
                    .map(|v| v.to_string()),
            );
            row.extend((0..6).map(|i| s.action.get(i).map(|a| a.to_string()).unwrap_or_default()));
            row.push(s.reward.to_string());
            row.extend(cells(&s.features, m));
            row.extend(cells(&s.particles, num_particles));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Runs one phase in `env` from `orientation`, appending steps to `trace`.
/// A simulator divergence ends the phase as a failure with a diagnostic.
pub fn run_phase<E: Environment + ?Sized>(
    env: &mut E,
    agent: &mut dyn Policy,
    goal: &DeformationGoal,
    orientation: DVec3,
    phase: Phase,
    explore: bool,
    trace: &mut EpisodeTrace,
    record_particles: Option<&dyn Fn(&E) -> Vec<DVec3>>,
) -> Result<PhaseOutcome> {
    let mut state = env.reset(goal, orientation)?;
    let mut aborted = None;
    let mut success = env.is_success();
    while !success && aborted.is_none() {
        let action = agent.act(&state, explore)?;
        match env.step(&action) {
            Ok(step) => {
                trace.steps.push(TraceStep {
                    phase,
                    step: env.steps(),
                    gripper: env.gripper(),
                    action,
                    reward: step.reward,
                    features: match phase {
                        Phase::Orientation => Vec::new(),
                        _ => step_features(phase, &step.next_state, goal.m()),
                    },
                    particles: record_particles.map(|f| f(env)).unwrap_or_default(),
                });
                state = step.next_state;
                success = step.success;
                if step.done {
                    break;
                }
            }
            Err(Error::Divergence { substep }) => {
                aborted = Some(format!("simulation diverged at substep {substep}"));
            }
            Err(e) => return Err(e),
        }
    }
    let outcome = PhaseOutcome {
        phase,
        success: success && aborted.is_none(),
        steps: env.steps(),
        final_error: if aborted.is_some() { f64::INFINITY } else { env.error() },
        final_gripper: env.gripper(),
        aborted,
    };
    trace.outcomes.push(outcome.clone());
    Ok(outcome)
}

fn step_features(phase: Phase, state: &[f64], m: usize) -> Vec<DVec3> {
    let offset = match phase {
        Phase::Single if state.len() == state_ac6_dim(m) => 9,
        _ => 6,
    };
    read_points(&state[offset..offset + 3 * m])
}

fn particles_of(env: &PositionEnv) -> Vec<DVec3> {
    env.sim_state().map(|s| s.positions.clone()).unwrap_or_default()
}

/// Orientation phase from `start_theta`; returns the reached orientation.
pub fn run_orientation_phase(
    env: &mut OrientationEnv,
    agent: &mut dyn Policy,
    goal: &DeformationGoal,
    start_theta: DVec3,
    explore: bool,
    trace: &mut EpisodeTrace,
) -> Result<DVec3> {
    let out = run_phase(env, agent, goal, start_theta, Phase::Orientation, explore, trace, None)?;
    Ok(out.final_gripper.orientation)
}

/// Position phase with the object reset at home holding `orientation`.
pub fn run_position_phase(
    env: &mut PositionEnv,
    agent: &mut dyn Policy,
    goal: &DeformationGoal,
    orientation: DVec3,
    explore: bool,
    record_particles: bool,
    trace: &mut EpisodeTrace,
) -> Result<PhaseOutcome> {
    let rec: &dyn Fn(&PositionEnv) -> Vec<DVec3> = &particles_of;
    run_phase(
        env,
        agent,
        goal,
        orientation,
        Phase::Position,
        explore,
        trace,
        record_particles.then_some(rec),
    )
}

/// Agent_o orients the tip from the initial orientation toward `goal.zeta`,
/// then Agent_p positions the gripper holding the reached orientation.
pub fn run_episode_multiac6(
    orient_env: &mut OrientationEnv,
    position_env: &mut PositionEnv,
    agent_o: &mut dyn Policy,
    agent_p: &mut dyn Policy,
    goal: &DeformationGoal,
    explore: bool,
    record_particles: bool,
) -> Result<EpisodeTrace> {
    let mut trace = EpisodeTrace::default();
    let start = orient_env.config.initial_orientation;
    let theta = run_orientation_phase(orient_env, agent_o, goal, start, explore, &mut trace)?;
    run_position_phase(position_env, agent_p, goal, theta, explore, record_particles, &mut trace)?;
    Ok(trace)
}

/// Position phase only, starting from the goal's own tip orientation.
pub fn run_episode_multiac6_star(
    position_env: &mut PositionEnv,
    agent_p: &mut dyn Policy,
    goal: &DeformationGoal,
    explore: bool,
    record_particles: bool,
) -> Result<EpisodeTrace> {
    let mut trace = EpisodeTrace::default();
    run_position_phase(position_env, agent_p, goal, goal.zeta, explore, record_particles, &mut trace)?;
    Ok(trace)
}

/// AC3 or AC6 baseline: one agent from the initial orientation, selected by
/// the environment's actuation.
pub fn run_episode_single_agent(
    env: &mut PositionEnv,
    agent: &mut dyn Policy,
    goal: &DeformationGoal,
    explore: bool,
    record_particles: bool,
) -> Result<EpisodeTrace> {
    let mut trace = EpisodeTrace::default();
    let start = env.config.initial_orientation;
    let rec: &dyn Fn(&PositionEnv) -> Vec<DVec3> = &particles_of;
    run_phase(
        env,
        agent,
        goal,
        start,
        Phase::Single,
        explore,
        &mut trace,
        record_particles.then_some(rec),
    )?;
    Ok(trace)
}

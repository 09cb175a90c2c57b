//! Training driver: rollout workers feed one shared replay buffer and a single
//! learner updates the agent, one update per collected transition once the
//! buffer holds a batch. Workers copy the learner's actor at the start of
//! each of their episodes.
//!
//! Two execution modes share these semantics. [`ExecutionMode::Lockstep`]
//! steps every worker's environment in turn on the calling thread and is
//! bit-reproducible. [`ExecutionMode::Threaded`] runs one thread per worker
//! and the learner on the calling thread; workers wait at episode boundaries
//! while the learner lags too far behind, so the update ratio holds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use glam::DVec3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ddpg::{ActorSnapshot, DdpgAgent, Greedy, Hyperparams, OuNoiseProcess, Policy, ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::nn::MlpNetwork;
use crate::rewards::{aggregate, EvalOutcome, EvalReport, RewardKind};
use crate::rng::{derive_seed, stream};
use crate::sim::Simulator;
use crate::task::{
    run_episode_multiac6, run_episode_multiac6_star, run_episode_single_agent, Actuation, DeformationGoal,
    Environment, EpisodeConfig, OrientationEnv, PositionEnv,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    Lockstep,
    Threaded,
}

impl FromStr for ExecutionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lockstep" => Ok(ExecutionMode::Lockstep),
            "threaded" => Ok(ExecutionMode::Threaded),
            other => Err(Error::Usage(format!(
                "unknown execution mode '{other}', expected lockstep or threaded"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub num_workers: usize,
    /// Episodes per worker for position-task agents.
    pub episodes_p: usize,
    pub steps_p: usize,
    /// Episodes per worker for the orientation agent.
    pub episodes_o: usize,
    pub steps_o: usize,
    pub hyperparams: Hyperparams,
    /// Checkpoint callback period in completed episodes (all workers).
    pub eval_every: usize,
    pub seed: u64,
    pub mode: ExecutionMode,
    /// Threaded mode: transitions the learner may trail before workers wait.
    pub sync_slack: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            num_workers: 8,
            episodes_p: 100,
            steps_p: 300,
            episodes_o: 60,
            steps_o: 100,
            hyperparams: Hyperparams::default(),
            eval_every: 100,
            seed: 0,
            mode: ExecutionMode::Lockstep,
            sync_slack: 600,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_workers", self.num_workers),
            ("episodes_p", self.episodes_p),
            ("steps_p", self.steps_p),
            ("episodes_o", self.episodes_o),
            ("steps_o", self.steps_o),
            ("eval_every", self.eval_every),
            ("sync_slack", self.sync_slack),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.hyperparams.validate()
    }
}

/// Which agent a training run or checkpoint is for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Position,
    Orientation,
    Ac3,
    Ac6,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Position => "position",
            AgentRole::Orientation => "orientation",
            AgentRole::Ac3 => "ac3",
            AgentRole::Ac6 => "ac6",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(AgentRole::Position),
            "orientation" => Ok(AgentRole::Orientation),
            "ac3" => Ok(AgentRole::Ac3),
            "ac6" => Ok(AgentRole::Ac6),
            other => Err(Error::Usage(format!(
                "unknown agent '{other}', expected position, orientation, ac3 or ac6"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// Completion order across all workers.
    pub episode: usize,
    pub worker: usize,
    pub worker_episode: usize,
    pub goal_index: usize,
    pub steps: usize,
    pub episode_return: f64,
    pub final_error: f64,
    pub success: bool,
    pub aborted: bool,
    /// Learner updates completed when the episode ended.
    pub updates: u64,
    /// Mean losses over the updates since the previous log entry.
    pub mean_critic_loss: Option<f64>,
    pub mean_actor_loss: Option<f64>,
    pub wall_time: f64,
    /// Hash of the actor copy the worker used; equals the learner's actor
    /// hash at the episode's start.
    pub actor_hash: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
    /// Transitions each worker pushed into the buffer.
    pub contributions: Vec<usize>,
    pub transitions: usize,
    pub updates: u64,
    /// Sync points where a worker's copy did not match the learner.
    pub sync_mismatches: usize,
}

pub const TRAINING_LOG_HEADER: &str = "episode,worker,worker_episode,goal,steps,return,final_error,success,aborted,updates,critic_loss,actor_loss,wall_time,actor_hash";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAINING_LOG_HEADER);
        out.push('\n');
        for e in &self.episodes {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{:016x}\n",
                e.episode,
                e.worker,
                e.worker_episode,
                e.goal_index,
                e.steps,
                e.episode_return,
                e.final_error,
                e.success as u8,
                e.aborted as u8,
                e.updates,
                opt(e.mean_critic_loss),
                opt(e.mean_actor_loss),
                e.wall_time,
                e.actor_hash
            ));
        }
        out
    }

    /// Copy with wall times zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> TrainingLog {
        let mut log = self.clone();
        for e in &mut log.episodes {
            e.wall_time = 0.0;
        }
        log
    }

    /// Mean return over the first and last `fraction` of episodes.
    pub fn return_trend(&self, fraction: f64) -> Option<(f64, f64)> {
        let n = self.episodes.len();
        let k = ((n as f64 * fraction).round() as usize).max(1);
        if n < 2 * k {
            return None;
        }
        let mean = |s: &[EpisodeLog]| s.iter().map(|e| e.episode_return).sum::<f64>() / s.len() as f64;
        Some((mean(&self.episodes[..k]), mean(&self.episodes[n - k..])))
    }
}

/// Orientation each training episode starts from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StartOrientation {
    Fixed(DVec3),
    /// The goal's own tip orientation, as if the orientation phase succeeded.
    GoalZeta,
}

impl StartOrientation {
    fn resolve(self, goal: &DeformationGoal) -> DVec3 {
        match self {
            StartOrientation::Fixed(o) => o,
            StartOrientation::GoalZeta => goal.zeta,
        }
    }
}

/// Observers for a training run.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub on_episode: Option<&'a mut (dyn FnMut(&EpisodeLog) + Send)>,
    /// Called every `eval_every` completed episodes and once at the end.
    pub on_checkpoint: Option<&'a mut (dyn FnMut(&DdpgAgent, &TrainingLog) -> Result<()> + Send)>,
}

struct LossAccumulator {
    critic: f64,
    actor: f64,
    count: u64,
}

impl LossAccumulator {
    fn new() -> Self {
        LossAccumulator { critic: 0.0, actor: 0.0, count: 0 }
    }

    fn add(&mut self, (c, a): (f64, f64)) {
        self.critic += c;
        self.actor += a;
        self.count += 1;
    }

    fn take(&mut self) -> (Option<f64>, Option<f64>) {
        let out = if self.count == 0 {
            (None, None)
        } else {
            (Some(self.critic / self.count as f64), Some(self.actor / self.count as f64))
        };
        *self = LossAccumulator::new();
        out
    }
}

struct Worker<E> {
    id: usize,
    env: E,
    policy: ActorSnapshot,
    goal_rng: rand_chacha::ChaCha8Rng,
    episodes_done: usize,
    in_episode: bool,
    goal_index: usize,
    state: Vec<f64>,
    episode_return: f64,
    start: Instant,
    actor_hash: u64,
}

impl<E: Environment> Worker<E> {
    fn new(id: usize, env: E, actor: &MlpNetwork, hp: &Hyperparams, seed: u64) -> Self {
        let noise = OuNoiseProcess::new(
            actor.output_size(),
            hp.ou_theta,
            hp.ou_sigma,
            hp.ou_dt,
            derive_seed(seed, 300 + id as u64),
        );
        Worker {
            id,
            env,
            policy: ActorSnapshot { actor: actor.clone(), noise },
            goal_rng: stream(seed, 200 + id as u64),
            episodes_done: 0,
            in_episode: false,
            goal_index: 0,
            state: Vec::new(),
            episode_return: 0.0,
            start: Instant::now(),
            actor_hash: 0,
        }
    }

    /// Starts an episode with a fresh copy of `actor`. Returns a finished
    /// log entry when the goal is already satisfied at reset.
    fn begin(
        &mut self,
        actor: &MlpNetwork,
        goals: &[DeformationGoal],
        start: StartOrientation,
    ) -> Result<Option<PartialEpisode>> {
        self.policy.actor.clone_from(actor);
        self.actor_hash = self.policy.actor.parameter_hash();
        self.policy.noise.reset();
        self.goal_index = self.goal_rng.random_range(0..goals.len());
        self.start = Instant::now();
        self.episode_return = 0.0;
        let goal = &goals[self.goal_index];
        match self.env.reset(goal, start.resolve(goal)) {
            Ok(s) => self.state = s,
            Err(Error::Divergence { .. }) => return Ok(Some(self.finish(true))),
            Err(e) => return Err(e),
        }
        if self.env.is_success() {
            return Ok(Some(self.finish(false)));
        }
        self.in_episode = true;
        Ok(None)
    }

    /// One exploratory step; the transition and, at episode end, its log.
    fn advance(&mut self) -> Result<(Option<Transition>, Option<PartialEpisode>)> {
        let action = self.policy.act(&self.state, true)?;
        match self.env.step(&action) {
            Ok(step) => {
                self.episode_return += step.reward;
                let t = Transition {
                    state: std::mem::replace(&mut self.state, step.next_state.clone()),
                    action,
                    next_state: step.next_state,
                    reward: step.reward,
                    terminal: step.success,
                };
                let done = step.done.then(|| self.finish(false));
                Ok((Some(t), done))
            }
            Err(Error::Divergence { .. }) => Ok((None, Some(self.finish(true)))),
            Err(e) => Err(e),
        }
    }

    fn finish(&mut self, aborted: bool) -> PartialEpisode {
        self.in_episode = false;
        self.episodes_done += 1;
        PartialEpisode {
            worker: self.id,
            worker_episode: self.episodes_done - 1,
            goal_index: self.goal_index,
            steps: self.env.steps(),
            episode_return: self.episode_return,
            final_error: if aborted { f64::INFINITY } else { self.env.error() },
            success: !aborted && self.env.is_success(),
            aborted,
            wall_time: self.start.elapsed().as_secs_f64(),
            actor_hash: self.actor_hash,
        }
    }
}

struct PartialEpisode {
    worker: usize,
    worker_episode: usize,
    goal_index: usize,
    steps: usize,
    episode_return: f64,
    final_error: f64,
    success: bool,
    aborted: bool,
    wall_time: f64,
    actor_hash: u64,
}

struct Recorder<'h, 'a> {
    log: TrainingLog,
    losses: LossAccumulator,
    hooks: &'h mut TrainHooks<'a>,
    eval_every: usize,
}

impl Recorder<'_, '_> {
    fn record(&mut self, p: PartialEpisode, agent: &DdpgAgent, learner_hash_at_start: Option<u64>) -> Result<()> {
        let (critic, actor) = self.losses.take();
        if let Some(h) = learner_hash_at_start {
            if h != p.actor_hash {
                self.log.sync_mismatches += 1;
            }
        }
        let entry = EpisodeLog {
            episode: self.log.episodes.len(),
            worker: p.worker,
            worker_episode: p.worker_episode,
            goal_index: p.goal_index,
            steps: p.steps,
            episode_return: p.episode_return,
            final_error: p.final_error,
            success: p.success,
            aborted: p.aborted,
            updates: self.log.updates,
            mean_critic_loss: critic,
            mean_actor_loss: actor,
            wall_time: p.wall_time,
            actor_hash: p.actor_hash,
        };
        if let Some(f) = self.hooks.on_episode.as_mut() {
            f(&entry);
        }
        self.log.episodes.push(entry);
        if self.log.episodes.len() % self.eval_every == 0 {
            if let Some(f) = self.hooks.on_checkpoint.as_mut() {
                f(agent, &self.log)?;
            }
        }
        Ok(())
    }

    fn finish(self, agent: &DdpgAgent) -> Result<TrainingLog> {
        if self.log.episodes.len() % self.eval_every != 0 {
            if let Some(f) = self.hooks.on_checkpoint.as_mut() {
                f(agent, &self.log)?;
            }
        }
        Ok(self.log)
    }
}

/// Trains a fresh agent on environments built by `make_env(worker_id)`.
pub fn train<E, F>(
    make_env: F,
    goals: &[DeformationGoal],
    start: StartOrientation,
    episodes_per_worker: usize,
    config: &TrainerConfig,
    hooks: &mut TrainHooks<'_>,
) -> Result<(DdpgAgent, TrainingLog)>
where
    E: Environment + Send,
    F: Fn(usize) -> Result<E>,
{
    config.validate()?;
    if goals.is_empty() {
        return Err(Error::Usage("training needs at least one goal".into()));
    }
    if episodes_per_worker == 0 {
        return Err(Error::Config("episodes per worker must be positive".into()));
    }
    let envs = (0..config.num_workers).map(&make_env).collect::<Result<Vec<E>>>()?;
    let (sd, ad) = (envs[0].state_dim(), envs[0].action_dim());
    let hp = &config.hyperparams;
    let agent = DdpgAgent::new(sd, ad, hp, derive_seed(config.seed, 1))?;
    let buffer = ReplayBuffer::new(hp.buffer_capacity, derive_seed(config.seed, 2))?;
    let workers: Vec<Worker<E>> = envs
        .into_iter()
        .enumerate()
        .map(|(i, env)| Worker::new(i, env, &agent.actor, hp, config.seed))
        .collect();
    let recorder = Recorder {
        log: TrainingLog {
            contributions: vec![0; config.num_workers],
            ..TrainingLog::default()
        },
        losses: LossAccumulator::new(),
        hooks,
        eval_every: config.eval_every,
    };
    match config.mode {
        ExecutionMode::Lockstep => lockstep(agent, buffer, workers, goals, start, episodes_per_worker, recorder),
        ExecutionMode::Threaded => threaded(agent, buffer, workers, goals, start, episodes_per_worker, config, recorder),
    }
}

fn learn_once(agent: &mut DdpgAgent, buffer: &mut ReplayBuffer, losses: &mut LossAccumulator) -> Result<()> {
    let batch = buffer.sample_batch(agent.batch_size)?;
    losses.add(agent.learn(&batch)?);
    Ok(())
}

fn lockstep<E: Environment>(
    mut agent: DdpgAgent,
    mut buffer: ReplayBuffer,
    mut workers: Vec<Worker<E>>,
    goals: &[DeformationGoal],
    start: StartOrientation,
    episodes: usize,
    mut rec: Recorder<'_, '_>,
) -> Result<(DdpgAgent, TrainingLog)> {
    let batch = agent.batch_size;
    let mut starts: Vec<u64> = vec![0; workers.len()];
    while workers.iter().any(|w| w.episodes_done < episodes) {
        for w in workers.iter_mut() {
            if w.episodes_done >= episodes {
                continue;
            }
            if !w.in_episode {
                starts[w.id] = agent.actor.parameter_hash();
                if let Some(done) = w.begin(&agent.actor, goals, start)? {
                    rec.record(done, &agent, Some(starts[w.id]))?;
                }
                continue;
            }
            let (t, done) = w.advance()?;
            if let Some(t) = t {
                buffer.store(t);
                rec.log.contributions[w.id] += 1;
                rec.log.transitions += 1;
                if buffer.len() >= batch {
                    learn_once(&mut agent, &mut buffer, &mut rec.losses)?;
                    rec.log.updates += 1;
                }
            }
            if let Some(done) = done {
                rec.record(done, &agent, Some(starts[w.id]))?;
            }
        }
    }
    let log = rec.finish(&agent)?;
    Ok((agent, log))
}

struct Shared {
    buffer: ReplayBuffer,
    /// Learner's actor as last published, with its hash.
    published: MlpNetwork,
    published_hash: u64,
    pending: Vec<PartialEpisode>,
    contributions: Vec<usize>,
    /// Updates the learner has completed.
    consumed: usize,
    error: Option<Error>,
    live_workers: usize,
}

#[allow(clippy::too_many_arguments)]
fn threaded<E: Environment + Send>(
    mut agent: DdpgAgent,
    buffer: ReplayBuffer,
    workers: Vec<Worker<E>>,
    goals: &[DeformationGoal],
    start: StartOrientation,
    episodes: usize,
    config: &TrainerConfig,
    mut rec: Recorder<'_, '_>,
) -> Result<(DdpgAgent, TrainingLog)> {
    let batch = agent.batch_size;
    let slack = config.sync_slack;
    let shared = Mutex::new(Shared {
        buffer,
        published_hash: agent.actor.parameter_hash(),
        published: agent.actor.clone(),
        pending: Vec::new(),
        contributions: vec![0; workers.len()],
        consumed: 0,
        error: None,
        live_workers: workers.len(),
    });
    let changed = Condvar::new();
    let owed = |total: u64| (total as usize).saturating_sub(batch - 1);
    let hash_log: Mutex<BTreeMap<(usize, usize), u64>> = Mutex::new(BTreeMap::new());

    let outcome: Result<()> = std::thread::scope(|scope| {
        for mut w in workers {
            let shared = &shared;
            let changed = &changed;
            let hash_log = &hash_log;
            scope.spawn(move || {
                let mut run = || -> Result<()> {
                    while w.episodes_done < episodes {
                        let (actor, hash) = {
                            let mut g = shared.lock().expect("trainer lock");
                            while g.error.is_none() && owed(g.buffer.total_inserted()) - g.consumed > slack {
                                g = changed.wait(g).expect("trainer lock");
                            }
                            if g.error.is_some() {
                                return Ok(());
                            }
                            (g.published.clone(), g.published_hash)
                        };
                        hash_log
                            .lock()
                            .expect("hash log")
                            .insert((w.id, w.episodes_done), hash);
                        if let Some(done) = w.begin(&actor, goals, start)? {
                            shared.lock().expect("trainer lock").pending.push(done);
                            changed.notify_all();
                            continue;
                        }
                        while w.in_episode {
                            let (t, done) = w.advance()?;
                            let mut g = shared.lock().expect("trainer lock");
                            if let Some(t) = t {
                                g.buffer.store(t);
                                g.contributions[w.id] += 1;
                            }
                            if let Some(done) = done {
                                g.pending.push(done);
                            }
                            drop(g);
                            changed.notify_all();
                        }
                    }
                    Ok(())
                };
                let result = run();
                let mut g = shared.lock().expect("trainer lock");
                g.live_workers -= 1;
                if let Err(e) = result {
                    g.error.get_or_insert(e);
                }
                drop(g);
                changed.notify_all();
            });
        }

        loop {
            let mut g = shared.lock().expect("trainer lock");
            while g.error.is_none()
                && g.pending.is_empty()
                && g.live_workers > 0
                && g.consumed >= owed(g.buffer.total_inserted())
            {
                g = changed.wait(g).expect("trainer lock");
            }
            if let Some(e) = g.error.take() {
                g.error = Some(Error::Usage("training aborted".into()));
                drop(g);
                changed.notify_all();
                return Err(e);
            }
            let pending = std::mem::take(&mut g.pending);
            let can_learn = g.consumed < owed(g.buffer.total_inserted());
            let finished = g.live_workers == 0 && pending.is_empty() && !can_learn;
            let sampled = if can_learn {
                Some(g.buffer.sample_batch(batch))
            } else {
                None
            };
            let total = g.buffer.total_inserted() as usize;
            drop(g);

            for p in pending {
                let start_hash = hash_log
                    .lock()
                    .expect("hash log")
                    .get(&(p.worker, p.worker_episode))
                    .copied();
                rec.record(p, &agent, start_hash)?;
            }
            if let Some(b) = sampled {
                rec.losses.add(agent.learn(&b?)?);
                rec.log.updates += 1;
                let mut g = shared.lock().expect("trainer lock");
                g.consumed += 1;
                g.published.clone_from(&agent.actor);
                g.published_hash = g.published.parameter_hash();
                drop(g);
                changed.notify_all();
            }
            rec.log.transitions = total;
            if finished {
                break;
            }
        }
        Ok(())
    });
    outcome?;
    let g = shared.into_inner().expect("trainer lock");
    rec.log.transitions = g.buffer.total_inserted() as usize;
    rec.log.contributions = g.contributions;
    let log = rec.finish(&agent)?;
    Ok((agent, log))
}

/// Bundled environment settings shared by training and evaluation.
#[derive(Clone, Debug)]
pub struct TaskSetup {
    pub sim: Simulator,
    pub episode: EpisodeConfig,
    pub m: usize,
}

impl TaskSetup {
    pub fn orientation_env(&self, max_steps: usize) -> Result<OrientationEnv> {
        OrientationEnv::new(
            EpisodeConfig {
                max_steps_o: max_steps,
                ..self.episode.clone()
            },
            self.sim.config().control_dt,
            self.m,
        )
    }

    pub fn position_env(&self, reward: RewardKind, actuation: Actuation, max_steps: usize) -> Result<PositionEnv> {
        PositionEnv::new(
            self.sim.clone(),
            EpisodeConfig {
                max_steps_p: max_steps,
                ..self.episode.clone()
            },
            reward,
            actuation,
            self.m,
        )
    }
}

/// Orientation agent on the kinematic environment, from the initial orientation.
pub fn train_agent_o(
    config: &TrainerConfig,
    setup: &TaskSetup,
    goals: &[DeformationGoal],
    hooks: &mut TrainHooks<'_>,
) -> Result<(DdpgAgent, TrainingLog)> {
    train(
        |_| setup.orientation_env(config.steps_o),
        goals,
        StartOrientation::Fixed(setup.episode.initial_orientation),
        config.episodes_o,
        config,
        hooks,
    )
}

/// Position agent, each episode starting with the tip already at the goal
/// orientation.
pub fn train_agent_p(
    config: &TrainerConfig,
    setup: &TaskSetup,
    goals: &[DeformationGoal],
    reward: RewardKind,
    hooks: &mut TrainHooks<'_>,
) -> Result<(DdpgAgent, TrainingLog)> {
    train(
        |_| setup.position_env(reward, Actuation::Translation, config.steps_p),
        goals,
        StartOrientation::GoalZeta,
        config.episodes_p,
        config,
        hooks,
    )
}

/// AC3 (translation only) or AC6 (translation and rotation) baseline agent,
/// starting from the initial orientation.
pub fn train_single_agent(
    config: &TrainerConfig,
    setup: &TaskSetup,
    goals: &[DeformationGoal],
    reward: RewardKind,
    actuation: Actuation,
    hooks: &mut TrainHooks<'_>,
) -> Result<(DdpgAgent, TrainingLog)> {
    train(
        |_| setup.position_env(reward, actuation, config.steps_p),
        goals,
        StartOrientation::Fixed(setup.episode.initial_orientation),
        config.episodes_p,
        config,
        hooks,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Multiac6,
    Multiac6Star,
    Ac3,
    Ac6,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiac6" => Ok(EvalMode::Multiac6),
            "multiac6_star" => Ok(EvalMode::Multiac6Star),
            "ac3" => Ok(EvalMode::Ac3),
            "ac6" => Ok(EvalMode::Ac6),
            other => Err(Error::Usage(format!(
                "unknown mode '{other}', expected multiac6, multiac6_star, ac3 or ac6"
            ))),
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Multiac6 => "multiac6",
            EvalMode::Multiac6Star => "multiac6_star",
            EvalMode::Ac3 => "ac3",
            EvalMode::Ac6 => "ac6",
        })
    }
}

/// Trained actors used by an evaluation. `orientation` is required only by
/// [`EvalMode::Multiac6`]; `main` is Agent_p or the baseline actor.
#[derive(Clone, Copy, Debug)]
pub struct EvalAgents<'a> {
    pub orientation: Option<&'a MlpNetwork>,
    pub main: &'a MlpNetwork,
}

/// Goal orientation as seen by the agents, with each component perturbed
/// uniformly in `[-noise_deg, noise_deg]` from a per-goal stream.
pub fn perturbed_zeta(goal: &DeformationGoal, noise_deg: f64, seed: u64, goal_index: usize) -> DVec3 {
    if noise_deg == 0.0 {
        return goal.zeta;
    }
    let mut rng = stream(derive_seed(seed, 0x7e7a), goal_index as u64);
    let n = noise_deg.to_radians();
    let d = DVec3::new(
        rng.random_range(-n..=n),
        rng.random_range(-n..=n),
        rng.random_range(-n..=n),
    );
    crate::geometry::wrap_euler(goal.zeta + d)
}

/// One greedy episode per goal at `setup.episode.delta_p`.
pub fn evaluate(
    agents: EvalAgents<'_>,
    goals: &[DeformationGoal],
    setup: &TaskSetup,
    mode: EvalMode,
    zeta_noise_deg: f64,
    seed: u64,
) -> Result<EvalReport> {
    if goals.is_empty() {
        return Err(Error::Usage("evaluation needs at least one goal".into()));
    }
    if !(zeta_noise_deg.is_finite() && zeta_noise_deg >= 0.0) {
        return Err(Error::Usage("zeta noise must be a non-negative number of degrees".into()));
    }
    let ep = &setup.episode;
    let actuation = if mode == EvalMode::Ac6 { Actuation::Full } else { Actuation::Translation };
    let mut penv = setup.position_env(RewardKind::Max, actuation, ep.max_steps_p)?;
    let expected = penv.state_dim();
    if agents.main.input_size() != expected || agents.main.output_size() != penv.action_dim() {
        return Err(Error::Incompatible(format!(
            "{mode} needs a {expected}-input, {}-output actor; checkpoint has {} inputs and {} outputs",
            penv.action_dim(),
            agents.main.input_size(),
            agents.main.output_size()
        )));
    }
    let mut oenv = setup.orientation_env(ep.max_steps_o)?;
    let orientation = match mode {
        EvalMode::Multiac6 => {
            let o = agents
                .orientation
                .ok_or_else(|| Error::Usage("multiac6 evaluation needs an orientation agent".into()))?;
            if o.input_size() != oenv.state_dim() || o.output_size() != 3 {
                return Err(Error::Incompatible(format!(
                    "orientation actor must map {} inputs to 3 outputs",
                    oenv.state_dim()
                )));
            }
            Some(o)
        }
        _ => None,
    };
    let mut outcomes = Vec::with_capacity(goals.len());
    for (i, goal) in goals.iter().enumerate() {
        let seen = goal.with_zeta(perturbed_zeta(goal, zeta_noise_deg, seed, i));
        let mut main = Greedy(agents.main);
        let trace = match mode {
            EvalMode::Multiac6 => {
                let mut o = Greedy(orientation.expect("checked"));
                run_episode_multiac6(&mut oenv, &mut penv, &mut o, &mut main, &seen, false, false)?
            }
            EvalMode::Multiac6Star => run_episode_multiac6_star(&mut penv, &mut main, &seen, false, false)?,
            EvalMode::Ac3 | EvalMode::Ac6 => run_episode_single_agent(&mut penv, &mut main, goal, false, false)?,
        };
        let last = trace.final_outcome().expect("position phase always runs");
        outcomes.push(EvalOutcome {
            goal_id: i,
            success: last.success,
            final_error: last.final_error,
            steps_used: trace.outcomes.iter().map(|o| o.steps).sum(),
        });
    }
    aggregate(outcomes)
}

/// Separate evaluations, one per position threshold, in the given order.
pub fn evaluate_thresholds(
    agents: EvalAgents<'_>,
    goals: &[DeformationGoal],
    setup: &TaskSetup,
    mode: EvalMode,
    zeta_noise_deg: f64,
    seed: u64,
    deltas: &[f64],
) -> Result<Vec<(f64, EvalReport)>> {
    deltas
        .iter()
        .map(|&d| {
            let s = TaskSetup {
                episode: setup.episode.with_delta_p(d),
                ..setup.clone()
            };
            evaluate(agents, goals, &s, mode, zeta_noise_deg, seed).map(|r| (d, r))
        })
        .collect()
}

/// Orientation-only success rate of a greedy Agent_o from the initial orientation.
pub fn evaluate_orientation(actor: &MlpNetwork, goals: &[DeformationGoal], setup: &TaskSetup) -> Result<EvalReport> {
    if goals.is_empty() {
        return Err(Error::Usage("evaluation needs at least one goal".into()));
    }
    let mut env = setup.orientation_env(setup.episode.max_steps_o)?;
    let mut outcomes = Vec::with_capacity(goals.len());
    for (i, goal) in goals.iter().enumerate() {
        let mut trace = crate::task::EpisodeTrace::default();
        crate::task::run_orientation_phase(
            &mut env,
            &mut Greedy(actor),
            goal,
            setup.episode.initial_orientation,
            false,
            &mut trace,
        )?;
        let o = &trace.outcomes[0];
        outcomes.push(EvalOutcome {
            goal_id: i,
            success: o.success,
            final_error: o.final_error,
            steps_used: o.steps,
        });
    }
    aggregate(outcomes)
}

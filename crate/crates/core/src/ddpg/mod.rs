//! Off-policy deterministic actor-critic learner.
//!
//! The critic regresses onto bootstrapped targets `r + gamma * Q'(s', mu'(s'))`
//! computed with the target networks, minimizing the batch mean squared
//! error. The actor minimizes `-mean Q(s, mu(s))`, with the gradient flowing
//! through the critic's action inputs. Target networks follow the main
//! networks by Polyak averaging after every update.

mod noise;
mod replay;

pub use noise::OuNoiseProcess;
pub use replay::{Batch, ReplayBuffer, Transition};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::nn::{AdamState, GradientSet, MlpNetwork, OutputActivation};
use crate::rng::derive_seed;

/// Learner hyperparameters. Defaults give the three 256-wide hidden layers,
/// learning rates, buffer size, batch size, and discount used for the
/// published agents; `tau` and the noise constants follow the usual DDPG
/// settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
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
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden_layers: 3,
            hidden_size: 256,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            buffer_capacity: 50_000,
            batch_size: 128,
            gamma: 0.99,
            tau: 0.01,
            ou_theta: 0.15,
            ou_sigma: 0.2,
            ou_dt: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive_ints = [
            ("hidden_layers", self.hidden_layers),
            ("hidden_size", self.hidden_size),
            ("buffer_capacity", self.buffer_capacity),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive_ints {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let positive = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("ou_theta", self.ou_theta),
            ("ou_dt", self.ou_dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.ou_sigma.is_finite() && self.ou_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "ou_sigma must be non-negative, got {}",
                self.ou_sigma
            )));
        }
        for (name, v) in [("gamma", self.gamma), ("tau", self.tau)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::Config(format!(
                "batch_size {} exceeds buffer_capacity {}",
                self.batch_size, self.buffer_capacity
            )));
        }
        Ok(())
    }

    pub fn actor_sizes(&self, state_dim: usize, action_dim: usize) -> Vec<usize> {
        let mut sizes = vec![state_dim];
        sizes.extend(std::iter::repeat_n(self.hidden_size, self.hidden_layers));
        sizes.push(action_dim);
        sizes
    }

    /// The critic sees the state and action concatenated at its input.
    pub fn critic_sizes(&self, state_dim: usize, action_dim: usize) -> Vec<usize> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend(std::iter::repeat_n(self.hidden_size, self.hidden_layers));
        sizes.push(1);
        sizes
    }
}

/// `r + gamma * next_q`, or `r` alone on terminal transitions.
pub fn bellman_target(reward: f64, terminal: bool, next_q: f64, gamma: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_q
    }
}

/// Adds one noise sample to `action` and clamps every component to `[-1, 1]`.
pub fn perturb_action(mut action: Vec<f64>, noise: &mut OuNoiseProcess) -> Vec<f64> {
    for (a, n) in action.iter_mut().zip(noise.sample()) {
        *a = (*a + n).clamp(-1.0, 1.0);
    }
    action
}

/// Anything that maps a state vector to an action in `[-1, 1]^d`.
pub trait Policy {
    fn action_dim(&self) -> usize;
    fn act(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>>;
}

/// A read-only copy of an actor with its own exploration noise, as held by
/// a rollout worker between synchronization points.
#[derive(Clone, Debug)]
pub struct ActorSnapshot {
    pub actor: MlpNetwork,
    pub noise: OuNoiseProcess,
}

impl Policy for ActorSnapshot {
    fn action_dim(&self) -> usize {
        self.actor.output_size()
    }

    fn act(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        let a = self.actor.forward(state)?;
        Ok(if explore {
            perturb_action(a, &mut self.noise)
        } else {
            a
        })
    }
}

/// Deterministic evaluation wrapper; `explore` is ignored.
#[derive(Clone, Copy, Debug)]
pub struct Greedy<'a>(pub &'a MlpNetwork);

impl Policy for Greedy<'_> {
    fn action_dim(&self) -> usize {
        self.0.output_size()
    }

    fn act(&mut self, state: &[f64], _explore: bool) -> Result<Vec<f64>> {
        self.0.forward(state)
    }
}

#[derive(Clone, Debug)]
pub struct DdpgAgent {
    pub actor: MlpNetwork,
    pub critic: MlpNetwork,
    pub actor_target: MlpNetwork,
    pub critic_target: MlpNetwork,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub noise: OuNoiseProcess,
}

/// Output layers start small so the first actions and Q-values are near zero.
const OUTPUT_INIT_BOUND: f64 = 3e-3;

impl DdpgAgent {
    pub fn new(state_dim: usize, action_dim: usize, hp: &Hyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        let actor = MlpNetwork::with_output_bound(
            &hp.actor_sizes(state_dim, action_dim),
            OutputActivation::Tanh,
            OUTPUT_INIT_BOUND,
            derive_seed(seed, 1),
        )?;
        let critic = MlpNetwork::with_output_bound(
            &hp.critic_sizes(state_dim, action_dim),
            OutputActivation::Identity,
            OUTPUT_INIT_BOUND,
            derive_seed(seed, 2),
        )?;
        let noise = OuNoiseProcess::new(action_dim, hp.ou_theta, hp.ou_sigma, hp.ou_dt, derive_seed(seed, 3));
        Self::from_networks(actor, critic, hp, noise)
    }

    /// Wraps existing networks; targets start as exact copies.
    pub fn from_networks(
        actor: MlpNetwork,
        critic: MlpNetwork,
        hp: &Hyperparams,
        noise: OuNoiseProcess,
    ) -> Result<Self> {
        ensure_len(
            "critic input",
            actor.input_size() + actor.output_size(),
            critic.input_size(),
        )?;
        ensure_len("critic output", 1, critic.output_size())?;
        ensure_len("noise dimension", actor.output_size(), noise.dim())?;
        Ok(DdpgAgent {
            actor_opt: AdamState::new(&actor, hp.actor_lr),
            critic_opt: AdamState::new(&critic, hp.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            gamma: hp.gamma,
            tau: hp.tau,
            batch_size: hp.batch_size,
            noise,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_size()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_size()
    }

    pub fn select_action(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        let a = self.actor.forward(state)?;
        Ok(if explore {
            perturb_action(a, &mut self.noise)
        } else {
            a
        })
    }

    pub fn snapshot(&self, noise: OuNoiseProcess) -> ActorSnapshot {
        ActorSnapshot {
            actor: self.actor.clone(),
            noise,
        }
    }

    /// Critic estimates for a batch of state-action rows.
    pub fn q_values(&self, states: &[f64], actions: &[f64], rows: usize) -> Result<Vec<f64>> {
        let input = self.critic_input(states, actions, rows)?;
        Ok(self.critic.forward_batch(&input, rows)?.output().to_vec())
    }

    /// Bellman targets for every transition of the batch.
    pub fn bellman_targets(&self, batch: &Batch) -> Result<Vec<f64>> {
        let next_actions = self.actor_target.forward_batch(&batch.next_states, batch.len)?;
        let input = self.critic_input(&batch.next_states, next_actions.output(), batch.len)?;
        let next_q = self.critic_target.forward_batch(&input, batch.len)?;
        Ok(batch
            .rewards
            .iter()
            .zip(&batch.terminals)
            .zip(next_q.output())
            .map(|((&r, &done), &q)| bellman_target(r, done, q, self.gamma))
            .collect())
    }

    /// Mean squared Bellman error and its gradient for the critic.
    pub fn critic_loss_and_gradient(&self, batch: &Batch) -> Result<(f64, GradientSet)> {
        self.check_batch(batch)?;
        let targets = self.bellman_targets(batch)?;
        let input = self.critic_input(&batch.states, &batch.actions, batch.len)?;
        let acts = self.critic.forward_batch(&input, batch.len)?;
        let n = batch.len as f64;
        let residuals: Vec<f64> = targets.iter().zip(acts.output()).map(|(t, q)| t - q).collect();
        let loss = residuals.iter().map(|r| r * r).sum::<f64>() / n;
        let dq: Vec<f64> = residuals.iter().map(|r| -2.0 * r / n).collect();
        let (grads, _) = self.critic.backward_batch(&acts, &dq)?;
        Ok((loss, grads))
    }

    /// `-mean Q(s, mu(s))` and its gradient with respect to the actor.
    pub fn policy_loss_and_gradient(&self, batch: &Batch) -> Result<(f64, GradientSet)> {
        self.check_batch(batch)?;
        let rows = batch.len;
        let actor_acts = self.actor.forward_batch(&batch.states, rows)?;
        let input = self.critic_input(&batch.states, actor_acts.output(), rows)?;
        let critic_acts = self.critic.forward_batch(&input, rows)?;
        let n = rows as f64;
        let loss = -critic_acts.output().iter().sum::<f64>() / n;
        let dq = vec![-1.0 / n; rows];
        let d_input = self.critic.input_gradient_batch(&critic_acts, &dq)?;
        let (sd, ad) = (batch.state_dim, batch.action_dim);
        let d_action: Vec<f64> = d_input
            .chunks_exact(sd + ad)
            .flat_map(|row| row[sd..].iter().copied())
            .collect();
        let (grads, _) = self.actor.backward_batch(&actor_acts, &d_action)?;
        Ok((loss, grads))
    }

    /// One Adam step on the critic; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grads) = self.critic_loss_and_gradient(batch)?;
        self.critic_opt.step(&mut self.critic, &grads)?;
        Ok(loss)
    }

    /// One Adam step on the actor; the critic is left untouched.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grads) = self.policy_loss_and_gradient(batch)?;
        self.actor_opt.step(&mut self.actor, &grads)?;
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        self.actor_target.polyak_update(&self.actor, tau)?;
        self.critic_target.polyak_update(&self.critic, tau)
    }

    /// Critic update, then actor update, then target update.
    pub fn learn(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let critic_loss = self.critic_update(batch)?;
        let actor_loss = self.actor_update(batch)?;
        self.soft_update_targets(self.tau)?;
        Ok((critic_loss, actor_loss))
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.len == 0 {
            return Err(Error::Usage("empty batch".into()));
        }
        ensure_len("batch state", self.state_dim(), batch.state_dim)?;
        ensure_len("batch action", self.action_dim(), batch.action_dim)
    }

    fn critic_input(&self, states: &[f64], actions: &[f64], rows: usize) -> Result<Vec<f64>> {
        let (sd, ad) = (self.state_dim(), self.action_dim());
        ensure_len("critic states", rows * sd, states.len())?;
        ensure_len("critic actions", rows * ad, actions.len())?;
        let mut out = Vec::with_capacity(rows * (sd + ad));
        for (s, a) in states.chunks_exact(sd).zip(actions.chunks_exact(ad)) {
            out.extend_from_slice(s);
            out.extend_from_slice(a);
        }
        Ok(out)
    }
}

impl Policy for DdpgAgent {
    fn action_dim(&self) -> usize {
        self.actor.output_size()
    }

    fn act(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        self.select_action(state, explore)
    }
}

//! Experience collection and the training loop.
//!
//! Every real interaction yields one [`AugmentedTransition`]: the executed
//! step plus, when it can be estimated, the step the learned policy would
//! have taken from the same observation.

mod counterfactual;
mod trainer;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use counterfactual::counterfactual_estimate;
pub use trainer::{evaluate, train, Checkpoint, EpochMetrics, EvalReport, ModelLossRecord, RunOutput, Trainer, UpdateRecord, CHECKPOINT_VERSION};

use crate::config::ConfigError;
use crate::dynamics::DynamicsError;
use crate::policy::{FusionState, PolicyError};
use crate::prior::{BasicController, PriorError};
use crate::sim::{ContinuumEnv, MotorCommand, Observation, SimError, Transition};

/// Ratio clamp used when extrapolating to alternative actions.
pub const MAX_COUNTERFACTUAL_RATIO: f64 = 5.0;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("cannot sample from an empty buffer")]
    EmptyBuffer,
    #[error("incompatible checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    InitialExploration,
    Fusion,
}

/// Action, reward and outcome of one branch of an interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Half {
    pub action: MotorCommand,
    pub reward: f64,
    pub next: Observation,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedTransition {
    pub obs: Observation,
    /// Estimated outcome of the policy's own action; absent when no estimate exists.
    pub mbpo: Option<Half>,
    /// What was executed.
    pub real: Half,
    pub phase: Phase,
}

impl AugmentedTransition {
    pub fn real_transition(&self) -> Transition {
        let h = &self.real;
        Transition { obs: self.obs, action: h.action, reward: h.reward, next: h.next, done: h.done }
    }

    pub fn mbpo_transition(&self) -> Option<Transition> {
        self.mbpo.map(|h| Transition { obs: self.obs, action: h.action, reward: h.reward, next: h.next, done: h.done })
    }
}

/// Fixed-capacity FIFO.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<T>, AgentError> {
        if self.items.is_empty() {
            return Err(AgentError::EmptyBuffer);
        }
        Ok((0..n).map(|_| self.items[rng.random_range(0..self.items.len())].clone()).collect())
    }
}

pub fn store_transition(buffer: &mut ReplayBuffer<AugmentedTransition>, t: AugmentedTransition) {
    buffer.push(t);
}

/// A training sample and whether it came from the estimated branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drawn {
    pub transition: Transition,
    pub from_mbpo: bool,
}

/// Draws `batch` tuples; each contributes its estimated half with
/// probability `1 - zeta_bas` (when it has one) and its executed half otherwise.
pub fn weighted_sample<R: Rng + ?Sized>(
    buffer: &ReplayBuffer<AugmentedTransition>,
    fusion: &FusionState,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<Drawn>, AgentError> {
    let tuples = buffer.sample(batch, rng)?;
    let p_mbpo = fusion.zeta_real().clamp(0.0, 1.0);
    Ok(tuples
        .into_iter()
        .map(|t| {
            let pick = rng.random_bool(p_mbpo);
            match (pick, t.mbpo_transition()) {
                (true, Some(m)) => Drawn { transition: m, from_mbpo: true },
                _ => Drawn { transition: t.real_transition(), from_mbpo: false },
            }
        })
        .collect())
}

/// Ends of episodes seen while stepping, for task-length bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub lengths: Vec<usize>,
}

fn uniform_action<R: Rng + ?Sized>(rng: &mut R) -> MotorCommand {
    MotorCommand::new(std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
}

/// Runs `n` steps of the basic controller, pairing each with a uniform
/// alternative whose outcome is estimated; resets on episode end using
/// seeds drawn from `seed_rng`. Returns the observation to continue from.
#[allow(clippy::too_many_arguments)]
pub fn initial_exploration<R: Rng + ?Sized, S: Rng + ?Sized>(
    env: &mut ContinuumEnv,
    basic: &BasicController,
    buffer: &mut ReplayBuffer<AugmentedTransition>,
    n: usize,
    mut obs: Observation,
    rng: &mut R,
    seed_rng: &mut S,
    log: &mut EpisodeLog,
) -> Result<Observation, AgentError> {
    for _ in 0..n {
        let a_bas = basic.action(&obs, rng).unwrap_or_default();
        let a_uni = uniform_action(rng);
        let res = env.step(&a_bas)?;
        let done = res.done && !res.info.truncated;
        let mbpo = counterfactual_estimate(&basic.map, &obs, &a_bas, res.reward, &res.obs, &a_uni, MAX_COUNTERFACTUAL_RATIO)
            .map(|(r, next)| Half { action: a_uni, reward: r, next, done: done || !next.visible });
        store_transition(
            buffer,
            AugmentedTransition {
                obs,
                mbpo,
                real: Half { action: a_bas, reward: res.reward, next: res.obs, done },
                phase: Phase::InitialExploration,
            },
        );
        obs = res.obs;
        if res.done {
            log.lengths.push(res.info.episode_step);
            obs = env.reset(seed_rng.random())?;
        }
    }
    Ok(obs)
}

/// Uniform-random counterpart used by the baselines: executed actions are
/// uniform and no estimated half is stored.
pub fn uniform_exploration<R: Rng + ?Sized, S: Rng + ?Sized>(
    env: &mut ContinuumEnv,
    buffer: &mut ReplayBuffer<AugmentedTransition>,
    n: usize,
    mut obs: Observation,
    rng: &mut R,
    seed_rng: &mut S,
    log: &mut EpisodeLog,
) -> Result<Observation, AgentError> {
    for _ in 0..n {
        let a = uniform_action(rng);
        let res = env.step(&a)?;
        let done = res.done && !res.info.truncated;
        store_transition(
            buffer,
            AugmentedTransition {
                obs,
                mbpo: None,
                real: Half { action: a, reward: res.reward, next: res.obs, done },
                phase: Phase::InitialExploration,
            },
        );
        obs = res.obs;
        if res.done {
            log.lengths.push(res.info.episode_step);
            obs = env.reset(seed_rng.random())?;
        }
    }
    Ok(obs)
}

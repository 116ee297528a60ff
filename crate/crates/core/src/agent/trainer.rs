use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    counterfactual_estimate, initial_exploration, store_transition, uniform_exploration, weighted_sample, AgentError,
    AugmentedTransition, EpisodeLog, Half, Phase, ReplayBuffer, MAX_COUNTERFACTUAL_RATIO,
};
use crate::config::{ExperimentConfig, Mode};
use crate::dynamics::{branch_rollout, EnsembleModel, RolloutReward};
use crate::gauss::DiagGaussian;
use crate::policy::{augmented_reward, to_presquash, FusionState, SacAgent};
use crate::prior::{estimate_accuracy, AccuracyEstimate};
use crate::sim::{ContinuumEnv, MotorCommand, Observation, Transition};

pub const CHECKPOINT_VERSION: u32 = 1;

/// One row of the metrics file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Sum of environment rewards over the epoch.
    #[serde(rename = "return")]
    pub total_return: f64,
    /// Mean length of the episodes that ended during the epoch.
    pub task_length: f64,
    pub mean_kl: f64,
    pub zeta_bas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub step: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub batch_kl: f64,
    pub zeta_bas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelLossRecord {
    pub step: usize,
    pub mean_nll: f64,
    pub max_nll: f64,
    pub rollout_transitions: usize,
}

/// Independent random streams derived from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStreams {
    /// Episode reset seeds.
    pub env: ChaCha8Rng,
    /// Action draws.
    pub act: ChaCha8Rng,
    /// Replay sampling and SAC noise.
    pub replay: ChaCha8Rng,
    /// Ensemble batches and rollouts.
    pub model: ChaCha8Rng,
}

impl RngStreams {
    pub fn from_seed(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self { env: stream(1), act: stream(2), replay: stream(3), model: stream(4) }
    }
}

/// Everything needed to evaluate or inspect a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ExperimentConfig,
    pub epochs_done: usize,
    pub agent: Option<SacAgent>,
    pub model: Option<EnsembleModel>,
    pub estimate: Option<AccuracyEstimate>,
    pub fusion: FusionState,
    pub rngs: RngStreams,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let h: Header = serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        if h.version != CHECKPOINT_VERSION {
            return Err(AgentError::CheckpointVersion { found: h.version, expected: CHECKPOINT_VERSION });
        }
        let c: Self = serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        c.config.validate()?;
        if c.config.mode.learns() != c.agent.is_some() {
            return Err(AgentError::Checkpoint(format!("mode {} does not match the stored networks", c.config.mode)));
        }
        if c.agent.as_ref().is_some_and(|a| !a.actor.all_finite()) {
            return Err(AgentError::Checkpoint("non-finite actor parameters".into()));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<EpochMetrics>,
    pub updates: Vec<UpdateRecord>,
    pub model_losses: Vec<ModelLossRecord>,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Default)]
struct EpochAcc {
    total_return: f64,
    log: EpisodeLog,
    kl_sum: f64,
    kl_count: usize,
}

/// The training loop of one run.
#[derive(Debug)]
pub struct Trainer {
    config: ExperimentConfig,
    env: ContinuumEnv,
    agent: Option<SacAgent>,
    model: Option<EnsembleModel>,
    buffer: ReplayBuffer<AugmentedTransition>,
    model_buffer: ReplayBuffer<Transition>,
    fusion: FusionState,
    estimate: Option<AccuracyEstimate>,
    rngs: RngStreams,
    obs: Observation,
    step: usize,
    explored: bool,
    metrics: Vec<EpochMetrics>,
    updates: Vec<UpdateRecord>,
    model_losses: Vec<ModelLossRecord>,
}

impl Trainer {
    pub fn new(config: ExperimentConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let mode = config.mode;
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let agent = if mode.learns() { Some(SacAgent::new(config.sac, &mut init)?) } else { None };
        let model = if mode.uses_models() { Some(EnsembleModel::new(config.ensemble, &mut init)?) } else { None };
        let mut fusion = config.fusion;
        if !mode.uses_prior() {
            fusion.zeta_bas = 0.0;
            fusion.lr = 0.0;
        }
        let mut rngs = RngStreams::from_seed(config.seed);
        let mut env = ContinuumEnv::new(config.env.clone())?;
        let obs = env.reset(rngs.env.random())?;
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_size),
            model_buffer: ReplayBuffer::new(config.model_buffer_size),
            config,
            env,
            agent,
            model,
            fusion,
            estimate: None,
            rngs,
            obs,
            step: 0,
            explored: !mode.learns(),
            metrics: Vec::new(),
            updates: Vec::new(),
            model_losses: Vec::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    pub fn updates(&self) -> &[UpdateRecord] {
        &self.updates
    }

    pub fn model_losses(&self) -> &[ModelLossRecord] {
        &self.model_losses
    }

    pub fn buffer(&self) -> &ReplayBuffer<AugmentedTransition> {
        &self.buffer
    }

    pub fn fusion(&self) -> &FusionState {
        &self.fusion
    }

    pub fn estimate(&self) -> Option<&AccuracyEstimate> {
        self.estimate.as_ref()
    }

    /// Fills the buffer before learning starts: basic-controller steps
    /// with estimated uniform alternatives under the prior, uniform steps
    /// otherwise. The prior's accuracy is estimated from the executed halves.
    pub fn explore(&mut self) -> Result<(), AgentError> {
        if self.explored {
            return Ok(());
        }
        let n = self.config.initial_exploration;
        let mut log = EpisodeLog::default();
        self.obs = if self.config.mode.uses_prior() {
            initial_exploration(&mut self.env, &self.config.basic, &mut self.buffer, n, self.obs, &mut self.rngs.act, &mut self.rngs.env, &mut log)?
        } else {
            uniform_exploration(&mut self.env, &mut self.buffer, n, self.obs, &mut self.rngs.act, &mut self.rngs.env, &mut log)?
        };
        let obs: Vec<Observation> = self.buffer.iter().map(|t| t.obs).collect();
        if let Some(agent) = self.agent.as_mut() {
            agent.set_obs_normalizer(&obs);
        }
        if self.config.mode.uses_prior() {
            let steps: Vec<_> = self.buffer.iter().map(|t| (t.obs, t.real.action, t.real.next)).collect();
            self.estimate = Some(estimate_accuracy(&self.config.basic.map, &steps).unwrap_or_else(|_| AccuracyEstimate::perfect()));
        }
        self.explored = true;
        Ok(())
    }

    pub fn run_epoch(&mut self) -> Result<EpochMetrics, AgentError> {
        self.explore()?;
        let mut acc = EpochAcc::default();
        for _ in 0..self.config.epoch_length {
            self.step_once(&mut acc)?;
        }
        let lengths = &acc.log.lengths;
        let m = EpochMetrics {
            epoch: self.metrics.len() + 1,
            total_return: acc.total_return,
            task_length: if lengths.is_empty() { f64::NAN } else { lengths.iter().sum::<usize>() as f64 / lengths.len() as f64 },
            mean_kl: if acc.kl_count == 0 { f64::NAN } else { acc.kl_sum / acc.kl_count as f64 },
            zeta_bas: self.fusion.zeta_bas,
        };
        self.metrics.push(m);
        Ok(m)
    }

    pub fn run(mut self) -> Result<RunOutput, AgentError> {
        for _ in 0..self.config.epochs {
            self.run_epoch()?;
        }
        Ok(self.into_output())
    }

    pub fn into_output(self) -> RunOutput {
        let checkpoint = self.checkpoint();
        RunOutput { metrics: self.metrics, updates: self.updates, model_losses: self.model_losses, checkpoint }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            epochs_done: self.metrics.len(),
            agent: self.agent.clone(),
            model: self.model.clone(),
            estimate: self.estimate,
            fusion: self.fusion,
            rngs: self.rngs.clone(),
        }
    }

    /// Compact state summary for failure reports.
    pub fn diagnostic(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": self.config.mode.as_str(),
            "seed": self.config.seed,
            "epochs_done": self.metrics.len(),
            "step": self.step,
            "buffer_len": self.buffer.len(),
            "model_buffer_len": self.model_buffer.len(),
            "zeta_bas": self.fusion.zeta_bas,
            "estimate": self.estimate,
            "observation": self.obs,
            "last_update": self.updates.last(),
            "last_model_loss": self.model_losses.last(),
            "metrics": self.metrics,
        })
    }

    fn estimate_or_perfect(&self) -> AccuracyEstimate {
        self.estimate.unwrap_or_else(AccuracyEstimate::perfect)
    }

    fn step_once(&mut self, acc: &mut EpochAcc) -> Result<(), AgentError> {
        let mode = self.config.mode;
        if mode.uses_models() && self.step % self.config.model_train_freq == 0 {
            self.train_models()?;
        }
        let o = self.obs;
        let basic = self.config.basic;
        let (a_exec, a_alt) = match (mode, self.agent.as_ref()) {
            (Mode::Ipk, Some(agent)) => {
                let a_bas = basic.action(&o, &mut self.rngs.act).unwrap_or_default();
                let g_bas = basic.distribution(&a_bas, &self.estimate_or_perfect());
                let f = agent.fuse_and_sample(&self.fusion, &g_bas, &o, &mut self.rngs.act)?;
                (f.a_fus, Some(f.a_gau))
            }
            (_, Some(agent)) => (agent.sample_action(&o, &mut self.rngs.act)?, None),
            (_, None) => (basic.action(&o, &mut self.rngs.act).unwrap_or_default(), None),
        };
        let res = self.env.step(&a_exec)?;
        let done = res.done && !res.info.truncated;
        acc.total_return += res.reward;
        if mode.learns() {
            let mbpo = a_alt.and_then(|a| {
                counterfactual_estimate(&basic.map, &o, &a_exec, res.reward, &res.obs, &a, MAX_COUNTERFACTUAL_RATIO)
                    .map(|(r, next)| Half { action: a, reward: r, next, done: done || !next.visible })
            });
            store_transition(
                &mut self.buffer,
                AugmentedTransition { obs: o, mbpo, real: Half { action: a_exec, reward: res.reward, next: res.obs, done }, phase: Phase::Fusion },
            );
        }
        self.obs = res.obs;
        if res.done {
            acc.log.lengths.push(res.info.episode_step);
            self.obs = self.env.reset(self.rngs.env.random())?;
        }
        if mode.learns() {
            for _ in 0..self.config.updates_per_step {
                self.update(acc)?;
            }
        }
        self.step += 1;
        Ok(())
    }

    fn update(&mut self, acc: &mut EpochAcc) -> Result<(), AgentError> {
        let batch_size = self.config.batch_size;
        let n_model = if self.model_buffer.is_empty() {
            0
        } else {
            batch_size - (batch_size as f64 * self.config.real_ratio).round() as usize
        };
        let n_real = batch_size - n_model;
        let mut batch: Vec<Transition> = if n_real > 0 {
            weighted_sample(&self.buffer, &self.fusion, n_real, &mut self.rngs.replay)?.into_iter().map(|d| d.transition).collect()
        } else {
            Vec::new()
        };
        if n_model > 0 {
            batch.extend(self.model_buffer.sample(n_model, &mut self.rngs.replay)?);
        }
        let agent = self.agent.as_mut().expect("learning modes own an agent");
        let (report, batch_kl) = if self.config.mode.uses_prior() {
            let basic = self.config.basic;
            let est = self.estimate.unwrap_or_else(AccuracyEstimate::perfect);
            let g_bas: Vec<DiagGaussian> = batch
                .iter()
                .map(|t| to_presquash(&basic.distribution(&basic.canonical_action(&t.obs).unwrap_or_default(), &est)))
                .collect();
            let obs: Vec<Observation> = batch.iter().map(|t| t.obs).collect();
            let kls = agent.batch_axis_kl(&obs, &g_bas)?;
            let zeta = self.fusion.update(&kls);
            for (t, kl) in batch.iter_mut().zip(&kls).take(n_real) {
                t.reward = augmented_reward(t.reward, *kl, &self.fusion);
            }
            let mean_kl = kls.iter().sum::<f64>() / kls.len() as f64;
            let weight = zeta * self.config.sac.kl_weight;
            (agent.sac_update(&batch, Some((&g_bas, weight)), &mut self.rngs.replay)?, mean_kl)
        } else {
            (agent.sac_update(&batch, None, &mut self.rngs.replay)?, f64::NAN)
        };
        if batch_kl.is_finite() {
            acc.kl_sum += batch_kl;
            acc.kl_count += 1;
        }
        self.updates.push(UpdateRecord {
            step: self.step,
            critic_loss: report.critic_loss,
            actor_loss: report.actor_loss,
            alpha: report.alpha,
            entropy: report.entropy,
            batch_kl,
            zeta_bas: self.fusion.zeta_bas,
        });
        Ok(())
    }

    fn train_models(&mut self) -> Result<(), AgentError> {
        let Some(model) = self.model.as_mut() else { return Ok(()) };
        let real: Vec<Transition> = self.buffer.iter().map(|t| t.real_transition()).collect();
        model.fit_normalizers(&real);
        let mut losses = None;
        for _ in 0..self.config.model_train_steps {
            losses = model.train_step(&real, &mut self.rngs.model)?;
        }
        if !model.is_trained() {
            return Ok(());
        }
        let env_cfg = self.env.config();
        let reward = RolloutReward { lambda_h: env_cfg.lambda_h, epsilon: env_cfg.epsilon, bound: env_cfg.raw_reward_bound() };
        let starts: Vec<Observation> = (0..self.config.rollout_batch)
            .map(|_| self.buffer.get(self.rngs.model.random_range(0..self.buffer.len())).expect("index in range").obs)
            .collect();
        let agent = self.agent.as_ref().expect("model modes own an agent");
        let rollouts = branch_rollout(
            model,
            &starts,
            self.config.rollout_length,
            &reward,
            |o, r| agent.sample_action(o, r).unwrap_or_default(),
            &mut self.rngs.model,
        )?;
        let produced = rollouts.len();
        for t in rollouts {
            self.model_buffer.push(t);
        }
        if let Some(l) = losses {
            self.model_losses.push(ModelLossRecord {
                step: self.step,
                mean_nll: l.iter().sum::<f64>() / l.len() as f64,
                max_nll: l.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                rollout_transitions: produced,
            });
        }
        Ok(())
    }
}

/// Runs every epoch of `config` and returns the collected records.
pub fn train(config: ExperimentConfig) -> Result<RunOutput, AgentError> {
    Trainer::new(config)?.run()
}

/// Deterministic-policy evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: Option<f64>,
    pub std_return: Option<f64>,
    pub mean_task_length: Option<f64>,
    pub std_task_length: Option<f64>,
    pub returns: Vec<f64>,
    pub task_lengths: Vec<usize>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (Some(m), Some(v.sqrt()))
}

/// Runs `episodes` episodes without sampling: the fused mean under the
/// prior, the policy mean without it, the basic controller when no
/// networks are stored.
pub fn evaluate(ckpt: &Checkpoint, episodes: usize, seed: u64) -> Result<EvalReport, AgentError> {
    let cfg = &ckpt.config;
    let mut env = ContinuumEnv::new(cfg.env.clone())?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let basic = cfg.basic;
    let est = ckpt.estimate.unwrap_or_else(AccuracyEstimate::perfect);
    let mut returns = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut o = env.reset(seeds.random())?;
        let mut total = 0.0;
        loop {
            let a_bas = || basic.canonical_action(&o).unwrap_or_default();
            let a: MotorCommand = match (&ckpt.agent, cfg.mode.uses_prior()) {
                (Some(agent), true) => agent.fused_mean_action(&ckpt.fusion, &basic.distribution(&a_bas(), &est), &o)?,
                (Some(agent), false) => agent.deterministic_action(&o)?,
                (None, _) => a_bas(),
            };
            let res = env.step(&a)?;
            total += res.reward;
            o = res.obs;
            if res.done {
                lengths.push(res.info.episode_step);
                break;
            }
        }
        returns.push(total);
    }
    let (mean_return, std_return) = mean_std(&returns);
    let lf: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let (mean_task_length, std_task_length) = mean_std(&lf);
    Ok(EvalReport { episodes, mean_return, std_return, mean_task_length, std_task_length, returns, task_lengths: lengths })
}

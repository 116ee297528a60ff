//! Experiment configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::EnsembleConfig;
use crate::nn::Activation;
use crate::policy::{FusionState, SacConfig};
use crate::prior::BasicController;
use crate::sim::EnvConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown mode {0:?} (expected ipk, mbpo, sac or basic)")]
    UnknownMode(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

/// Which parts of the method are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Prior, fusion, models and SAC.
    #[default]
    Ipk,
    /// Models and SAC; uniform initial exploration, no prior.
    Mbpo,
    /// SAC alone.
    Sac,
    /// The basic controller alone.
    Basic,
}

impl Mode {
    pub fn uses_prior(self) -> bool {
        matches!(self, Mode::Ipk | Mode::Basic)
    }

    pub fn uses_models(self) -> bool {
        matches!(self, Mode::Ipk | Mode::Mbpo)
    }

    pub fn learns(self) -> bool {
        self != Mode::Basic
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ipk => "ipk",
            Mode::Mbpo => "mbpo",
            Mode::Sac => "sac",
            Mode::Basic => "basic",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ipk" => Ok(Mode::Ipk),
            "mbpo" => Ok(Mode::Mbpo),
            "sac" => Ok(Mode::Sac),
            "basic" => Ok(Mode::Basic),
            _ => Err(ConfigError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: usize,
    pub epoch_length: usize,
    /// Model rollout length.
    pub rollout_length: usize,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub initial_exploration: usize,
    /// Environment steps between ensemble training rounds.
    pub model_train_freq: usize,
    /// Gradient steps per ensemble training round.
    pub model_train_steps: usize,
    /// Start states per model rollout round.
    pub rollout_batch: usize,
    pub model_buffer_size: usize,
    /// Fraction of each SAC batch drawn from real experience when model data exists.
    pub real_ratio: f64,
    pub updates_per_step: usize,
    pub sac: SacConfig,
    pub ensemble: EnsembleConfig,
    pub fusion: FusionState,
    pub basic: BasicController,
    pub env: EnvConfig,
    pub out_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ipk,
            seed: 0,
            epochs: 10,
            epoch_length: 1000,
            rollout_length: 20,
            batch_size: 256,
            buffer_size: 1_000_000,
            initial_exploration: 600,
            model_train_freq: 250,
            model_train_steps: 100,
            rollout_batch: 100,
            model_buffer_size: 100_000,
            real_ratio: 0.5,
            updates_per_step: 1,
            sac: SacConfig::default(),
            ensemble: EnsembleConfig::default(),
            fusion: FusionState::default(),
            basic: BasicController::default(),
            env: EnvConfig::default(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Scaled-down benchmark: 10 epochs of 200 steps, episodes of 100 steps.
    ///
    /// The SAC trunk uses tanh and idle motors get a wider prior so the
    /// policy can match the basic controller within the short budget.
    pub fn desk(mode: Mode, seed: u64) -> Self {
        let mut c = Self { mode, seed, epochs: 10, epoch_length: 200, ..Self::default() };
        c.env.task_length = 100;
        c.env.waypoints = 101;
        c.sac.activation = Activation::Tanh;
        c.basic.idle_variance = 0.005;
        c
    }

    pub fn task_length(&self) -> usize {
        self.env.task_length
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.epochs == 0 || self.epoch_length == 0 {
            return bad("epochs and epoch_length must be positive");
        }
        if self.batch_size == 0 || self.buffer_size == 0 || self.model_buffer_size == 0 {
            return bad("batch and buffer sizes must be positive");
        }
        if self.mode.learns() && self.initial_exploration < self.batch_size {
            return bad("initial_exploration must cover one batch");
        }
        if self.model_train_freq == 0 || self.updates_per_step == 0 {
            return bad("model_train_freq and updates_per_step must be positive");
        }
        if !(0.0..=1.0).contains(&self.real_ratio) {
            return bad("real_ratio must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.fusion.zeta_bas) || !(self.fusion.lr >= 0.0) {
            return bad("fusion.zeta_bas must lie in [0, 1] and fusion.lr be nonnegative");
        }
        if !(self.basic.magnitude > 0.0 && self.basic.magnitude <= 1.0) || !(self.basic.deadband >= 0.0) {
            return bad("basic.magnitude must lie in (0, 1] and basic.deadband be nonnegative");
        }
        if !(self.basic.idle_variance > 0.0) {
            return bad("basic.idle_variance must be positive");
        }
        let s = &self.sac;
        if s.hidden == 0 || !(s.lr > 0.0) || !(0.0..1.0).contains(&s.gamma) || !(s.tau > 0.0 && s.tau <= 1.0) || !(s.init_alpha > 0.0) {
            return bad("sac: hidden, lr, init_alpha positive; gamma in [0, 1); tau in (0, 1]");
        }
        let e = &self.ensemble;
        if e.members == 0 || e.hidden == 0 || e.batch_size == 0 || !(e.lr > 0.0) || !(e.min_logvar < e.max_logvar) {
            return bad("ensemble: members, hidden, batch_size, lr positive and min_logvar < max_logvar");
        }
        self.env.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

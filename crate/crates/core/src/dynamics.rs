//! Ensemble of probabilistic networks predicting observation differences.
//!
//! Each member maps a normalized `(state, action)` to a Gaussian over the
//! normalized difference `o' - o` of the 7-dimensional state vector.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Activation, AdamState, Mlp, NnError};
use crate::sim::{raw_reward, MotorCommand, Observation, Transition, CENTERED_BONUS, LOST_PENALTY};

pub const STATE_DIM: usize = Observation::STATE_DIM;
pub const ACTION_DIM: usize = 4;
pub const INPUT_DIM: usize = STATE_DIM + ACTION_DIM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("ensemble has not been trained")]
    Untrained,
    #[error("non-finite loss in member {0}")]
    NonFiniteLoss(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub lr: f64,
    pub batch_size: usize,
    /// Soft bounds on the predicted log-variance (normalized units).
    pub min_logvar: f64,
    pub max_logvar: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 7,
            hidden: 256,
            activation: Activation::Sigmoid,
            lr: 3e-4,
            batch_size: 256,
            min_logvar: -10.0,
            max_logvar: 2.0,
        }
    }
}

/// Per-dimension standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Fits mean and standard deviation; near-constant columns get unit scale.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0.0;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for r in rows {
            n += 1.0;
            for j in 0..dim {
                sum[j] += r[j];
                sq[j] += r[j] * r[j];
            }
        }
        if n == 0.0 {
            return Self::identity(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = (0..dim)
            .map(|j| {
                let v = (sq[j] / n - mean[j] * mean[j]).max(0.0);
                if v.sqrt() < 1e-8 { 1.0 } else { v.sqrt() }
            })
            .collect();
        Self { mean, std }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.std).all(|v| v.is_finite())
    }
}

pub fn model_input(o: &Observation, a: &MotorCommand) -> [f64; INPUT_DIM] {
    let s = o.state_vec();
    let a = a.as_array();
    std::array::from_fn(|i| if i < STATE_DIM { s[i] } else { a[i - STATE_DIM] })
}

pub fn delta_target(o: &Observation, next: &Observation) -> [f64; STATE_DIM] {
    let (s, n) = (o.state_vec(), next.state_vec());
    std::array::from_fn(|i| n[i] - s[i])
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 { x } else { x.exp().ln_1p() }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Member {
    pub net: Mlp,
    #[serde(skip)]
    adam: Option<AdamState>,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub config: EnsembleConfig,
    pub members: Vec<Member>,
    trained: bool,
}

impl EnsembleModel {
    pub fn new<R: Rng + ?Sized>(config: EnsembleConfig, rng: &mut R) -> Result<Self, DynamicsError> {
        let sizes = [INPUT_DIM, config.hidden, config.hidden, 2 * STATE_DIM];
        let members = (0..config.members)
            .map(|_| {
                let net = Mlp::new(&sizes, config.activation, rng)?;
                let adam = AdamState::new(&net, config.lr);
                Ok(Member {
                    net,
                    adam: Some(adam),
                    input_norm: Normalizer::identity(INPUT_DIM),
                    target_norm: Normalizer::identity(STATE_DIM),
                })
            })
            .collect::<Result<Vec<_>, NnError>>()?;
        Ok(Self { config, members, trained: false })
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Refits every member's normalization statistics on `data`.
    pub fn fit_normalizers(&mut self, data: &[Transition]) {
        let inputs: Vec<[f64; INPUT_DIM]> = data.iter().map(|t| model_input(&t.obs, &t.action)).collect();
        let targets: Vec<[f64; STATE_DIM]> = data.iter().map(|t| delta_target(&t.obs, &t.next)).collect();
        let inn = Normalizer::fit(inputs.iter().map(|r| &r[..]), INPUT_DIM);
        let tn = Normalizer::fit(targets.iter().map(|r| &r[..]), STATE_DIM);
        for m in &mut self.members {
            m.input_norm = inn.clone();
            m.target_norm = tn.clone();
        }
    }

    /// Log-variance after the soft clamp and its derivative w.r.t. the raw output.
    fn bounded_logvar(&self, raw: f64) -> (f64, f64) {
        let (lo, hi) = (self.config.min_logvar, self.config.max_logvar);
        let upper = hi - softplus(hi - raw);
        let lv = lo + softplus(upper - lo);
        (lv, sigmoid(hi - raw) * sigmoid(upper - lo))
    }

    /// One gradient step per member on an independent bootstrap batch.
    /// Returns per-member mean negative log-likelihood, or `None` when the
    /// buffer is smaller than the batch size.
    pub fn train_step<R: Rng + ?Sized>(&mut self, data: &[Transition], rng: &mut R) -> Result<Option<Vec<f64>>, DynamicsError> {
        let b = self.config.batch_size;
        if data.len() < b || b == 0 {
            return Ok(None);
        }
        let mut losses = Vec::with_capacity(self.members.len());
        for k in 0..self.members.len() {
            let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..data.len())).collect();
            let member = &self.members[k];
            let mut x = Array2::zeros((b, INPUT_DIM));
            let mut y = Array2::zeros((b, STATE_DIM));
            for (row, &i) in idx.iter().enumerate() {
                let t = &data[i];
                let xi = member.input_norm.normalize(&model_input(&t.obs, &t.action));
                let yi = member.target_norm.normalize(&delta_target(&t.obs, &t.next));
                for j in 0..INPUT_DIM {
                    x[[row, j]] = xi[j];
                }
                for j in 0..STATE_DIM {
                    y[[row, j]] = yi[j];
                }
            }
            let (out, cache) = member.net.forward_cached(&x)?;
            let mut grad = Array2::zeros(out.raw_dim());
            let mut nll = 0.0;
            let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
            for r in 0..b {
                for j in 0..STATE_DIM {
                    let mu = out[[r, j]];
                    let (lv, dlv) = self.bounded_logvar(out[[r, STATE_DIM + j]]);
                    let inv = (-lv).exp();
                    let err = y[[r, j]] - mu;
                    nll += 0.5 * (err * err * inv + lv) + half_log_2pi;
                    grad[[r, j]] = -err * inv / b as f64;
                    grad[[r, STATE_DIM + j]] = 0.5 * (1.0 - err * err * inv) * dlv / b as f64;
                }
            }
            let nll = nll / b as f64;
            if !nll.is_finite() {
                return Err(DynamicsError::NonFiniteLoss(k));
            }
            let (grads, _) = member.net.backward(&cache, &grad)?;
            let member = &mut self.members[k];
            let lr = self.config.lr;
            let adam = member.adam.get_or_insert_with(|| AdamState::new(&member.net, lr));
            adam.step(&mut member.net, &grads)?;
            losses.push(nll);
        }
        self.trained = true;
        Ok(Some(losses))
    }

    /// Mean and variance of member `k`'s predicted difference, in observation units.
    pub fn member_prediction(&self, k: usize, o: &Observation, a: &MotorCommand) -> Result<([f64; STATE_DIM], [f64; STATE_DIM]), DynamicsError> {
        let m = &self.members[k];
        let out = m.net.forward(&m.input_norm.normalize(&model_input(o, a)))?;
        let mut mean = [0.0; STATE_DIM];
        let mut var = [0.0; STATE_DIM];
        for j in 0..STATE_DIM {
            let (lv, _) = self.bounded_logvar(out[STATE_DIM + j]);
            mean[j] = out[j] * m.target_norm.std[j] + m.target_norm.mean[j];
            var[j] = lv.exp() * m.target_norm.std[j].powi(2);
        }
        Ok((mean, var))
    }

    /// Samples a member uniformly, then a difference from its Gaussian head.
    pub fn predict_delta<R: Rng + ?Sized>(&self, o: &Observation, a: &MotorCommand, rng: &mut R) -> Result<([f64; STATE_DIM], usize), DynamicsError> {
        if !self.trained {
            return Err(DynamicsError::Untrained);
        }
        let k = rng.random_range(0..self.members.len());
        let (mean, var) = self.member_prediction(k, o, a)?;
        let delta = std::array::from_fn(|j| {
            let z: f64 = StandardNormal.sample(rng);
            mean[j] + var[j].sqrt() * z
        });
        Ok((delta, k))
    }

    /// Standard deviation of member means, averaged over dimensions.
    pub fn disagreement(&self, o: &Observation, a: &MotorCommand) -> Result<f64, DynamicsError> {
        let means = self
            .members
            .iter()
            .enumerate()
            .map(|(k, _)| self.member_prediction(k, o, a).map(|p| p.0))
            .collect::<Result<Vec<_>, _>>()?;
        let n = means.len() as f64;
        let mut total = 0.0;
        for j in 0..STATE_DIM {
            let m = means.iter().map(|x| x[j]).sum::<f64>() / n;
            total += (means.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / n).sqrt();
        }
        Ok(total / STATE_DIM as f64)
    }
}

/// Reward constants used to score imagined steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutReward {
    pub lambda_h: f64,
    pub epsilon: f64,
    /// Raw rewards are clipped to `±bound`.
    pub bound: f64,
}

impl RolloutReward {
    /// Reward and terminal flag of an imagined step.
    pub fn score(&self, o: &Observation, next: &Observation) -> (f64, bool) {
        let raw = raw_reward(o, next, self.lambda_h).clamp(-self.bound, self.bound);
        if !next.visible {
            (raw + LOST_PENALTY, true)
        } else if next.is_centered(self.epsilon) {
            (raw + CENTERED_BONUS, false)
        } else {
            (raw, false)
        }
    }
}

/// Rolls each start state `k` steps through the ensemble under `policy`.
/// A branch stops early when a prediction is non-finite (nothing is stored
/// for that step) or the target leaves the predicted view.
pub fn branch_rollout<R, P>(
    model: &EnsembleModel,
    starts: &[Observation],
    k: usize,
    reward: &RolloutReward,
    mut policy: P,
    rng: &mut R,
) -> Result<Vec<Transition>, DynamicsError>
where
    R: Rng + ?Sized,
    P: FnMut(&Observation, &mut R) -> MotorCommand,
{
    if k == 0 {
        return Ok(Vec::new());
    }
    if !model.is_trained() {
        return Err(DynamicsError::Untrained);
    }
    let mut out = Vec::with_capacity(starts.len() * k);
    for start in starts {
        let mut o = *start;
        for _ in 0..k {
            let a = policy(&o, rng);
            let (delta, _) = model.predict_delta(&o, &a, rng)?;
            let s = o.state_vec();
            let next_s: Vec<f64> = s.iter().zip(&delta).map(|(x, d)| x + d).collect();
            if next_s.iter().any(|v| !v.is_finite()) {
                break;
            }
            let next = Observation::from_state_vec(&next_s, o.h_ref);
            let (r, done) = reward.score(&o, &next);
            out.push(Transition { obs: o, action: a, reward: r, next, done });
            if done {
                break;
            }
            o = next;
        }
    }
    Ok(out)
}

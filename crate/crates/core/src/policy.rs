//! Soft actor-critic over squashed Gaussian motor commands, plus the pieces
//! that tie it to the basic controller: the exploitation coefficient, the
//! KL-augmented reward and fusion before squashing.

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gauss::{kl_divergence, kl_grad_wrt_second, merge_motor_pairs, weighted_fuse, DiagGaussian, GaussError, L_PAIR, W_PAIR};
use crate::dynamics::Normalizer;
use crate::nn::{Activation, AdamState, Mlp, NnError, ScalarAdam};
use crate::sim::{MotorCommand, Observation, Transition};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const OBS_DIM: usize = Observation::FEATURE_DIM;
pub const ACT_DIM: usize = 4;
/// Bounded means are clipped here before the inverse squash.
pub const PRESQUASH_CLIP: f64 = 0.95;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("{0} prior distributions for a batch of {1}")]
    PriorMismatch(usize, usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Gauss(#[from] GaussError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    pub init_alpha: f64,
    /// Scale of the `zeta * KL(bas || gau)` term in the actor loss; 0 disables it.
    pub kl_weight: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            activation: Activation::Sigmoid,
            lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            target_entropy: -2.0,
            init_alpha: 0.1,
            kl_weight: 1.0,
        }
    }
}

/// Exploitation coefficient and its adaptation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionState {
    pub zeta_bas: f64,
    pub target_divergence: f64,
    pub lr: f64,
}

impl Default for FusionState {
    fn default() -> Self {
        Self { zeta_bas: 1.0, target_divergence: -1.5, lr: 1e-3 }
    }
}

impl FusionState {
    pub fn zeta_real(&self) -> f64 {
        1.0 - self.zeta_bas
    }

    /// Clamped ascent step on `J(zeta) = -zeta (mean KL + D0)`; returns the new value.
    pub fn update(&mut self, kls: &[f64]) -> f64 {
        if kls.is_empty() {
            return self.zeta_bas;
        }
        let mean = kls.iter().sum::<f64>() / kls.len() as f64;
        if mean.is_finite() {
            self.zeta_bas = (self.zeta_bas + self.lr * (mean + self.target_divergence)).clamp(0.0, 1.0);
        }
        self.zeta_bas
    }
}

/// `r_gau = zeta (-KL - D0 + r) + (1 - zeta) r`.
pub fn augmented_reward(r_real: f64, kl: f64, fusion: &FusionState) -> f64 {
    fusion.zeta_bas * (-kl - fusion.target_divergence + r_real) + fusion.zeta_real() * r_real
}

/// Places a bounded-command distribution in pre-squash space: inverse tanh
/// of the clipped mean, variance mapped through the slope of the inverse
/// tanh at that mean.
pub fn to_presquash(g: &DiagGaussian) -> DiagGaussian {
    let clipped: Vec<f64> = g.mean().iter().map(|m| m.clamp(-PRESQUASH_CLIP, PRESQUASH_CLIP)).collect();
    let mean = clipped.iter().map(|m| m.atanh()).collect();
    let var = clipped.iter().zip(g.var()).map(|(m, v)| v / (1.0 - m * m).powi(2)).collect();
    DiagGaussian::new(mean, var).expect("inverse tanh of a clipped value is finite")
}

/// KL between two motor-space distributions after merging antagonist pairs.
pub fn axis_kl(g_bas: &DiagGaussian, g_gau: &DiagGaussian) -> Result<f64, GaussError> {
    kl_divergence(&merge_motor_pairs(g_bas)?, &merge_motor_pairs(g_gau)?)
}

fn squash(u: &[f64]) -> MotorCommand {
    MotorCommand::new(std::array::from_fn(|i| u[i].tanh()))
}

/// `log(1 - tanh(u)^2)` without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 { x } else { x.exp().ln_1p() }
}

fn log_std_from_raw(raw: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

fn dlog_std_draw(raw: f64) -> f64 {
    let t = raw.tanh();
    0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t)
}

/// Result of one fused action draw.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSample {
    pub a_fus: MotorCommand,
    pub a_gau: MotorCommand,
    pub g_gau: DiagGaussian,
    pub g_fus: DiagGaussian,
    /// Basic distribution in pre-squash space.
    pub g_bas: DiagGaussian,
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
    /// Mean axis-space KL of the actor-loss prior term (NaN without a prior).
    pub prior_kl: f64,
}

#[derive(Debug, Clone)]
struct Optimizers {
    actor: AdamState,
    critics: [AdamState; 2],
    alpha: ScalarAdam,
}

/// Actor, twin critics, their slow copies and the entropy temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacAgent {
    pub config: SacConfig,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub target_critics: [Mlp; 2],
    pub log_alpha: f64,
    pub updates: u64,
    /// Applied to observation features before every network.
    #[serde(default = "identity_features")]
    pub obs_norm: Normalizer,
    #[serde(skip)]
    opt: Option<Optimizers>,
}

/// Actor outputs for a batch: means, log-stds and the raw log-std outputs.
struct ActorOut {
    mean: Array2<f64>,
    log_std: Array2<f64>,
    raw: Array2<f64>,
}

impl ActorOut {
    fn from_output(out: &Array2<f64>) -> Self {
        let mean = out.slice(s![.., ..ACT_DIM]).to_owned();
        let raw = out.slice(s![.., ACT_DIM..]).to_owned();
        let log_std = raw.mapv(log_std_from_raw);
        Self { mean, log_std, raw }
    }

    fn row(&self, i: usize) -> DiagGaussian {
        let mean = self.mean.row(i).to_vec();
        let var = self.log_std.row(i).iter().map(|l| (2.0 * l).exp()).collect();
        DiagGaussian::new(mean, var).expect("bounded log-std gives a valid distribution")
    }
}

/// Reparameterized squashed sample: pre-squash values, actions and log-probabilities.
struct Sampled {
    noise: Array2<f64>,
    actions: Array2<f64>,
    log_prob: Vec<f64>,
}

fn sample_squashed(out: &ActorOut, noise: Array2<f64>) -> Sampled {
    let b = out.mean.nrows();
    let mut actions = Array2::zeros((b, ACT_DIM));
    let mut log_prob = vec![0.0; b];
    for i in 0..b {
        for j in 0..ACT_DIM {
            let (ls, xi) = (out.log_std[[i, j]], noise[[i, j]]);
            let u = out.mean[[i, j]] + ls.exp() * xi;
            actions[[i, j]] = u.tanh();
            log_prob[i] += -0.5 * xi * xi - ls - HALF_LOG_2PI - log_one_minus_tanh_sq(u);
        }
    }
    Sampled { noise, actions, log_prob }
}

fn standard_noise<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, ACT_DIM), || StandardNormal.sample(rng))
}

fn identity_features() -> Normalizer {
    Normalizer::identity(OBS_DIM)
}

fn features_batch<'a>(norm: &Normalizer, obs: impl Iterator<Item = &'a Observation>, rows: usize) -> Array2<f64> {
    let mut x = Array2::zeros((rows, OBS_DIM));
    for (i, o) in obs.enumerate() {
        let f = norm.normalize(&o.features());
        for j in 0..OBS_DIM {
            x[[i, j]] = f[j];
        }
    }
    x
}

fn critic_input(x: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), x.ncols() + a.ncols()));
    out.slice_mut(s![.., ..x.ncols()]).assign(x);
    out.slice_mut(s![.., x.ncols()..]).assign(a);
    out
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(config: SacConfig, rng: &mut R) -> Result<Self, PolicyError> {
        let h = config.hidden;
        let actor = Mlp::new(&[OBS_DIM, h, h, 2 * ACT_DIM], config.activation, rng)?;
        let c0 = Mlp::new(&[OBS_DIM + ACT_DIM, h, h, 1], config.activation, rng)?;
        let c1 = Mlp::new(&[OBS_DIM + ACT_DIM, h, h, 1], config.activation, rng)?;
        Ok(Self {
            config,
            actor,
            target_critics: [c0.clone(), c1.clone()],
            critics: [c0, c1],
            log_alpha: config.init_alpha.ln(),
            updates: 0,
            obs_norm: identity_features(),
            opt: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    fn actor_out(&self, x: &Array2<f64>) -> Result<ActorOut, PolicyError> {
        Ok(ActorOut::from_output(&self.actor.forward_batch(x)?))
    }

    /// Pre-squash Gaussian over the four motors.
    pub fn policy_distribution(&self, o: &Observation) -> Result<DiagGaussian, PolicyError> {
        let x = features_batch(&self.obs_norm, std::iter::once(o), 1);
        let out = self.actor_out(&x)?;
        if !out.mean.iter().chain(&out.log_std).all(|v| v.is_finite()) {
            return Err(PolicyError::NonFinite("policy output"));
        }
        Ok(out.row(0))
    }

    /// Squashed sample from the learned policy alone.
    pub fn sample_action<R: Rng + ?Sized>(&self, o: &Observation, rng: &mut R) -> Result<MotorCommand, PolicyError> {
        let g = self.policy_distribution(o)?;
        let noise: Vec<f64> = (0..ACT_DIM).map(|_| StandardNormal.sample(rng)).collect();
        Ok(squash(&g.sample_with(&noise)))
    }

    /// Squashed mean of the learned policy.
    pub fn deterministic_action(&self, o: &Observation) -> Result<MotorCommand, PolicyError> {
        Ok(squash(self.policy_distribution(o)?.mean()))
    }

    /// Both critics' values for one state-action pair.
    pub fn q_values(&self, o: &Observation, a: &MotorCommand) -> Result<[f64; 2], PolicyError> {
        let mut input = self.obs_norm.normalize(&o.features());
        input.extend_from_slice(&a.as_array());
        Ok([self.critics[0].forward(&input)?[0], self.critics[1].forward(&input)?[0]])
    }

    /// Fuses the basic distribution (bounded motor space) with the policy in
    /// pre-squash space and draws both the fused and the pure policy action
    /// from one shared noise vector.
    pub fn fuse_and_sample<R: Rng + ?Sized>(
        &self,
        fusion: &FusionState,
        g_bas: &DiagGaussian,
        o: &Observation,
        rng: &mut R,
    ) -> Result<FusedSample, PolicyError> {
        let g_gau = self.policy_distribution(o)?;
        let g_bas = to_presquash(g_bas);
        let g_fus = weighted_fuse(&g_bas, &g_gau, fusion.zeta_bas)?;
        let noise: Vec<f64> = (0..ACT_DIM).map(|_| StandardNormal.sample(rng)).collect();
        Ok(FusedSample {
            a_fus: squash(&g_fus.sample_with(&noise)),
            a_gau: squash(&g_gau.sample_with(&noise)),
            g_gau,
            g_fus,
            g_bas,
        })
    }

    /// Squashed mean of the fused distribution.
    pub fn fused_mean_action(&self, fusion: &FusionState, g_bas: &DiagGaussian, o: &Observation) -> Result<MotorCommand, PolicyError> {
        let g_gau = self.policy_distribution(o)?;
        let g_fus = weighted_fuse(&to_presquash(g_bas), &g_gau, fusion.zeta_bas)?;
        Ok(squash(g_fus.mean()))
    }

    /// Axis-space `KL(bas || gau)` at each observation, `g_bas` in pre-squash space.
    pub fn batch_axis_kl(&self, obs: &[Observation], g_bas: &[DiagGaussian]) -> Result<Vec<f64>, PolicyError> {
        if obs.len() != g_bas.len() {
            return Err(PolicyError::PriorMismatch(g_bas.len(), obs.len()));
        }
        if obs.is_empty() {
            return Ok(Vec::new());
        }
        let x = features_batch(&self.obs_norm, obs.iter(), obs.len());
        let out = self.actor_out(&x)?;
        (0..obs.len()).map(|i| Ok(axis_kl(&g_bas[i], &out.row(i))?)).collect()
    }

    /// Actor loss and its gradient for fixed noise. `prior` holds per-sample
    /// pre-squash basic distributions and the weight of the KL term.
    fn actor_loss_grad(
        &self,
        x: &Array2<f64>,
        noise: Array2<f64>,
        prior: Option<(&[DiagGaussian], f64)>,
    ) -> Result<(f64, crate::nn::Grads, Vec<f64>, f64), PolicyError> {
        let b = x.nrows();
        let (out, cache) = self.actor.forward_cached(x)?;
        let ao = ActorOut::from_output(&out);
        let smp = sample_squashed(&ao, noise);
        let ci = critic_input(x, &smp.actions);
        let mut q = Vec::with_capacity(2);
        let mut dq = Vec::with_capacity(2);
        for c in &self.critics {
            let (qk, cache_k) = c.forward_cached(&ci)?;
            let (_, g_in) = c.backward(&cache_k, &Array2::ones((b, 1)))?;
            q.push(qk);
            dq.push(g_in.slice(s![.., OBS_DIM..]).to_owned());
        }
        let alpha = self.alpha();
        let mut grad = Array2::zeros((b, 2 * ACT_DIM));
        let mut loss = 0.0;
        let mut kl_total = 0.0;
        for i in 0..b {
            let k = if q[0][[i, 0]] <= q[1][[i, 0]] { 0 } else { 1 };
            loss += alpha * smp.log_prob[i] - q[k][[i, 0]];
            let (mut d_mean, mut d_logstd) = ([0.0; ACT_DIM], [0.0; ACT_DIM]);
            for j in 0..ACT_DIM {
                let a = smp.actions[[i, j]];
                let sigma_xi = ao.log_std[[i, j]].exp() * smp.noise[[i, j]];
                let dq_du = dq[k][[i, j]] * (1.0 - a * a);
                d_mean[j] = alpha * 2.0 * a - dq_du;
                d_logstd[j] = alpha * (-1.0 + 2.0 * a * sigma_xi) - dq_du * sigma_xi;
            }
            if let Some((bas, weight)) = prior {
                if weight != 0.0 {
                    let gau = ao.row(i);
                    let (mb, mg) = (merge_motor_pairs(&bas[i])?, merge_motor_pairs(&gau)?);
                    let kl = kl_divergence(&mb, &mg)?;
                    kl_total += kl;
                    loss += weight * kl;
                    let (gm, gv) = kl_grad_wrt_second(&mb, &mg)?;
                    for (axis, (p, n)) in [W_PAIR, L_PAIR].into_iter().enumerate() {
                        d_mean[p] += weight * gm[axis];
                        d_mean[n] -= weight * gm[axis];
                        for m in [p, n] {
                            let v = gau.var()[m];
                            d_logstd[m] += weight * 0.5 * gv[axis] * 2.0 * v;
                        }
                    }
                }
            }
            for j in 0..ACT_DIM {
                grad[[i, j]] = d_mean[j] / b as f64;
                grad[[i, ACT_DIM + j]] = d_logstd[j] * dlog_std_draw(ao.raw[[i, j]]) / b as f64;
            }
        }
        let (grads, _) = self.actor.backward(&cache, &grad)?;
        Ok((loss / b as f64, grads, smp.log_prob, kl_total / b as f64))
    }

    /// One SAC step: twin critics toward the soft Bellman target, actor on
    /// `alpha log pi - min Q` (plus the weighted prior KL), temperature toward
    /// the target entropy, then Polyak averaging. Nothing is applied when a
    /// loss comes out non-finite.
    pub fn sac_update<R: Rng + ?Sized>(
        &mut self,
        batch: &[Transition],
        prior: Option<(&[DiagGaussian], f64)>,
        rng: &mut R,
    ) -> Result<LossReport, PolicyError> {
        let b = batch.len();
        if b == 0 {
            return Err(PolicyError::EmptyBatch);
        }
        if let Some((p, _)) = prior {
            if p.len() != b {
                return Err(PolicyError::PriorMismatch(p.len(), b));
            }
        }
        let cfg = self.config;
        let x = features_batch(&self.obs_norm, batch.iter().map(|t| &t.obs), b);
        let x_next = features_batch(&self.obs_norm, batch.iter().map(|t| &t.next), b);
        let mut a = Array2::zeros((b, ACT_DIM));
        for (i, t) in batch.iter().enumerate() {
            for (j, v) in t.action.as_array().into_iter().enumerate() {
                a[[i, j]] = v;
            }
        }

        // critic targets
        let alpha = self.alpha();
        let next_out = self.actor_out(&x_next)?;
        let next = sample_squashed(&next_out, standard_noise(b, rng));
        let ci_next = critic_input(&x_next, &next.actions);
        let tq0 = self.target_critics[0].forward_batch(&ci_next)?;
        let tq1 = self.target_critics[1].forward_batch(&ci_next)?;
        let y: Vec<f64> = (0..b)
            .map(|i| {
                let t = &batch[i];
                let soft = tq0[[i, 0]].min(tq1[[i, 0]]) - alpha * next.log_prob[i];
                t.reward + if t.done { 0.0 } else { cfg.gamma * soft }
            })
            .collect();
        let ci = critic_input(&x, &a);
        let mut critic_grads = Vec::with_capacity(2);
        let mut critic_loss = 0.0;
        for c in &self.critics {
            let (q, cache) = c.forward_cached(&ci)?;
            let mut g = Array2::zeros((b, 1));
            for i in 0..b {
                let e = q[[i, 0]] - y[i];
                critic_loss += e * e / (2 * b) as f64;
                g[[i, 0]] = e / b as f64;
            }
            critic_grads.push(c.backward(&cache, &g)?.0);
        }
        if !critic_loss.is_finite() {
            return Err(PolicyError::NonFinite("critic loss"));
        }

        let (actor_loss, actor_grads, log_prob, prior_kl) = self.actor_loss_grad(&x, standard_noise(b, rng), prior)?;
        if !actor_loss.is_finite() {
            return Err(PolicyError::NonFinite("actor loss"));
        }
        let mean_logp = log_prob.iter().sum::<f64>() / b as f64;
        let alpha_grad = -(mean_logp + cfg.target_entropy);

        let lr = cfg.lr;
        let Self { actor, critics, opt, log_alpha, .. } = self;
        let opt = opt.get_or_insert_with(|| Optimizers {
            actor: AdamState::new(actor, lr),
            critics: [AdamState::new(&critics[0], lr), AdamState::new(&critics[1], lr)],
            alpha: ScalarAdam::new(lr),
        });
        for k in 0..2 {
            opt.critics[k].step(&mut critics[k], &critic_grads[k])?;
        }
        opt.actor.step(actor, &actor_grads)?;
        opt.alpha.step(log_alpha, alpha_grad);
        for k in 0..2 {
            self.target_critics[k].soft_update_from(&self.critics[k], cfg.tau);
        }
        self.updates += 1;
        Ok(LossReport {
            critic_loss: critic_loss / 2.0,
            actor_loss,
            alpha: self.alpha(),
            entropy: -mean_logp,
            prior_kl: if prior.is_some_and(|(_, w)| w != 0.0) { prior_kl } else { f64::NAN },
        })
    }

    /// Fixes the feature scaling, typically from the initial exploration data.
    pub fn set_obs_normalizer(&mut self, obs: &[Observation]) {
        let rows: Vec<[f64; OBS_DIM]> = obs.iter().map(|o| o.features()).collect();
        self.obs_norm = Normalizer::fit(rows.iter().map(|r| &r[..]), OBS_DIM);
    }

    /// Drops optimizer moments (e.g. after loading a checkpoint).
    pub fn reset_optimizers(&mut self) {
        self.opt = None;
    }
}

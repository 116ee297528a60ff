//! Kinematic tendon-driven continuum robot chasing a moving target seen
//! through a tip-mounted pinhole camera.
//!
//! One environment step: accumulate the motor command into the tendon
//! positions, advance the target one waypoint, re-project, score.

pub mod camera;
pub mod kinematics;
pub mod trajectory;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{Camera, Projection};
pub use kinematics::{forward_kinematics, RobotGeometry, RobotState, SectionBend, TipPose};
pub use trajectory::{generate_target_trajectory, Cone, RouteParams, TargetTrajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("motor {motor} position {value} beyond mechanical limit")]
    MechanicalLimit { motor: usize, value: f64 },
    #[error("step called on a finished episode; reset first")]
    EpisodeDone,
    #[error("environment config: {0}")]
    Config(String),
}

/// Penalty for losing the target or an undefined observation.
pub const LOST_PENALTY: f64 = -10.0;
pub const CENTERED_BONUS: f64 = 10.0;
pub const ROUTE_BONUS: f64 = 100.0;

/// Environment block of the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Full camera field of view, radians.
    pub fov: f64,
    pub camera_roll: f64,
    /// Tendon displacement per unit action per step.
    pub step_gain: f64,
    /// Weight of the axial-distance term of the raw reward.
    pub lambda_h: f64,
    /// Half-width of the "centered" window in normalized image units.
    pub epsilon: f64,
    pub task_length: usize,
    /// Waypoints per route, start included.
    pub waypoints: usize,
    pub robot: RobotGeometry,
    pub route: RouteParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            fov: 60f64.to_radians(),
            camera_roll: 0.0,
            step_gain: 0.15,
            lambda_h: 1.0,
            epsilon: 0.05,
            task_length: 300,
            waypoints: 301,
            robot: RobotGeometry::default(),
            route: RouteParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return bad("fov must be in (0, pi)");
        }
        if !(self.step_gain > 0.0) || !(self.epsilon > 0.0) || !(self.lambda_h >= 0.0) {
            return bad("step_gain and epsilon must be positive, lambda_h nonnegative");
        }
        if self.task_length == 0 || self.waypoints < 2 {
            return bad("task_length must be positive and waypoints at least 2");
        }
        if !(self.robot.section_length > 0.0 && self.robot.acc_limit > 0.0 && self.robot.bend_gain > 0.0) {
            return bad("robot geometry must be positive");
        }
        if !(self.route.r_min >= 0.0 && self.route.r_min < self.route.r_max) {
            return bad("route shell needs 0 <= r_min < r_max");
        }
        Ok(())
    }

    pub fn camera(&self) -> Camera {
        Camera { fov: self.fov, roll: self.camera_roll }
    }

    /// Largest possible magnitude of [`raw_reward`] under this config.
    pub fn raw_reward_bound(&self) -> f64 {
        std::f64::consts::SQRT_2 + self.lambda_h * (self.route.r_max + self.robot.total_length())
    }
}

/// Signed per-step motor increments, each clamped to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotorCommand([f64; 4]);

impl MotorCommand {
    pub fn new(a: [f64; 4]) -> Self {
        Self(a.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) }))
    }

    pub fn zero() -> Self {
        Self([0.0; 4])
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn get(&self, motor_index: usize) -> f64 {
        self.0[motor_index]
    }

    /// Net command along the image axes: `(a4 - a2, a1 - a3)`.
    pub fn net_axes(&self) -> [f64; 2] {
        [self.0[3] - self.0[1], self.0[0] - self.0[2]]
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.0.iter().all(|v| v.abs() <= tol)
    }
}

/// What the agent sees: the target in normalized image coordinates, the
/// camera-to-target distance and the accumulated motor positions. `h_ref`
/// is the distance setpoint captured at reset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub w: f64,
    pub l: f64,
    pub h: f64,
    pub acc: [f64; 4],
    pub h_ref: f64,
    pub visible: bool,
}

impl Observation {
    pub const STATE_DIM: usize = 7;
    pub const FEATURE_DIM: usize = 8;

    pub fn from_projection(p: Projection, acc: [f64; 4], h_ref: f64) -> Self {
        match p {
            Projection::Visible { w, l, h } => Self { w, l, h, acc, h_ref, visible: true },
            Projection::NotVisible { w, l, h } => Self { w, l, h, acc, h_ref, visible: false },
            Projection::Degenerate => Self { w: 0.0, l: 0.0, h: 0.0, acc, h_ref, visible: false },
        }
    }

    /// `[w, l, h, acc1..acc4]`, the vector the dynamics models predict differences of.
    pub fn state_vec(&self) -> [f64; 7] {
        [self.w, self.l, self.h, self.acc[0], self.acc[1], self.acc[2], self.acc[3]]
    }

    /// Rebuilds an observation from a state vector; visibility follows the image bounds.
    pub fn from_state_vec(s: &[f64], h_ref: f64) -> Self {
        let visible = s[0].abs() < 1.0 && s[1].abs() < 1.0 && s[2] > 0.0;
        Self { w: s[0], l: s[1], h: s[2], acc: [s[3], s[4], s[5], s[6]], h_ref, visible }
    }

    /// Network input: the state vector plus the axial-distance error.
    pub fn features(&self) -> [f64; 8] {
        let s = self.state_vec();
        [s[0], s[1], s[2], s[3], s[4], s[5], s[6], self.h - self.h_ref]
    }

    pub fn is_finite(&self) -> bool {
        self.state_vec().iter().all(|v| v.is_finite()) && self.h_ref.is_finite()
    }

    pub fn is_centered(&self, eps: f64) -> bool {
        self.visible && self.w.abs() < eps && self.l.abs() < eps
    }
}

/// Plain `(o, a, r, o', done)` experience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: MotorCommand,
    pub reward: f64,
    pub next: Observation,
    /// Terminal for bootstrapping purposes; time-outs are not terminal.
    pub done: bool,
}

/// Observation-change reward: progress toward the image centre plus
/// reduction of the axial-distance error (both observations share `h_ref`).
pub fn raw_reward(o: &Observation, next: &Observation, lambda_h: f64) -> f64 {
    let centering = o.w.hypot(o.l) - next.w.hypot(next.l);
    let distance = lambda_h * ((o.h - o.h_ref).abs() - (next.h - next.h_ref).abs());
    centering + distance
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepEvent {
    None,
    Centered,
    OutOfView,
    Undefined,
    RouteComplete,
}

impl StepEvent {
    pub fn bonus(self) -> f64 {
        match self {
            StepEvent::None => 0.0,
            StepEvent::Centered => CENTERED_BONUS,
            StepEvent::OutOfView | StepEvent::Undefined => LOST_PENALTY,
            StepEvent::RouteComplete => ROUTE_BONUS,
        }
    }

    /// Events that end the episode on their own (time-outs are separate).
    pub fn is_terminal(self) -> bool {
        matches!(self, StepEvent::OutOfView | StepEvent::Undefined | StepEvent::RouteComplete)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub event: StepEvent,
    pub raw_reward: f64,
    /// Episode ended because the task length ran out.
    pub truncated: bool,
    pub episode_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Single-threaded tracking environment.
#[derive(Debug, Clone)]
pub struct ContinuumEnv {
    cfg: EnvConfig,
    state: RobotState,
    traj: TargetTrajectory,
    obs: Observation,
    steps: usize,
    done: bool,
}

impl ContinuumEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let state = forward_kinematics(&cfg.robot, &[0.0; 4])?;
        let ahead = state.tip.position + state.tip.forward() * 0.5 * (cfg.route.r_min + cfg.route.r_max);
        let traj = TargetTrajectory::from_waypoints(vec![ahead], cfg.route.r_min, cfg.route.r_max)?;
        let mut env = Self { cfg, state, traj, obs: blank_obs(), steps: 0, done: true };
        env.reset_with_trajectory(env.traj.clone())?;
        env.done = true;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn robot(&self) -> &RobotState {
        &self.state
    }

    pub fn trajectory(&self) -> &TargetTrajectory {
        &self.traj
    }

    pub fn observation(&self) -> Observation {
        self.obs
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn episode_steps(&self) -> usize {
        self.steps
    }

    /// Region where a fresh route must start: well inside the straight robot's view.
    pub fn start_cone(&self) -> Cone {
        let straight = forward_kinematics(&self.cfg.robot, &[0.0; 4]).expect("zero is within limits");
        Cone { apex: straight.tip.position, axis: straight.tip.forward(), half_angle: 0.25 * self.cfg.fov }
    }

    /// Straightens the robot and draws a new route from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traj = generate_target_trajectory(&mut rng, self.cfg.waypoints, &self.cfg.route, &self.start_cone())?;
        self.reset_with_trajectory(traj)
    }

    /// Straightens the robot and follows the given route.
    pub fn reset_with_trajectory(&mut self, traj: TargetTrajectory) -> Result<Observation, SimError> {
        self.state = forward_kinematics(&self.cfg.robot, &[0.0; 4])?;
        self.traj = traj;
        self.steps = 0;
        self.done = false;
        let proj = self.cfg.camera().project(&self.state.tip, &self.traj.current());
        let h_ref = match proj {
            Projection::Visible { h, .. } | Projection::NotVisible { h, .. } => h,
            Projection::Degenerate => 0.0,
        };
        self.obs = Observation::from_projection(proj, self.state.acc, h_ref);
        Ok(self.obs)
    }

    pub fn step(&mut self, action: &MotorCommand) -> Result<StepResult, SimError> {
        if self.done {
            return Err(SimError::EpisodeDone);
        }
        let limit = self.cfg.robot.acc_limit;
        let mut acc = self.state.acc;
        for (p, a) in acc.iter_mut().zip(action.as_array()) {
            *p = (*p + self.cfg.step_gain * a).clamp(-limit, limit);
        }
        self.state = forward_kinematics(&self.cfg.robot, &acc)?;
        self.traj.advance();
        self.steps += 1;

        let proj = self.cfg.camera().project(&self.state.tip, &self.traj.current());
        let next = Observation::from_projection(proj, acc, self.obs.h_ref);
        let (raw, event) = match proj {
            Projection::Degenerate => (0.0, StepEvent::Undefined),
            Projection::NotVisible { .. } => (raw_reward(&self.obs, &next, self.cfg.lambda_h), StepEvent::OutOfView),
            Projection::Visible { .. } => {
                let raw = raw_reward(&self.obs, &next, self.cfg.lambda_h);
                let event = if self.traj.is_final() {
                    StepEvent::RouteComplete
                } else if next.is_centered(self.cfg.epsilon) {
                    StepEvent::Centered
                } else {
                    StepEvent::None
                };
                (raw, event)
            }
        };
        let truncated = !event.is_terminal() && self.steps >= self.cfg.task_length;
        self.done = event.is_terminal() || truncated;
        self.obs = next;
        Ok(StepResult {
            obs: next,
            reward: raw + event.bonus(),
            done: self.done,
            info: StepInfo { event, raw_reward: raw, truncated, episode_step: self.steps },
        })
    }

    /// Target position in world coordinates.
    pub fn target(&self) -> Vector3<f64> {
        self.traj.current()
    }
}

fn blank_obs() -> Observation {
    Observation { w: 0.0, l: 0.0, h: 0.0, acc: [0.0; 4], h_ref: 0.0, visible: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_route(env: &ContinuumEnv, offset: Vector3<f64>, n: usize) -> TargetTrajectory {
        let tip = forward_kinematics(&env.config().robot, &[0.0; 4]).unwrap().tip;
        let p = tip.position + Vector3::new(0.0, 0.0, -0.8) + offset;
        TargetTrajectory::from_waypoints(vec![p; n], 0.0, 10.0).unwrap()
    }

    #[test]
    fn reset_is_straight_and_visible() {
        let mut env = ContinuumEnv::new(EnvConfig::default()).unwrap();
        for seed in 0..100 {
            let o = env.reset(seed).unwrap();
            assert_eq!(o.acc, [0.0; 4]);
            assert!(o.visible, "seed {seed}");
            assert_eq!(o.h, o.h_ref);
        }
        let a = env.reset(5).unwrap();
        let b = env.reset(5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn raw_reward_examples() {
        let o = Observation { w: 0.4, l: 0.0, h: 1.0, acc: [0.0; 4], h_ref: 1.0, visible: true };
        assert_eq!(raw_reward(&o, &o, 1.0), 0.0);
        let closer = Observation { w: 0.2, ..o };
        assert!((raw_reward(&o, &closer, 1.0) - 0.2).abs() < 1e-15);
        let still = Observation { w: 0.2, ..o };
        let drift = Observation { h: 1.1, ..still };
        assert!((raw_reward(&still, &drift, 2.0) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn step_after_done_errors() {
        let mut env = ContinuumEnv::new(EnvConfig { task_length: 1, ..EnvConfig::default() }).unwrap();
        assert_eq!(env.step(&MotorCommand::zero()).unwrap_err(), SimError::EpisodeDone);
        env.reset(1).unwrap();
        let r = env.step(&MotorCommand::zero()).unwrap();
        assert!(r.done && r.info.truncated);
        assert_eq!(env.step(&MotorCommand::zero()).unwrap_err(), SimError::EpisodeDone);
    }

    #[test]
    fn losing_the_target_ends_the_episode() {
        let mut env = ContinuumEnv::new(EnvConfig::default()).unwrap();
        let route = static_route(&env, Vector3::zeros(), 50);
        env.reset_with_trajectory(route).unwrap();
        let mut last = None;
        for _ in 0..49 {
            let r = env.step(&MotorCommand::new([0.0, 0.0, 0.0, 1.0])).unwrap();
            last = Some(r);
            if r.done {
                break;
            }
        }
        let r = last.unwrap();
        assert!(r.done);
        assert_eq!(r.info.event, StepEvent::OutOfView);
        assert!((r.reward - (r.info.raw_reward - 10.0)).abs() < 1e-12);
    }

    #[test]
    fn centered_and_route_bonus() {
        let mut env = ContinuumEnv::new(EnvConfig::default()).unwrap();
        let route = static_route(&env, Vector3::zeros(), 3);
        env.reset_with_trajectory(route).unwrap();
        let r = env.step(&MotorCommand::zero()).unwrap();
        assert_eq!(r.info.event, StepEvent::Centered);
        assert_eq!(r.reward, 10.0);
        let r = env.step(&MotorCommand::zero()).unwrap();
        assert_eq!(r.info.event, StepEvent::RouteComplete);
        assert_eq!(r.reward, 100.0);
        assert!(r.done);
    }

    #[test]
    fn positive_w_command_turns_toward_positive_w() {
        let mut env = ContinuumEnv::new(EnvConfig::default()).unwrap();
        let route = static_route(&env, Vector3::new(0.2, 0.0, 0.0), 10);
        let o = env.reset_with_trajectory(route).unwrap();
        assert!(o.w > 0.0 && o.l.abs() < 1e-12);
        let r = env.step(&MotorCommand::new([0.0, 0.0, 0.0, 0.3])).unwrap();
        assert!(r.obs.w < o.w);
        let route = static_route(&env, Vector3::new(0.0, 0.2, 0.0), 10);
        let o = env.reset_with_trajectory(route).unwrap();
        assert!(o.l > 0.0);
        let r = env.step(&MotorCommand::new([0.3, 0.0, 0.0, 0.0])).unwrap();
        assert!(r.obs.l < o.l);
    }

    #[test]
    fn commands_are_clamped() {
        let c = MotorCommand::new([2.0, -3.0, f64::NAN, 0.5]);
        assert_eq!(c.as_array(), [1.0, -1.0, 0.0, 0.5]);
        assert_eq!(c.net_axes(), [1.5, 1.0]);
    }
}

//! Rule-based basic controller built from the approximate motor directions,
//! and the estimate of how far its motions stray from the intended direction.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gauss::{DiagGaussian, GaussError, L_PAIR, VAR_FLOOR, W_PAIR};
use crate::sim::{MotorCommand, Observation};

/// Actuation below this magnitude counts as "not actuated".
pub const ACTUATION_EPS: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("need at least 2 usable steps to estimate accuracy, got {0}")]
    InsufficientData(usize),
    #[error(transparent)]
    Gauss(#[from] GaussError),
}

/// Approximate image-plane direction each motor moves the view toward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorMap {
    pub directions: [[f64; 2]; 4],
}

impl Default for PriorMap {
    fn default() -> Self {
        Self { directions: [[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]] }
    }
}

impl PriorMap {
    /// Motor pair `(positive, negative)` driving image axis 0 (`w`) or 1 (`l`).
    pub fn axis_pair(&self, axis: usize) -> (usize, usize) {
        let mut pos = None;
        let mut neg = None;
        for (m, d) in self.directions.iter().enumerate() {
            if d[axis] > 0.5 {
                pos = Some(m);
            } else if d[axis] < -0.5 {
                neg = Some(m);
            }
        }
        pos.zip(neg).unwrap_or(if axis == 0 { W_PAIR } else { L_PAIR })
    }

    /// Image axis a motor belongs to.
    pub fn axis_of(&self, motor: usize) -> usize {
        if self.directions[motor][0].abs() >= self.directions[motor][1].abs() {
            0
        } else {
            1
        }
    }
}

/// Per-image-axis deviation statistics of the basic controller, per unit action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimate {
    pub mu: [f64; 2],
    pub sigma2: [f64; 2],
    pub count: usize,
}

impl AccuracyEstimate {
    /// A prior that is taken at its word.
    pub fn perfect() -> Self {
        Self { mu: [0.0; 2], sigma2: [VAR_FLOOR; 2], count: 2 }
    }
}

/// Basic controller parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasicController {
    pub map: PriorMap,
    pub magnitude: f64,
    pub deadband: f64,
    /// Variance given to motors the basic action leaves idle.
    pub idle_variance: f64,
}

impl Default for BasicController {
    fn default() -> Self {
        Self { map: PriorMap::default(), magnitude: 0.7, deadband: 0.05, idle_variance: 1e-4 }
    }
}

impl BasicController {
    pub fn action<R: Rng + ?Sized>(&self, o: &Observation, rng: &mut R) -> Option<MotorCommand> {
        basic_action(&self.map, o, self.magnitude, self.deadband, rng)
    }

    /// The basic action that always uses the positive motor of each pair.
    /// Its axis-space distribution equals that of either random choice.
    pub fn canonical_action(&self, o: &Observation) -> Option<MotorCommand> {
        if !o.visible {
            return None;
        }
        let mut a = [0.0; 4];
        for (axis, coord) in [o.w, o.l].into_iter().enumerate() {
            if coord.abs() > self.deadband {
                a[self.map.axis_pair(axis).0] = coord.signum() * self.magnitude;
            }
        }
        Some(MotorCommand::new(a))
    }

    pub fn distribution(&self, a_bas: &MotorCommand, est: &AccuracyEstimate) -> DiagGaussian {
        basic_distribution(&self.map, a_bas, est, self.idle_variance)
    }
}

/// Picks, per image axis outside the deadband, one of the two motors that
/// move the view toward the target. `None` when the target is not visible.
pub fn basic_action<R: Rng + ?Sized>(
    map: &PriorMap,
    o: &Observation,
    magnitude: f64,
    deadband: f64,
    rng: &mut R,
) -> Option<MotorCommand> {
    if !o.visible {
        return None;
    }
    let mut a = [0.0; 4];
    for (axis, coord) in [o.w, o.l].into_iter().enumerate() {
        if coord.abs() <= deadband {
            continue;
        }
        let (pos, neg) = map.axis_pair(axis);
        // wind the motor pointing at the target or release its antagonist
        let (motor, sign) = if rng.random_bool(0.5) { (pos, 1.0) } else { (neg, -1.0) };
        a[motor] = sign * coord.signum() * magnitude;
    }
    Some(MotorCommand::new(a))
}

/// Net per-axis command `[w, l]` under the map.
pub fn axis_command(map: &PriorMap, a: &MotorCommand) -> [f64; 2] {
    std::array::from_fn(|axis| {
        let (p, n) = map.axis_pair(axis);
        a.get(p) - a.get(n)
    })
}

/// Deviation of one step, `e = (d - c) / |d|`; `None` when the target did not move.
pub fn step_deviation(o: &Observation, next: &Observation) -> Option<[f64; 2]> {
    let b = [o.w, o.l];
    let d = [next.w - o.w, next.l - o.l];
    let dn = d[0].hypot(d[1]);
    let bn = b[0].hypot(b[1]);
    if dn < 1e-9 || bn < 1e-12 {
        return None;
    }
    let u = [-b[0] / bn, -b[1] / bn];
    let proj = d[0] * u[0] + d[1] * u[1];
    Some([(d[0] - proj * u[0]) / dn, (d[1] - proj * u[1]) / dn])
}

/// Sample mean and unbiased diagonal variance of per-unit deviations.
pub fn estimate_accuracy(
    map: &PriorMap,
    steps: &[(Observation, MotorCommand, Observation)],
) -> Result<AccuracyEstimate, PriorError> {
    let mut per_axis: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut usable = 0;
    for (o, a, next) in steps {
        let net = axis_command(map, a);
        if net.iter().all(|v| v.abs() <= ACTUATION_EPS) {
            continue;
        }
        let Some(e) = step_deviation(o, next) else { continue };
        usable += 1;
        for axis in 0..2 {
            if net[axis].abs() > ACTUATION_EPS {
                per_axis[axis].push(e[axis] / net[axis].abs());
            }
        }
    }
    if usable < 2 {
        return Err(PriorError::InsufficientData(usable));
    }
    let mut mu = [0.0; 2];
    let mut sigma2 = [1.0; 2];
    for axis in 0..2 {
        let xs = &per_axis[axis];
        if xs.len() < 2 {
            continue;
        }
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        mu[axis] = m;
        sigma2[axis] = v.max(VAR_FLOOR);
    }
    Ok(AccuracyEstimate { mu, sigma2, count: usable })
}

/// `N(a(1 + mu), a^2 Sigma)` lifted from image axes to motors.
pub fn basic_distribution(map: &PriorMap, a_bas: &MotorCommand, est: &AccuracyEstimate, idle_variance: f64) -> DiagGaussian {
    let mut mean = vec![0.0; 4];
    let mut var = vec![idle_variance.max(VAR_FLOOR); 4];
    for m in 0..4 {
        let a = a_bas.get(m);
        if a.abs() <= ACTUATION_EPS {
            continue;
        }
        let axis = map.axis_of(m);
        mean[m] = a * (1.0 + est.mu[axis]);
        var[m] = (a * a * est.sigma2[axis]).max(VAR_FLOOR);
    }
    DiagGaussian::new(mean, var).expect("finite inputs give a valid distribution")
}

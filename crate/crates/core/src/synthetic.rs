//! Exactly linear stand-in environment, `o' = o + J a`, with a reward that
//! is affine in the action. Used to check estimators against ground truth.

use rand::Rng;

use crate::sim::{MotorCommand, Observation, Transition};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEnv {
    /// Rows follow [`Observation::state_vec`], columns the four motors.
    pub jacobian: [[f64; 4]; 7],
}

impl LinearEnv {
    /// Image gain 0.1 per unit net axis command, `cross` leakage into the
    /// other image axis, a small distance response and exact accumulation.
    /// `seed` perturbs the distance row.
    pub fn new(cross: f64, seed: u64) -> Self {
        let g = 0.1;
        let c = cross * g;
        let hk = 0.01 * (1.0 + (seed % 7) as f64 / 7.0);
        Self {
            jacobian: [
                [c, g, -c, -g],
                [-g, -c, g, c],
                [hk, hk, hk, hk],
                [0.1, 0.0, 0.0, 0.0],
                [0.0, 0.1, 0.0, 0.0],
                [0.0, 0.0, 0.1, 0.0],
                [0.0, 0.0, 0.0, 0.1],
            ],
        }
    }

    /// Accumulation gain, the diagonal of the motor block.
    pub fn step_gain(&self) -> f64 {
        self.jacobian[3][0]
    }

    pub fn step(&self, o: &Observation, a: &MotorCommand) -> Observation {
        let a = a.as_array();
        let s = o.state_vec();
        let next: Vec<f64> = (0..7).map(|i| s[i] + (0..4).map(|j| self.jacobian[i][j] * a[j]).sum::<f64>()).collect();
        Observation::from_state_vec(&next, o.h_ref)
    }

    /// `sum(a) - |(w, l)|`: affine in the action with unit slope per motor.
    pub fn reward(&self, o: &Observation, a: &MotorCommand) -> f64 {
        a.as_array().iter().sum::<f64>() - o.w.hypot(o.l)
    }

    pub fn random_obs<R: Rng + ?Sized>(&self, rng: &mut R) -> Observation {
        Observation {
            w: rng.random_range(-0.8..0.8),
            l: rng.random_range(-0.8..0.8),
            h: rng.random_range(0.5..1.5),
            acc: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            h_ref: 1.0,
            visible: true,
        }
    }

    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> MotorCommand {
        MotorCommand::new(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
    }

    pub fn random_transition<R: Rng + ?Sized>(&self, rng: &mut R) -> Transition {
        let obs = self.random_obs(rng);
        let action = self.random_action(rng);
        Transition { obs, action, reward: self.reward(&obs, &action), next: self.step(&obs, &action), done: false }
    }
}

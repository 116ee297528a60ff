//! Piecewise-constant-curvature model of the two-section tendon robot.
//!
//! The base sits at the origin and the backbone hangs along `-z`. Each
//! section is a circular arc whose bend vector, in the section's own frame,
//! is `gain * (acc4 - acc2, acc1 - acc3)`: the first component bends toward
//! local `+x` (image `w`), the second toward local `+y` (image `l`).

use nalgebra::{Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::SimError;

pub const SECTIONS: usize = 2;

/// Bend of one section: total arc angle and the azimuth of the bend plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionBend {
    pub angle: f64,
    pub azimuth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl TipPose {
    /// Unit vector along the backbone tangent at the tip (the optical axis).
    pub fn forward(&self) -> Vector3<f64> {
        self.orientation * down()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub acc: [f64; 4],
    pub sections: [SectionBend; SECTIONS],
    pub tip: TipPose,
}

/// Geometry and actuation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotGeometry {
    /// Arc length of each section, meters.
    pub section_length: f64,
    /// Bend angle (rad) per unit of antagonistic tendon difference, per section.
    pub bend_gain: f64,
    /// Mechanical limit on each accumulated motor position.
    pub acc_limit: f64,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        Self { section_length: 0.5, bend_gain: 0.35, acc_limit: 1.5 }
    }
}

impl RobotGeometry {
    pub fn total_length(&self) -> f64 {
        self.section_length * SECTIONS as f64
    }
}

pub(crate) fn down() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -1.0)
}

/// Bend of a section for the given accumulated motor positions.
pub fn section_bend(geom: &RobotGeometry, acc: &[f64; 4]) -> SectionBend {
    let kw = geom.bend_gain * (acc[3] - acc[1]);
    let kl = geom.bend_gain * (acc[0] - acc[2]);
    SectionBend { angle: kw.hypot(kl), azimuth: kl.atan2(kw) }
}

/// Tip displacement and rotation of one arc, expressed in its base frame.
pub fn arc_transform(length: f64, bend: SectionBend) -> (Vector3<f64>, UnitQuaternion<f64>) {
    let theta = bend.angle;
    if theta.abs() < 1e-12 {
        return (down() * length, UnitQuaternion::identity());
    }
    let (s, c) = bend.azimuth.sin_cos();
    let dir = Vector3::new(c, s, 0.0);
    let radius = length / theta;
    let pos = radius * ((1.0 - theta.cos()) * dir + theta.sin() * down());
    // rotation taking -z toward the bend direction
    let axis = Unit::new_normalize(Vector3::new(s, -c, 0.0));
    (pos, UnitQuaternion::from_axis_angle(&axis, theta))
}

/// Tip pose for accumulated motor positions; errors outside the mechanical limits.
pub fn forward_kinematics(geom: &RobotGeometry, acc: &[f64; 4]) -> Result<RobotState, SimError> {
    if let Some((i, v)) = acc.iter().enumerate().find(|(_, v)| !v.is_finite() || v.abs() > geom.acc_limit + 1e-12) {
        return Err(SimError::MechanicalLimit { motor: i + 1, value: *v });
    }
    let bend = section_bend(geom, acc);
    let mut position = Vector3::zeros();
    let mut orientation = UnitQuaternion::identity();
    for _ in 0..SECTIONS {
        let (p, r) = arc_transform(geom.section_length, bend);
        position += orientation * p;
        orientation *= r;
    }
    orientation.renormalize();
    Ok(RobotState { acc: *acc, sections: [bend; SECTIONS], tip: TipPose { position, orientation } })
}

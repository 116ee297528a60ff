//! Pinhole camera riding on the robot tip.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::kinematics::TipPose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Full field of view, radians. Normalised coordinates reach ±1 at its edge.
    pub fov: f64,
    /// Roll of the image axes about the optical axis relative to the tendon planes.
    pub roll: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self { fov: 60f64.to_radians(), roll: 0.0 }
    }
}

/// Result of projecting the target into the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible { w: f64, l: f64, h: f64 },
    /// Behind the camera or outside the image square. `w`, `l` are pushed
    /// onto the image border in the direction of the target.
    NotVisible { w: f64, l: f64, h: f64 },
    /// Target within 1e-6 of the camera centre.
    Degenerate,
}

impl Camera {
    /// Image axes in the world frame: (w axis, l axis, optical axis).
    pub fn axes(&self, tip: &TipPose) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let (s, c) = self.roll.sin_cos();
        let ex = tip.orientation * Vector3::new(c, s, 0.0);
        let ey = tip.orientation * Vector3::new(-s, c, 0.0);
        (ex, ey, tip.forward())
    }

    pub fn project(&self, tip: &TipPose, target: &Vector3<f64>) -> Projection {
        let v = target - tip.position;
        let h = v.norm();
        if h < 1e-6 {
            return Projection::Degenerate;
        }
        let (ex, ey, ez) = self.axes(tip);
        let (x, y, z) = (v.dot(&ex), v.dot(&ey), v.dot(&ez));
        let scale = (0.5 * self.fov).tan();
        if z <= 0.0 {
            let m = x.abs().max(y.abs());
            let (w, l) = if m > 0.0 { (x / m, y / m) } else { (1.0, 0.0) };
            return Projection::NotVisible { w, l, h };
        }
        let w = x / (z * scale);
        let l = y / (z * scale);
        if w.abs() > 1.0 || l.abs() > 1.0 {
            return Projection::NotVisible { w: w.clamp(-1.0, 1.0), l: l.clamp(-1.0, 1.0), h };
        }
        Projection::Visible { w, l, h }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::kinematics::{forward_kinematics, RobotGeometry};
    use nalgebra::{Matrix3, Matrix4, Vector4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight() -> TipPose {
        forward_kinematics(&RobotGeometry::default(), &[0.0; 4]).unwrap().tip
    }

    #[test]
    fn on_axis_target_is_centred() {
        let cam = Camera::default();
        let tip = straight();
        let p = cam.project(&tip, &(tip.position + Vector3::new(0.0, 0.0, -0.8)));
        assert_eq!(p, Projection::Visible { w: 0.0, l: 0.0, h: 0.8 });
    }

    #[test]
    fn fov_boundary_is_unit() {
        let cam = Camera::default();
        let tip = straight();
        let d = 0.7;
        let x = d * (0.5 * cam.fov).tan();
        match cam.project(&tip, &(tip.position + Vector3::new(x, 0.0, -d))) {
            Projection::Visible { w, l, .. } => {
                assert!((w - 1.0).abs() < 1e-6);
                assert!(l.abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn behind_and_degenerate() {
        let cam = Camera::default();
        let tip = straight();
        assert!(matches!(cam.project(&tip, &(tip.position + Vector3::new(0.1, 0.0, 0.5))), Projection::NotVisible { .. }));
        assert_eq!(cam.project(&tip, &tip.position), Projection::Degenerate);
    }

    /// Second implementation: world-to-camera homogeneous transform plus intrinsics.
    fn homogeneous_project(cam: &Camera, tip: &TipPose, target: &Vector3<f64>) -> (f64, f64) {
        let r_body = tip.orientation.to_rotation_matrix().into_inner();
        let roll = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), cam.roll).into_inner();
        // body frame looks along -z; flip to a camera frame looking along +z
        let flip = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        let r_cam = r_body * roll * flip;
        let mut t = Matrix4::identity();
        t.fixed_view_mut::<3, 3>(0, 0).copy_from(&r_cam);
        t.fixed_view_mut::<3, 1>(0, 3).copy_from(&tip.position);
        let inv = t.try_inverse().unwrap();
        let pc = inv * Vector4::new(target.x, target.y, target.z, 1.0);
        let f = 1.0 / (0.5 * cam.fov).tan();
        let k = Matrix3::new(f, 0.0, 0.0, 0.0, f, 0.0, 0.0, 0.0, 1.0);
        let uvw = k * Vector3::new(pc.x, pc.y, pc.z);
        (uvw.x / uvw.z, uvw.y / uvw.z)
    }

    #[test]
    fn matches_homogeneous_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let geom = RobotGeometry::default();
        let mut checked = 0;
        for _ in 0..500 {
            let acc: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
            let tip = forward_kinematics(&geom, &acc).unwrap().tip;
            let cam = Camera { fov: rng.random_range(0.5..1.5), roll: rng.random_range(-0.5..0.5) };
            let offset = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let target = tip.position + tip.forward() * 1.5 + offset * 0.5;
            if let Projection::Visible { w, l, .. } = cam.project(&tip, &target) {
                let (u, v) = homogeneous_project(&cam, &tip, &target);
                assert!((u - w).abs() < 1e-9 && (v - l).abs() < 1e-9, "{w},{l} vs {u},{v}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }
}

//! Random target routes: natural cubic splines through control points that
//! random-walk inside a spherical shell around the robot base.

use std::io::Write;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Cone used to constrain where control points may fall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    pub apex: Vector3<f64>,
    /// Unit axis.
    pub axis: Vector3<f64>,
    pub half_angle: f64,
}

impl Cone {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let v = p - self.apex;
        let n = v.norm();
        n > 0.0 && (v.dot(&self.axis) / n).clamp(-1.0, 1.0).acos() <= self.half_angle
    }
}

/// Shape parameters for route generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouteParams {
    pub r_min: f64,
    pub r_max: f64,
    /// Number of spline control points.
    pub control_points: usize,
    /// Maximum distance between consecutive control points.
    pub segment_length: f64,
    /// Upper bound on the spacing of consecutive waypoints.
    pub max_step: f64,
    /// Half-angle, around `-z` from the base, of the region control points may occupy.
    pub workspace_half_angle: f64,
}

impl Default for RouteParams {
    fn default() -> Self {
        Self {
            r_min: 1.4,
            r_max: 2.2,
            control_points: 4,
            segment_length: 0.3,
            max_step: 0.02,
            workspace_half_angle: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrajectory {
    waypoints: Vec<Vector3<f64>>,
    index: usize,
    r_min: f64,
    r_max: f64,
}

impl TargetTrajectory {
    pub fn from_waypoints(waypoints: Vec<Vector3<f64>>, r_min: f64, r_max: f64) -> Result<Self, SimError> {
        if waypoints.is_empty() {
            return Err(SimError::Config("empty trajectory".into()));
        }
        Ok(Self { waypoints, index: 0, r_min, r_max })
    }

    pub fn waypoints(&self) -> &[Vector3<f64>] {
        &self.waypoints
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn current(&self) -> Vector3<f64> {
        self.waypoints[self.index]
    }

    pub fn is_final(&self) -> bool {
        self.index + 1 == self.waypoints.len()
    }

    pub fn shell(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }

    /// Moves to the next waypoint, staying on the last one once reached.
    pub fn advance(&mut self) {
        if !self.is_final() {
            self.index += 1;
        }
    }

    /// Writes `t,x,y,z` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "z"])?;
        for (t, p) in self.waypoints.iter().enumerate() {
            w.write_record(&[t.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Second derivatives of the natural cubic spline through `ys` at unit knot spacing.
fn natural_second_derivatives(ys: &[f64]) -> Vec<f64> {
    let n = ys.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior system m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2y[i] + y[i-1])
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (ys[i + 2] - 2.0 * ys[i + 1] + ys[i]);
        if i == 0 {
            c[i] = 1.0 / 4.0;
            d[i] = rhs / 4.0;
        } else {
            let denom = 4.0 - c[i - 1];
            c[i] = 1.0 / denom;
            d[i] = (rhs - d[i - 1]) / denom;
        }
    }
    for i in (0..k).rev() {
        let next = if i + 1 < k { m[i + 2] } else { 0.0 };
        m[i + 1] = d[i] - c[i] * next;
    }
    m
}

fn eval_spline(ys: &[f64], m: &[f64], t: f64) -> f64 {
    let last = ys.len() - 1;
    if last == 0 {
        return ys[0];
    }
    let i = (t.floor() as usize).min(last - 1);
    let u = t - i as f64;
    let a = 1.0 - u;
    a * ys[i] + u * ys[i + 1] + ((a * a * a - a) * m[i] + (u * u * u - u) * m[i + 1]) / 6.0
}

/// Samples `n` points uniformly in the spline parameter through `ctrl`.
pub fn spline_points(ctrl: &[Vector3<f64>], n: usize) -> Vec<Vector3<f64>> {
    let coords: [Vec<f64>; 3] = std::array::from_fn(|k| ctrl.iter().map(|p| p[k]).collect());
    let second: [Vec<f64>; 3] = std::array::from_fn(|k| natural_second_derivatives(&coords[k]));
    let span = (ctrl.len() - 1) as f64;
    (0..n)
        .map(|j| {
            let t = if n == 1 { 0.0 } else { span * j as f64 / (n - 1) as f64 };
            Vector3::new(
                eval_spline(&coords[0], &second[0], t),
                eval_spline(&coords[1], &second[1], t),
                eval_spline(&coords[2], &second[2], t),
            )
        })
        .collect()
}

const POINT_ATTEMPTS: usize = 2000;
const ROUTE_ATTEMPTS: usize = 200;

fn in_shell(p: &Vector3<f64>, params: &RouteParams) -> bool {
    let r = p.norm();
    r >= params.r_min && r <= params.r_max
}

/// Random route of `n_waypoints` whose first waypoint lies in `start_cone`.
///
/// Control points are redrawn until every waypoint is inside the shell and
/// consecutive waypoints are at most `max_step` apart.
pub fn generate_target_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    n_waypoints: usize,
    params: &RouteParams,
    start_cone: &Cone,
) -> Result<TargetTrajectory, SimError> {
    if !(params.r_min >= 0.0 && params.r_min < params.r_max) {
        return Err(SimError::Config(format!("infeasible shell [{}, {}]", params.r_min, params.r_max)));
    }
    if n_waypoints == 0 || params.control_points < 2 {
        return Err(SimError::Config("route needs waypoints and at least two control points".into()));
    }
    let workspace = Cone { apex: Vector3::zeros(), axis: -Vector3::z(), half_angle: params.workspace_half_angle };

    'route: for _ in 0..ROUTE_ATTEMPTS {
        let mut ctrl = Vec::with_capacity(params.control_points);
        let first = sample_in_cone(rng, start_cone, params)?;
        ctrl.push(first);
        while ctrl.len() < params.control_points {
            let prev = ctrl[ctrl.len() - 1];
            let mut found = None;
            for _ in 0..POINT_ATTEMPTS {
                let offset = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if offset.norm() > 1.0 {
                    continue;
                }
                let p = prev + offset * params.segment_length;
                if in_shell(&p, params) && workspace.contains(&p) {
                    found = Some(p);
                    break;
                }
            }
            match found {
                Some(p) => ctrl.push(p),
                None => continue 'route,
            }
        }
        let waypoints = spline_points(&ctrl, n_waypoints);
        let inside = waypoints.iter().all(|p| in_shell(p, params));
        let fine = waypoints.windows(2).all(|w| (w[1] - w[0]).norm() <= params.max_step);
        if inside && fine {
            return TargetTrajectory::from_waypoints(waypoints, params.r_min, params.r_max);
        }
    }
    Err(SimError::Config("could not fit a route inside the workspace shell".into()))
}

fn sample_in_cone<R: Rng + ?Sized>(rng: &mut R, cone: &Cone, params: &RouteParams) -> Result<Vector3<f64>, SimError> {
    // orthonormal frame around the cone axis
    let helper = if cone.axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = cone.axis.cross(&helper).normalize();
    let v = cone.axis.cross(&u);
    for _ in 0..POINT_ATTEMPTS {
        let polar = cone.half_angle * rng.random::<f64>().sqrt();
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        let dir = cone.axis * polar.cos() + (u * azimuth.cos() + v * azimuth.sin()) * polar.sin();
        let dist = rng.random_range(0.0..(params.r_max + cone.apex.norm()));
        let p = cone.apex + dir * dist;
        if in_shell(&p, params) {
            return Ok(p);
        }
    }
    Err(SimError::Config("start cone does not reach the workspace shell".into()))
}

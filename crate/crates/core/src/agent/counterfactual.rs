//! Outcome of an action that was not executed, extrapolated from one that was.

use crate::prior::{axis_command, PriorMap, ACTUATION_EPS};
use crate::sim::{MotorCommand, Observation};

/// Reward and next observation `a_alt` would have produced, assuming the
/// observation responds linearly to the net command along each image axis.
///
/// The reward follows `r_alt = sum(a_alt - a_bas) + r_real`. Image deltas
/// scale by the per-axis ratio of net commands (clamped to `±max_ratio`).
/// An axis the executed action left idle borrows the image response per
/// unit command of the actuated axes; the distance uses their mean ratio.
/// Accumulated positions move by the per-motor gain fitted from the
/// executed step. `None` when no image axis was actuated.
pub fn counterfactual_estimate(
    map: &PriorMap,
    o: &Observation,
    a_bas: &MotorCommand,
    r_real: f64,
    next_bas: &Observation,
    a_alt: &MotorCommand,
    max_ratio: f64,
) -> Option<(f64, Observation)> {
    let base = axis_command(map, a_bas);
    let alt = axis_command(map, a_alt);
    let ratios: [Option<f64>; 2] = std::array::from_fn(|i| {
        (base[i].abs() > ACTUATION_EPS).then(|| (alt[i] / base[i]).clamp(-max_ratio, max_ratio))
    });
    let active: Vec<f64> = ratios.iter().flatten().copied().collect();
    if active.is_empty() {
        return None;
    }
    let mean_ratio = active.iter().sum::<f64>() / active.len() as f64;
    let delta = [next_bas.w - o.w, next_bas.l - o.l];
    let slopes: Vec<f64> = (0..2).filter(|&i| ratios[i].is_some()).map(|i| delta[i] / base[i]).collect();
    let slope = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let axis_delta = |i: usize| match ratios[i] {
        Some(r) => r * delta[i],
        None => delta[i] + slope * (alt[i] - base[i]),
    };

    let (ab, aa) = (a_bas.as_array(), a_alt.as_array());
    let r_alt = aa.iter().zip(&ab).map(|(x, y)| x - y).sum::<f64>() + r_real;

    // least-squares accumulation gain from the executed step
    let num: f64 = (0..4).map(|j| (next_bas.acc[j] - o.acc[j]) * ab[j]).sum();
    let den: f64 = ab.iter().map(|v| v * v).sum();
    let gain = num / den;

    let mut next = *o;
    next.w = o.w + axis_delta(0);
    next.l = o.l + axis_delta(1);
    next.h = o.h + mean_ratio * (next_bas.h - o.h);
    for j in 0..4 {
        next.acc[j] = o.acc[j] + gain * aa[j];
    }
    next.visible = next.w.abs() < 1.0 && next.l.abs() < 1.0 && next.h > 0.0;
    Some((r_alt, next))
}

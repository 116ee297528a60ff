//! Closed-form algebra on diagonal Gaussians over action space.
//!
//! Everything here works on variances rather than standard deviations. Motor
//! space is 4-dimensional (motors 1..=4 at indices 0..=3); axis space is the
//! 2-dimensional image plane `(w, l)` obtained with [`merge_motor_pairs`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest variance a distribution may carry. Keeps KL finite.
pub const VAR_FLOOR: f64 = 1e-8;

/// Motor indices (0-based) driving the image `w` axis, as (positive, negative).
pub const W_PAIR: (usize, usize) = (3, 1);
/// Motor indices (0-based) driving the image `l` axis, as (positive, negative).
pub const L_PAIR: (usize, usize) = (0, 2);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("exploitation coefficient {0} outside [0, 1]")]
    InvalidZeta(f64),
}

/// Diagonal multivariate Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", into = "RawGaussian")]
pub struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl TryFrom<RawGaussian> for DiagGaussian {
    type Error = GaussError;
    fn try_from(raw: RawGaussian) -> Result<Self, Self::Error> {
        DiagGaussian::new(raw.mean, raw.var)
    }
}

impl From<DiagGaussian> for RawGaussian {
    fn from(g: DiagGaussian) -> Self {
        RawGaussian { mean: g.mean, var: g.var }
    }
}

impl DiagGaussian {
    /// Builds a distribution, flooring variances at [`VAR_FLOOR`].
    ///
    /// Rejects empty or mismatched vectors, non-finite entries and negative
    /// variances.
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self, GaussError> {
        if mean.len() != var.len() {
            return Err(GaussError::DimensionMismatch(mean.len(), var.len()));
        }
        if mean.is_empty() {
            return Err(GaussError::InvalidDistribution("zero-dimensional".into()));
        }
        if let Some(m) = mean.iter().find(|m| !m.is_finite()) {
            return Err(GaussError::InvalidDistribution(format!("non-finite mean {m}")));
        }
        if let Some(v) = var.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(GaussError::InvalidDistribution(format!("bad variance {v}")));
        }
        let var = var.into_iter().map(|v| v.max(VAR_FLOOR)).collect();
        Ok(Self { mean, var })
    }

    /// Same variance `var` in every dimension.
    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self, GaussError> {
        let n = mean.len();
        Self::new(mean, vec![var; n])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn std(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }

    /// Draws `mean + std * noise` for a caller-supplied standard-normal vector.
    pub fn sample_with(&self, noise: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(noise)
            .map(|((m, v), z)| m + v.sqrt() * z)
            .collect()
    }

    fn check_same_dim(&self, other: &Self) -> Result<(), GaussError> {
        if self.dim() != other.dim() {
            return Err(GaussError::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(())
    }
}

/// `KL(g1 || g2)` for diagonal covariances:
/// `0.5 * [ln(|S2|/|S1|) - n + tr(S2^-1 S1) + d^T S2^-1 d]`, `d = mu2 - mu1`.
pub fn kl_divergence(g1: &DiagGaussian, g2: &DiagGaussian) -> Result<f64, GaussError> {
    g1.check_same_dim(g2)?;
    let mut acc = 0.0;
    for i in 0..g1.dim() {
        let (v1, v2) = (g1.var[i], g2.var[i]);
        if !(v1 > 0.0 && v2 > 0.0 && v1.is_finite() && v2.is_finite()) {
            return Err(GaussError::InvalidDistribution(format!("variances {v1}, {v2}")));
        }
        let d = g2.mean[i] - g1.mean[i];
        acc += (v2 / v1).ln() - 1.0 + v1 / v2 + d * d / v2;
    }
    Ok(0.5 * acc)
}

/// Partial derivatives of `KL(g1 || g2)` with respect to the mean and the
/// variance of `g2`, per dimension.
pub fn kl_grad_wrt_second(
    g1: &DiagGaussian,
    g2: &DiagGaussian,
) -> Result<(Vec<f64>, Vec<f64>), GaussError> {
    g1.check_same_dim(g2)?;
    let mut d_mean = Vec::with_capacity(g1.dim());
    let mut d_var = Vec::with_capacity(g1.dim());
    for i in 0..g1.dim() {
        let (v1, v2) = (g1.var[i], g2.var[i]);
        let d = g2.mean[i] - g1.mean[i];
        d_mean.push(d / v2);
        d_var.push(0.5 * (1.0 / v2 - v1 / (v2 * v2) - d * d / (v2 * v2)));
    }
    Ok((d_mean, d_var))
}

/// Product-of-Gaussians fusion, one scalar Kalman update per dimension.
pub fn kalman_fuse(g_bas: &DiagGaussian, g_gau: &DiagGaussian) -> Result<DiagGaussian, GaussError> {
    g_bas.check_same_dim(g_gau)?;
    let mut mean = Vec::with_capacity(g_bas.dim());
    let mut var = Vec::with_capacity(g_bas.dim());
    for i in 0..g_bas.dim() {
        let (vb, vg) = (g_bas.var[i], g_gau.var[i]);
        mean.push((vb * g_gau.mean[i] + vg * g_bas.mean[i]) / (vb + vg));
        var.push(1.0 / (1.0 / vb + 1.0 / vg));
    }
    DiagGaussian::new(mean, var)
}

/// Fusion weighted by the exploitation coefficient `zeta_bas` (trust in the
/// prior); `zeta_real = 1 - zeta_bas` weights the learned policy.
///
/// At `zeta_bas` of exactly 0 or 1 the corresponding input is returned as is.
pub fn weighted_fuse(
    g_bas: &DiagGaussian,
    g_gau: &DiagGaussian,
    zeta_bas: f64,
) -> Result<DiagGaussian, GaussError> {
    g_bas.check_same_dim(g_gau)?;
    if !(0.0..=1.0).contains(&zeta_bas) {
        return Err(GaussError::InvalidZeta(zeta_bas));
    }
    if zeta_bas == 1.0 {
        return Ok(g_bas.clone());
    }
    if zeta_bas == 0.0 {
        return Ok(g_gau.clone());
    }
    let zeta_real = 1.0 - zeta_bas;
    let mut mean = Vec::with_capacity(g_bas.dim());
    let mut var = Vec::with_capacity(g_bas.dim());
    for i in 0..g_bas.dim() {
        let (vb, vg) = (g_bas.var[i], g_gau.var[i]);
        let num = zeta_real * vb * g_gau.mean[i] + zeta_bas * vg * g_bas.mean[i];
        mean.push(num / (zeta_real * vb + zeta_bas * vg));
        var.push(1.0 / (zeta_bas / vb + zeta_real / vg));
    }
    DiagGaussian::new(mean, var)
}

/// Collapses motor space onto the two image axes.
///
/// Antagonistic motors act in opposite directions along their axis, so the
/// axis mean is `mu_pos - mu_neg`; the axis variance is the pair average.
pub fn merge_motor_pairs(g4: &DiagGaussian) -> Result<DiagGaussian, GaussError> {
    if g4.dim() != 4 {
        return Err(GaussError::DimensionMismatch(g4.dim(), 4));
    }
    let merge = |(p, n): (usize, usize)| {
        (g4.mean[p] - g4.mean[n], 0.5 * (g4.var[p] + g4.var[n]))
    };
    let (mw, vw) = merge(W_PAIR);
    let (ml, vl) = merge(L_PAIR);
    DiagGaussian::new(vec![mw, ml], vec![vw, vl])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn g(mean: &[f64], var: &[f64]) -> DiagGaussian {
        DiagGaussian::new(mean.to_vec(), var.to_vec()).unwrap()
    }

    fn log_pdf(x: &[f64], d: &DiagGaussian) -> f64 {
        x.iter()
            .zip(d.mean())
            .zip(d.var())
            .map(|((x, m), v)| -0.5 * ((x - m).powi(2) / v + (2.0 * std::f64::consts::PI * v).ln()))
            .sum()
    }

    #[test]
    fn kl_identical_is_zero() {
        let a = g(&[0.3, -1.2], &[0.5, 2.0]);
        assert_eq!(kl_divergence(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn kl_unit_shift_matches_monte_carlo() {
        let p = g(&[0.0, 0.0], &[1.0, 1.0]);
        let q = g(&[1.0, 0.0], &[1.0, 1.0]);
        let closed = kl_divergence(&p, &q).unwrap();
        assert!((closed - 0.5).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            sum += log_pdf(&x, &p) - log_pdf(&x, &q);
        }
        let mc = sum / n as f64;
        // std of the log-ratio is 1, so 5 sigma is 5e-3
        assert!((mc - 0.5).abs() < 5e-3, "mc estimate {mc}");
    }

    #[test]
    fn kl_is_asymmetric() {
        let p = g(&[0.0, 0.0], &[1.0, 1.0]);
        let q = g(&[0.0, 0.0], &[4.0, 4.0]);
        let pq = kl_divergence(&p, &q).unwrap();
        let qp = kl_divergence(&q, &p).unwrap();
        // 0.5*[2 ln4 - 2 + 0.5] and 0.5*[-2 ln4 - 2 + 8]
        assert!((pq - 0.5 * (2.0 * 4f64.ln() - 1.5)).abs() < 1e-12);
        assert!((qp - 0.5 * (6.0 - 2.0 * 4f64.ln())).abs() < 1e-12);
        assert!(pq > 0.0 && qp > 0.0 && (pq - qp).abs() > 0.1);
    }

    #[test]
    fn kl_grad_matches_finite_differences() {
        let p = g(&[0.2, -0.4], &[0.3, 0.7]);
        let q = g(&[-0.1, 0.5], &[0.9, 0.2]);
        let (dm, dv) = kl_grad_wrt_second(&p, &q).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut mp = q.mean().to_vec();
            let mut mm = q.mean().to_vec();
            mp[i] += h;
            mm[i] -= h;
            let fd = (kl_divergence(&p, &g(&mp, q.var())).unwrap()
                - kl_divergence(&p, &g(&mm, q.var())).unwrap())
                / (2.0 * h);
            assert!((fd - dm[i]).abs() < 1e-7);
            let mut vp = q.var().to_vec();
            let mut vm = q.var().to_vec();
            vp[i] += h;
            vm[i] -= h;
            let fd = (kl_divergence(&p, &g(q.mean(), &vp)).unwrap()
                - kl_divergence(&p, &g(q.mean(), &vm)).unwrap())
                / (2.0 * h);
            assert!((fd - dv[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(
            DiagGaussian::new(vec![0.0], vec![-1.0]),
            Err(GaussError::InvalidDistribution(_))
        ));
        assert!(matches!(
            DiagGaussian::new(vec![0.0], vec![f64::NAN]),
            Err(GaussError::InvalidDistribution(_))
        ));
        assert!(DiagGaussian::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let a = g(&[0.0], &[1.0]);
        let b = g(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(kalman_fuse(&a, &b), Err(GaussError::DimensionMismatch(1, 2))));
        assert!(kl_divergence(&a, &b).is_err());
        assert!(matches!(weighted_fuse(&b, &b, 1.5), Err(GaussError::InvalidZeta(_))));
        assert!(weighted_fuse(&b, &b, -0.1).is_err());
        assert!(merge_motor_pairs(&b).is_err());
    }

    #[test]
    fn variance_floor_applies() {
        let a = g(&[0.0], &[0.0]);
        assert_eq!(a.var()[0], VAR_FLOOR);
    }

    #[test]
    fn kalman_examples() {
        let f = kalman_fuse(&g(&[1.0, -2.0], &[0.5, 0.5]), &g(&[3.0, 4.0], &[0.5, 0.5])).unwrap();
        assert_eq!(f.mean(), &[2.0, 1.0]);
        assert_eq!(f.var(), &[0.25, 0.25]);

        let f = kalman_fuse(&g(&[5.0, 5.0], &[1e12, 1e12]), &g(&[0.3, -0.7], &[0.2, 0.4])).unwrap();
        assert!((f.mean()[0] - 0.3).abs() < 1e-6);
        assert!((f.mean()[1] + 0.7).abs() < 1e-6);

        // (3*0 + 1*2) / 4 and 1 / (1 + 1/3)
        let f = kalman_fuse(&g(&[0.0], &[1.0]), &g(&[2.0], &[3.0])).unwrap();
        assert!((f.mean()[0] - 0.5).abs() < 1e-15);
        assert!((f.var()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn weighted_fuse_limits_and_midpoint() {
        let b = g(&[0.1, 0.2, 0.3, 0.4], &[0.1, 0.2, 0.3, 0.4]);
        let q = g(&[-1.0, 0.5, 0.0, 2.0], &[1.0, 0.05, 2.0, 0.3]);
        assert_eq!(weighted_fuse(&b, &q, 1.0).unwrap(), b);
        assert_eq!(weighted_fuse(&b, &q, 0.0).unwrap(), q);
        let half = weighted_fuse(&b, &q, 0.5).unwrap();
        let k = kalman_fuse(&b, &q).unwrap();
        for i in 0..4 {
            assert!((half.mean()[i] - k.mean()[i]).abs() < 1e-14);
            assert!((half.var()[i] - 2.0 * k.var()[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn merge_examples() {
        let m = merge_motor_pairs(&g(&[0.0; 4], &[1.0; 4])).unwrap();
        assert_eq!(m.mean(), &[0.0, 0.0]);
        assert_eq!(m.var(), &[1.0, 1.0]);

        let m = merge_motor_pairs(&g(&[0.2, 0.0, 0.0, 0.5], &[0.04; 4])).unwrap();
        assert!((m.mean()[0] - 0.5).abs() < 1e-15);
        assert!((m.mean()[1] - 0.2).abs() < 1e-15);
        assert!((m.var()[0] - 0.04).abs() < 1e-15 && (m.var()[1] - 0.04).abs() < 1e-15);

        let m = merge_motor_pairs(&g(&[0.0, 0.3, 0.0, 0.3], &[0.01, 0.09, 0.01, 0.01])).unwrap();
        assert_eq!(m.mean()[0], 0.0);
        assert!((m.var()[0] - 0.05).abs() < 1e-15);
    }

    fn arb_gauss(n: usize) -> impl Strategy<Value = DiagGaussian> {
        (
            proptest::collection::vec(-3.0..3.0f64, n),
            proptest::collection::vec(1e-3..5.0f64, n),
        )
            .prop_map(|(m, v)| DiagGaussian::new(m, v).unwrap())
    }

    proptest! {
        #[test]
        fn kl_nonnegative(a in arb_gauss(2), b in arb_gauss(2)) {
            prop_assert!(kl_divergence(&a, &b).unwrap() >= -1e-12);
            prop_assert_eq!(kl_divergence(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn kalman_shrinks_and_interpolates(a in arb_gauss(4), b in arb_gauss(4)) {
            let f = kalman_fuse(&a, &b).unwrap();
            for i in 0..4 {
                prop_assert!(f.var()[i] <= a.var()[i].min(b.var()[i]));
                let lo = a.mean()[i].min(b.mean()[i]);
                let hi = a.mean()[i].max(b.mean()[i]);
                prop_assert!(f.mean()[i] >= lo - 1e-12 && f.mean()[i] <= hi + 1e-12);
            }
        }

        #[test]
        fn weighted_fuse_continuous(a in arb_gauss(4), b in arb_gauss(4), z in 0.01..0.99f64) {
            let f0 = weighted_fuse(&a, &b, z).unwrap();
            let f1 = weighted_fuse(&a, &b, z + 1e-6).unwrap();
            for i in 0..4 {
                prop_assert!((f0.mean()[i] - f1.mean()[i]).abs() < 1e-3);
                prop_assert!((f0.var()[i] - f1.var()[i]).abs() < 1e-3);
            }
        }

        #[test]
        fn merge_invariant_to_pair_carrier(
            mw in -1.0..1.0f64, ml in -1.0..1.0f64, v in proptest::collection::vec(1e-3..1.0f64, 4),
            other in arb_gauss(2),
        ) {
            // magnitude on the positive motor vs the same magnitude, sign flipped, on the negative one
            let on_pos = DiagGaussian::new(vec![ml, 0.0, 0.0, mw], v.clone()).unwrap();
            let swapped_var = vec![v[2], v[3], v[0], v[1]];
            let on_neg = DiagGaussian::new(vec![0.0, -mw, -ml, 0.0], swapped_var).unwrap();
            let k1 = kl_divergence(&merge_motor_pairs(&on_pos).unwrap(), &other).unwrap();
            let k2 = kl_divergence(&merge_motor_pairs(&on_neg).unwrap(), &other).unwrap();
            prop_assert!((k1 - k2).abs() < 1e-12);
        }
    }
}

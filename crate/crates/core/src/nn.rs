//! Small dense networks with hand-written reverse mode and Adam.
//!
//! Batches are row-major: one sample per row. Every layer is affine; hidden
//! layers are followed by the configured nonlinearity and the last layer is
//! linear. Loss heads (Gaussian NLL, squashed policies, ...) live with the
//! callers, which hand `dL/d(output)` back to [`Mlp::backward`].

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("network needs at least one layer")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        match self {
            Activation::Sigmoid => x.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Tanh => x.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Affine layer `y = x W + b`, `W` stored as (fan_in, fan_out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    fn uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
        let bias = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..bound));
        Self { weight, bias }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.nrows(), self.weight.ncols())
    }
}

/// Multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden: Activation,
}

/// Per-layer activations kept by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    // acts[0] is the input batch, acts[i] the post-activation output of layer i-1.
    acts: Vec<Array2<f64>>,
}

/// Gradient of a scalar loss with respect to every parameter, shaped like the net.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Dense>,
}

impl Grads {
    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weight *= k;
            l.bias *= k;
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| *v == 0.0) && l.bias.iter().all(|v| *v == 0.0))
    }
}

impl Mlp {
    /// Randomly initialised network; weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, rng: &mut R) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::Empty);
        }
        let layers = sizes.windows(2).map(|w| Dense::uniform(w[0], w[1], rng)).collect();
        Ok(Self { layers, hidden })
    }

    pub fn zeros(sizes: &[usize], hidden: Activation) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::Empty);
        }
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers, hidden })
    }

    pub fn from_layers(layers: Vec<Dense>, hidden: Activation) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Empty);
        }
        for pair in layers.windows(2) {
            if pair[0].weight.ncols() != pair[1].weight.nrows() {
                return Err(NnError::Shape { expected: pair[0].weight.ncols(), got: pair[1].weight.nrows() });
            }
        }
        for l in &layers {
            if l.bias.len() != l.weight.ncols() {
                return Err(NnError::Shape { expected: l.weight.ncols(), got: l.bias.len() });
            }
        }
        Ok(Self { layers, hidden })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn set_hidden(&mut self, hidden: Activation) {
        self.hidden = hidden;
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(self.layers.iter().map(|l| l.weight.ncols()));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
        Ok(self.forward_batch(&x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x)?;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weight) + &layer.bias;
            if i < last {
                self.hidden.apply(&mut h);
            }
            if !h.iter().all(|v| v.is_finite()) {
                return Err(NnError::NonFinite { layer: i });
            }
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Cache), NnError> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        let mut out = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = acts[i].dot(&layer.weight) + &layer.bias;
            if i < last {
                self.hidden.apply(&mut h);
            }
            if !h.iter().all(|v| v.is_finite()) {
                return Err(NnError::NonFinite { layer: i });
            }
            if i < last {
                acts.push(h);
            } else {
                out = Some(h);
            }
        }
        Ok((out.expect("at least one layer"), Cache { acts }))
    }

    /// Reverse pass: `grad_out` is `dL/d(output)` for the cached batch.
    /// Returns parameter gradients and `dL/d(input)`.
    pub fn backward(&self, cache: &Cache, grad_out: &Array2<f64>) -> Result<(Grads, Array2<f64>), NnError> {
        let n_out = self.output_size();
        if grad_out.ncols() != n_out {
            return Err(NnError::Shape { expected: n_out, got: grad_out.ncols() });
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.to_owned();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.acts[i];
            let mut dw = input.t().dot(&delta);
            if !dw.is_standard_layout() {
                dw = dw.as_standard_layout().into_owned();
            }
            let db = delta.sum_axis(Axis(0));
            if !dw.iter().all(|v| v.is_finite()) || !db.iter().all(|v| v.is_finite()) {
                return Err(NnError::NonFinite { layer: i });
            }
            grads.push(Dense { weight: dw, bias: db });
            let mut d_in = delta.dot(&self.layers[i].weight.t());
            if i > 0 {
                let act = self.hidden;
                ndarray::Zip::from(&mut d_in)
                    .and(input)
                    .for_each(|d, &y| *d *= act.derivative_from_output(y));
            }
            delta = d_in;
        }
        grads.reverse();
        Ok((Grads { layers: grads }, delta))
    }

    pub fn zero_grads(&self) -> Grads {
        Grads { layers: self.layers.iter().map(Dense::zeros_like).collect() }
    }

    /// Polyak averaging: `self <- (1 - tau) * self + tau * source`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            t.weight.zip_mut_with(&s.weight, |a, b| *a = (1.0 - tau) * *a + tau * b);
            t.bias.zip_mut_with(&s.bias, |a, b| *a = (1.0 - tau) * *a + tau * b);
        }
    }

    /// Euclidean distance between the parameter vectors of two same-shaped nets.
    pub fn param_distance(&self, other: &Mlp) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let dw: f64 = a.weight.iter().zip(&b.weight).map(|(x, y)| (x - y).powi(2)).sum();
                let db: f64 = a.bias.iter().zip(&b.bias).map(|(x, y)| (x - y).powi(2)).sum();
                dw + db
            })
            .sum::<f64>()
            .sqrt()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_size() {
            return Err(NnError::Shape { expected: self.input_size(), got: x.ncols() });
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, step: u64) {
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        // a zero gradient only decays the moments
        if g[i] != 0.0 {
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub step: u64,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros: Vec<Dense> = net.layers.iter().map(Dense::zeros_like).collect();
        Self { lr, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) -> Result<(), NnError> {
        if grads.layers.len() != net.layers.len() || self.m.len() != net.layers.len() {
            return Err(NnError::Shape { expected: net.layers.len(), got: grads.layers.len() });
        }
        for ((layer, g), m) in net.layers.iter().zip(&grads.layers).zip(&self.m) {
            if layer.weight.dim() != g.weight.dim() || layer.weight.dim() != m.weight.dim() {
                return Err(NnError::Shape { expected: layer.weight.len(), got: g.weight.len() });
            }
        }
        self.step += 1;
        for (((layer, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            adam_update(
                layer.weight.as_slice_mut().expect("standard layout"),
                g.weight.as_slice().expect("standard layout"),
                m.weight.as_slice_mut().expect("standard layout"),
                v.weight.as_slice_mut().expect("standard layout"),
                self.lr,
                self.step,
            );
            adam_update(
                layer.bias.as_slice_mut().expect("standard layout"),
                g.bias.as_slice().expect("standard layout"),
                m.bias.as_slice_mut().expect("standard layout"),
                v.bias.as_slice_mut().expect("standard layout"),
                self.lr,
                self.step,
            );
        }
        Ok(())
    }

    pub fn first_moments(&self) -> &[Dense] {
        &self.m
    }
}

/// Adam for a single scalar parameter (the SAC temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub lr: f64,
    pub step: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self { lr, step: 0, m: 0.0, v: 0.0 }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        self.step += 1;
        let (mut m, mut v) = ([self.m], [self.v]);
        adam_update(std::slice::from_mut(param), &[grad], &mut m, &mut v, self.lr, self.step);
        self.m = m[0];
        self.v = v[0];
    }
}

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

pub const FD_STEP: f64 = 1e-5;

/// Relative error `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps vanishing
/// gradients from dominating the report.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Checks [`Mlp::backward`] on a seeded batch with a squared-error loss.
pub fn grad_check(net: &Mlp, tolerance: f64) -> GradCheckReport {
    grad_check_with(net, tolerance, |n, cache, g| n.backward(cache, g).map(|(g, _)| g))
}

/// Like [`grad_check`], with the analytic backward rule supplied by the caller.
pub fn grad_check_with<F>(net: &Mlp, tolerance: f64, analytic: F) -> GradCheckReport
where
    F: Fn(&Mlp, &Cache, &Array2<f64>) -> Result<Grads, NnError>,
{
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x6772_6164);
    let batch = 4;
    let x = Array2::from_shape_simple_fn((batch, net.input_size()), || rng.random_range(-1.0..1.0));
    let target = Array2::from_shape_simple_fn((batch, net.output_size()), || rng.random_range(-1.0..1.0));
    let loss = |n: &Mlp| -> f64 {
        let y = n.forward_batch(&x).expect("finite forward");
        0.5 * (&y - &target).mapv(|d| d * d).sum()
    };

    let fail = GradCheckReport { max_rel_error: f64::INFINITY, checked: 0, passed: false };
    let Ok((y, cache)) = net.forward_cached(&x) else { return fail };
    let Ok(grads) = analytic(net, &cache, &(&y - &target)) else { return fail };

    let mut probe = net.clone();
    let mut max_err: f64 = 0.0;
    let mut checked = 0;
    for li in 0..net.layers.len() {
        let (rows, cols) = net.layers[li].weight.dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = probe.layers[li].weight[[r, c]];
                probe.layers[li].weight[[r, c]] = orig + FD_STEP;
                let up = loss(&probe);
                probe.layers[li].weight[[r, c]] = orig - FD_STEP;
                let down = loss(&probe);
                probe.layers[li].weight[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                max_err = max_err.max(relative_error(grads.layers[li].weight[[r, c]], numeric));
                checked += 1;
            }
        }
        for c in 0..cols {
            let orig = probe.layers[li].bias[c];
            probe.layers[li].bias[c] = orig + FD_STEP;
            let up = loss(&probe);
            probe.layers[li].bias[c] = orig - FD_STEP;
            let down = loss(&probe);
            probe.layers[li].bias[c] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            max_err = max_err.max(relative_error(grads.layers[li].bias[c], numeric));
            checked += 1;
        }
    }
    GradCheckReport { max_rel_error: max_err, checked, passed: max_err < tolerance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_bias() {
        let net = Mlp::zeros(&[3, 5, 5, 2], Activation::Sigmoid).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let layer = Dense { weight: Array2::eye(3), bias: Array1::zeros(3) };
        let net = Mlp::from_layers(vec![layer], Activation::Sigmoid).unwrap();
        assert_eq!(net.forward(&[0.1, -0.2, 3.0]).unwrap(), vec![0.1, -0.2, 3.0]);
    }

    #[test]
    fn seeded_forward_golden() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let net = Mlp::new(&[3, 8, 8, 2], Activation::Sigmoid, &mut rng).unwrap();
        let y = net.forward(&[0.5, -0.25, 1.0]).unwrap();
        let again = net.forward(&[0.5, -0.25, 1.0]).unwrap();
        assert_eq!(y, again);
        let bits: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, GOLDEN_FORWARD_BITS, "values {y:?}");
    }

    // Captured from the seeded run above.
    const GOLDEN_FORWARD_BITS: [u64; 2] = [0x3fe8_2958_4a3c_65a9, 0xbfcd_396f_46d8_bc6c];

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Mlp::zeros(&[3, 4, 2], Activation::Tanh).unwrap();
        assert_eq!(net.forward(&[1.0]), Err(NnError::Shape { expected: 3, got: 1 }));
        let mut adam = AdamState::new(&net, 0.1);
        let other = Mlp::zeros(&[3, 5, 2], Activation::Tanh).unwrap();
        let mut net2 = net.clone();
        assert!(adam.step(&mut net2, &other.zero_grads()).is_err());
    }

    #[test]
    fn non_finite_reports_layer() {
        let mut net = Mlp::zeros(&[1, 2, 1], Activation::Identity).unwrap();
        net.layers_mut()[1].weight[[0, 0]] = f64::INFINITY;
        net.layers_mut()[0].weight[[0, 0]] = 1.0;
        assert_eq!(net.forward(&[1.0]), Err(NnError::NonFinite { layer: 1 }));
    }

    #[test]
    fn constant_loss_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 4, 2], Activation::Sigmoid, &mut rng).unwrap();
        let x = array![[0.1, 0.2, 0.3], [0.3, -0.1, 0.0]];
        let (_, cache) = net.forward_cached(&x).unwrap();
        let (g, gin) = net.backward(&cache, &Array2::zeros((2, 2))).unwrap();
        assert!(g.is_zero());
        assert!(gin.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn square_loss_single_weight() {
        let layer = Dense { weight: array![[3.0]], bias: array![0.0] };
        let net = Mlp::from_layers(vec![layer], Activation::Identity).unwrap();
        let (y, cache) = net.forward_cached(&array![[1.0]]).unwrap();
        // loss = w^2 when the input is 1 and the bias 0
        let (g, _) = net.backward(&cache, &(2.0 * &y)).unwrap();
        assert_eq!(g.layers[0].weight[[0, 0]], 6.0);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[3, 6, 1], Activation::Tanh, &mut rng).unwrap();
        let x = array![[0.2, -0.3, 0.9]];
        let (_, cache) = net.forward_cached(&x).unwrap();
        let (_, gin) = net.backward(&cache, &array![[1.0]]).unwrap();
        for j in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[[0, j]] += 1e-6;
            xm[[0, j]] -= 1e-6;
            let fd = (net.forward_batch(&xp).unwrap()[[0, 0]] - net.forward_batch(&xm).unwrap()[[0, 0]]) / 2e-6;
            assert!((fd - gin[[0, j]]).abs() < 1e-8);
        }
    }

    #[test]
    fn random_small_net_passes_grad_check() {
        for act in [Activation::Sigmoid, Activation::Tanh] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let net = Mlp::new(&[3, 8, 8, 2], act, &mut rng).unwrap();
            let report = grad_check(&net, 1e-4);
            assert!(report.passed, "{act:?}: {report:?}");
            assert_eq!(report.checked, net.param_count());
        }
    }

    #[test]
    fn linear_net_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = Mlp::new(&[3, 4, 2], Activation::Identity, &mut rng).unwrap();
        let report = grad_check(&net, 1e-8);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn corrupted_backward_rule_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = Mlp::new(&[3, 8, 8, 2], Activation::Sigmoid, &mut rng).unwrap();
        // backprop as if the hidden layers were linear
        let report = grad_check_with(&net, 1e-4, |n, cache, g| {
            let mut wrong = n.clone();
            wrong.set_hidden(Activation::Identity);
            wrong.backward(cache, g).map(|(g, _)| g)
        });
        assert!(!report.passed, "{report:?}");
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[2, 3, 1], Activation::Sigmoid, &mut rng).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, 0.01);
        // load some momentum first
        let mut g = net.zero_grads();
        g.layers[0].weight.fill(0.5);
        adam.step(&mut net, &g).unwrap();
        let snapshot = net.clone();
        let m_before = adam.first_moments()[0].weight[[0, 0]];
        let zero = net.zero_grads();
        adam.step(&mut net, &zero).unwrap();
        assert_eq!(net, snapshot);
        assert!((adam.first_moments()[0].weight[[0, 0]] - 0.9 * m_before).abs() < 1e-15);
        let mut fresh = AdamState::new(&before, 0.01);
        let mut net2 = before.clone();
        for _ in 0..5 {
            fresh.step(&mut net2, &before.zero_grads()).unwrap();
        }
        assert_eq!(net2, before);
        assert_eq!(fresh.step, 5);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let layer = Dense { weight: array![[0.0]], bias: array![0.0] };
        let mut net = Mlp::from_layers(vec![layer], Activation::Identity).unwrap();
        let mut adam = AdamState::new(&net, 0.1);
        let mut g = net.zero_grads();
        g.layers[0].weight[[0, 0]] = 1.0;
        adam.step(&mut net, &g).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        assert!((net.layers()[0].weight[[0, 0]] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn adam_moves_against_constant_gradient() {
        let mut s = ScalarAdam::new(0.01);
        let mut p = 0.0;
        for _ in 0..100 {
            s.step(&mut p, -2.0);
        }
        assert!(p > 0.5);
    }
}

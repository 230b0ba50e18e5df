//! Dense feed-forward networks with analytic gradients, inverted dropout,
//! Adam, and a central finite-difference gradient checker. All math is f64.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LeapError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// Gain for Kaiming-uniform initialization.
    fn gain(self) -> f64 {
        match self {
            Activation::Relu => std::f64::consts::SQRT_2,
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer followed by an activation and (in training) dropout on
/// its output. `weight` is fan_in × fan_out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub dropout: f64,
}

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    /// Changes whenever parameters change; ties caches to the weights that made them.
    #[serde(skip, default = "fresh_generation")]
    generation: u64,
}

impl Clone for DenseNet {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            generation: fresh_generation(),
        }
    }
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    pre_activations: Vec<Array2<f64>>,
    /// Scaled keep-masks (0 or 1/(1−p)) where dropout was applied.
    masks: Vec<Option<Array2<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// Layer-ordered, weights (row-major) then bias for each layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

impl DenseNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(LeapError::validation("a network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.ncols() {
                return Err(LeapError::Dimension(format!(
                    "layer {i}: bias length {} but {} outputs",
                    l.bias.len(),
                    l.weight.ncols()
                )));
            }
            if !(0.0..1.0).contains(&l.dropout) {
                return Err(LeapError::validation(format!("layer {i}: dropout must lie in [0, 1)")));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.weight.nrows() != l.weight.ncols() {
                    return Err(LeapError::Dimension(format!(
                        "layer {i} outputs {} but layer {} expects {}",
                        l.weight.ncols(),
                        i + 1,
                        next.weight.nrows()
                    )));
                }
            }
        }
        let net = Self {
            layers,
            generation: fresh_generation(),
        };
        net.check_finite()?;
        Ok(net)
    }

    /// Kaiming-uniform weights (bound gain·√(3/fan_in)), zero biases.
    /// `dims` has one more entry than `activations` and `dropouts`.
    pub fn kaiming(dims: &[usize], activations: &[Activation], dropouts: &[f64], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() != activations.len() + 1 || activations.len() != dropouts.len() {
            return Err(LeapError::validation("inconsistent layer specification"));
        }
        let layers = dims
            .windows(2)
            .zip(activations.iter().zip(dropouts))
            .map(|(w, (&activation, &dropout))| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = activation.gain() * (3.0 / fan_in as f64).sqrt();
                DenseLayer {
                    weight: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound)),
                    bias: Array1::zeros(fan_out),
                    activation,
                    dropout,
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Layer-ordered parameters, same layout as [`Gradients::flatten`].
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(LeapError::Dimension(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weight
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|p| *p = *it.next().unwrap());
        }
        self.generation = fresh_generation();
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if !l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(LeapError::numerical(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// Forward pass. In training mode dropout masks are drawn from `rng` and
    /// kept in the cache; otherwise `rng` is untouched.
    pub fn forward(
        &self,
        batch: ArrayView2<f64>,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        if batch.ncols() != self.input_dim() {
            return Err(LeapError::Dimension(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let mut cache = ForwardCache {
            generation: self.generation,
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut current = batch.to_owned();
        for layer in &self.layers {
            let z = current.dot(&layer.weight) + &layer.bias;
            let mut a = z.mapv(|v| layer.activation.apply(v));
            let mask = if training && layer.dropout > 0.0 {
                let keep = 1.0 - layer.dropout;
                let scale = 1.0 / keep;
                let mask =
                    Array2::from_shape_simple_fn(a.raw_dim(), || if rng.random::<f64>() < keep { scale } else { 0.0 });
                a *= &mask;
                Some(mask)
            } else {
                None
            };
            cache.inputs.push(current);
            cache.pre_activations.push(z);
            cache.masks.push(mask);
            current = a;
        }
        Ok((current, cache))
    }

    /// Inference-mode forward pass (no dropout).
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        if batch.ncols() != self.input_dim() {
            return Err(LeapError::Dimension(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let mut current = batch.to_owned();
        for layer in &self.layers {
            let mut z = current.dot(&layer.weight) + &layer.bias;
            if layer.activation != Activation::Identity {
                z.mapv_inplace(|v| layer.activation.apply(v));
            }
            current = z;
        }
        Ok(current)
    }

    /// Gradients of the loss with respect to every parameter and to the
    /// network input, given dLoss/dOutput.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(LeapError::validation(
                "stale forward cache: parameters changed since the forward pass",
            ));
        }
        let out_shape = cache.pre_activations.last().map(|z| z.dim());
        if out_shape != Some(loss_grad.dim()) {
            return Err(LeapError::Dimension(format!(
                "loss gradient is {:?}, network output is {:?}",
                loss_grad.dim(),
                out_shape
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = loss_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &cache.masks[i] {
                upstream *= mask;
            }
            if layer.activation != Activation::Identity {
                Zip::from(&mut upstream)
                    .and(&cache.pre_activations[i])
                    .for_each(|g, z| *g *= layer.activation.derivative(*z));
            }
            let weight = cache.inputs[i].t().dot(&upstream);
            let bias = upstream.sum_axis(Axis(0));
            grads.push(LayerGradient { weight, bias });
            upstream = upstream.dot(&layer.weight.t());
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, upstream))
    }
}

/// Mean squared error over all entries and its gradient w.r.t. `pred`.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let diff = &pred - &target;
    let n = diff.len().max(1) as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (loss, diff * (2.0 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step_count: u64,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl OptimizerState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(net: &mut DenseNet, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    if grads.layers.len() != net.layers.len()
        || grads
            .layers
            .iter()
            .zip(&net.layers)
            .any(|(g, l)| g.weight.dim() != l.weight.dim() || g.bias.dim() != l.bias.dim())
        || state.first_moment.layers.len() != net.layers.len()
    {
        return Err(LeapError::Dimension("gradients do not match the network".into()));
    }
    if !grads.all_finite() {
        return Err(LeapError::numerical(format!(
            "non-finite gradient at optimizer step {}",
            state.step_count + 1
        )));
    }
    state.step_count += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step_count as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    };
    for ((layer, g), (m, v)) in net.layers.iter_mut().zip(&grads.layers).zip(
        state
            .first_moment
            .layers
            .iter_mut()
            .zip(state.second_moment.layers.iter_mut()),
    ) {
        Zip::from(&mut layer.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(update);
    }
    net.generation = fresh_generation();
    net.check_finite()
}

/// Relative error with an absolute floor so that two near-zero gradients
/// compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Max relative error between `analytic` and central differences of `loss`
/// around `params`. Checks every index, or `max_checked` indices drawn from
/// `rng` when there are more parameters than that.
pub fn grad_check_with(
    params: &[f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    step: f64,
    max_checked: Option<usize>,
    rng: &mut impl Rng,
) -> f64 {
    assert_eq!(params.len(), analytic.len(), "parameter/gradient length mismatch");
    let indices: Vec<usize> = match max_checked {
        Some(k) if k < params.len() => rand::seq::index::sample(rng, params.len(), k).into_vec(),
        _ => (0..params.len()).collect(),
    };
    let mut probe = params.to_vec();
    indices
        .into_iter()
        .map(|i| {
            probe[i] = params[i] + step;
            let plus = loss(&probe);
            probe[i] = params[i] - step;
            let minus = loss(&probe);
            probe[i] = params[i];
            relative_error(analytic[i], (plus - minus) / (2.0 * step))
        })
        .fold(0.0, f64::max)
}

/// Gradient check of an MSE-trained net with dropout disabled.
pub fn grad_check(net: &DenseNet, batch: ArrayView2<f64>, target: ArrayView2<f64>, step: f64) -> Result<f64> {
    let mut rng = crate::seed::rng_from_seed(0);
    let (out, cache) = net.forward(batch, false, &mut rng)?;
    let (_, dloss) = mse_loss(out.view(), target);
    let (grads, _) = net.backward(&cache, dloss.view())?;
    let mut probe_net = net.clone();
    let params = net.flat_params();
    Ok(grad_check_with(
        &params,
        &grads.flatten(),
        |p| {
            probe_net.set_flat_params(p).expect("same layout");
            let pred = probe_net.predict(batch).expect("shape checked");
            mse_loss(pred.view(), target).0
        },
        step,
        None,
        &mut rng,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use ndarray::array;

    fn random_matrix(seed: u64, r: usize, c: usize) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
    }

    fn small_net(seed: u64, dims: &[usize], acts: &[Activation], dropout: f64) -> DenseNet {
        let drop = vec![dropout; acts.len()];
        DenseNet::kaiming(dims, acts, &drop, &mut rng_from_seed(seed)).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = DenseNet::new(vec![DenseLayer {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
            dropout: 0.0,
        }])
        .unwrap();
        let x = random_matrix(1, 4, 3);
        assert_eq!(net.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn relu_clips_negatives() {
        let net = DenseNet::new(vec![DenseLayer {
            weight: Array2::eye(2),
            bias: Array1::zeros(2),
            activation: Activation::Relu,
            dropout: 0.0,
        }])
        .unwrap();
        assert_eq!(net.predict(array![[-1.0, 2.0]].view()).unwrap(), array![[0.0, 2.0]]);
    }

    #[test]
    fn dimension_mismatches_are_errors() {
        let net = small_net(1, &[3, 2], &[Activation::Identity], 0.0);
        let mut rng = rng_from_seed(0);
        assert!(net.forward(random_matrix(0, 2, 4).view(), false, &mut rng).is_err());
        let bad = DenseNet::new(vec![
            net.layers()[0].clone(),
            DenseLayer {
                weight: Array2::zeros((5, 1)),
                bias: Array1::zeros(1),
                activation: Activation::Identity,
                dropout: 0.0,
            },
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn two_layer_forward_matches_loop_oracle() {
        let net = small_net(2, &[4, 5, 3], &[Activation::Relu, Activation::Identity], 0.0);
        let x = random_matrix(3, 6, 4);
        let got = net.predict(x.view()).unwrap();
        for r in 0..6 {
            let mut hidden = [0.0; 5];
            for (h, slot) in hidden.iter_mut().enumerate() {
                let mut acc = net.layers()[0].bias[h];
                for i in 0..4 {
                    acc += x[[r, i]] * net.layers()[0].weight[[i, h]];
                }
                *slot = acc.max(0.0);
            }
            for o in 0..3 {
                let mut acc = net.layers()[1].bias[o];
                for (h, hv) in hidden.iter().enumerate() {
                    acc += hv * net.layers()[1].weight[[h, o]];
                }
                assert!((got[[r, o]] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let net = small_net(4, &[3, 4, 2], &[Activation::Relu, Activation::Identity], 0.0);
        let mut rng = rng_from_seed(0);
        let (out, cache) = net.forward(random_matrix(5, 5, 3).view(), false, &mut rng).unwrap();
        let (g, dx) = net.backward(&cache, Array2::zeros(out.raw_dim()).view()).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_net_gradient_matches_least_squares_closed_form() {
        let net = small_net(6, &[4, 1], &[Activation::Identity], 0.0);
        let x = random_matrix(7, 10, 4);
        let y = random_matrix(8, 10, 1);
        let mut rng = rng_from_seed(0);
        let (pred, cache) = net.forward(x.view(), false, &mut rng).unwrap();
        let (_, dloss) = mse_loss(pred.view(), y.view());
        let (g, _) = net.backward(&cache, dloss.view()).unwrap();
        let resid = &pred - &y;
        let expected_w = x.t().dot(&resid) * (2.0 / 10.0);
        let expected_b = resid.sum() * 2.0 / 10.0;
        for (a, b) in g.layers[0].weight.iter().zip(expected_w.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.layers[0].bias[0] - expected_b).abs() < 1e-12);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = small_net(9, &[3, 2], &[Activation::Identity], 0.0);
        let mut rng = rng_from_seed(0);
        let (out, cache) = net.forward(random_matrix(1, 4, 3).view(), false, &mut rng).unwrap();
        let g = Gradients::zeros_like(&net);
        let mut state = OptimizerState::new(&net, AdamConfig::default());
        adam_step(&mut net, &g, &mut state).unwrap();
        assert!(net.backward(&cache, out.view()).is_err());
    }

    #[test]
    fn finite_differences_agree_on_random_net() {
        let net = small_net(
            10,
            &[5, 7, 3, 5],
            &[Activation::Relu, Activation::Identity, Activation::Identity],
            0.0,
        );
        let x = random_matrix(11, 6, 5);
        let y = random_matrix(12, 6, 5);
        let err = grad_check(&net, x.view(), y.view(), 1e-4).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn linear_net_grad_check_is_tight() {
        let net = small_net(13, &[4, 3], &[Activation::Identity], 0.0);
        let err = grad_check(
            &net,
            random_matrix(14, 8, 4).view(),
            random_matrix(15, 8, 3).view(),
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-8, "max relative error {err}");
    }

    #[test]
    fn sign_flipped_gradient_is_caught() {
        let net = small_net(16, &[4, 6, 2], &[Activation::Relu, Activation::Identity], 0.0);
        let x = random_matrix(17, 8, 4);
        let y = random_matrix(18, 8, 2);
        let mut rng = rng_from_seed(0);
        let (out, cache) = net.forward(x.view(), false, &mut rng).unwrap();
        let (_, dloss) = mse_loss(out.view(), y.view());
        let (g, _) = net.backward(&cache, dloss.view()).unwrap();
        let flipped: Vec<f64> = g.flatten().iter().map(|v| -v).collect();
        let mut probe = net.clone();
        let err = grad_check_with(
            &net.flat_params(),
            &flipped,
            |p| {
                probe.set_flat_params(p).unwrap();
                mse_loss(probe.predict(x.view()).unwrap().view(), y.view()).0
            },
            1e-4,
            None,
            &mut rng,
        );
        assert!(err > 1e-1, "sign flip went unnoticed: {err}");
    }

    #[test]
    fn zero_gradient_adam_step_leaves_parameters() {
        let mut net = small_net(19, &[3, 3], &[Activation::Identity], 0.0);
        let before = net.flat_params();
        let mut state = OptimizerState::new(&net, AdamConfig::default());
        let zeros = Gradients::zeros_like(&net);
        adam_step(&mut net, &zeros, &mut state).unwrap();
        assert_eq!(net.flat_params(), before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_adam_step_matches_closed_form() {
        let mut net = small_net(20, &[2, 2], &[Activation::Identity], 0.0);
        let before = net.flat_params();
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weight = array![[0.5, -2.0], [1e-3, 0.0]];
        g.layers[0].bias = array![3.0, -1e-9];
        let cfg = AdamConfig::default();
        let mut state = OptimizerState::new(&net, cfg);
        adam_step(&mut net, &g, &mut state).unwrap();
        for ((p0, p1), gi) in before.iter().zip(net.flat_params()).zip(g.flatten()) {
            let expected = p0 - cfg.learning_rate * gi / (gi.abs() + cfg.epsilon);
            assert!((p1 - expected).abs() < 1e-15, "{p1} vs {expected}");
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut net = small_net(21, &[2, 2], &[Activation::Identity], 0.0);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].bias[0] = f64::NAN;
        let mut state = OptimizerState::new(&net, AdamConfig::default());
        let err = adam_step(&mut net, &g, &mut state).unwrap_err();
        assert!(matches!(err, LeapError::Numerical(_)));
    }

    #[test]
    fn adam_descends_a_convex_quadratic() {
        // least squares on a linear net is convex in its parameters
        let mut net = small_net(22, &[3, 1], &[Activation::Identity], 0.0);
        let x = random_matrix(23, 40, 3);
        let y = x.dot(&array![[1.0], [-2.0], [0.5]]) + 0.3;
        let mut state = OptimizerState::new(
            &net,
            AdamConfig {
                learning_rate: 1e-2,
                ..Default::default()
            },
        );
        let mut rng = rng_from_seed(0);
        let mut losses = Vec::new();
        for _ in 0..200 {
            let (out, cache) = net.forward(x.view(), true, &mut rng).unwrap();
            let (loss, d) = mse_loss(out.view(), y.view());
            losses.push(loss);
            let (g, _) = net.backward(&cache, d.view()).unwrap();
            adam_step(&mut net, &g, &mut state).unwrap();
        }
        for w in losses.windows(50) {
            assert!(w[49] < w[0], "no decrease across a 50-step window");
        }
    }

    #[test]
    fn dropout_preserves_expectation() {
        let net = small_net(24, &[4, 8, 3], &[Activation::Relu, Activation::Identity], 0.3);
        let x = random_matrix(25, 2, 4);
        let clean = net.predict(x.view()).unwrap();
        let mut rng = rng_from_seed(26);
        let mut acc = Array2::<f64>::zeros(clean.raw_dim());
        let draws = 20_000;
        for _ in 0..draws {
            let (out, _) = net.forward(x.view(), true, &mut rng).unwrap();
            acc += &out;
        }
        acc /= draws as f64;
        let scale = clean.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, c) in acc.iter().zip(clean.iter()) {
            assert!((a - c).abs() <= 0.02 * scale, "{a} vs {c}");
        }
    }

    #[test]
    fn dropout_masks_flow_into_backward() {
        let net = small_net(27, &[3, 6, 2], &[Activation::Relu, Activation::Identity], 0.5);
        let x = random_matrix(28, 4, 3);
        let y = random_matrix(29, 4, 2);
        let mut rng = rng_from_seed(30);
        let (out, cache) = net.forward(x.view(), true, &mut rng).unwrap();
        let (_, d) = mse_loss(out.view(), y.view());
        let (g, _) = net.backward(&cache, d.view()).unwrap();
        let mask = cache.masks[0].clone().unwrap();
        let out_mask = cache.masks[1].clone().unwrap();
        // With the mask frozen the net is a fixed function; compare with FD.
        let masked_loss = |p: &[f64]| {
            let mut n = net.clone();
            n.set_flat_params(p).unwrap();
            let l0 = &n.layers()[0];
            let h = (x.dot(&l0.weight) + &l0.bias).mapv(|v| v.max(0.0)) * &mask;
            let l1 = &n.layers()[1];
            mse_loss(((h.dot(&l1.weight) + &l1.bias) * &out_mask).view(), y.view()).0
        };
        let err = grad_check_with(&net.flat_params(), &g.flatten(), masked_loss, 1e-4, None, &mut rng);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn same_seed_same_parameters_after_training() {
        let run = || {
            let mut rng = rng_from_seed(31);
            let mut net = DenseNet::kaiming(
                &[3, 5, 3],
                &[Activation::Relu, Activation::Identity],
                &[0.2, 0.0],
                &mut rng,
            )
            .unwrap();
            let mut state = OptimizerState::new(&net, AdamConfig::default());
            let x = random_matrix(32, 10, 3);
            for _ in 0..20 {
                let (out, cache) = net.forward(x.view(), true, &mut rng).unwrap();
                let (_, d) = mse_loss(out.view(), x.view());
                let (g, _) = net.backward(&cache, d.view()).unwrap();
                adam_step(&mut net, &g, &mut state).unwrap();
            }
            net.flat_params()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn forward_does_not_touch_input() {
        let net = small_net(33, &[3, 3], &[Activation::Relu], 0.5);
        let x = random_matrix(34, 4, 3);
        let copy = x.clone();
        let mut rng = rng_from_seed(0);
        let _ = net.forward(x.view(), true, &mut rng).unwrap();
        assert_eq!(x, copy);
    }
}

//! Dense multilayer perceptrons with manual backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Linear => x,
        }
    }

    /// Derivative evaluated at the pre-activation. The ReLU subgradient at
    /// exactly zero is taken as 0.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-pre).exp());
                s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Sigmoid),
            2 => Ok(Activation::Linear),
            other => Err(Error::Invalid(format!(
                "unknown activation code {other}"
            ))),
        }
    }
}

/// One affine layer followed by an elementwise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `output_dim x input_dim` weight matrix.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Randomly initialized layer: He scaling (`sqrt(2/fan_in)`) for ReLU,
    /// `sqrt(1/fan_in)` otherwise. ReLU biases start at a small positive
    /// value so every unit is active (and differentiable) at the origin;
    /// other biases start at zero.
    pub fn random<R: Rng>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let scale = match activation {
            Activation::Relu => (2.0 / input_dim as f64).sqrt(),
            _ => (1.0 / input_dim as f64).sqrt(),
        };
        let weight = Array2::from_shape_fn((output_dim, input_dim), |_| {
            let z: f64 = rng.sample(StandardNormal);
            z * scale
        });
        let bias_init = match activation {
            Activation::Relu => 0.1,
            _ => 0.0,
        };
        Layer {
            weight,
            bias: Array1::from_elem(output_dim, bias_init),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// An ordered stack of layers with chained dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid("MLP needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::dims(
                    format!("layer {i} bias"),
                    format!("{}", layer.output_dim()),
                    format!("{}", layer.bias.len()),
                ));
            }
            if i > 0 && layers[i - 1].output_dim() != layer.input_dim() {
                return Err(Error::dims(
                    format!("layer {i} input"),
                    format!("{}", layers[i - 1].output_dim()),
                    format!("{}", layer.input_dim()),
                ));
            }
            if layer.weight.iter().any(|v| !v.is_finite())
                || layer.bias.iter().any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite {
                    context: format!("layer {i} parameters"),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Round every parameter through `f32`, so in-memory evaluation matches
    /// a model that has been saved to disk and loaded back.
    pub fn quantize_f32(&mut self) {
        for layer in &mut self.layers {
            layer.weight.mapv_inplace(|v| v as f32 as f64);
            layer.bias.mapv_inplace(|v| v as f32 as f64);
        }
    }
}

/// Intermediate values from a forward pass, sufficient for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array1<f64>>,
    /// Pre-activation of each layer.
    preacts: Vec<Array1<f64>>,
}

/// Forward pass; returns the output and the cache for [`mlp_backward`].
pub fn mlp_forward(
    params: &MlpParams,
    input: ArrayView1<'_, f64>,
) -> Result<(Array1<f64>, ForwardCache)> {
    if input.len() != params.input_dim() {
        return Err(Error::dims(
            "mlp_forward input",
            format!("{}", params.input_dim()),
            format!("{}", input.len()),
        ));
    }
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut preacts = Vec::with_capacity(params.layers.len());
    let mut current = input.to_owned();
    for layer in &params.layers {
        inputs.push(current.clone());
        let pre = layer.weight.dot(&current) + &layer.bias;
        current = pre.mapv(|x| layer.activation.apply(x));
        preacts.push(pre);
    }
    Ok((current, ForwardCache { inputs, preacts }))
}

/// Per-layer parameter gradients in layer order.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl MlpGrads {
    /// Zero gradients shaped like `params`.
    pub fn zeros_like(params: &MlpParams) -> Self {
        let layers = params
            .layers()
            .iter()
            .map(|l| {
                (
                    Array2::zeros((l.output_dim(), l.input_dim())),
                    Array1::zeros(l.output_dim()),
                )
            })
            .collect();
        MlpGrads { layers }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(other.layers.iter()) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            w.mapv_inplace(|v| v * factor);
            b.mapv_inplace(|v| v * factor);
        }
    }
}

/// Reverse-mode gradients of a scalar loss whose gradient with respect to
/// the network output is `output_grad`. Returns parameter gradients and the
/// gradient with respect to the network input.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    output_grad: ArrayView1<'_, f64>,
) -> (MlpGrads, Array1<f64>) {
    let n_layers = params.layers.len();
    assert_eq!(
        output_grad.len(),
        params.output_dim(),
        "output_grad length must match output dim"
    );
    let mut grads = Vec::with_capacity(n_layers);
    let mut delta: Array1<f64> = output_grad.to_owned();
    for (idx, layer) in params.layers.iter().enumerate().rev() {
        let pre = &cache.preacts[idx];
        let local: Array1<f64> =
            &delta * &pre.mapv(|x| layer.activation.derivative(x));
        let input = &cache.inputs[idx];
        let mut w_grad = Array2::<f64>::zeros((layer.output_dim(), layer.input_dim()));
        for i in 0..layer.output_dim() {
            let li = local[i];
            if li != 0.0 {
                for j in 0..layer.input_dim() {
                    w_grad[[i, j]] = li * input[j];
                }
            }
        }
        let b_grad = local.clone();
        delta = layer.weight.t().dot(&local);
        grads.push((w_grad, b_grad));
    }
    grads.reverse();
    (MlpGrads { layers: grads }, delta)
}

/// Adam optimizer state for one [`MlpParams`].
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, epsilon: f64, params: &MlpParams) -> Self {
        let shape: Vec<(Array2<f64>, Array1<f64>)> = params
            .layers()
            .iter()
            .map(|l| {
                (
                    Array2::zeros((l.output_dim(), l.input_dim())),
                    Array1::zeros(l.output_dim()),
                )
            })
            .collect();
        Adam {
            lr,
            beta1,
            beta2,
            epsilon,
            t: 0,
            m: shape.clone(),
            v: shape,
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, layer) in params.layers_mut().iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[idx];
            let (mw, mb) = &mut self.m[idx];
            let (vw, vb) = &mut self.v[idx];
            for (((w, g), m), v) in layer
                .weight
                .iter_mut()
                .zip(gw.iter())
                .zip(mw.iter_mut())
                .zip(vw.iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            for (((b, g), m), v) in layer
                .bias
                .iter_mut()
                .zip(gb.iter())
                .zip(mb.iter_mut())
                .zip(vb.iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *b -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand_distr::StandardNormal;

    fn single_layer(w: Array2<f64>, b: Array1<f64>, act: Activation) -> MlpParams {
        MlpParams::new(vec![Layer {
            weight: w,
            bias: b,
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let params = single_layer(
            Array2::zeros((3, 2)),
            Array1::zeros(3),
            Activation::Sigmoid,
        );
        let (out, _) = mlp_forward(&params, array![0.7, -0.3].view()).unwrap();
        for &v in out.iter() {
            assert_abs_diff_eq!(v, 0.5);
        }
    }

    #[test]
    fn identity_linear_layer() {
        let params = single_layer(Array2::eye(2), Array1::zeros(2), Activation::Linear);
        let x = array![1.5, -2.5];
        let (out, _) = mlp_forward(&params, x.view()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn relu_clips_negative() {
        let params = single_layer(Array2::eye(2), Array1::zeros(2), Activation::Relu);
        let (out, _) = mlp_forward(&params, array![-1.0, 2.0].view()).unwrap();
        assert_eq!(out, array![0.0, 2.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let params = single_layer(Array2::eye(2), Array1::zeros(2), Activation::Linear);
        assert!(mlp_forward(&params, array![1.0].view()).is_err());
    }

    #[test]
    fn linear_squared_loss_gradient_closed_form() {
        // f(x) = Wx + b, loss = 0.5*|f - t|^2, dL/dW = (f - t) x^T.
        let params = single_layer(array![[0.5, -1.0]], array![0.25], Activation::Linear);
        let x = array![2.0, 3.0];
        let target = 1.0;
        let (out, cache) = mlp_forward(&params, x.view()).unwrap();
        let residual = out[0] - target;
        let (grads, _) = mlp_backward(&params, &cache, array![residual].view());
        assert_abs_diff_eq!(grads.layers[0].0[[0, 0]], residual * 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(grads.layers[0].0[[0, 1]], residual * 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(grads.layers[0].1[0], residual, epsilon = 1e-14);
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = seeded_rng(5);
        let params = MlpParams::new(vec![
            Layer::random(3, 4, Activation::Relu, &mut rng),
            Layer::random(4, 2, Activation::Sigmoid, &mut rng),
        ])
        .unwrap();
        let (_, cache) = mlp_forward(&params, array![0.1, 0.2, 0.3].view()).unwrap();
        let (grads, input_grad) = mlp_backward(&params, &cache, array![0.0, 0.0].view());
        assert!(grads.layers.iter().all(|(w, b)| {
            w.iter().all(|&v| v == 0.0) && b.iter().all(|&v| v == 0.0)
        }));
        assert!(input_grad.iter().all(|&v| v == 0.0));
    }

    /// Central finite-difference check of every parameter gradient and the
    /// input gradient, for a random small network.
    fn finite_difference_check(seed: u64, dims: &[usize], acts: &[Activation]) {
        let mut rng = seeded_rng(seed);
        let layers: Vec<Layer> = dims
            .windows(2)
            .zip(acts.iter())
            .map(|(w, &a)| Layer::random(w[0], w[1], a, &mut rng))
            .collect();
        let params = MlpParams::new(layers).unwrap();
        let input = Array1::from_shape_fn(dims[0], |_| {
            rng.sample::<f64, _>(StandardNormal) * 0.5
        });
        // Scalar loss: contraction of the output with a fixed vector.
        let contraction = Array1::from_shape_fn(*dims.last().unwrap(), |_| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let loss = |p: &MlpParams, x: &Array1<f64>| -> f64 {
            let (out, _) = mlp_forward(p, x.view()).unwrap();
            out.dot(&contraction)
        };

        let (_, cache) = mlp_forward(&params, input.view()).unwrap();
        let (grads, input_grad) = mlp_backward(&params, &cache, contraction.view());

        let h = 1e-5;
        let check = |analytic: f64, numeric: f64| {
            let denom = analytic.abs().max(numeric.abs());
            if denom > 1e-7 {
                let rel = (analytic - numeric).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "gradient mismatch: analytic {analytic}, numeric {numeric}"
                );
            }
        };

        for li in 0..params.layers().len() {
            let rows = params.layers()[li].output_dim();
            let cols = params.layers()[li].input_dim();
            for i in 0..rows {
                for j in 0..cols {
                    let mut plus = params.clone();
                    plus.layers_mut()[li].weight[[i, j]] += h;
                    let mut minus = params.clone();
                    minus.layers_mut()[li].weight[[i, j]] -= h;
                    let numeric = (loss(&plus, &input) - loss(&minus, &input)) / (2.0 * h);
                    check(grads.layers[li].0[[i, j]], numeric);
                }
                let mut plus = params.clone();
                plus.layers_mut()[li].bias[i] += h;
                let mut minus = params.clone();
                minus.layers_mut()[li].bias[i] -= h;
                let numeric = (loss(&plus, &input) - loss(&minus, &input)) / (2.0 * h);
                check(grads.layers[li].1[i], numeric);
            }
        }
        for j in 0..input.len() {
            let mut plus = input.clone();
            plus[j] += h;
            let mut minus = input.clone();
            minus[j] -= h;
            let numeric = (loss(&params, &plus) - loss(&params, &minus)) / (2.0 * h);
            check(input_grad[j], numeric);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(
            11,
            &[4, 6, 5, 3],
            &[Activation::Relu, Activation::Relu, Activation::Sigmoid],
        );
        finite_difference_check(12, &[3, 7, 2], &[Activation::Relu, Activation::Linear]);
        finite_difference_check(13, &[2, 4, 2], &[Activation::Sigmoid, Activation::Sigmoid]);
    }

    #[test]
    fn adam_reduces_quadratic_loss() {
        // Fit a single linear neuron to y = 2x + 1 with Adam.
        let mut rng = seeded_rng(99);
        let mut params =
            MlpParams::new(vec![Layer::random(1, 1, Activation::Linear, &mut rng)]).unwrap();
        let mut adam = Adam::new(0.05, 0.9, 0.999, 1e-8, &params);
        let data = [(-1.0, -1.0), (0.0, 1.0), (1.0, 3.0), (2.0, 5.0)];
        let loss_of = |p: &MlpParams| -> f64 {
            data.iter()
                .map(|&(x, y)| {
                    let (out, _) = mlp_forward(p, array![x].view()).unwrap();
                    (out[0] - y) * (out[0] - y)
                })
                .sum()
        };
        let initial = loss_of(&params);
        for _ in 0..500 {
            let mut grads = MlpGrads::zeros_like(&params);
            for &(x, y) in &data {
                let (out, cache) = mlp_forward(&params, array![x].view()).unwrap();
                let (g, _) = mlp_backward(&params, &cache, array![2.0 * (out[0] - y)].view());
                grads.add_assign(&g);
            }
            adam.step(&mut params, &grads);
        }
        let final_loss = loss_of(&params);
        assert!(final_loss < 1e-3, "Adam failed to fit: {final_loss} (from {initial})");
        assert_abs_diff_eq!(params.layers()[0].weight[[0, 0]], 2.0, epsilon = 0.05);
        assert_abs_diff_eq!(params.layers()[0].bias[0], 1.0, epsilon = 0.05);
    }
}

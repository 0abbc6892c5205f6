//! Compact 1-D convolutional regressor.
//!
//! Four valid (unpadded) convolutions with bias, ReLU after the first
//! three, and a temporal mean over the final two-channel map giving
//! `(x, y)`. Inputs are `channels × window_len` slices, channel-major.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::seed;

pub const KERNEL_SIZES: [usize; 4] = [13, 11, 9, 7];
pub const CHANNEL_SIZES: [usize; 4] = [8, 16, 8, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][kernel]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn w(&self, o: usize, i: usize) -> &[f64] {
        let start = (o * self.in_channels + i) * self.kernel;
        &self.weights[start..start + self.kernel]
    }

    fn forward(&self, input: &[f64], t_in: usize, out: &mut [f64]) {
        let t_out = t_in + 1 - self.kernel;
        for o in 0..self.out_channels {
            let row = &mut out[o * t_out..(o + 1) * t_out];
            row.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let src = &input[i * t_in..(i + 1) * t_in];
                for (k, &w) in self.w(o, i).iter().enumerate() {
                    for (r, s) in row.iter_mut().zip(&src[k..k + t_out]) {
                        *r += w * s;
                    }
                }
            }
        }
    }
}

/// Initialization schemes for convolution weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    #[default]
    UniformFanIn,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    input_channels: usize,
    layers: Vec<ConvLayer>,
}

impl CnnModel {
    /// The reference architecture with seeded fan-in initialization.
    pub fn new(input_channels: usize, seed: u64) -> Self {
        Self::with_init(input_channels, InitScheme::UniformFanIn, seed)
    }

    pub fn zeros(input_channels: usize) -> Self {
        Self::with_init(input_channels, InitScheme::Zeros, 0)
    }

    pub fn with_init(input_channels: usize, init: InitScheme, seed: u64) -> Self {
        let mut layers = Vec::with_capacity(KERNEL_SIZES.len());
        let mut in_ch = input_channels;
        let mut rng = seed::rng(seed, "cnn_init", 0);
        for (&k, &out) in KERNEL_SIZES.iter().zip(&CHANNEL_SIZES) {
            let mut layer = ConvLayer::zeros(in_ch, out, k);
            if init == InitScheme::UniformFanIn {
                let bound = 1.0 / ((in_ch * k) as f64).sqrt();
                for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                    *w = rng.random_range(-bound..bound);
                }
            }
            layers.push(layer);
            in_ch = out;
        }
        Self { input_channels, layers }
    }

    pub fn from_layers(input_channels: usize, layers: Vec<ConvLayer>) -> Result<Self, ModelError> {
        let mut expected = input_channels;
        for (n, l) in layers.iter().enumerate() {
            if l.in_channels != expected
                || l.kernel == 0
                || l.weights.len() != l.out_channels * l.in_channels * l.kernel
                || l.bias.len() != l.out_channels
            {
                return Err(ModelError::ShapeError(format!("layer {n} is inconsistent")));
            }
            expected = l.out_channels;
        }
        if layers.is_empty() || expected != 2 {
            return Err(ModelError::ShapeError("final layer must produce 2 channels".into()));
        }
        Ok(Self { input_channels, layers })
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::parameter_count).sum()
    }

    /// Shortest window the network accepts.
    pub fn receptive_field(&self) -> usize {
        1 + self.layers.iter().map(|l| l.kernel - 1).sum::<usize>()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    /// Inverse of [`CnnModel::params`].
    ///
    /// # Panics
    /// If `params.len()` differs from [`CnnModel::parameter_count`].
    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count(), "parameter vector length");
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
    }

    fn window_len(&self, input: &[f64]) -> Result<usize, ModelError> {
        if input.is_empty() || !input.len().is_multiple_of(self.input_channels) {
            return Err(ModelError::ShapeError(format!(
                "input of length {} is not a multiple of {} channels",
                input.len(),
                self.input_channels
            )));
        }
        let t = input.len() / self.input_channels;
        if t < self.receptive_field() {
            return Err(ModelError::ShapeError(format!(
                "window length {t} is shorter than the receptive field {}",
                self.receptive_field()
            )));
        }
        Ok(t)
    }

    /// Activations after every layer; the last entry is the final
    /// (pre-pooling) two-channel map.
    fn activations(&self, input: &[f64]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut t = self.window_len(input)?;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (n, layer) in self.layers.iter().enumerate() {
            let t_out = t + 1 - layer.kernel;
            let mut out = vec![0.0; layer.out_channels * t_out];
            layer.forward(acts.last().expect("input pushed"), t, &mut out);
            if n < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
            t = t_out;
        }
        Ok(acts)
    }

    /// Final two-channel feature map before temporal pooling, channel-major.
    pub fn feature_map(&self, input: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.activations(input)?.pop().expect("at least one layer"))
    }

    pub fn forward(&self, input: &[f64]) -> Result<[f64; 2], ModelError> {
        let map = self.feature_map(input)?;
        Ok(pool(&map))
    }

    pub fn forward_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, ModelError> {
        inputs.par_iter().map(|x| self.forward(x)).collect()
    }

    /// Loss contribution and gradient for one sample, where the batch loss
    /// is `sum((pred - label)^2) / (2 * batch)`.
    fn sample_gradient(&self, input: &[f64], label: &[f64; 2], batch: usize) -> Result<(f64, Vec<f64>), ModelError> {
        let acts = self.activations(input)?;
        let out = pool(acts.last().expect("final map"));
        let scale = 1.0 / batch as f64;
        let err = [out[0] - label[0], out[1] - label[1]];
        let loss = 0.5 * scale * (err[0] * err[0] + err[1] * err[1]);

        let mut grads = vec![0.0; self.parameter_count()];
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |at, l| {
                let start = *at;
                *at += l.parameter_count();
                Some(start)
            })
            .collect();

        let t_last = acts.last().expect("final map").len() / 2;
        let mut delta: Vec<f64> = (0..2)
            .flat_map(|j| std::iter::repeat_n(err[j] * scale / t_last as f64, t_last))
            .collect();

        for (n, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[n];
            let t_in = input.len() / layer.in_channels;
            let t_out = t_in + 1 - layer.kernel;
            let (gw, gb) = grads[offsets[n]..offsets[n] + layer.parameter_count()].split_at_mut(layer.weights.len());
            let mut d_in = if n > 0 { vec![0.0; input.len()] } else { Vec::new() };
            for o in 0..layer.out_channels {
                let d = &delta[o * t_out..(o + 1) * t_out];
                gb[o] += d.iter().sum::<f64>();
                for i in 0..layer.in_channels {
                    let src = &input[i * t_in..(i + 1) * t_in];
                    let base = (o * layer.in_channels + i) * layer.kernel;
                    for k in 0..layer.kernel {
                        let s = &src[k..k + t_out];
                        gw[base + k] += d.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if n > 0 {
                            let w = layer.weights[base + k];
                            let dst = &mut d_in[i * t_in + k..i * t_in + k + t_out];
                            for (x, dv) in dst.iter_mut().zip(d) {
                                *x += w * dv;
                            }
                        }
                    }
                }
            }
            if n > 0 {
                // ReLU gate: the input to this layer is a rectified activation.
                for (g, a) in d_in.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = d_in;
            }
        }
        Ok((loss, grads))
    }
}

fn pool(map: &[f64]) -> [f64; 2] {
    let t = map.len() / 2;
    [map[..t].iter().sum::<f64>() / t as f64, map[t..].iter().sum::<f64>() / t as f64]
}

/// Mean-squared-error loss `sum((pred - label)^2) / (2 * batch)` and its
/// exact gradient, in [`CnnModel::params`] order.
///
/// Per-sample gradients may be computed in parallel; they are summed in
/// sample order, so the result does not depend on thread count.
pub fn cnn_backward(model: &CnnModel, inputs: &[Vec<f64>], labels: &[[f64; 2]]) -> Result<(f64, Vec<f64>), ModelError> {
    if inputs.len() != labels.len() {
        return Err(ModelError::LengthMismatch { predictions: inputs.len(), truths: labels.len() });
    }
    if inputs.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let parts: Vec<(f64, Vec<f64>)> = inputs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(x, y)| model.sample_gradient(x, y, inputs.len()))
        .collect::<Result<_, _>>()?;
    let mut loss = 0.0;
    let mut grads = vec![0.0; model.parameter_count()];
    for (l, g) in parts {
        loss += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grads))
}

/// Batch loss without gradients.
pub fn cnn_loss(model: &CnnModel, inputs: &[Vec<f64>], labels: &[[f64; 2]]) -> Result<f64, ModelError> {
    if inputs.len() != labels.len() {
        return Err(ModelError::LengthMismatch { predictions: inputs.len(), truths: labels.len() });
    }
    if inputs.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let preds = model.forward_batch(inputs)?;
    Ok(preds
        .iter()
        .zip(labels)
        .map(|(p, y)| (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2))
        .sum::<f64>()
        / (2.0 * inputs.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub init: InitScheme,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            init: InitScheme::UniformFanIn,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Trained network and its loss trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: CnnModel,
    /// Full-set loss of the initialized model.
    pub initial_loss: f64,
    /// Mean per-sample loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains a freshly initialized reference network.
pub fn train_cnn(inputs: &[Vec<f64>], labels: &[[f64; 2]], input_channels: usize, cfg: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    let model = CnnModel::with_init(input_channels, cfg.init, cfg.seed);
    train_from(model, inputs, labels, cfg)
}

/// Minibatch training from a given starting point. Epoch `e` visits the
/// samples in the order drawn from stream `(seed, "cnn_shuffle", e)`.
pub fn train_from(
    mut model: CnnModel,
    inputs: &[Vec<f64>],
    labels: &[[f64; 2]],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    let initial_loss = cnn_loss(&model, inputs, labels)?;
    if !initial_loss.is_finite() {
        return Err(ModelError::Diverged { epoch: 0 });
    }
    let mut params = model.params();
    let mut adam = Adam::new(params.len());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut batch_x: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<[f64; 2]> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.sort_unstable();
        order.shuffle(&mut seed::rng(cfg.seed, "cnn_shuffle", epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            batch_x.extend(chunk.iter().map(|&i| inputs[i].clone()));
            batch_y.extend(chunk.iter().map(|&i| labels[i]));
            let (loss, grads) = cnn_backward(&model, &batch_x, &batch_y)?;
            total += loss * chunk.len() as f64;
            match cfg.optimizer {
                Optimizer::Adam => adam.update(&mut params, &grads, cfg.learning_rate),
                Optimizer::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grads) {
                        *p -= cfg.learning_rate * g;
                    }
                }
            }
            model.set_params(&params);
        }
        let epoch_loss = total / inputs.len() as f64;
        if !epoch_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::Diverged { epoch });
        }
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainOutcome { model, initial_loss, epoch_losses })
}

use rand::Rng;

use super::{Layer, NetworkSpec};
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::rng::rng_from_seed;

/// Trainable parameters of a [`NetworkSpec`] plus SGD momentum buffers.
///
/// Parameters live in one flat vector; each layer owns a contiguous slice
/// laid out as weights (row-major, output-major) followed by biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    velocity: Vec<f64>,
}

/// Numerically stable softmax (shift by the maximum logit).
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Network {
    /// He-uniform weights (bound √(6/fan_in)), zero biases. The same
    /// `(spec, seed)` always gives bit-identical parameters.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = rng_from_seed(seed);
        for (l, layer) in net.spec.layers.iter().enumerate() {
            let (fan_in, weights) = match *layer {
                Layer::Dense { inputs, outputs } => (inputs, inputs * outputs),
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => (in_channels * kernel * kernel, out_channels * in_channels * kernel * kernel),
                _ => continue,
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            let start = net.offsets[l];
            for w in &mut net.params[start..start + weights] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let mut total = 0;
        for layer in &spec.layers {
            offsets.push(total);
            total += layer.num_parameters();
        }
        Ok(Self {
            spec,
            shapes,
            offsets,
            params: vec![0.0; total],
            velocity: vec![0.0; total],
        })
    }

    pub fn from_parameters(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::InvalidInput(format!(
                "network needs {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn reset_momentum(&mut self) {
        self.velocity.fill(0.0);
    }

    fn layer_params(&self, l: usize) -> &[f64] {
        let start = self.offsets[l];
        &self.params[start..start + self.spec.layers[l].num_parameters()]
    }

    /// Inputs to every layer followed by the logits.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.spec.layers.len() + 1);
        acts.push(x.to_vec());
        for (l, layer) in self.spec.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let out = forward_layer(layer, self.layer_params(l), input, &self.shapes[l]);
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).pop().unwrap()
    }

    /// Class probabilities for one example.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        z
    }

    /// Probability matrix (row per example, flat) for a batch of flat
    /// examples.
    pub fn forward(&self, batch: &[f64]) -> Result<Vec<f64>> {
        let width = self.spec.input_len();
        if batch.len() % width != 0 {
            return Err(Error::InvalidInput(format!(
                "batch of {} values is not a multiple of the input width {width}",
                batch.len()
            )));
        }
        let mut out = Vec::with_capacity(batch.len() / width * self.spec.num_classes);
        for x in batch.chunks_exact(width) {
            out.extend(self.predict(x));
        }
        Ok(out)
    }

    /// Adds ∂loss/∂parameters for one example into `grad` and returns the
    /// loss value. The softmax Jacobian is applied in full, so any loss
    /// gradient over probabilities is supported.
    pub fn accumulate_gradient<L: Loss + ?Sized>(&self, x: &[f64], target: &[f64], loss: &L, grad: &mut [f64]) -> f64 {
        let mut acts = self.trace(x);
        let mut probs = acts.pop().unwrap();
        softmax_in_place(&mut probs);
        let value = loss.value(&probs, target);
        let mut dp = vec![0.0; probs.len()];
        loss.gradient(&probs, target, &mut dp);
        // dz_j = p_j (g_j − Σ_i p_i g_i)
        let dot: f64 = probs.iter().zip(&dp).map(|(p, g)| p * g).sum();
        let mut delta: Vec<f64> = probs.iter().zip(&dp).map(|(p, g)| p * (g - dot)).collect();
        for l in (0..self.spec.layers.len()).rev() {
            let layer = &self.spec.layers[l];
            let start = self.offsets[l];
            let n = layer.num_parameters();
            delta = backward_layer(
                layer,
                &self.params[start..start + n],
                &mut grad[start..start + n],
                &acts[l],
                &self.shapes[l],
                &delta,
                l > 0,
            );
        }
        value
    }

    /// Mean loss and mean parameter gradient over a set of examples.
    pub fn loss_and_gradient<L: Loss + ?Sized>(&self, examples: &[(&[f64], &[f64])], loss: &L) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        for (x, y) in examples {
            total += self.accumulate_gradient(x, y, loss, &mut grad);
        }
        let n = examples.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (total / n, grad)
    }

    /// v ← μ·v + g;  ω ← ω − lr·v.
    pub fn sgd_step(&mut self, grad: &[f64], learning_rate: f64, momentum: f64) {
        for ((w, v), &g) in self.params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = momentum * *v + g;
            *w -= learning_rate * *v;
        }
    }
}

fn forward_layer(layer: &Layer, params: &[f64], input: &[f64], in_shape: &[usize]) -> Vec<f64> {
    match *layer {
        Layer::Dense { inputs, outputs } => {
            let (w, b) = params.split_at(inputs * outputs);
            (0..outputs)
                .map(|o| {
                    let row = &w[o * inputs..(o + 1) * inputs];
                    b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
                })
                .collect()
        }
        Layer::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
        Layer::Flatten => input.to_vec(),
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            padding,
        } => {
            let (h, w) = (in_shape[1], in_shape[2]);
            let (oh, ow) = (h + 2 * padding - kernel + 1, w + 2 * padding - kernel + 1);
            let (weights, bias) = params.split_at(out_channels * in_channels * kernel * kernel);
            let mut out = vec![0.0; out_channels * oh * ow];
            for o in 0..out_channels {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias[o];
                        for c in 0..in_channels {
                            for ky in 0..kernel {
                                let iy = y + ky;
                                if iy < padding || iy - padding >= h {
                                    continue;
                                }
                                for kx in 0..kernel {
                                    let ix = x + kx;
                                    if ix < padding || ix - padding >= w {
                                        continue;
                                    }
                                    let wi = ((o * in_channels + c) * kernel + ky) * kernel + kx;
                                    acc += weights[wi] * input[(c * h + iy - padding) * w + ix - padding];
                                }
                            }
                        }
                        out[(o * oh + y) * ow + x] = acc;
                    }
                }
            }
            out
        }
        Layer::MaxPool { size } => {
            let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            let (oh, ow) = (h / size, w / size);
            let mut out = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        let (idx, _) = pool_argmax(input, ch, y, x, size, h, w);
                        out.push(input[idx]);
                    }
                }
            }
            out
        }
    }
}

fn pool_argmax(input: &[f64], ch: usize, y: usize, x: usize, size: usize, h: usize, w: usize) -> (usize, f64) {
    let mut best = (ch * h + y * size) * w + x * size;
    for dy in 0..size {
        for dx in 0..size {
            let i = (ch * h + y * size + dy) * w + x * size + dx;
            if input[i] > input[best] {
                best = i;
            }
        }
    }
    (best, input[best])
}

/// Accumulates parameter gradients and returns ∂loss/∂input (empty when
/// `need_input_grad` is false).
fn backward_layer(
    layer: &Layer,
    params: &[f64],
    grad: &mut [f64],
    input: &[f64],
    in_shape: &[usize],
    delta: &[f64],
    need_input_grad: bool,
) -> Vec<f64> {
    match *layer {
        Layer::Dense { inputs, outputs } => {
            let (gw, gb) = grad.split_at_mut(inputs * outputs);
            for o in 0..outputs {
                let d = delta[o];
                gb[o] += d;
                if d != 0.0 {
                    for (g, x) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            if !need_input_grad {
                return Vec::new();
            }
            let w = &params[..inputs * outputs];
            let mut dx = vec![0.0; inputs];
            for o in 0..outputs {
                let d = delta[o];
                if d != 0.0 {
                    for (dxi, wi) in dx.iter_mut().zip(&w[o * inputs..(o + 1) * inputs]) {
                        *dxi += d * wi;
                    }
                }
            }
            dx
        }
        Layer::Relu => input
            .iter()
            .zip(delta)
            .map(|(&x, &d)| if x > 0.0 { d } else { 0.0 })
            .collect(),
        Layer::Flatten => delta.to_vec(),
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            padding,
        } => {
            let (h, w) = (in_shape[1], in_shape[2]);
            let (oh, ow) = (h + 2 * padding - kernel + 1, w + 2 * padding - kernel + 1);
            let nw = out_channels * in_channels * kernel * kernel;
            let weights = &params[..nw];
            let (gw, gb) = grad.split_at_mut(nw);
            let mut dx = vec![0.0; if need_input_grad { input.len() } else { 0 }];
            for o in 0..out_channels {
                for y in 0..oh {
                    for x in 0..ow {
                        let d = delta[(o * oh + y) * ow + x];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        for c in 0..in_channels {
                            for ky in 0..kernel {
                                let iy = y + ky;
                                if iy < padding || iy - padding >= h {
                                    continue;
                                }
                                for kx in 0..kernel {
                                    let ix = x + kx;
                                    if ix < padding || ix - padding >= w {
                                        continue;
                                    }
                                    let wi = ((o * in_channels + c) * kernel + ky) * kernel + kx;
                                    let ii = (c * h + iy - padding) * w + ix - padding;
                                    gw[wi] += d * input[ii];
                                    if need_input_grad {
                                        dx[ii] += d * weights[wi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            dx
        }
        Layer::MaxPool { size } => {
            let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            let (oh, ow) = (h / size, w / size);
            let mut dx = vec![0.0; input.len()];
            for ch in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        let (idx, _) = pool_argmax(input, ch, y, x, size, h, w);
                        dx[idx] += delta[(ch * oh + y) * ow + x];
                    }
                }
            }
            dx
        }
    }
}

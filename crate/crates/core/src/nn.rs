//! Fully connected Q-network with hand-written backpropagation and an Adam
//! optimizer with decoupled weight decay.
//!
//! Hidden layers use ReLU, the output layer is linear. Everything is `f64`.
//! Weight matrices are stored row-major as `outputs x inputs`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths of the reference Q-network: 3 inputs, four hidden layers of
/// 64 units, one output per learner action.
pub const ARCHITECTURE: [usize; 6] = [3, 64, 64, 64, 64, 10];

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Weights and biases uniform in `±sqrt(1 / inputs)`.
    pub fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (1.0 / inputs as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.random_range(-bound..=bound);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.inputs..(out + 1) * self.inputs]
    }

    fn fill(&mut self, value: f64) {
        self.weights.fill(value);
        self.bias.fill(value);
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.inputs == other.inputs && self.outputs == other.outputs
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut sum = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Multilayer perceptron; the same type holds gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

/// Gradients share the network's shape.
pub type Gradients = QNetwork;

impl QNetwork {
    /// Random network with the given layer widths (at least input and output).
    pub fn new<R: Rng + ?Sized>(architecture: &[usize], rng: &mut R) -> Result<Self> {
        check_architecture(architecture)?;
        Ok(Self {
            layers: architecture
                .windows(2)
                .map(|w| Dense::uniform(w[0], w[1], rng))
                .collect(),
        })
    }

    /// Random network with the reference architecture.
    pub fn reference<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(&ARCHITECTURE, rng).expect("reference architecture is valid")
    }

    pub fn zeros(architecture: &[usize]) -> Result<Self> {
        check_architecture(architecture)?;
        Ok(Self {
            layers: architecture
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig(
                "network needs at least one layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::DimensionMismatch {
                    expected: l.inputs * l.outputs,
                    actual: l.weights.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn architecture(&self) -> Vec<usize> {
        let mut arch = vec![self.layers[0].inputs];
        arch.extend(self.layers.iter().map(|l| l.outputs));
        arch
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .all(|v| v.is_finite())
    }

    /// Target-network copy. Owned data, so later updates to either side are independent.
    pub fn sync_clone(&self) -> Self {
        self.clone()
    }

    pub fn fill(&mut self, value: f64) {
        for l in &mut self.layers {
            l.fill(value);
        }
    }

    fn same_shape(&self, other: &QNetwork) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.same_shape(b))
    }

    /// Q-values for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut current = input.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let next: Vec<f64> = (0..layer.outputs)
                .map(|o| {
                    let z = layer.bias[o] + dot(layer.row(o), &current);
                    if li < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            current = next;
        }
        Ok(current)
    }

    /// Forward pass over a flat `n x input_dim` batch, keeping every layer's
    /// pre-activations and activations in `ws`.
    fn forward_batch(&self, inputs: &[f64], n: usize, ws: &mut Workspace) {
        ws.prepare(self, n);
        ws.acts[0].copy_from_slice(inputs);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(li + 1);
            let input = &before[li];
            let output = &mut after[0];
            let pre = &mut ws.pre[li];
            for b in 0..n {
                let a = &input[b * layer.inputs..(b + 1) * layer.inputs];
                let z_row = &mut pre[b * layer.outputs..(b + 1) * layer.outputs];
                let a_row = &mut output[b * layer.outputs..(b + 1) * layer.outputs];
                for o in 0..layer.outputs {
                    let z = layer.bias[o] + dot(layer.row(o), a);
                    z_row[o] = z;
                    a_row[o] = if li < last { z.max(0.0) } else { z };
                }
            }
        }
    }

    /// Q-values for a flat batch of inputs, row per sample.
    pub fn forward_many(&self, inputs: &[f64], ws: &mut Workspace) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if !inputs.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: inputs.len() % d,
            });
        }
        let n = inputs.len() / d;
        self.forward_batch(inputs, n, ws);
        Ok(ws.acts[self.layers.len()].clone())
    }

    /// Masked mean-squared-error loss and its gradient, averaged over the batch.
    ///
    /// `loss = (1/n) * sum_b sum_o mask[b,o] * (q[b,o] - target[b,o])^2`.
    /// `grads` is overwritten.
    pub fn backward(
        &self,
        batch: &Batch,
        grads: &mut Gradients,
        ws: &mut Workspace,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if batch.in_dim != self.input_dim() || batch.out_dim != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: batch.in_dim,
            });
        }
        if !grads.same_shape(self) {
            return Err(Error::ArchitectureMismatch {
                expected: self.architecture(),
                actual: grads.architecture(),
            });
        }
        let n = batch.len;
        self.forward_batch(&batch.inputs, n, ws);
        grads.fill(0.0);

        let nl = self.layers.len();
        let out_dim = self.output_dim();
        let scale = 2.0 / n as f64;
        let mut loss = 0.0;
        {
            let q = &ws.acts[nl];
            let delta = &mut ws.deltas[nl - 1];
            for i in 0..n * out_dim {
                let err = batch.mask[i] * (q[i] - batch.targets[i]);
                loss += err * (q[i] - batch.targets[i]);
                delta[i] = scale * err;
            }
        }

        for li in (0..nl).rev() {
            let layer = &self.layers[li];
            let grad = &mut grads.layers[li];
            let (din, dout) = (layer.inputs, layer.outputs);
            let (lower, upper) = ws.deltas.split_at_mut(li);
            let delta = &upper[0];
            let a_in = &ws.acts[li];
            for b in 0..n {
                let a = &a_in[b * din..(b + 1) * din];
                let d_row = &delta[b * dout..(b + 1) * dout];
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grad.bias[o] += d;
                    axpy(d, a, &mut grad.weights[o * din..(o + 1) * din]);
                }
            }
            if li == 0 {
                break;
            }
            let prev = &mut lower[li - 1];
            let pre = &ws.pre[li - 1];
            prev.fill(0.0);
            for b in 0..n {
                let d_row = &delta[b * dout..(b + 1) * dout];
                let p_row = &mut prev[b * din..(b + 1) * din];
                for (o, &d) in d_row.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, layer.row(o), p_row);
                    }
                }
                for (p, &z) in p_row.iter_mut().zip(&pre[b * din..(b + 1) * din]) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
        Ok(loss / n as f64)
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, batch: &Batch, ws: &mut Workspace) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.forward_batch(&batch.inputs, batch.len, ws);
        let q = &ws.acts[self.layers.len()];
        let sum: f64 = (0..q.len())
            .map(|i| batch.mask[i] * (q[i] - batch.targets[i]).powi(2))
            .sum();
        Ok(sum / batch.len as f64)
    }
}

fn check_architecture(architecture: &[usize]) -> Result<()> {
    if architecture.len() < 2 || architecture.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "invalid layer widths {architecture:?}"
        )));
    }
    Ok(())
}

/// Scratch buffers reused across batch forward/backward passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, net: &QNetwork, n: usize) {
        let arch = net.architecture();
        self.acts.resize_with(arch.len(), Vec::new);
        self.pre.resize_with(arch.len() - 1, Vec::new);
        self.deltas.resize_with(arch.len() - 1, Vec::new);
        for (i, &w) in arch.iter().enumerate() {
            self.acts[i].resize(n * w, 0.0);
            if i > 0 {
                self.pre[i - 1].resize(n * w, 0.0);
                self.deltas[i - 1].resize(n * w, 0.0);
            }
        }
    }
}

/// Flat training batch: inputs, per-output targets and a 0/1 mask selecting
/// which outputs contribute to the loss.
#[derive(Debug, Clone)]
pub struct Batch {
    in_dim: usize,
    out_dim: usize,
    len: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    mask: Vec<f64>,
}

impl Batch {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            len: 0,
            inputs: Vec::new(),
            targets: Vec::new(),
            mask: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clear(&mut self) {
        self.len = 0;
        self.inputs.clear();
        self.targets.clear();
        self.mask.clear();
    }

    pub fn push(&mut self, input: &[f64], target: &[f64], mask: &[bool]) -> Result<()> {
        if input.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                actual: input.len(),
            });
        }
        if target.len() != self.out_dim || mask.len() != self.out_dim {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim,
                actual: target.len().min(mask.len()),
            });
        }
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        self.mask
            .extend(mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
        self.len += 1;
        Ok(())
    }

    /// Sample whose loss involves only output `selected`.
    pub fn push_selected(&mut self, input: &[f64], selected: usize, target: f64) -> Result<()> {
        if selected >= self.out_dim {
            return Err(Error::ActionOutOfRange {
                index: selected,
                count: self.out_dim,
            });
        }
        if input.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                actual: input.len(),
            });
        }
        self.inputs.extend_from_slice(input);
        let start = self.targets.len();
        self.targets.resize(start + self.out_dim, 0.0);
        self.mask.resize(start + self.out_dim, 0.0);
        self.targets[start + selected] = target;
        self.mask[start + selected] = 1.0;
        self.len += 1;
        Ok(())
    }
}

/// Adam with bias correction and decoupled weight decay on weight matrices.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &QNetwork, learning_rate: f64, weight_decay: f64) -> Self {
        let mut m = net.clone();
        m.fill(0.0);
        Self {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut QNetwork, grads: &Gradients) -> Result<()> {
        if !net.same_shape(grads) || !net.same_shape(&self.m) {
            return Err(Error::ArchitectureMismatch {
                expected: net.architecture(),
                actual: grads.architecture(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let shrink = 1.0 - lr * self.weight_decay;

        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], decay: bool| {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                if decay {
                    p[i] *= shrink;
                }
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            }
        };

        for (li, layer) in net.layers.iter_mut().enumerate() {
            let g = &grads.layers[li];
            let m = &mut self.m.layers[li];
            let v = &mut self.v.layers[li];
            update(
                &mut layer.weights,
                &g.weights,
                &mut m.weights,
                &mut v.weights,
                true,
            );
            update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, false);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    /// `outputs` rows of `inputs` values each.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// On-disk network snapshot (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: Vec<usize>,
    pub seed: u64,
    pub frame_count: u64,
    pub layers: Vec<LayerRecord>,
}

impl Checkpoint {
    pub fn new(net: &QNetwork, seed: u64, frame_count: u64) -> Self {
        Self {
            architecture: net.architecture(),
            seed,
            frame_count,
            layers: net
                .layers
                .iter()
                .map(|l| LayerRecord {
                    weights: l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the network, requiring the reference architecture.
    pub fn to_network(&self) -> Result<QNetwork> {
        if self.architecture != ARCHITECTURE {
            return Err(Error::ArchitectureMismatch {
                expected: ARCHITECTURE.to_vec(),
                actual: self.architecture.clone(),
            });
        }
        if self.layers.len() != ARCHITECTURE.len() - 1 {
            return Err(Error::ArchitectureMismatch {
                expected: ARCHITECTURE.to_vec(),
                actual: self.architecture.clone(),
            });
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, rec) in self.layers.iter().enumerate() {
            let (inputs, outputs) = (ARCHITECTURE[i], ARCHITECTURE[i + 1]);
            if rec.weights.len() != outputs || rec.bias.len() != outputs {
                return Err(Error::DimensionMismatch {
                    expected: outputs,
                    actual: rec.weights.len(),
                });
            }
            let mut dense = Dense::zeros(inputs, outputs);
            for (o, row) in rec.weights.iter().enumerate() {
                if row.len() != inputs {
                    return Err(Error::DimensionMismatch {
                        expected: inputs,
                        actual: row.len(),
                    });
                }
                dense.weights[o * inputs..(o + 1) * inputs].copy_from_slice(row);
            }
            dense.bias.copy_from_slice(&rec.bias);
            layers.push(dense);
        }
        let net = QNetwork::from_layers(layers)?;
        if !net.is_finite() {
            return Err(Error::NonFinite {
                what: "checkpoint parameter",
                value: f64::NAN,
            });
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

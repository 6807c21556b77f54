//! Fully connected reward model with rectified-linear hidden layers, trained by RMSProp.

use rand::Rng;

use crate::container::{format, put_f64s, Container, Reader};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::types::{BinId, Transition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self {
            learning_rate: 0.00025,
            decay: 0.95,
            eps: 1e-8,
        }
    }
}

/// Weights are row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.inputs..(j + 1) * self.inputs]
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.outputs).map(|j| dot(self.row(j), x) + self.biases[j]));
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Dot product with four independent accumulators so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Gradients with the same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    /// Parameters in the same order as [`MlpModel::param`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|g| g.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
    accum: Vec<Dense>,
    optimizer: RmsProp,
}

impl MlpModel {
    /// Zero-initialised model. `sizes` lists layer widths from input to output.
    pub fn zeros(sizes: &[usize], optimizer: RmsProp) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let layers: Vec<Dense> = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        let accum = layers.clone();
        Ok(Self {
            layers,
            accum,
            optimizer,
        })
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new(sizes: &[usize], optimizer: RmsProp, rng: &mut Stream) -> Result<Self> {
        let mut model = Self::zeros(sizes, optimizer)?;
        for layer in &mut model.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-limit..=limit));
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn optimizer(&self) -> RmsProp {
        self.optimizer
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.weights.len() {
                return (li, true, i);
            }
            i -= l.weights.len();
            if i < l.biases.len() {
                return (li, false, i);
            }
            i -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access: each layer's weights then biases, layer by layer.
    pub fn param(&self, i: usize) -> f64 {
        let (l, w, k) = self.locate(i);
        if w {
            self.layers[l].weights[k]
        } else {
            self.layers[l].biases[k]
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let (l, w, k) = self.locate(i);
        if w {
            self.layers[l].weights[k] = v;
        } else {
            self.layers[l].biases[k] = v;
        }
    }

    fn check_input(&self, obs: &[f64]) -> Result<()> {
        if obs.len() == self.input_dim() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.input_dim(),
                found: obs.len(),
            })
        }
    }

    /// Predicted reward of every arm.
    pub fn forward(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_input(obs)?;
        let mut x = obs.to_vec();
        let mut out = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&x, &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut x, &mut out);
        }
        Ok(x)
    }

    /// Activations of every layer; entry 0 is the input, hidden entries are post-activation.
    fn activations(&self, obs: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(obs.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(&acts[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Mean squared error of the chosen arm's prediction against the reward, and its gradient.
    /// Unchosen arms contribute nothing.
    pub fn loss_and_gradients(&self, batch: &[&Transition]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let n_layers = self.layers.len();
        for t in batch {
            self.check_input(&t.observation.scores)?;
            let arm = t.action.index();
            if arm >= self.n_outputs() {
                return Err(Error::UnknownBin {
                    bin: arm,
                    n_bins: self.n_outputs(),
                });
            }
            let acts = self.activations(&t.observation.scores);
            let residual = acts[n_layers][arm] - t.reward;
            loss += residual * residual * scale;

            let mut delta = vec![0.0; self.n_outputs()];
            delta[arm] = 2.0 * residual * scale;
            for li in (0..n_layers).rev() {
                let layer = &self.layers[li];
                let g = &mut grads.layers[li];
                let input = &acts[li];
                let mut back = if li > 0 { vec![0.0; layer.inputs] } else { Vec::new() };
                for (j, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[j] += d;
                    axpy(d, input, &mut g.weights[j * layer.inputs..(j + 1) * layer.inputs]);
                    if li > 0 {
                        axpy(d, layer.row(j), &mut back);
                    }
                }
                if li > 0 {
                    // ReLU derivative: pass gradient only where the unit was active.
                    back.iter_mut()
                        .zip(input)
                        .for_each(|(b, &a)| if a <= 0.0 { *b = 0.0 });
                    delta = back;
                }
            }
        }
        Ok((loss, grads))
    }

    pub fn loss(&self, batch: &[&Transition]) -> Result<f64> {
        let mut loss = 0.0;
        for t in batch {
            let out = self.forward(&t.observation.scores)?;
            loss += (out[t.action.index()] - t.reward).powi(2);
        }
        Ok(loss / batch.len().max(1) as f64)
    }

    /// `s <- decay * s + (1 - decay) * g^2; w <- w - lr * g / (sqrt(s) + eps)`.
    ///
    /// A non-finite gradient aborts the whole update and leaves the model untouched.
    pub fn rmsprop_step(&mut self, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.layers.len()
            || grads
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.inputs != l.inputs || g.outputs != l.outputs)
        {
            return Err(Error::InvalidArgument("gradient shapes do not match model".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("bandit gradient"));
        }
        let RmsProp {
            learning_rate,
            decay,
            eps,
        } = self.optimizer;
        for ((layer, acc), g) in self.layers.iter_mut().zip(&mut self.accum).zip(&grads.layers) {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let accs = acc.weights.iter_mut().chain(acc.biases.iter_mut());
            let gs = g.weights.iter().chain(&g.biases);
            for ((w, s), &gi) in params.zip(accs).zip(gs) {
                *s = decay * *s + (1.0 - decay) * gi * gi;
                *w -= learning_rate * gi / (s.sqrt() + eps);
            }
        }
        if self
            .layers
            .iter()
            .any(|l| l.weights.iter().chain(&l.biases).any(|w| !w.is_finite()))
        {
            return Err(Error::NonFinite("bandit parameters"));
        }
        Ok(())
    }

    /// One RMSProp step on the batch's mean squared reward error; returns the pre-update loss.
    pub fn fit(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(batch)?;
        self.rmsprop_step(&grads)?;
        Ok(loss)
    }

    /// Arm with the highest predicted reward; ties go to the lower index.
    pub fn greedy(&self, obs: &[f64]) -> Result<BinId> {
        Ok(BinId(argmax(&self.forward(obs)?)))
    }

    pub fn to_container(&self) -> Container {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.layers.len() as u64).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.inputs as u64).to_le_bytes());
            out.extend_from_slice(&(l.outputs as u64).to_le_bytes());
        }
        put_f64s(
            &mut out,
            &[
                self.optimizer.learning_rate,
                self.optimizer.decay,
                self.optimizer.eps,
            ],
        );
        for l in self.layers.iter().chain(&self.accum) {
            put_f64s(&mut out, &l.weights);
            put_f64s(&mut out, &l.biases);
        }
        Container {
            format_version: format::MLP_MODEL,
            step: 0,
            payload: out,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = Container::decode_expecting(bytes, format::MLP_MODEL)?;
        let mut r = Reader::new(&c.payload);
        let n = r.u64()? as usize;
        if n == 0 || n > 64 {
            return Err(Error::Corrupt(format!("implausible layer count {n}")));
        }
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let (i, o) = (r.u64()? as usize, r.u64()? as usize);
            if i == 0 || o == 0 || i.checked_mul(o).is_none_or(|p| p > (1 << 28)) {
                return Err(Error::Corrupt(format!("implausible layer shape {i}x{o}")));
            }
            shapes.push((i, o));
        }
        let optimizer = RmsProp {
            learning_rate: r.f64()?,
            decay: r.f64()?,
            eps: r.f64()?,
        };
        let read_layers = |r: &mut Reader| -> Result<Vec<Dense>> {
            shapes
                .iter()
                .map(|&(i, o)| {
                    Ok(Dense {
                        inputs: i,
                        outputs: o,
                        weights: r.f64s(i * o)?,
                        biases: r.f64s(o)?,
                    })
                })
                .collect()
        };
        let layers = read_layers(&mut r)?;
        let accum = read_layers(&mut r)?;
        r.finish()?;
        Ok(Self {
            layers,
            accum,
            optimizer,
        })
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax of the arm predictions, for display only.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

//! A small fully connected cost predictor with a narrow hidden layer whose
//! activations serve as plan embeddings.
//!
//! Layout: `F -> H1 -> n -> H2 -> 1`, leaky-rectified hidden layers, linear
//! output. Inputs and targets are standardized with statistics taken from the
//! training set; targets are `ln(1 + cost)`.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Negative-side slope of the hidden activations. A small slope keeps
/// bottleneck units from dying, which would collapse embedding dimensions.
pub const LEAKY_SLOPE: f64 = 0.01;
const MAGIC: &[u8; 4] = b"QSBN";
const MAX_GRAD_NORM: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden1: usize,
    pub bottleneck: usize,
    pub hidden2: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden1: 32,
            bottleneck: 8,
            hidden2: 16,
            epochs: 300,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 || self.bottleneck == 0 {
            return Err(Error::config("hidden1", "layer widths must be positive"));
        }
        if self.bottleneck >= self.hidden1 || self.bottleneck >= self.hidden2 {
            return Err(Error::config(
                "bottleneck",
                "must be narrower than both hidden layers",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a positive number"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = (2.0 / inputs as f64).sqrt();
        Layer {
            inputs,
            outputs,
            w: (0..inputs * outputs)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                .collect(),
            b: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }
}

#[inline]
fn act(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

#[inline]
fn act_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    input_dim: usize,
    config: NetConfig,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BottleneckNet {
    config: NetConfig,
    input_dim: usize,
    layers: [Layer; 4],
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    final_loss: f64,
}

/// Per-layer pre-activations of one forward pass over standardized input.
struct Trace {
    input: Vec<f64>,
    pre: [Vec<f64>; 4],
    post: [Vec<f64>; 3],
}

impl BottleneckNet {
    /// A freshly initialized (untrained) network with identity normalization.
    pub fn new(input_dim: usize, config: NetConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::config("input_dim", "must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = [
            Layer::new(input_dim, config.hidden1, &mut rng),
            Layer::new(config.hidden1, config.bottleneck, &mut rng),
            Layer::new(config.bottleneck, config.hidden2, &mut rng),
            Layer::new(config.hidden2, 1, &mut rng),
        ];
        Ok(BottleneckNet {
            config,
            input_dim,
            layers,
            x_mean: vec![0.0; input_dim],
            x_scale: vec![1.0; input_dim],
            y_mean: 0.0,
            y_scale: 1.0,
            final_loss: f64::NAN,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.config.bottleneck
    }

    /// Mean squared error (standardized units) after the last training epoch.
    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dim {
            return Err(Error::Mismatch(format!(
                "expected {} features, got {}",
                self.input_dim,
                features.len()
            )));
        }
        Ok(())
    }

    fn standardize(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.x_mean.iter().zip(&self.x_scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    fn trace(&self, input: Vec<f64>) -> Trace {
        let mut pre: [Vec<f64>; 4] = Default::default();
        let mut post: [Vec<f64>; 3] = Default::default();
        self.layers[0].forward(&input, &mut pre[0]);
        for l in 0..3 {
            post[l] = pre[l].iter().map(|&z| act(z)).collect();
            let mut next = Vec::new();
            self.layers[l + 1].forward(&post[l], &mut next);
            pre[l + 1] = next;
        }
        Trace { input, pre, post }
    }

    /// Predicted `ln(1 + cost)`.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        self.check_dim(features)?;
        let t = self.trace(self.standardize(features));
        Ok(t.pre[3][0] * self.y_scale + self.y_mean)
    }

    /// Predicted cost in measured units.
    pub fn predict_cost(&self, features: &[f64]) -> Result<f64> {
        Ok(self.predict(features)?.exp_m1().max(0.0))
    }

    /// Bottleneck activations: the plan's latent point.
    pub fn encode(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(features)?;
        Ok(self.trace(self.standardize(features)).post[1].clone())
    }

    /// The layers after the bottleneck applied to a latent point; predicts
    /// `ln(1 + cost)`.
    pub fn predict_latent(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.latent_dim() {
            return Err(Error::Mismatch(format!(
                "expected a {}-dimensional latent point, got {}",
                self.latent_dim(),
                z.len()
            )));
        }
        let mut h = Vec::new();
        self.layers[2].forward(z, &mut h);
        let h: Vec<f64> = h.into_iter().map(act).collect();
        let mut out = Vec::new();
        self.layers[3].forward(&h, &mut out);
        Ok(out[0] * self.y_scale + self.y_mean)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All weights and biases, layer by layer (weights first).
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.w);
            p.extend_from_slice(&l.b);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Mismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut i = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&params[i..i + nw]);
            i += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&params[i..i + nb]);
            i += nb;
        }
        Ok(())
    }

    /// Mean squared error in standardized target units over `(features,
    /// ln(1 + cost))` pairs, and its gradient with respect to [`Self::params`].
    pub fn loss_and_gradient(&self, samples: &[(Vec<f64>, f64)]) -> Result<(f64, Vec<f64>)> {
        if samples.is_empty() {
            return Err(Error::Training("no samples".into()));
        }
        for (x, _) in samples {
            self.check_dim(x)?;
        }
        let batch: Vec<(Vec<f64>, f64)> = samples
            .iter()
            .map(|(x, y)| (self.standardize(x), (y - self.y_mean) / self.y_scale))
            .collect();
        Ok(self.batch_gradient(&batch))
    }

    /// Loss and gradient over already standardized samples.
    fn batch_gradient(&self, batch: &[(Vec<f64>, f64)]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.w.len() + l.b.len();
                Some(o)
            })
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (x, y) in batch {
            let t = self.trace(x.clone());
            let err = t.pre[3][0] - y;
            loss += err * err * scale;
            // dL/d(pre-activation) of the current layer
            let mut delta = vec![2.0 * err * scale];
            for l in (0..4).rev() {
                let layer = &self.layers[l];
                let input: &[f64] = if l == 0 { &t.input } else { &t.post[l - 1] };
                let off = offsets[l];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = off + o * layer.inputs;
                    for (g, xi) in grad[row..row + layer.inputs].iter_mut().zip(input) {
                        *g += d * xi;
                    }
                    grad[off + layer.w.len() + o] += d;
                }
                if l > 0 {
                    let mut next = vec![0.0; layer.inputs];
                    for (row, d) in layer.w.chunks_exact(layer.inputs).zip(&delta) {
                        for (n, w) in next.iter_mut().zip(row) {
                            *n += d * w;
                        }
                    }
                    for (n, z) in next.iter_mut().zip(&t.pre[l - 1]) {
                        *n *= act_grad(*z);
                    }
                    delta = next;
                }
            }
        }
        (loss, grad)
    }

    /// Trains from scratch on `(features, measured cost)` pairs. Deterministic
    /// for a fixed `config.seed`.
    pub fn train(samples: &[(Vec<f64>, f64)], config: NetConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Training(
                "cannot train on an empty experience set".into(),
            ));
        }
        let dim = samples[0].0.len();
        let mut net = BottleneckNet::new(dim, config)?;
        for (x, c) in samples {
            net.check_dim(x)?;
            if !(c.is_finite() && *c >= 0.0) || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(
                    "samples must be finite with cost >= 0".into(),
                ));
            }
        }
        let n = samples.len() as f64;
        for j in 0..dim {
            let mean = samples.iter().map(|(x, _)| x[j]).sum::<f64>() / n;
            let var = samples
                .iter()
                .map(|(x, _)| (x[j] - mean).powi(2))
                .sum::<f64>()
                / n;
            net.x_mean[j] = mean;
            net.x_scale[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        let ys: Vec<f64> = samples.iter().map(|(_, c)| c.ln_1p()).collect();
        let mean = ys.iter().sum::<f64>() / n;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        net.y_mean = mean;
        net.y_scale = if sd > 1e-12 { sd } else { 1.0 };

        let data: Vec<(Vec<f64>, f64)> = samples
            .iter()
            .zip(&ys)
            .map(|((x, _), y)| (net.standardize(x), (y - net.y_mean) / net.y_scale))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(net.config.seed ^ 0x7a11_0c8e);
        let mut params = net.params();
        let mut velocity = vec![0.0; params.len()];
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut batch = Vec::with_capacity(net.config.batch_size);
        for _ in 0..net.config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(net.config.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| data[i].clone()));
                let (_, mut g) = net.batch_gradient(&batch);
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > MAX_GRAD_NORM {
                    g.iter_mut().for_each(|v| *v *= MAX_GRAD_NORM / norm);
                }
                for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&g) {
                    *v = net.config.momentum * *v - net.config.learning_rate * g;
                    *p += *v;
                }
                net.set_params(&params)?;
            }
        }
        net.final_loss = net.batch_gradient(&data).0;
        if !net.final_loss.is_finite() {
            return Err(Error::Training("training diverged".into()));
        }
        Ok(net)
    }

    /// Mean squared error of predicted `ln(1 + cost)` over `(features, cost)`.
    pub fn mse(&self, samples: &[(Vec<f64>, f64)]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Argument("no samples".into()));
        }
        let mut s = 0.0;
        for (x, c) in samples {
            s += (self.predict(x)? - c.ln_1p()).powi(2);
        }
        Ok(s / samples.len() as f64)
    }

    /// Flat binary: magic, `u32` header length, JSON header, then every
    /// parameter as little-endian `f64`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            format: "qsuper-net-v1".into(),
            input_dim: self.input_dim,
            config: self.config.clone(),
            x_mean: self.x_mean.clone(),
            x_scale: self.x_scale.clone(),
            y_mean: self.y_mean,
            y_scale: self.y_scale,
            final_loss: self.final_loss,
        })?;
        let mut out = Vec::with_capacity(8 + header.len() + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Decode(format!("network file: {m}"));
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let h: Header = serde_json::from_slice(body)?;
        let mut net = BottleneckNet::new(h.input_dim, h.config)?;
        if h.x_mean.len() != h.input_dim || h.x_scale.len() != h.input_dim {
            return Err(bad("normalization length mismatch"));
        }
        let rest = &bytes[8 + hlen..];
        if rest.len() != 8 * net.param_count() {
            return Err(bad("parameter count mismatch"));
        }
        let params: Vec<f64> = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        net.set_params(&params)?;
        net.x_mean = h.x_mean;
        net.x_scale = h.x_scale;
        net.y_mean = h.y_mean;
        net.y_scale = h.y_scale;
        net.final_loss = h.final_loss;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

//! A small dense VAE with hand-written backpropagation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DetectorError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the KL term.
    pub beta: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            latent: 3,
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            beta: 1e-3,
            seed: 7,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |what: &str| Err(DetectorError::InvalidConfig(what.to_string()));
        if self.hidden == 0 || self.latent == 0 {
            return bad("layer sizes must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be non-negative");
        }
        Ok(())
    }
}

/// Fully connected layer; `w` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut d = Self::zeros(inputs, outputs);
        for w in &mut d.w {
            *w = rng.random_range(-limit..limit);
        }
        d
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.w.chunks_exact(self.inputs)) {
            *o = row.iter().zip(x).map(|(w, x)| w * x).sum();
        }
        for (o, b) in out.iter_mut().zip(&self.b) {
            *o += b;
        }
    }

    /// Accumulates parameter gradients for upstream `dy` at input `x` into
    /// `grad` and adds the input gradient into `dx`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            grad.b[o] += g;
            let row = &mut grad.w[o * self.inputs..(o + 1) * self.inputs];
            for (w, &xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Encoder, mean and log-variance heads, decoder and output layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeParams {
    pub encoder: Dense,
    pub mean: Dense,
    pub log_var: Dense,
    pub decoder: Dense,
    pub output: Dense,
}

impl VaeParams {
    pub fn init(input: usize, cfg: &VaeConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            encoder: Dense::glorot(input, cfg.hidden, rng),
            mean: Dense::glorot(cfg.hidden, cfg.latent, rng),
            log_var: Dense::glorot(cfg.hidden, cfg.latent, rng),
            decoder: Dense::glorot(cfg.latent, cfg.hidden, rng),
            output: Dense::glorot(cfg.hidden, input, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.inputs, d.outputs);
        Self {
            encoder: z(&self.encoder),
            mean: z(&self.mean),
            log_var: z(&self.log_var),
            decoder: z(&self.decoder),
            output: z(&self.output),
        }
    }

    fn layers(&self) -> [&Dense; 5] {
        [&self.encoder, &self.mean, &self.log_var, &self.decoder, &self.output]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 5] {
        [
            &mut self.encoder,
            &mut self.mean,
            &mut self.log_var,
            &mut self.decoder,
            &mut self.output,
        ]
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.inputs
    }

    pub fn latent_dim(&self) -> usize {
        self.mean.outputs
    }

    pub fn len(&self) -> usize {
        self.layers().iter().map(|d| d.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every parameter in a fixed order (weights then biases, layer by layer).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for d in self.layers() {
            out.extend_from_slice(&d.w);
            out.extend_from_slice(&d.b);
        }
        out
    }

    pub fn get(&self, mut i: usize) -> f64 {
        for d in self.layers() {
            if i < d.w.len() {
                return d.w[i];
            }
            i -= d.w.len();
            if i < d.b.len() {
                return d.b[i];
            }
            i -= d.b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut i: usize, v: f64) {
        for d in self.layers_mut() {
            if i < d.w.len() {
                d.w[i] = v;
                return;
            }
            i -= d.w.len();
            if i < d.b.len() {
                d.b[i] = v;
                return;
            }
            i -= d.b.len();
        }
        panic!("parameter index out of range")
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut i = 0;
        for d in self.layers_mut() {
            for p in d.w.iter_mut().chain(d.b.iter_mut()) {
                f(i, p);
                i += 1;
            }
        }
    }

    pub fn is_consistent(&self) -> bool {
        let ok = |d: &Dense| d.w.len() == d.inputs * d.outputs && d.b.len() == d.outputs;
        self.layers().into_iter().all(ok)
            && self.mean.inputs == self.encoder.outputs
            && self.log_var.inputs == self.encoder.outputs
            && self.log_var.outputs == self.mean.outputs
            && self.decoder.inputs == self.mean.outputs
            && self.output.inputs == self.decoder.outputs
            && self.output.outputs == self.encoder.inputs
    }

    /// Reconstruction of `x` through the latent mean.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let mut t = Trace::new(self);
        t.forward(self, x, None);
        t.y
    }

    /// Squared Euclidean reconstruction error, using the latent mean.
    pub fn reconstruction_error(&self, x: &[f64]) -> f64 {
        self.reconstruct(x).iter().zip(x).map(|(y, x)| (y - x) * (y - x)).sum()
    }
}

/// Activations of one forward pass, kept for backpropagation.
struct Trace {
    h1: Vec<f64>,
    mu: Vec<f64>,
    lv: Vec<f64>,
    z: Vec<f64>,
    h2: Vec<f64>,
    y: Vec<f64>,
}

impl Trace {
    fn new(p: &VaeParams) -> Self {
        Self {
            h1: vec![0.0; p.encoder.outputs],
            mu: vec![0.0; p.mean.outputs],
            lv: vec![0.0; p.log_var.outputs],
            z: vec![0.0; p.mean.outputs],
            h2: vec![0.0; p.decoder.outputs],
            y: vec![0.0; p.output.outputs],
        }
    }

    /// `eps = None` uses the latent mean.
    fn forward(&mut self, p: &VaeParams, x: &[f64], eps: Option<&[f64]>) {
        p.encoder.forward(x, &mut self.h1);
        self.h1.iter_mut().for_each(|v| *v = v.tanh());
        p.mean.forward(&self.h1, &mut self.mu);
        p.log_var.forward(&self.h1, &mut self.lv);
        for k in 0..self.z.len() {
            self.z[k] = match eps {
                Some(e) => self.mu[k] + (0.5 * self.lv[k]).exp() * e[k],
                None => self.mu[k],
            };
        }
        p.decoder.forward(&self.z, &mut self.h2);
        self.h2.iter_mut().for_each(|v| *v = v.tanh());
        p.output.forward(&self.h2, &mut self.y);
    }

    fn kl(&self) -> f64 {
        -0.5 * self
            .mu
            .iter()
            .zip(&self.lv)
            .map(|(m, l)| 1.0 + l - m * m - l.exp())
            .sum::<f64>()
    }
}

/// Loss terms averaged over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

/// Batch objective: mean over samples of squared reconstruction error plus
/// `beta` times the KL divergence from the standard normal prior.
/// `eps[i]` is the reparameterization noise of sample `i`.
pub fn loss_and_grad(p: &VaeParams, batch: &[&[f64]], eps: &[Vec<f64>], beta: f64) -> (BatchLoss, VaeParams) {
    let n = batch.len() as f64;
    let mut grad = p.zeros_like();
    let mut t = Trace::new(p);
    let (mut rec, mut kl) = (0.0, 0.0);
    let mut dh2 = vec![0.0; p.decoder.outputs];
    let mut dz = vec![0.0; p.mean.outputs];
    let mut dh1 = vec![0.0; p.encoder.outputs];
    for (x, e) in batch.iter().zip(eps) {
        t.forward(p, x, Some(e));
        let dy: Vec<f64> = t.y.iter().zip(x.iter()).map(|(y, x)| 2.0 * (y - x) / n).collect();
        rec += t.y.iter().zip(x.iter()).map(|(y, x)| (y - x) * (y - x)).sum::<f64>();
        kl += t.kl();

        dh2.fill(0.0);
        p.output.backward(&t.h2, &dy, &mut grad.output, Some(&mut dh2));
        for (d, h) in dh2.iter_mut().zip(&t.h2) {
            *d *= 1.0 - h * h;
        }
        dz.fill(0.0);
        p.decoder.backward(&t.z, &dh2, &mut grad.decoder, Some(&mut dz));
        let dmu: Vec<f64> = (0..dz.len()).map(|k| dz[k] + beta * t.mu[k] / n).collect();
        let dlv: Vec<f64> = (0..dz.len())
            .map(|k| {
                let s = (0.5 * t.lv[k]).exp();
                dz[k] * e[k] * 0.5 * s + beta * 0.5 * (t.lv[k].exp() - 1.0) / n
            })
            .collect();
        dh1.fill(0.0);
        p.mean.backward(&t.h1, &dmu, &mut grad.mean, Some(&mut dh1));
        p.log_var.backward(&t.h1, &dlv, &mut grad.log_var, Some(&mut dh1));
        for (d, h) in dh1.iter_mut().zip(&t.h1) {
            *d *= 1.0 - h * h;
        }
        p.encoder.backward(x, &dh1, &mut grad.encoder, None);
    }
    let reconstruction = rec / n;
    let kl = kl / n;
    (
        BatchLoss {
            reconstruction,
            kl,
            total: reconstruction + beta * kl,
        },
        grad,
    )
}

/// Deterministic objective over a whole dataset (latent mean, no noise).
pub fn mean_objective(p: &VaeParams, data: &[Vec<f64>], beta: f64) -> f64 {
    let mut t = Trace::new(p);
    let mut total = 0.0;
    for x in data {
        t.forward(p, x, None);
        let rec: f64 = t.y.iter().zip(x).map(|(y, x)| (y - x) * (y - x)).sum();
        total += rec + beta * t.kl();
    }
    total / data.len() as f64
}

/// Per-parameter adaptive moment estimates.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, p: &mut VaeParams, grad: &VaeParams) {
        self.step += 1;
        let g = grad.flatten();
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        let (m, v, lr) = (&mut self.m, &mut self.v, self.lr);
        p.for_each_mut(|i, w| {
            m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
            v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            *w -= lr * mh / (vh.sqrt() + Self::EPS);
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub samples: usize,
    /// Deterministic objective before the first update.
    pub initial_loss: f64,
    /// Deterministic objective after the last epoch.
    pub final_loss: f64,
}

pub fn fit(data: &[Vec<f64>], cfg: &VaeConfig) -> Result<(VaeParams, TrainingSummary), DetectorError> {
    let input = data[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = VaeParams::init(input, cfg, &mut rng);
    let initial_loss = mean_objective(&params, data, cfg.beta);
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| data[i].as_slice()).collect();
            let eps: Vec<Vec<f64>> = chunk
                .iter()
                .map(|_| (0..cfg.latent).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let (loss, grad) = loss_and_grad(&params, &batch, &eps, cfg.beta);
            if !loss.total.is_finite() {
                return Err(DetectorError::NonFiniteLoss { epoch });
            }
            adam.update(&mut params, &grad);
        }
    }
    let final_loss = mean_objective(&params, data, cfg.beta);
    if !final_loss.is_finite() {
        return Err(DetectorError::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok((
        params,
        TrainingSummary {
            samples: data.len(),
            initial_loss,
            final_loss,
        },
    ))
}

//! Small feed-forward binary classifier shared by the emotion and churn models:
//! rectifier hidden layers, one logistic output unit, mean cross-entropy loss
//! with an L2 penalty on weights.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.01, epochs: 60, batch_size: 32, l2_penalty: 1e-4, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be >= 1".into()));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(Error::InvalidConfig(format!("l2_penalty {} must be >= 0", self.l2_penalty)));
        }
        Ok(())
    }
}

/// Weights are row-major `[out][in]` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub final_loss: f64,
    pub train_accuracy: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `-[y ln σ(z) + (1-y) ln(1-σ(z))]`.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl MlpParams {
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        Self::check_dims(layer_dims)?;
        let weights = layer_dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(MlpParams { layer_dims: layer_dims.to_vec(), weights, biases })
    }

    /// He-normal weights, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut p = Self::zeros(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (l, w) in p.weights.iter_mut().enumerate() {
            let fan_in = layer_dims[l] as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
            for x in w.iter_mut() {
                *x = normal.sample(&mut rng);
            }
        }
        Ok(p)
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) || *dims.last().unwrap() != 1 {
            return Err(Error::InvalidConfig(format!(
                "layer dims {dims:?}: need >= 2 positive layers ending in 1 output"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        Self::check_dims(&self.layer_dims)?;
        let n = self.layer_dims.len() - 1;
        if self.weights.len() != n || self.biases.len() != n {
            return Err(Error::Format("layer count disagrees with dims".into()));
        }
        for l in 0..n {
            if self.weights[l].len() != self.layer_dims[l] * self.layer_dims[l + 1]
                || self.biases[l].len() != self.layer_dims[l + 1]
            {
                return Err(Error::Format(format!("layer {l} shape disagrees with dims")));
            }
        }
        if self.weights.iter().chain(&self.biases).flatten().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Activations of every layer; the last entry holds the output logit.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.weights.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for l in 0..n_layers {
            let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let input = &acts[l];
            let w = &self.weights[l];
            let out: Vec<f64> = (0..dout)
                .map(|o| {
                    let row = &w[o * din..(o + 1) * din];
                    let z = self.biases[l][o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if l + 1 < n_layers {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.forward_all(x).pop().unwrap()[0]
    }

    /// Probability of class 1.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Mean cross-entropy plus `l2/2 * sum(w^2)`.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64], l2: f64) -> f64 {
        let data: f64 = xs.iter().zip(ys).map(|(x, &y)| bce_from_logit(self.logit(x), y)).sum::<f64>() / xs.len() as f64;
        data + 0.5 * l2 * self.weights.iter().flatten().map(|w| w * w).sum::<f64>()
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[f64], l2: f64) -> (f64, MlpParams) {
        let mut grad = MlpParams::zeros(&self.layer_dims).expect("dims already valid");
        let n = xs.len() as f64;
        let n_layers = self.weights.len();
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.forward_all(x);
            let z = acts[n_layers][0];
            loss += bce_from_logit(z, y);
            let mut delta = vec![(sigmoid(z) - y) / n];
            for l in (0..n_layers).rev() {
                let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
                let input = &acts[l];
                for o in 0..dout {
                    grad.biases[l][o] += delta[o];
                    let g = &mut grad.weights[l][o * din..(o + 1) * din];
                    for (gi, xi) in g.iter_mut().zip(input) {
                        *gi += delta[o] * xi;
                    }
                }
                if l > 0 {
                    let w = &self.weights[l];
                    delta = (0..din)
                        .map(|i| {
                            if input[i] <= 0.0 {
                                0.0
                            } else {
                                (0..dout).map(|o| w[o * din + i] * delta[o]).sum()
                            }
                        })
                        .collect();
                }
            }
        }
        loss /= n;
        if l2 > 0.0 {
            for (g, w) in grad.weights.iter_mut().zip(&self.weights) {
                for (gi, wi) in g.iter_mut().zip(w) {
                    *gi += l2 * wi;
                }
            }
            loss += 0.5 * l2 * self.weights.iter().flatten().map(|w| w * w).sum::<f64>();
        }
        (loss, grad)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.biases).flatten().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for x in v.iter_mut() {
                *x = *it.next().expect("flat length matches");
            }
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_u32::<LittleEndian>(self.layer_dims.len() as u32)?;
        for &d in &self.layer_dims {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for x in self.flat() {
            w.write_f64::<LittleEndian>(x)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let n = r.read_u32::<LittleEndian>()? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Format(format!("implausible layer count {n}")));
        }
        let dims = (0..n).map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize)).collect::<std::io::Result<Vec<_>>>()?;
        let mut p = MlpParams::zeros(&dims).map_err(|e| Error::Format(e.to_string()))?;
        let flat = (0..p.n_params()).map(|_| r.read_f64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?;
        p.set_flat(&flat);
        p.validate()?;
        Ok(p)
    }
}

/// Mini-batch training with Adam steps; shuffling and initialisation derive from `cfg.seed`.
pub fn train_mlp(
    layer_dims: &[usize],
    xs: &[Vec<f64>],
    ys: &[f64],
    cfg: &TrainConfig,
) -> Result<(MlpParams, TrainReport)> {
    cfg.validate()?;
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::DegenerateData(format!("{} inputs, {} labels", xs.len(), ys.len())));
    }
    let mut params = MlpParams::init(layer_dims, cfg.seed)?;
    if let Some(x) = xs.iter().find(|x| x.len() != params.input_dim()) {
        return Err(Error::ShapeMismatch { expected: params.input_dim(), got: x.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let np = params.n_params();
    let (mut m, mut v) = (vec![0.0; np], vec![0.0; np]);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size);
    let mut by = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            // Sorting makes a full batch independent of the shuffle.
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            for &i in &idx {
                bx.push(xs[i].clone());
                by.push(ys[i]);
            }
            let (_, grad) = params.loss_and_grad(&bx, &by, cfg.l2_penalty);
            step += 1;
            let mut flat = params.flat();
            let bc1 = 1.0 - b1.powi(step);
            let bc2 = 1.0 - b2.powi(step);
            for (i, g) in grad.flat().into_iter().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                flat[i] -= cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            }
            params.set_flat(&flat);
        }
    }
    let final_loss = params.loss(xs, ys, cfg.l2_penalty);
    let correct = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| (params.predict_proba(x) >= 0.5) == (y >= 0.5))
        .count();
    Ok((params, TrainReport { final_loss, train_accuracy: correct as f64 / xs.len() as f64 }))
}

/// Central-difference gradient of [`MlpParams::loss`], used to check backprop.
pub fn numeric_grad(p: &MlpParams, xs: &[Vec<f64>], ys: &[f64], l2: f64, h: f64) -> Vec<f64> {
    let base = p.flat();
    let mut probe = p.clone();
    (0..base.len())
        .map(|i| {
            let mut f = base.clone();
            f[i] = base[i] + h;
            probe.set_flat(&f);
            let up = probe.loss(xs, ys, l2);
            f[i] = base[i] - h;
            probe.set_flat(&f);
            let down = probe.loss(xs, ys, l2);
            (up - down) / (2.0 * h)
        })
        .collect()
}

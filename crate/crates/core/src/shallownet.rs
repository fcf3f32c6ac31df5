//! One-hidden-layer networks `x -> sum_j alpha_j act(beta_j . x + gamma_j) + alpha_0`
//! fitted by minibatch least squares.
//!
//! Parameters are stored flat as `[alpha_0, alpha_1..K, gamma_1..K, beta_1..K]`
//! with each `beta_j` a contiguous row of length `input_dim`. An affine input
//! and output standardization travels with the net and is applied only by
//! [`ShallowNet::predict`]; [`ShallowNet::forward`] is the bare formula.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative at `z`, given `a = apply(z)`. ReLU uses 0 at the kink.
    #[inline]
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Sigmoid),
            _ => Err(Error::Format(format!("unknown activation id {id}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(Error::Config(format!("unknown activation {s:?}"))),
        }
    }
}

/// Affine standardization: `x_in = (x - in_shift) / in_scale`,
/// `y = out_shift + out_scale * raw`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub in_shift: Vec<f64>,
    pub in_scale: Vec<f64>,
    pub out_shift: f64,
    pub out_scale: f64,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            in_shift: vec![0.0; dim],
            in_scale: vec![1.0; dim],
            out_shift: 0.0,
            out_scale: 1.0,
        }
    }

    /// Column means and standard deviations; constant columns get scale 1.
    pub fn fit(inputs: &[f64], targets: &[f64], dim: usize) -> Self {
        let m = targets.len().max(1) as f64;
        let mut shift = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for row in inputs.chunks_exact(dim) {
            for d in 0..dim {
                shift[d] += row[d];
            }
        }
        shift.iter_mut().for_each(|s| *s /= m);
        for row in inputs.chunks_exact(dim) {
            for d in 0..dim {
                sq[d] += (row[d] - shift[d]).powi(2);
            }
        }
        let scale = sq.iter().map(|s| guard_scale((s / m).sqrt())).collect();
        let out_shift = targets.iter().sum::<f64>() / m;
        let out_var = targets.iter().map(|t| (t - out_shift).powi(2)).sum::<f64>() / m;
        Self {
            in_shift: shift,
            in_scale: scale,
            out_shift,
            out_scale: guard_scale(out_var.sqrt()),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.in_shift.iter().all(|&s| s == 0.0)
            && self.in_scale.iter().all(|&s| s == 1.0)
            && self.out_shift == 0.0
            && self.out_scale == 1.0
    }
}

fn guard_scale(s: f64) -> f64 {
    if s.is_finite() && s > 1e-12 {
        s
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShallowNet {
    input_dim: usize,
    width: usize,
    activation: Activation,
    params: Vec<f64>,
    norm: Normalization,
    clamp: Option<(f64, f64)>,
}

/// `ceil(sqrt(M))` hidden units, so that width / M -> 0.
pub fn default_width(samples: usize) -> usize {
    ((samples as f64).sqrt().ceil() as usize).max(1)
}

impl ShallowNet {
    pub fn param_count(input_dim: usize, width: usize) -> usize {
        width * (2 + input_dim) + 1
    }

    /// All-zero parameters.
    pub fn zeros(input_dim: usize, width: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            width,
            activation,
            params: vec![0.0; Self::param_count(input_dim, width)],
            norm: Normalization::identity(input_dim),
            clamp: None,
        }
    }

    /// Random initialization scaled for standardized inputs.
    pub fn random(input_dim: usize, width: usize, activation: Activation, seed: u64) -> Self {
        let mut net = Self::zeros(input_dim, width, activation);
        let mut rng = rng::stream(seed, Purpose::NetInit, 0, 0);
        let in_gain = 1.0 / (input_dim.max(1) as f64).sqrt();
        let out_gain = 1.0 / (width as f64).sqrt();
        let k = width;
        for a in &mut net.params[1..1 + k] {
            let z: f64 = rng.sample(StandardNormal);
            *a = out_gain * z;
        }
        for g in &mut net.params[1 + k..1 + 2 * k] {
            let z: f64 = rng.sample(StandardNormal);
            *g = 0.5 * z;
        }
        for b in &mut net.params[1 + 2 * k..] {
            let z: f64 = rng.sample(StandardNormal);
            *b = in_gain * z;
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn set_normalization(&mut self, norm: Normalization) -> Result<()> {
        check_dim("normalization", self.input_dim, norm.in_shift.len())?;
        check_dim("normalization", self.input_dim, norm.in_scale.len())?;
        self.norm = norm;
        Ok(())
    }

    /// Optional clamp applied to [`predict`](Self::predict) outputs.
    pub fn set_output_clamp(&mut self, clamp: Option<(f64, f64)>) {
        self.clamp = clamp;
    }

    pub fn output_clamp(&self) -> Option<(f64, f64)> {
        self.clamp
    }

    pub fn alpha0(&self) -> f64 {
        self.params[0]
    }

    pub fn alpha(&self) -> &[f64] {
        &self.params[1..1 + self.width]
    }

    pub fn gamma(&self) -> &[f64] {
        &self.params[1 + self.width..1 + 2 * self.width]
    }

    pub fn beta(&self, j: usize) -> &[f64] {
        let start = 1 + 2 * self.width + j * self.input_dim;
        &self.params[start..start + self.input_dim]
    }

    /// Sets unit `j` to `(alpha_j, beta_j, gamma_j)`.
    pub fn set_unit(&mut self, j: usize, alpha: f64, beta: &[f64], gamma: f64) {
        assert_eq!(beta.len(), self.input_dim);
        let k = self.width;
        self.params[1 + j] = alpha;
        self.params[1 + k + j] = gamma;
        let start = 1 + 2 * k + j * self.input_dim;
        self.params[start..start + self.input_dim].copy_from_slice(beta);
    }

    pub fn set_alpha0(&mut self, value: f64) {
        self.params[0] = value;
    }

    /// Reorders hidden units; `perm[j]` is the old index of new unit `j`.
    pub fn permute_units(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for (j, &old) in perm.iter().enumerate() {
            out.set_unit(j, self.alpha()[old], self.beta(old), self.gamma()[old]);
        }
        out
    }

    /// `sum_j alpha_j act(beta_j . x + gamma_j) + alpha_0`.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        check_dim("network input", self.input_dim, input.len())?;
        Ok(self.forward_raw(input))
    }

    #[inline]
    fn forward_raw(&self, input: &[f64]) -> f64 {
        let (k, dim) = (self.width, self.input_dim);
        let alpha = &self.params[1..1 + k];
        let gamma = &self.params[1 + k..1 + 2 * k];
        let beta = &self.params[1 + 2 * k..];
        let mut out = self.params[0];
        for j in 0..k {
            let row = &beta[j * dim..(j + 1) * dim];
            let mut z = gamma[j];
            for d in 0..dim {
                z += row[d] * input[d];
            }
            out += alpha[j] * self.activation.apply(z);
        }
        out
    }

    /// Network output in original units: standardize, forward, rescale, clamp.
    pub fn predict(&self, input: &[f64]) -> f64 {
        debug_assert_eq!(input.len(), self.input_dim);
        let mut buf = [0.0f64; 64];
        let raw = if self.input_dim <= buf.len() {
            let scaled = &mut buf[..self.input_dim];
            self.standardize_into(input, scaled);
            self.forward_raw(scaled)
        } else {
            let mut scaled = vec![0.0; self.input_dim];
            self.standardize_into(input, &mut scaled);
            self.forward_raw(&scaled)
        };
        let y = self.norm.out_shift + self.norm.out_scale * raw;
        match self.clamp {
            Some((lo, hi)) => y.clamp(lo, hi),
            None => y,
        }
    }

    #[inline]
    fn standardize_into(&self, input: &[f64], out: &mut [f64]) {
        for d in 0..self.input_dim {
            out[d] = (input[d] - self.norm.in_shift[d]) / self.norm.in_scale[d];
        }
    }

    /// Gradient of `0.5 (forward(input) - target)^2` with respect to every
    /// parameter, in storage order. Returns `(loss, gradient)`.
    pub fn grad(&self, input: &[f64], target: f64) -> Result<(f64, Vec<f64>)> {
        check_dim("network input", self.input_dim, input.len())?;
        let mut g = vec![0.0; self.params.len()];
        let mut hidden = vec![0.0; 2 * self.width];
        let r = self.accumulate_grad(input, target, &mut g, &mut hidden);
        Ok((0.5 * r * r, g))
    }

    /// Adds the per-sample gradient into `g`; returns the residual.
    #[inline]
    fn accumulate_grad(&self, input: &[f64], target: f64, g: &mut [f64], scratch: &mut [f64]) -> f64 {
        let (k, dim) = (self.width, self.input_dim);
        let alpha = &self.params[1..1 + k];
        let gamma = &self.params[1 + k..1 + 2 * k];
        let beta = &self.params[1 + 2 * k..];
        let (zs, acts) = scratch.split_at_mut(k);
        let mut out = self.params[0];
        for j in 0..k {
            let row = &beta[j * dim..(j + 1) * dim];
            let mut z = gamma[j];
            for d in 0..dim {
                z += row[d] * input[d];
            }
            let a = self.activation.apply(z);
            zs[j] = z;
            acts[j] = a;
            out += alpha[j] * a;
        }
        let r = out - target;
        let (g0, rest) = g.split_at_mut(1);
        let (ga, rest) = rest.split_at_mut(k);
        let (gg, gb) = rest.split_at_mut(k);
        g0[0] += r;
        for j in 0..k {
            ga[j] += r * acts[j];
            let delta = r * alpha[j] * self.activation.slope(zs[j], acts[j]);
            gg[j] += delta;
            let grow = &mut gb[j * dim..(j + 1) * dim];
            for d in 0..dim {
                grow[d] += delta * input[d];
            }
        }
        r
    }

    const MAGIC: &'static [u8; 4] = b"MSNN";
    const VERSION: u32 = 1;

    /// Versioned flat file: dims, activation, clamp, normalization, then the
    /// parameters, all little-endian 64-bit where numeric.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(self.input_dim as u64).to_le_bytes())?;
        w.write_all(&(self.width as u64).to_le_bytes())?;
        w.write_all(&[self.activation.id()])?;
        match self.clamp {
            Some((lo, hi)) => {
                w.write_all(&[1])?;
                w.write_all(&lo.to_le_bytes())?;
                w.write_all(&hi.to_le_bytes())?;
            }
            None => w.write_all(&[0])?,
        }
        for v in self.norm.in_shift.iter().chain(&self.norm.in_scale) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.norm.out_shift.to_le_bytes())?;
        w.write_all(&self.norm.out_scale.to_le_bytes())?;
        for v in &self.params {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a network file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported network version {version}")));
        }
        let input_dim = read_u64(&mut r)? as usize;
        let width = read_u64(&mut r)? as usize;
        if input_dim == 0 || input_dim > 1 << 16 || width > 1 << 24 {
            return Err(Error::Format(format!("implausible dims {input_dim} x {width}")));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let activation = Activation::from_id(b1[0])?;
        r.read_exact(&mut b1)?;
        let clamp = match b1[0] {
            0 => None,
            1 => Some((read_f64(&mut r)?, read_f64(&mut r)?)),
            t => return Err(Error::Format(format!("bad clamp flag {t}"))),
        };
        let in_shift = (0..input_dim).map(|_| read_f64(&mut r)).collect::<Result<_>>()?;
        let in_scale = (0..input_dim).map(|_| read_f64(&mut r)).collect::<Result<_>>()?;
        let out_shift = read_f64(&mut r)?;
        let out_scale = read_f64(&mut r)?;
        let params = (0..Self::param_count(input_dim, width))
            .map(|_| read_f64(&mut r))
            .collect::<Result<_>>()?;
        Ok(Self {
            input_dim,
            width,
            activation,
            params,
            norm: Normalization {
                in_shift,
                in_scale,
                out_shift,
                out_scale,
            },
            clamp,
        })
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

impl Optimizer {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            _ => Err(Error::Config(format!("unknown optimizer {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Global gradient-norm clip.
    pub clip: Option<f64>,
    pub seed: u64,
    /// Stop when the best loss has not improved by this relative amount
    /// for `patience` consecutive epochs. Zero disables early stopping.
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 50,
            clip: Some(10.0),
            seed: 0,
            tolerance: 0.0,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip threshold {c} must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    /// Best parameters seen, including the starting point.
    pub net: ShallowNet,
    /// Training MSE of `net`, in original target units.
    pub mse: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Full-sample MSE after each epoch, starting with the initial net.
    pub history: Vec<f64>,
}

const GRAD_CHUNK: usize = 64;
const EVAL_CHUNK: usize = 1024;

/// Least-squares fit of `net` (with its current normalization) to
/// `(inputs, targets)`; `inputs` is row-major `[M][input_dim]`.
pub fn fit_lsq(net: ShallowNet, inputs: &[f64], targets: &[f64], cfg: &TrainConfig) -> Result<FitReport> {
    cfg.validate()?;
    let dim = net.input_dim;
    let m = targets.len();
    if m == 0 {
        return Err(Error::Config("cannot fit on an empty sample".into()));
    }
    check_dim("inputs", m * dim, inputs.len())?;

    let mut xs = vec![0.0; inputs.len()];
    for (src, dst) in inputs.chunks_exact(dim).zip(xs.chunks_exact_mut(dim)) {
        net.standardize_into(src, dst);
    }
    let ys: Vec<f64> = targets
        .iter()
        .map(|t| (t - net.norm.out_shift) / net.norm.out_scale)
        .collect();
    let to_original = net.norm.out_scale * net.norm.out_scale;

    let mse_of = |n: &ShallowNet| -> f64 {
        let parts: Vec<f64> = xs
            .par_chunks(EVAL_CHUNK * dim)
            .zip(ys.par_chunks(EVAL_CHUNK))
            .map(|(xc, yc)| {
                xc.chunks_exact(dim)
                    .zip(yc)
                    .map(|(x, y)| (n.forward_raw(x) - y).powi(2))
                    .sum::<f64>()
            })
            .collect();
        parts.iter().sum::<f64>() / m as f64
    };

    let mut current = net;
    let mut best = current.clone();
    let mut best_loss = mse_of(&current);
    if !best_loss.is_finite() {
        return Err(Error::Numeric(format!(
            "initial training loss is {best_loss}; inputs or targets not finite"
        )));
    }
    let mut history = vec![best_loss * to_original];
    let mut best_epoch = 0;
    let mut stale = 0;

    let n_params = current.params.len();
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut t = 0i32;
    let mut order: Vec<usize> = (0..m).collect();
    let batch = cfg.batch_size.min(m);
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        let mut shuffle = rng::stream(cfg.seed, Purpose::Shuffle, 0, epoch as u64);
        order.shuffle(&mut shuffle);
        for idx in order.chunks(batch) {
            let parts: Vec<Vec<f64>> = idx
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut g = vec![0.0; n_params];
                    let mut scratch = vec![0.0; 2 * current.width];
                    for &s in chunk {
                        current.accumulate_grad(&xs[s * dim..(s + 1) * dim], ys[s], &mut g, &mut scratch);
                    }
                    g
                })
                .collect();
            let mut grad = vec![0.0; n_params];
            for part in &parts {
                for (a, b) in grad.iter_mut().zip(part) {
                    *a += b;
                }
            }
            let inv = 1.0 / idx.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            if let Some(limit) = cfg.clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > limit {
                    let s = limit / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            t += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in current.params.iter_mut().zip(&grad) {
                        *p -= cfg.learning_rate * g;
                    }
                }
                Optimizer::Adam => {
                    let c1 = 1.0 - b1.powi(t);
                    let c2 = 1.0 - b2.powi(t);
                    for j in 0..n_params {
                        let g = grad[j];
                        m1[j] = b1 * m1[j] + (1.0 - b1) * g;
                        m2[j] = b2 * m2[j] + (1.0 - b2) * g * g;
                        let step = (m1[j] / c1) / ((m2[j] / c2).sqrt() + eps);
                        current.params[j] -= cfg.learning_rate * step;
                    }
                }
            }
        }
        epochs_run = epoch;
        let loss = mse_of(&current);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training loss became {loss} at epoch {epoch} (learning rate {} too high?)",
                cfg.learning_rate
            )));
        }
        history.push(loss * to_original);
        if loss < best_loss * (1.0 - cfg.tolerance) {
            stale = 0;
        } else {
            stale += 1;
        }
        if loss < best_loss {
            best_loss = loss;
            best.params.copy_from_slice(&current.params);
            best_epoch = epoch;
        }
        if cfg.tolerance > 0.0 && stale >= cfg.patience {
            break;
        }
    }

    Ok(FitReport {
        net: best,
        mse: best_loss * to_original,
        epochs_run,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_network_ignores_input() {
        let mut net = ShallowNet::zeros(3, 4, Activation::Tanh);
        net.set_alpha0(2.5);
        assert_eq!(net.forward(&[1.0, -7.0, 3.0]).unwrap(), 2.5);
        assert_eq!(net.forward(&[0.0; 3]).unwrap(), 2.5);
    }

    #[test]
    fn single_tanh_unit() {
        let mut net = ShallowNet::zeros(3, 1, Activation::Tanh);
        net.set_unit(0, 1.0, &[1.0, 0.0, 0.0], 0.0);
        assert_eq!(net.forward(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((net.forward(&[1.0, 0.0, 0.0]).unwrap() - 0.761_594_155_955_764_9).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let net = ShallowNet::zeros(3, 2, Activation::Relu);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn param_count_formula() {
        let net = ShallowNet::random(10, 7, Activation::Sigmoid, 1);
        assert_eq!(net.params().len(), 7 * 12 + 1);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let net = ShallowNet::random(4, 5, Activation::Tanh, 3);
        let x = [0.1, -0.4, 0.9, 2.0];
        let y = net.forward(&x).unwrap();
        let (loss, g) = net.grad(&x, y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_net_bias_gradient() {
        let mut net = ShallowNet::zeros(2, 3, Activation::Tanh);
        net.set_alpha0(1.5);
        let (_, g) = net.grad(&[0.3, 0.2], 4.0).unwrap();
        assert_eq!(g[0], 1.5 - 4.0);
    }

    #[test]
    fn permuting_units_keeps_output_bit_identical() {
        let net = ShallowNet::random(3, 4, Activation::Tanh, 8);
        let perm = [2, 0, 3, 1];
        let other = net.permute_units(&perm);
        let x = [0.3, -1.2, 0.8];
        let (a, b) = (net.forward(&x).unwrap(), other.forward(&x).unwrap());
        assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        // The sum is reassociated, so bit-identity holds per unit.
        let contribution = |n: &ShallowNet, j: usize| {
            let z = n.gamma()[j] + n.beta(j).iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
            n.alpha()[j] * n.activation().apply(z)
        };
        for (j, &old) in perm.iter().enumerate() {
            assert_eq!(contribution(&other, j).to_bits(), contribution(&net, old).to_bits());
        }
    }

    #[test]
    fn serialization_round_trip_is_bit_exact() {
        let mut net = ShallowNet::random(5, 6, Activation::Sigmoid, 4);
        net.set_normalization(Normalization {
            in_shift: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            in_scale: vec![1.5, 2.0, 0.25, 1.0, 3.0],
            out_shift: -0.7,
            out_scale: 12.5,
        })
        .unwrap();
        net.set_output_clamp(Some((0.0, 9.0)));
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        let back = ShallowNet::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, net);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn divergent_training_aborts() {
        let net = ShallowNet::random(1, 8, Activation::Relu, 2);
        let xs: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * 1e3).collect();
        let cfg = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 1e6,
            clip: None,
            epochs: 50,
            ..TrainConfig::default()
        };
        assert!(matches!(fit_lsq(net, &xs, &ys, &cfg), Err(Error::Numeric(_))));
    }
}

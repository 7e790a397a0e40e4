//! Pose codec: a 10–6–2–6–10 variational autoencoder trained from scratch
//! with hand-written backpropagation.
//!
//! The encoder trunk (ReLU) feeds two linear heads, the latent mean and the
//! latent log standard deviation. The decoder is ReLU then tanh, so decoded
//! poses always land in (−1, 1), i.e. (−180°, 180°) after denormalization.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kinematics::{JointAngles, PoseDataset, NUM_JOINTS};
use crate::textfmt::{fmt_f64, parse_row};

pub const POSE_DIM: usize = NUM_JOINTS;
pub const HIDDEN_DIM: usize = 6;
pub const LATENT_DIM: usize = 2;

/// Joint angles scaled by 1/180 into [−1, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedPose(pub [f64; POSE_DIM]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentPose(pub [f64; LATENT_DIM]);

impl LatentPose {
    pub fn distance(&self, other: &LatentPose) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn normalize(pose: &JointAngles) -> Result<NormalizedPose> {
    for (j, &v) in pose.0.iter().enumerate() {
        if !(-180.0..=180.0).contains(&v) {
            return Err(Error::Domain(format!(
                "joint {j} = {v}° cannot be normalized (outside [-180, 180])"
            )));
        }
    }
    Ok(NormalizedPose(pose.0.map(|v| v / 180.0)))
}

pub fn denormalize(pose: &NormalizedPose) -> JointAngles {
    JointAngles(pose.0.map(|v| v * 180.0))
}

/// Fully connected layer, weights row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn uniform_fan_in<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        let mut d = Dense::zeros(rows, cols);
        for w in &mut d.weights {
            *w = rng.random_range(-bound..bound);
        }
        d
    }

    #[inline]
    pub fn w(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            *o = self.bias[r] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Accumulates `dW += g xᵀ`, `db += g` and writes `dx = Wᵀ g`.
    fn backward(&self, x: &[f64], g: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        for (r, &gr) in g.iter().enumerate() {
            grad.bias[r] += gr;
            let row = &mut grad.weights[r * self.cols..(r + 1) * self.cols];
            for (gw, &xc) in row.iter_mut().zip(x) {
                *gw += gr * xc;
            }
        }
        if let Some(dx) = dx {
            for (c, d) in dx.iter_mut().enumerate() {
                *d = g.iter().enumerate().map(|(r, &gr)| self.w(r, c) * gr).sum();
            }
        }
    }

    fn frobenius(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Encoder trunk, mean and log-std heads, decoder hidden and output layers.
/// Also used as the container for gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeParams {
    pub trunk: Dense,
    pub mean: Dense,
    pub log_std: Dense,
    pub dec_hidden: Dense,
    pub dec_out: Dense,
}

pub const TENSOR_NAMES: [&str; 5] = ["trunk", "mean", "log_std", "dec_hidden", "dec_out"];

impl VaeParams {
    pub fn zeros() -> Self {
        VaeParams {
            trunk: Dense::zeros(HIDDEN_DIM, POSE_DIM),
            mean: Dense::zeros(LATENT_DIM, HIDDEN_DIM),
            log_std: Dense::zeros(LATENT_DIM, HIDDEN_DIM),
            dec_hidden: Dense::zeros(HIDDEN_DIM, LATENT_DIM),
            dec_out: Dense::zeros(POSE_DIM, HIDDEN_DIM),
        }
    }

    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VaeParams {
            trunk: Dense::uniform_fan_in(HIDDEN_DIM, POSE_DIM, &mut rng),
            mean: Dense::uniform_fan_in(LATENT_DIM, HIDDEN_DIM, &mut rng),
            log_std: Dense::uniform_fan_in(LATENT_DIM, HIDDEN_DIM, &mut rng),
            dec_hidden: Dense::uniform_fan_in(HIDDEN_DIM, LATENT_DIM, &mut rng),
            dec_out: Dense::uniform_fan_in(POSE_DIM, HIDDEN_DIM, &mut rng),
        }
    }

    pub fn layers(&self) -> [&Dense; 5] {
        [
            &self.trunk,
            &self.mean,
            &self.log_std,
            &self.dec_hidden,
            &self.dec_out,
        ]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 5] {
        [
            &mut self.trunk,
            &mut self.mean,
            &mut self.log_std,
            &mut self.dec_hidden,
            &mut self.dec_out,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters in a fixed order (per layer: weights then bias).
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers()
            .into_iter()
            .flat_map(|l| l.values().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter();
        for layer in self.layers_mut() {
            for v in layer.values_mut() {
                *v = *it.next().unwrap();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.values().all(|v| v.is_finite()))
    }

    /// Upper bound on the Lipschitz constant of [`decode`] (Euclidean norms):
    /// ReLU and tanh are 1-Lipschitz, so the product of Frobenius norms bounds it.
    pub fn decoder_lipschitz_bound(&self) -> f64 {
        self.dec_hidden.frobenius() * self.dec_out.frobenius()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("POSEVAE v1\n");
        for (name, layer) in TENSOR_NAMES.iter().zip(self.layers()) {
            writeln!(out, "{name}.weight {} {}", layer.rows, layer.cols).unwrap();
            for r in 0..layer.rows {
                let row: Vec<String> = (0..layer.cols).map(|c| fmt_f64(layer.w(r, c))).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
            writeln!(out, "{name}.bias 1 {}", layer.rows).unwrap();
            let row: Vec<String> = layer.bias.iter().map(|&b| fmt_f64(b)).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "POSEVAE v1")) => {}
            _ => return Err(Error::parse(path, 1, "expected `POSEVAE v1` header")),
        }
        let mut params = VaeParams::zeros();
        let mut read_block = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            let (i, header) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("missing block {name}")))?;
            let expected = format!("{name} {rows} {cols}");
            if header.trim() != expected {
                return Err(Error::parse(path, i + 1, format!("expected `{expected}`")));
            }
            let mut vals = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (i, line) = lines
                    .next()
                    .ok_or_else(|| Error::parse(path, 0, format!("truncated block {name}")))?;
                let row = parse_row(line, cols).map_err(|m| Error::parse(path, i + 1, m))?;
                vals.extend(row);
            }
            Ok(vals)
        };
        for (name, layer) in TENSOR_NAMES.iter().zip(params.layers_mut()) {
            layer.weights = read_block(&format!("{name}.weight"), layer.rows, layer.cols)?;
            layer.bias = read_block(&format!("{name}.bias"), 1, layer.rows)?;
        }
        if !params.is_finite() {
            return Err(Error::parse(path, 0, "non-finite weight"));
        }
        Ok(params)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Latent mean and log standard deviation. `H(p)` is the mean.
pub fn encode(params: &VaeParams, pose: &NormalizedPose) -> (LatentPose, LatentPose) {
    let mut h = [0.0; HIDDEN_DIM];
    params.trunk.forward(&pose.0, &mut h);
    let h = h.map(relu);
    let mut m = [0.0; LATENT_DIM];
    let mut s = [0.0; LATENT_DIM];
    params.mean.forward(&h, &mut m);
    params.log_std.forward(&h, &mut s);
    (LatentPose(m), LatentPose(s))
}

pub fn encode_mean(params: &VaeParams, pose: &NormalizedPose) -> LatentPose {
    encode(params, pose).0
}

pub fn decode(params: &VaeParams, z: &LatentPose) -> NormalizedPose {
    let mut g = [0.0; HIDDEN_DIM];
    params.dec_hidden.forward(&z.0, &mut g);
    let g = g.map(relu);
    let mut y = [0.0; POSE_DIM];
    params.dec_out.forward(&g, &mut y);
    NormalizedPose(y.map(f64::tanh))
}

/// KL(N(m, e^{2s}) ‖ N(0, 1)) for one latent dimension.
pub fn kl_term(mean: f64, log_std: f64) -> f64 {
    0.5 * (mean * mean + (2.0 * log_std).exp() - 1.0 - 2.0 * log_std)
}

/// Loss and gradient for one minibatch given the reparameterization noise
/// (one `[f64; LATENT_DIM]` per example).
///
/// loss = mean over batch of `Σ (y − x)² + β Σ KL`.
pub fn loss_and_grad(
    params: &VaeParams,
    batch: &[NormalizedPose],
    noise: &[[f64; LATENT_DIM]],
    beta: f64,
) -> (f64, VaeParams) {
    assert!(!batch.is_empty());
    assert_eq!(batch.len(), noise.len());
    let inv_b = 1.0 / batch.len() as f64;
    let mut grad = VaeParams::zeros();
    let mut total = 0.0;

    for (x, eta) in batch.iter().zip(noise) {
        let x = &x.0;
        // forward
        let mut pre1 = [0.0; HIDDEN_DIM];
        params.trunk.forward(x, &mut pre1);
        let h = pre1.map(relu);
        let mut m = [0.0; LATENT_DIM];
        let mut s = [0.0; LATENT_DIM];
        params.mean.forward(&h, &mut m);
        params.log_std.forward(&h, &mut s);
        let sigma = s.map(f64::exp);
        let z: [f64; LATENT_DIM] = std::array::from_fn(|i| m[i] + sigma[i] * eta[i]);
        let mut pre3 = [0.0; HIDDEN_DIM];
        params.dec_hidden.forward(&z, &mut pre3);
        let g = pre3.map(relu);
        let mut pre4 = [0.0; POSE_DIM];
        params.dec_out.forward(&g, &mut pre4);
        let y = pre4.map(f64::tanh);

        let recon: f64 = y.iter().zip(x).map(|(y, x)| (y - x) * (y - x)).sum();
        let kl: f64 = (0..LATENT_DIM).map(|i| kl_term(m[i], s[i])).sum();
        total += recon + beta * kl;

        // backward
        let d_pre4: [f64; POSE_DIM] =
            std::array::from_fn(|j| 2.0 * (y[j] - x[j]) * inv_b * (1.0 - y[j] * y[j]));
        let mut d_g = [0.0; HIDDEN_DIM];
        params
            .dec_out
            .backward(&g, &d_pre4, &mut grad.dec_out, Some(&mut d_g));
        let d_pre3: [f64; HIDDEN_DIM] =
            std::array::from_fn(|k| if pre3[k] > 0.0 { d_g[k] } else { 0.0 });
        let mut d_z = [0.0; LATENT_DIM];
        params
            .dec_hidden
            .backward(&z, &d_pre3, &mut grad.dec_hidden, Some(&mut d_z));
        let d_m: [f64; LATENT_DIM] = std::array::from_fn(|i| d_z[i] + beta * inv_b * m[i]);
        let d_s: [f64; LATENT_DIM] = std::array::from_fn(|i| {
            d_z[i] * sigma[i] * eta[i] + beta * inv_b * (sigma[i] * sigma[i] - 1.0)
        });
        let mut d_h_m = [0.0; HIDDEN_DIM];
        let mut d_h_s = [0.0; HIDDEN_DIM];
        params
            .mean
            .backward(&h, &d_m, &mut grad.mean, Some(&mut d_h_m));
        params
            .log_std
            .backward(&h, &d_s, &mut grad.log_std, Some(&mut d_h_s));
        let d_pre1: [f64; HIDDEN_DIM] = std::array::from_fn(|k| {
            if pre1[k] > 0.0 {
                d_h_m[k] + d_h_s[k]
            } else {
                0.0
            }
        });
        params.trunk.backward(x, &d_pre1, &mut grad.trunk, None);
    }
    (total * inv_b, grad)
}

/// Loss only, for the same fixed noise.
pub fn loss(
    params: &VaeParams,
    batch: &[NormalizedPose],
    noise: &[[f64; LATENT_DIM]],
    beta: f64,
) -> f64 {
    let mut total = 0.0;
    for (x, eta) in batch.iter().zip(noise) {
        let (m, s) = encode(params, x);
        let z = LatentPose(std::array::from_fn(|i| m.0[i] + s.0[i].exp() * eta[i]));
        let y = decode(params, &z);
        let recon: f64 = y.0.iter().zip(&x.0).map(|(y, x)| (y - x) * (y - x)).sum();
        let kl: f64 = (0..LATENT_DIM).map(|i| kl_term(m.0[i], s.0[i])).sum();
        total += recon + beta * kl;
    }
    total / batch.len() as f64
}

/// Draws fresh reparameterization noise and returns loss and gradient.
pub fn vae_loss<R: Rng>(
    params: &VaeParams,
    batch: &[NormalizedPose],
    beta: f64,
    rng: &mut R,
) -> (f64, VaeParams) {
    let noise: Vec<[f64; LATENT_DIM]> = batch
        .iter()
        .map(|_| std::array::from_fn(|_| rng.sample(StandardNormal)))
        .collect();
    loss_and_grad(params, batch, &noise, beta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            beta: 3e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean per-example training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub batch_size: usize,
    /// Mean absolute reconstruction error through the mean head, normalized units.
    pub test_mae: f64,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "epochs {}", self.epoch_losses.len()).unwrap();
        writeln!(out, "batch_size {}", self.batch_size).unwrap();
        writeln!(out, "train_size {}", self.train_size).unwrap();
        writeln!(out, "test_size {}", self.test_size).unwrap();
        for (i, l) in self.epoch_losses.iter().enumerate() {
            writeln!(out, "epoch {} loss {}", i + 1, fmt_f64(*l)).unwrap();
        }
        writeln!(out, "test_mae {}", fmt_f64(self.test_mae)).unwrap();
        out
    }
}

/// Split sizes for a dataset of `n` poses: five parts training to one part test.
pub fn split_sizes(n: usize) -> (usize, usize) {
    let test = n / 6;
    (n - test, test)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

pub fn reconstruction_mae(params: &VaeParams, poses: &[NormalizedPose]) -> f64 {
    if poses.is_empty() {
        return 0.0;
    }
    let total: f64 = poses
        .iter()
        .map(|x| {
            let y = decode(params, &encode_mean(params, x));
            y.0.iter()
                .zip(&x.0)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .sum();
    total / (poses.len() * POSE_DIM) as f64
}

pub fn train_vae(dataset: &PoseDataset, config: &VaeConfig) -> Result<(VaeParams, TrainReport)> {
    if config.batch_size == 0 || dataset.len() < config.batch_size {
        return Err(Error::Domain(format!(
            "dataset of {} poses is smaller than batch size {}",
            dataset.len(),
            config.batch_size
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut all: Vec<NormalizedPose> =
        dataset.poses.iter().map(normalize).collect::<Result<_>>()?;
    all.shuffle(&mut rng);
    let (train_size, test_size) = split_sizes(all.len());
    let test = all.split_off(train_size);
    let mut train = all;

    let mut params = VaeParams::init(rng.random());
    let mut flat = params.to_flat();
    let mut adam = Adam::new(flat.len(), config.learning_rate);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        train.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in train.chunks(config.batch_size) {
            let (l, grad) = vae_loss(&params, batch, config.beta, &mut rng);
            if !l.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    loss: l,
                });
            }
            sum += l * batch.len() as f64;
            adam.step(&mut flat, &grad.to_flat());
            params.set_flat(&flat);
            step += 1;
        }
        epoch_losses.push(sum / train.len() as f64);
    }

    let report = TrainReport {
        test_mae: reconstruction_mae(&params, &test),
        epoch_losses,
        train_size,
        test_size,
        batch_size: config.batch_size,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(seed: u64) -> VaeParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = VaeParams::zeros();
        let flat: Vec<f64> = (0..p.num_params())
            .map(|_| rng.random_range(-0.8..0.8))
            .collect();
        p.set_flat(&flat);
        p
    }

    fn matvec(w: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(b)
            .map(|(row, b)| b + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    fn rows(d: &Dense) -> Vec<Vec<f64>> {
        d.weights.chunks(d.cols).map(|c| c.to_vec()).collect()
    }

    #[test]
    fn normalize_endpoints_and_errors() {
        let mut p = JointAngles::ZERO;
        p.0[0] = 180.0;
        p.0[1] = -180.0;
        let n = normalize(&p).unwrap();
        assert_eq!(n.0[0], 1.0);
        assert_eq!(n.0[1], -1.0);
        assert_eq!(n.0[2], 0.0);
        p.0[3] = 181.0;
        assert!(normalize(&p).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = VaeParams::zeros();
        let x = NormalizedPose([0.3; POSE_DIM]);
        let (m, s) = encode(&p, &x);
        assert_eq!(m.0, [0.0; 2]);
        assert_eq!(s.0, [0.0; 2]);
        assert_eq!(decode(&p, &LatentPose([1.5, -2.0])).0, [0.0; POSE_DIM]);
    }

    #[test]
    fn forward_matches_matrix_oracle() {
        let p = small_params(3);
        let x: Vec<f64> = (0..POSE_DIM).map(|i| (i as f64 - 4.5) / 10.0).collect();
        let h: Vec<f64> = matvec(&rows(&p.trunk), &p.trunk.bias, &x)
            .into_iter()
            .map(|v| if v > 0.0 { v } else { 0.0 })
            .collect();
        let m = matvec(&rows(&p.mean), &p.mean.bias, &h);
        let s = matvec(&rows(&p.log_std), &p.log_std.bias, &h);
        let xin = NormalizedPose(std::array::from_fn(|i| x[i]));
        let (em, es) = encode(&p, &xin);
        for i in 0..2 {
            assert!((em.0[i] - m[i]).abs() < 1e-14);
            assert!((es.0[i] - s[i]).abs() < 1e-14);
        }
        let z = [0.7, -0.4];
        let g: Vec<f64> = matvec(&rows(&p.dec_hidden), &p.dec_hidden.bias, &z)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let y: Vec<f64> = matvec(&rows(&p.dec_out), &p.dec_out.bias, &g)
            .into_iter()
            .map(|v| v.tanh())
            .collect();
        let dy = decode(&p, &LatentPose(z));
        for j in 0..POSE_DIM {
            assert!((dy.0[j] - y[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(kl_term(0.0, 0.0), 0.0);
        assert!((kl_term(1.0, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        // zero network decodes to the zero pose, which is then exact
        let p = VaeParams::zeros();
        let batch = vec![NormalizedPose([0.0; POSE_DIM]); 3];
        let noise = vec![[0.3, -1.2]; 3];
        let (l, g) = loss_and_grad(&p, &batch, &noise, 1.0);
        assert_eq!(l, 0.0);
        assert!(g.to_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..10 {
            let p = small_params(100 + trial);
            let batch: Vec<NormalizedPose> = (0..4)
                .map(|_| NormalizedPose(std::array::from_fn(|_| rng.random_range(-0.9..0.9))))
                .collect();
            let noise: Vec<[f64; 2]> = (0..4)
                .map(|_| std::array::from_fn(|_| rng.sample(StandardNormal)))
                .collect();
            let (_, g) = loss_and_grad(&p, &batch, &noise, 1.0);
            let g = g.to_flat();
            let base = p.to_flat();
            let h = 1e-5;
            for i in 0..base.len() {
                let mut q = p.clone();
                let mut f = base.clone();
                f[i] += h;
                q.set_flat(&f);
                let lp = loss(&q, &batch, &noise, 1.0);
                f[i] -= 2.0 * h;
                q.set_flat(&f);
                let lm = loss(&q, &batch, &noise, 1.0);
                let fd = (lp - lm) / (2.0 * h);
                let denom = g[i].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (g[i] - fd).abs() / denom < 1e-4,
                    "trial {trial} param {i}: analytic {} fd {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn weights_text_round_trip() {
        let p = small_params(5);
        let text = p.to_text();
        let back = VaeParams::from_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_text(), text);
        assert!(VaeParams::from_text("POSEVAE v2\n", Path::new("mem")).is_err());
    }

    #[test]
    fn split_is_five_to_one() {
        assert_eq!(split_sizes(60_000), (50_000, 10_000));
        assert_eq!(split_sizes(600), (500, 100));
    }
}

//! Approximation error of the temporal encoder as its context width grows.
//!
//! A frozen random two-layer network on top of a frozen temporal convolution
//! serves as a smooth target. For every context width `d` the encoder
//! `ReLU(FC(mean_t Conv1d(X)))` plus a linear read-out is trained to regress
//! it from noisy samples, and the best validation error against the clean
//! target is recorded.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{least_squares_slope, ResultRow};
use crate::error::{Error, Result};
use crate::model::{temporal_context, ModelConfig, TemporalPromptParams};
use crate::ndmath::{adamw_step, AdamWConfig, AdamWState, Graph, MathError, NodeId, Tensor};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct CapacitySpec {
    /// Context widths to sweep, strictly increasing.
    pub dims: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Seed of the frozen target network.
    pub target_seed: u64,
    pub frames: usize,
    pub dim: usize,
    pub kernel: usize,
    /// Conv channels of the target and of the trained encoder.
    pub target_channels: usize,
    pub encoder_channels: usize,
    /// Hidden width of the target network.
    pub target_hidden: usize,
    pub outputs: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Standard deviation of the label noise on training targets.
    pub noise: f64,
    pub eval_every: usize,
}

impl Default for CapacitySpec {
    fn default() -> Self {
        Self {
            dims: vec![4, 8, 16, 32, 64],
            seeds: (0..5).collect(),
            target_seed: 17,
            frames: 8,
            dim: 8,
            kernel: 3,
            target_channels: 16,
            encoder_channels: 32,
            target_hidden: 48,
            outputs: 8,
            train_size: 2048,
            val_size: 512,
            steps: 800,
            batch_size: 32,
            lr: 1e-2,
            noise: 0.05,
            eval_every: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapacityCurve {
    pub dims: Vec<usize>,
    /// Seed-averaged best validation MSE per width (target variance is 1).
    pub errors: Vec<f64>,
    /// `per_seed[i][j]`: seed `i`, width `dims[j]`.
    pub per_seed: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    /// Least-squares slope of `ln err` against `ln d`.
    pub slope: f64,
    /// Largest observed `|φ(X) - φ(X')| / |X - X'|` over random pairs.
    pub lipschitz_estimate: f64,
    /// Variance of the label noise, the irreducible training loss.
    pub noise_floor: f64,
    /// `(seed, d)` cells whose validation error ended above where it started.
    pub non_convergent: Vec<(u64, usize)>,
}

impl CapacityCurve {
    /// Every error is at most the previous one.
    pub fn is_non_increasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for (i, &s) in self.seeds.iter().enumerate() {
            for (j, &d) in self.dims.iter().enumerate() {
                rows.push(ResultRow::new("capacity", Some(s), Some(d), "val_mse", self.per_seed[i][j]));
            }
        }
        for (j, &d) in self.dims.iter().enumerate() {
            rows.push(ResultRow::new("capacity", None, Some(d), "mean_val_mse", self.errors[j]));
        }
        rows.push(ResultRow::new("capacity", None, None, "loglog_slope", self.slope));
        rows.push(ResultRow::new("capacity", None, None, "lipschitz_estimate", self.lipschitz_estimate));
        rows.push(ResultRow::new("capacity", None, None, "noise_floor", self.noise_floor));
        rows
    }
}

fn gaussian_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape, data).expect("shape and length agree")
}

/// The frozen target `φ*(X) = W2 · ReLU(W1 · mean_t Conv1d(X) + b1) + b2`.
#[derive(Clone, Debug)]
struct Target {
    kernel: Tensor,
    kernel_bias: Tensor,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl Target {
    fn new(spec: &CapacitySpec) -> Result<Self> {
        let mut rng = seed::rng(spec.target_seed, "capacity-target");
        let (k, dim, cs, h, o) = (spec.kernel, spec.dim, spec.target_channels, spec.target_hidden, spec.outputs);
        let mut target = Self {
            kernel: gaussian_tensor(&mut rng, &[k, dim, cs], ((k * dim) as f64).sqrt().recip()),
            kernel_bias: Tensor::zeros(&[cs]),
            w1: gaussian_tensor(&mut rng, &[cs, h], (cs as f64).sqrt().recip() * 2.0),
            b1: gaussian_tensor(&mut rng, &[h], 0.5),
            w2: gaussian_tensor(&mut rng, &[h, o], (h as f64).sqrt().recip()),
            b2: Tensor::zeros(&[o]),
        };
        // Rescale so every output has zero mean and unit variance on the input law.
        let probe: Vec<Tensor> = (0..1024).map(|_| sample_input(&mut rng, spec)).collect();
        let outs = probe.iter().map(|x| target.eval(x)).collect::<Result<Vec<_>>>()?;
        let n = outs.len() as f64;
        for j in 0..o {
            let mean = outs.iter().map(|y| y.data()[j]).sum::<f64>() / n;
            let var = outs.iter().map(|y| (y.data()[j] - mean).powi(2)).sum::<f64>() / n;
            let scale = if var > 0.0 { var.sqrt().recip() } else { 1.0 };
            for i in 0..h {
                target.w2.data_mut()[i * o + j] *= scale;
            }
            target.b2.data_mut()[j] = -mean * scale;
        }
        Ok(target)
    }

    fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let [xk, k, kb, w1, b1, w2, b2] = [x, &self.kernel, &self.kernel_bias, &self.w1, &self.b1, &self.w2, &self.b2]
            .map(|t| g.constant(t.clone()));
        let conv = g.conv1d(xk, k, kb)?;
        let pooled = g.mean_axis(conv, 0)?;
        let hidden = g.affine(pooled, w1, b1)?;
        let hidden = g.relu(hidden)?;
        let out = g.affine(hidden, w2, b2)?;
        Ok(g.value(out).clone())
    }
}

fn sample_input(rng: &mut ChaCha8Rng, spec: &CapacitySpec) -> Tensor {
    gaussian_tensor(rng, &[spec.frames, spec.dim], 1.0)
}

struct Sample {
    x: Tensor,
    clean: Tensor,
    noisy: Tensor,
}

fn make_samples(spec: &CapacitySpec, target: &Target, n: usize, stream: &str) -> Result<Vec<Sample>> {
    let mut rng = seed::rng(spec.target_seed, stream);
    (0..n)
        .map(|_| {
            let x = sample_input(&mut rng, spec);
            let clean = target.eval(&x)?;
            let noise = gaussian_tensor(&mut rng, clean.shape(), spec.noise);
            let mut noisy = clean.clone();
            noisy.add_assign(&noise);
            Ok(Sample { x, clean, noisy })
        })
        .collect()
}

/// Encoder parameters used by the experiment: conv, FC and the read-out.
struct Encoder {
    params: TemporalPromptParams,
    head_w: Tensor,
    head_b: Tensor,
}

const TRAINED: [usize; 4] = [0, 1, 2, 3];

impl Encoder {
    fn new(spec: &CapacitySpec, d: usize, seed_value: u64) -> Result<Self> {
        let cfg = ModelConfig {
            frames: spec.frames,
            dim: spec.dim,
            ctx_dim: d,
            kernel: spec.kernel,
            conv_channels: spec.encoder_channels,
            seed: seed::derive(seed_value, d as u64),
            ..ModelConfig::default()
        };
        let params = TemporalPromptParams::init(&cfg)?;
        let mut rng = seed::rng_indexed(seed_value, "capacity-head", d as u64);
        let bound = (d as f64).sqrt().recip();
        let head = (0..d * spec.outputs).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(Self {
            params,
            head_w: Tensor::new(&[d, spec.outputs], head)?,
            head_b: Tensor::zeros(&[spec.outputs]),
        })
    }

    /// Predictions `[n, o]` for the given inputs; returns the graph, the
    /// trainable leaf ids and the output node.
    fn forward(&self, xs: &[&Tensor]) -> Result<(Graph, Vec<NodeId>, NodeId), MathError> {
        let mut g = Graph::new();
        let nodes = self.params.register(&mut g);
        let hw = g.param(self.head_w.clone());
        let hb = g.param(self.head_b.clone());
        let mut ctxs = Vec::with_capacity(xs.len());
        for x in xs {
            let xn = g.constant((*x).clone());
            ctxs.push(temporal_context(&mut g, &nodes, xn)?);
        }
        let c = g.stack(&ctxs)?;
        let out = g.affine(c, hw, hb)?;
        let all = nodes.as_array();
        let mut leaves: Vec<NodeId> = TRAINED.iter().map(|&i| *all[i]).collect();
        leaves.extend([hw, hb]);
        Ok((g, leaves, out))
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .params
            .as_array_mut()
            .into_iter()
            .enumerate()
            .filter(|(i, _)| TRAINED.contains(i))
            .map(|(_, t)| t)
            .collect();
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    fn mse(&self, samples: &[Sample]) -> Result<f64> {
        let xs: Vec<&Tensor> = samples.iter().map(|s| &s.x).collect();
        let (mut g, _, out) = self.forward(&xs)?;
        let target = stack_rows(samples.iter().map(|s| &s.clean))?;
        let loss = g.mse(out, target)?;
        Ok(g.value(loss).item())
    }
}

fn stack_rows<'a>(rows: impl Iterator<Item = &'a Tensor>) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = rows.map(|t| t.data().to_vec()).collect();
    Ok(Tensor::from_rows(&rows)?)
}

fn train_cell(spec: &CapacitySpec, train: &[Sample], val: &[Sample], seed_value: u64, d: usize) -> Result<(f64, bool)> {
    let mut enc = Encoder::new(spec, d, seed_value)?;
    let adam = AdamWConfig {
        lr: spec.lr,
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let mut states: Vec<AdamWState> = enc.tensors_mut().iter().map(|t| AdamWState::new(t.shape(), adam)).collect();
    let initial = enc.mse(val)?;
    let mut best = initial;
    let mut last = initial;
    let mut rng = seed::rng_indexed(seed_value, "capacity-batches", d as u64);
    for step in 0..spec.steps {
        let idx = rand::seq::index::sample(&mut rng, train.len(), spec.batch_size.min(train.len()));
        let batch: Vec<&Sample> = idx.iter().map(|i| &train[i]).collect();
        let xs: Vec<&Tensor> = batch.iter().map(|s| &s.x).collect();
        let (mut g, leaves, out) = enc.forward(&xs)?;
        let loss = g.mse(out, stack_rows(batch.iter().map(|s| &s.noisy))?)?;
        g.backward(loss)?;
        // Cosine decay keeps the late steps from bouncing around the optimum.
        let progress = step as f64 / spec.steps as f64;
        let lr = spec.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        for ((t, st), &leaf) in enc.tensors_mut().into_iter().zip(states.iter_mut()).zip(&leaves) {
            st.config.lr = lr;
            adamw_step(t, g.grad(leaf), st)?;
        }
        if (step + 1) % spec.eval_every == 0 || step + 1 == spec.steps {
            last = enc.mse(val)?;
            if !last.is_finite() {
                return Err(Error::Numerical(format!("capacity run seed={seed_value} d={d} diverged")));
            }
            best = best.min(last);
        }
    }
    Ok((best, last > initial))
}

fn lipschitz_estimate(spec: &CapacitySpec, target: &Target) -> Result<f64> {
    let mut rng = seed::rng(spec.target_seed, "capacity-lipschitz");
    let mut worst: f64 = 0.0;
    for _ in 0..256 {
        let x = sample_input(&mut rng, spec);
        let delta = gaussian_tensor(&mut rng, x.shape(), 1e-3);
        let mut y = x.clone();
        y.add_assign(&delta);
        let (fx, fy) = (target.eval(&x)?, target.eval(&y)?);
        let num = fx.data().iter().zip(fy.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = delta.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    Ok(worst)
}

pub fn capacity_scaling_experiment(spec: &CapacitySpec) -> Result<CapacityCurve> {
    if spec.dims.len() < 3 {
        return Err(Error::Config(format!(
            "capacity sweep needs at least 3 widths, got {}",
            spec.dims.len()
        )));
    }
    if spec.dims.windows(2).any(|w| w[1] <= w[0]) || spec.dims[0] == 0 {
        return Err(Error::Config("capacity widths must be positive and strictly increasing".into()));
    }
    if spec.seeds.is_empty() || spec.steps == 0 || spec.batch_size == 0 || spec.eval_every == 0 {
        return Err(Error::Config("capacity sweep needs seeds, steps, a batch size and an eval interval".into()));
    }
    let target = Target::new(spec)?;
    let train = make_samples(spec, &target, spec.train_size, "capacity-train")?;
    let val = make_samples(spec, &target, spec.val_size, "capacity-val")?;

    let cells: Vec<(u64, usize)> = spec.seeds.iter().flat_map(|&s| spec.dims.iter().map(move |&d| (s, d))).collect();
    let results = cells
        .par_iter()
        .map(|&(s, d)| train_cell(spec, &train, &val, s, d))
        .collect::<Result<Vec<_>>>()?;

    let nd = spec.dims.len();
    let per_seed: Vec<Vec<f64>> = results.chunks(nd).map(|c| c.iter().map(|r| r.0).collect()).collect();
    let non_convergent = cells
        .iter()
        .zip(&results)
        .filter(|(_, r)| r.1)
        .map(|(&c, _)| c)
        .collect();
    let errors: Vec<f64> = (0..nd)
        .map(|j| per_seed.iter().map(|r| r[j]).sum::<f64>() / per_seed.len() as f64)
        .collect();
    let xs: Vec<f64> = spec.dims.iter().map(|&d| (d as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(CapacityCurve {
        dims: spec.dims.clone(),
        slope: least_squares_slope(&xs, &ys),
        errors,
        per_seed,
        seeds: spec.seeds.clone(),
        lipschitz_estimate: lipschitz_estimate(spec, &target)?,
        noise_floor: spec.noise * spec.noise,
        non_convergent,
    })
}

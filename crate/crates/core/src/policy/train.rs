//! Mini-batch Adam training with global-norm clipping and cosine decay.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bptt::{gradients_std, loss_std, standardize_sequence, StandardizedSeq, StdSeq};
use super::{policy_init, PolicyArch, PolicyParams};
use crate::error::{Error, Result};
use crate::normalize::TrainingSet;
use crate::types::TrainingSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub layers: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    /// Final learning rate as a fraction of the initial one (cosine schedule).
    pub final_lr_fraction: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Training window length in model steps; 0 trains on whole sequences.
    pub window: usize,
    pub grad_clip: f64,
    pub seed: u64,
    /// Sequences whose phase offset is `≡ stride − 1 (mod stride)` are held out; 0 disables.
    pub validation_stride: usize,
    pub eval_every: usize,
    /// Std of Gaussian noise added to standardized state inputs (not the label) during training.
    pub input_noise: f64,
    /// Std of Gaussian noise added to the standardized frequency label during training.
    pub label_noise: f64,
    /// Parameters from this many of the last evaluations are kept for
    /// closed-loop selection.
    pub snapshots: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 2,
            hidden: 64,
            learning_rate: 3e-3,
            final_lr_fraction: 0.05,
            steps: 1500,
            batch_size: 16,
            window: 200,
            grad_clip: 1.0,
            seed: 7,
            validation_stride: 10,
            eval_every: 100,
            input_noise: 0.3,
            label_noise: 1.5,
            snapshots: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::Config("policy needs at least one layer of nonzero width".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::Config("final_lr_fraction must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        for (name, v) in [("input_noise", self.input_noise), ("label_noise", self.label_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn arch(&self, input_dim: usize, output_dim: usize) -> PolicyArch {
        PolicyArch {
            layers: self.layers,
            hidden: self.hidden,
            input_dim,
            output_dim,
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("train config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn lr_at(&self, step: usize) -> f64 {
        let progress = if self.steps <= 1 {
            0.0
        } else {
            step as f64 / (self.steps - 1) as f64
        };
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (self.final_lr_fraction + (1.0 - self.final_lr_fraction) * cos)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation checkpoint (the last step without validation).
    pub params: PolicyParams,
    pub curve: Vec<LossPoint>,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub train_sequences: usize,
    pub val_sequences: usize,
    /// Oldest first, at most `snapshots` of them.
    pub snapshots: Vec<Snapshot>,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: usize,
    pub val_loss: f64,
    pub params: PolicyParams,
}

/// Mean squared standardized error over every output channel and step of the batch.
pub fn compute_loss(params: &PolicyParams, batch: &[&TrainingSequence]) -> Result<f64> {
    let (sse, count) = super::batch_loss(params, batch)?;
    if count == 0 {
        return Err(Error::invalid("loss of an empty batch"));
    }
    Ok(sse / count as f64)
}

/// Fresh parameters carrying the training set's standardization.
pub fn init_for_set(set: &TrainingSet, cfg: &TrainConfig) -> Result<PolicyParams> {
    let first = set
        .sequences
        .first()
        .ok_or_else(|| Error::invalid("empty training set"))?;
    let mut params = policy_init(cfg.arch(first.input_dim, first.output_dim), cfg.seed)?;
    params.input_stats = set.input_stats.clone();
    params.output_stats = set.output_stats.clone();
    Ok(params)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, w: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..w.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            w[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn split_validation(set: &TrainingSet, stride: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, o) in set.origins.iter().enumerate() {
        if stride > 1 && o.phase_offset % stride == stride - 1 {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    if train.is_empty() {
        std::mem::swap(&mut train, &mut val);
    }
    (train, val)
}

fn mean_loss(params: &PolicyParams, seqs: &[StdSeq]) -> f64 {
    let (sse, count) = loss_std(params, seqs);
    sse / count.max(1) as f64
}

/// Train `params` on `set`. Deterministic per `cfg.seed`.
pub fn train(params: PolicyParams, set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if set.sequences.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let (train_idx, val_idx) = split_validation(set, cfg.validation_stride);
    let std: Vec<StandardizedSeq> = set
        .sequences
        .iter()
        .map(|s| standardize_sequence(&params, s))
        .collect::<Result<_>>()?;
    let val_views: Vec<StdSeq> = val_idx.iter().map(|&i| std[i].view()).collect();
    let train_views: Vec<StdSeq> = train_idx.iter().map(|&i| std[i].view()).collect();
    let monitor: &[StdSeq] = if val_views.is_empty() { &train_views } else { &val_views };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a11);
    let mut params = params;
    let mut adam = Adam::new(params.weights.len());
    let mut curve = Vec::new();
    let initial_val_loss = mean_loss(&params, monitor);
    let mut best_val_loss = initial_val_loss;
    let mut best = params.clone();
    let mut snapshots = std::collections::VecDeque::with_capacity(cfg.snapshots);
    curve.push(LossPoint {
        step: 0,
        train_loss: initial_val_loss,
        val_loss: Some(initial_val_loss),
        learning_rate: cfg.lr_at(0),
    });
    let mut picked: Vec<StdSeq> = Vec::with_capacity(cfg.batch_size);
    let mut noisy: Vec<Vec<f64>> = vec![Vec::new(); cfg.batch_size];
    let di = params.arch.input_dim;
    for step in 0..cfg.steps {
        picked.clear();
        for _ in 0..cfg.batch_size {
            let s = &train_views[rng.gen_range(0..train_views.len())];
            if cfg.window == 0 || s.len <= cfg.window {
                picked.push(*s);
            } else {
                let start = rng.gen_range(0..=s.len - cfg.window);
                let dt = s.targets.len() / s.len;
                picked.push(StdSeq {
                    inputs: &s.inputs[start * di..(start + cfg.window) * di],
                    targets: &s.targets[start * dt..(start + cfg.window) * dt],
                    len: cfg.window,
                });
            }
        }
        let augment = cfg.input_noise > 0.0 || cfg.label_noise > 0.0;
        if augment {
            for (buf, s) in noisy.iter_mut().zip(&picked) {
                buf.clear();
                buf.extend_from_slice(s.inputs);
                // one label offset per sequence; the label sits in the last input column
                let label_shift = cfg.label_noise * rng.sample::<f64, _>(StandardNormal);
                for row in buf.chunks_exact_mut(di) {
                    for v in &mut row[..di - 1] {
                        *v += cfg.input_noise * rng.sample::<f64, _>(StandardNormal);
                    }
                    row[di - 1] += label_shift;
                }
            }
        }
        let batch: Vec<StdSeq> = if augment {
            picked
                .iter()
                .zip(&noisy)
                .map(|(s, buf)| StdSeq {
                    inputs: buf,
                    ..*s
                })
                .collect()
        } else {
            picked.clone()
        };
        let mut g = gradients_std(&params, &batch);
        let loss = g.loss();
        let scale = 1.0 / g.count.max(1) as f64;
        g.grad.iter_mut().for_each(|v| *v *= scale);
        let norm = g.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::TrainingFailure { step, loss });
        }
        if norm > cfg.grad_clip {
            let k = cfg.grad_clip / norm;
            g.grad.iter_mut().for_each(|v| *v *= k);
        }
        let lr = cfg.lr_at(step);
        adam.step(&mut params.weights, &g.grad, lr);

        let done = step + 1;
        let val_loss = if done % cfg.eval_every == 0 || done == cfg.steps {
            let v = mean_loss(&params, monitor);
            if !v.is_finite() {
                return Err(Error::TrainingFailure { step, loss: v });
            }
            if v < best_val_loss || val_views.is_empty() {
                best_val_loss = v;
                best.weights.clone_from(&params.weights);
            }
            if cfg.snapshots > 0 {
                if snapshots.len() == cfg.snapshots {
                    snapshots.pop_front();
                }
                snapshots.push_back(Snapshot {
                    step: done,
                    val_loss: v,
                    params: params.clone(),
                });
            }
            log::info!("step {done}: train {loss:.5} val {v:.5} lr {lr:.2e}");
            Some(v)
        } else {
            None
        };
        curve.push(LossPoint {
            step: done,
            train_loss: loss,
            val_loss,
            learning_rate: lr,
        });
    }
    Ok(TrainOutcome {
        params: best,
        curve,
        initial_val_loss,
        best_val_loss,
        train_sequences: train_idx.len(),
        val_sequences: val_idx.len(),
        snapshots: snapshots.into(),
    })
}

pub fn write_loss_curve(path: &Path, curve: &[LossPoint]) -> Result<()> {
    let mut out = String::from("step,train_loss,val_loss,learning_rate\n");
    for p in curve {
        let val = p.val_loss.map(|v| format!("{v:?}")).unwrap_or_default();
        out.push_str(&format!("{},{:?},{},{:?}\n", p.step, p.train_loss, val, p.learning_rate));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

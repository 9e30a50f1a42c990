//! Recurrent policy: stacked LSTM layers with a linear head, trained by
//! backpropagation through time.
//!
//! Inputs and outputs are standardized per channel; the statistics travel
//! with the parameters so a loaded model maps physical units to physical units.

mod bptt;
mod file;
mod train;

pub use bptt::{batch_gradients, batch_loss, policy_backward, BatchGradients};
pub use file::{load_model, save_model, ModelHeader, PolicyModel, TimeScaling, MODEL_FORMAT_VERSION};
pub use train::{compute_loss, init_for_set, train, write_loss_curve, LossPoint, Snapshot, TrainConfig, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel affine standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fit over row-major blocks `(data, width)`. Channels with (near) zero
    /// spread get unit scale so `std > 0` always holds.
    pub fn fit<'a>(blocks: impl Iterator<Item = (&'a [f64], usize)> + Clone) -> Result<Self> {
        let mut dim = None;
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        for (data, width) in blocks.clone() {
            match dim {
                None => {
                    dim = Some(width);
                    sum = vec![0.0; width];
                }
                Some(d) if d != width => return Err(Error::invalid("inconsistent channel widths")),
                _ => {}
            }
            for row in data.chunks_exact(width) {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
                count += 1;
            }
        }
        let dim = dim.ok_or_else(|| Error::invalid("no data to fit standardization"))?;
        if count == 0 {
            return Err(Error::invalid("no rows to fit standardization"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; dim];
        for (data, width) in blocks {
            for row in data.chunks_exact(width) {
                for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let s = (v / count as f64).sqrt();
                if s > 1e-9 * (1.0 + m.abs()) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.std) {
            *o = (v - m) / s;
        }
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.standardize_into(x, &mut out);
        out
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

/// Layer sizes of the recurrent policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyArch {
    pub layers: usize,
    pub hidden: usize,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl PolicyArch {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!("degenerate policy architecture {self:?}")));
        }
        Ok(())
    }

    /// Input width of layer `l` (external input for layer 0, hidden below otherwise).
    pub fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden
        }
    }

    /// Gate-weight columns of layer `l`: `[x; h]`.
    pub fn layer_width(&self, l: usize) -> usize {
        self.layer_input(l) + self.hidden
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden;
        (0..self.layers)
            .map(|l| 4 * h * (self.layer_width(l) + 1))
            .sum::<usize>()
            + self.output_dim * (h + 1)
    }

    pub(crate) fn layout(&self) -> Layout {
        let h = self.hidden;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let k = self.layer_width(l);
            let w = offset;
            offset += 4 * h * k;
            let b = offset;
            offset += 4 * h;
            layers.push(LayerOffsets { w, b, k, input: self.layer_input(l) });
        }
        let head_w = offset;
        offset += self.output_dim * h;
        let head_b = offset;
        offset += self.output_dim;
        debug_assert_eq!(offset, self.param_count());
        Layout { layers, head_w, head_b }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerOffsets {
    /// Start of the `4H × k` gate weights (rows: input, forget, cell, output gates).
    pub w: usize,
    pub b: usize,
    pub k: usize,
    pub input: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub layers: Vec<LayerOffsets>,
    pub head_w: usize,
    pub head_b: usize,
}

/// Weights plus the standardization used at the model boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub arch: PolicyArch,
    /// All weights, flat; see [`PolicyArch::param_count`] for the layout size.
    pub weights: Vec<f64>,
    pub input_stats: Standardizer,
    pub output_stats: Standardizer,
}

/// Recurrent state: per-layer hidden output `h` and cell `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl HiddenState {
    pub fn zeros(arch: &PolicyArch) -> Self {
        HiddenState {
            h: vec![vec![0.0; arch.hidden]; arch.layers],
            c: vec![vec![0.0; arch.hidden]; arch.layers],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(&self.c).flatten().all(|v| v.is_finite())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scaled-uniform initialization, deterministic per seed. Forget-gate biases start at 1.
pub fn policy_init(arch: PolicyArch, seed: u64) -> Result<PolicyParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0; arch.param_count()];
    let layout = arch.layout();
    let h = arch.hidden;
    for lo in &layout.layers {
        let bound = 1.0 / (lo.k as f64).sqrt();
        for w in &mut weights[lo.w..lo.w + 4 * h * lo.k] {
            *w = rng.gen_range(-bound..bound);
        }
        for b in &mut weights[lo.b + h..lo.b + 2 * h] {
            *b = 1.0;
        }
    }
    let bound = 1.0 / (h as f64).sqrt();
    for w in &mut weights[layout.head_w..layout.head_w + arch.output_dim * h] {
        *w = rng.gen_range(-bound..bound);
    }
    Ok(PolicyParams {
        arch,
        weights,
        input_stats: Standardizer::identity(arch.input_dim),
        output_stats: Standardizer::identity(arch.output_dim),
    })
}

/// One recurrent step on a standardized input; returns the standardized output and the new state.
pub fn policy_forward(params: &PolicyParams, hidden: &HiddenState, input: &[f64]) -> Result<(Vec<f64>, HiddenState)> {
    let arch = params.arch;
    if input.len() != arch.input_dim {
        return Err(Error::invalid(format!(
            "policy input has {} channels, expected {}",
            input.len(),
            arch.input_dim
        )));
    }
    if hidden.h.len() != arch.layers
        || hidden.c.len() != arch.layers
        || hidden.h.iter().chain(&hidden.c).any(|v| v.len() != arch.hidden)
    {
        return Err(Error::invalid("hidden state shape does not match the policy"));
    }
    let layout = arch.layout();
    let w = &params.weights;
    let hd = arch.hidden;
    let mut next = hidden.clone();
    let mut x: Vec<f64> = input.to_vec();
    let mut a = vec![0.0; 4 * hd];
    for (l, lo) in layout.layers.iter().enumerate() {
        let h_prev = &hidden.h[l];
        for (r, ar) in a.iter_mut().enumerate() {
            let row = &w[lo.w + r * lo.k..lo.w + (r + 1) * lo.k];
            let (rx, rh) = row.split_at(lo.input);
            *ar = w[lo.b + r] + dot(rx, &x) + dot(rh, h_prev);
        }
        let c_prev = &hidden.c[l];
        let (c_new, h_new) = (&mut next.c[l], &mut next.h[l]);
        for j in 0..hd {
            let i = sigmoid(a[j]);
            let f = sigmoid(a[hd + j]);
            let g = a[2 * hd + j].tanh();
            let o = sigmoid(a[3 * hd + j]);
            c_new[j] = f * c_prev[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        x.clone_from(h_new);
    }
    let out = (0..arch.output_dim)
        .map(|r| {
            let row = &w[layout.head_w + r * hd..layout.head_w + (r + 1) * hd];
            w[layout.head_b + r] + dot(row, &x)
        })
        .collect();
    Ok((out, next))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stateful wrapper mapping physical inputs to physical outputs.
#[derive(Clone, Debug)]
pub struct PolicyRunner<'a> {
    params: &'a PolicyParams,
    hidden: HiddenState,
    scratch: Vec<f64>,
}

impl<'a> PolicyRunner<'a> {
    pub fn new(params: &'a PolicyParams) -> Self {
        PolicyRunner {
            params,
            hidden: HiddenState::zeros(&params.arch),
            scratch: vec![0.0; params.arch.input_dim],
        }
    }

    pub fn step(&mut self, physical_input: &[f64]) -> Result<Vec<f64>> {
        if physical_input.len() != self.params.arch.input_dim {
            return Err(Error::invalid("policy input width mismatch"));
        }
        self.params
            .input_stats
            .standardize_into(physical_input, &mut self.scratch);
        let (out, hidden) = policy_forward(self.params, &self.hidden, &self.scratch)?;
        self.hidden = hidden;
        Ok(self.params.output_stats.destandardize(&out))
    }

    pub fn hidden(&self) -> &HiddenState {
        &self.hidden
    }
}

/// Offline autoregressive prediction: the first input comes from `initial`;
/// afterwards the predicted follower block (the first `input_dim − 1`
/// outputs) is fed back with the same frequency label.
pub fn autoregressive_predict(params: &PolicyParams, initial: &[f64], label: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    let arch = params.arch;
    let state_dim = arch.input_dim - 1;
    if arch.output_dim < state_dim {
        return Err(Error::invalid("policy output is narrower than its state input"));
    }
    let mut runner = PolicyRunner::new(params);
    let mut input = initial.to_vec();
    if input.len() != arch.input_dim {
        return Err(Error::invalid("initial input width mismatch"));
    }
    input[state_dim] = label;
    let mut outputs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let out = runner.step(&input)?;
        input[..state_dim].copy_from_slice(&out[..state_dim]);
        outputs.push(out);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn arch() -> PolicyArch {
        PolicyArch {
            layers: 2,
            hidden: 5,
            input_dim: 3,
            output_dim: 4,
        }
    }

    /// Straightforward per-gate LSTM written without the flat layout helpers.
    fn reference_step(p: &PolicyParams, h: &[Vec<f64>], c: &[Vec<f64>], x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let a = p.arch;
        let hd = a.hidden;
        let mut offset = 0;
        let mut inp = x.to_vec();
        let mut hs = Vec::new();
        let mut cs = Vec::new();
        for l in 0..a.layers {
            let n_in = inp.len();
            let k = n_in + hd;
            let wmat: Vec<Vec<f64>> = (0..4 * hd)
                .map(|r| p.weights[offset + r * k..offset + (r + 1) * k].to_vec())
                .collect();
            offset += 4 * hd * k;
            let bias = p.weights[offset..offset + 4 * hd].to_vec();
            offset += 4 * hd;
            let z: Vec<f64> = inp.iter().chain(h[l].iter()).copied().collect();
            let pre = |gate: usize, j: usize| -> f64 {
                let r = gate * hd + j;
                bias[r] + (0..k).map(|m| wmat[r][m] * z[m]).sum::<f64>()
            };
            let mut hn = vec![0.0; hd];
            let mut cn = vec![0.0; hd];
            for j in 0..hd {
                let ig = 1.0 / (1.0 + (-pre(0, j)).exp());
                let fg = 1.0 / (1.0 + (-pre(1, j)).exp());
                let gg = pre(2, j).tanh();
                let og = 1.0 / (1.0 + (-pre(3, j)).exp());
                cn[j] = fg * c[l][j] + ig * gg;
                hn[j] = og * cn[j].tanh();
            }
            inp = hn.clone();
            hs.push(hn);
            cs.push(cn);
        }
        let mut y = Vec::new();
        for r in 0..a.output_dim {
            let row = &p.weights[offset + r * hd..offset + (r + 1) * hd];
            let b = p.weights[offset + a.output_dim * hd + r];
            y.push(b + row.iter().zip(&inp).map(|(w, v)| w * v).sum::<f64>());
        }
        (y, hs, cs)
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(policy_init(arch(), 7).unwrap(), policy_init(arch(), 7).unwrap());
        assert_ne!(policy_init(arch(), 7).unwrap(), policy_init(arch(), 8).unwrap());
    }

    #[test]
    fn param_count_formula() {
        let a = PolicyArch {
            layers: 2,
            hidden: 32,
            input_dim: 7,
            output_dim: 12,
        };
        // layer 1: 4·32·(7+32+1), layer 2: 4·32·(32+32+1), head: 12·(32+1)
        assert_eq!(a.param_count(), 5120 + 8320 + 396);
        assert_eq!(policy_init(a, 0).unwrap().weights.len(), 13836);
    }

    #[test]
    fn zero_layers_is_config_error() {
        let a = PolicyArch { layers: 0, ..arch() };
        assert!(matches!(policy_init(a, 0), Err(Error::Config(_))));
    }

    #[test]
    fn forget_bias_is_one() {
        let p = policy_init(arch(), 1).unwrap();
        let lo = arch().layout();
        for l in &lo.layers {
            assert!(p.weights[l.b + 5..l.b + 10].iter().all(|b| *b == 1.0));
            assert!(p.weights[l.b..l.b + 5].iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn zero_network_outputs_head_bias() {
        let a = arch();
        let mut p = policy_init(a, 3).unwrap();
        p.weights.iter_mut().for_each(|w| *w = 0.0);
        let lo = a.layout();
        for (r, b) in p.weights[lo.head_b..lo.head_b + 4].iter_mut().enumerate() {
            *b = r as f64 - 1.5;
        }
        let (y, hs) = policy_forward(&p, &HiddenState::zeros(&a), &[0.3, -2.0, 1.0]).unwrap();
        assert_eq!(y, vec![-1.5, -0.5, 0.5, 1.5]);
        assert!(hs.h.iter().flatten().all(|v| *v == 0.0));
        assert!(hs.c.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let a = arch();
        let p = policy_init(a, 11).unwrap();
        let mut hidden = HiddenState::zeros(&a);
        let mut h = hidden.h.clone();
        let mut c = hidden.c.clone();
        for t in 0..20 {
            let x = [(t as f64 * 0.3).sin(), (t as f64 * 0.7).cos(), 0.5];
            let (y, nh) = policy_forward(&p, &hidden, &x).unwrap();
            let (yr, hr, cr) = reference_step(&p, &h, &c, &x);
            for (u, v) in y.iter().zip(&yr) {
                assert!((u - v).abs() < 1e-10);
            }
            hidden = nh;
            h = hr;
            c = cr;
            for l in 0..a.layers {
                for j in 0..a.hidden {
                    assert!((hidden.h[l][j] - h[l][j]).abs() < 1e-10);
                    assert!((hidden.c[l][j] - c[l][j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn repeated_input_converges() {
        let a = arch();
        let p = policy_init(a, 5).unwrap();
        let mut hidden = HiddenState::zeros(&a);
        let x = [0.2, -0.4, 1.0];
        let mut last = Vec::new();
        let mut delta = f64::INFINITY;
        for _ in 0..2000 {
            let (y, nh) = policy_forward(&p, &hidden, &x).unwrap();
            assert!(nh.h.iter().flatten().all(|v| v.abs() <= 1.0));
            if !last.is_empty() {
                delta = y.iter().zip(&last).map(|(a, b): (&f64, &f64)| (a - b).abs()).fold(0.0, f64::max);
            }
            last = y;
            hidden = nh;
        }
        assert!(delta < 1e-9, "{delta}");
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let a = arch();
        let p = policy_init(a, 1).unwrap();
        assert!(policy_forward(&p, &HiddenState::zeros(&a), &[0.0; 2]).is_err());
        let mut h = HiddenState::zeros(&a);
        h.h.pop();
        assert!(policy_forward(&p, &h, &[0.0; 3]).is_err());
    }

    #[test]
    fn standardizer_roundtrip() {
        let data = vec![1.0, 10.0, 3.0, 14.0, 5.0, 12.0, 7.0, 12.0];
        let s = Standardizer::fit(std::iter::once((data.as_slice(), 2))).unwrap();
        assert_eq!(s.mean, vec![4.0, 12.0]);
        for row in data.chunks(2) {
            let back = s.destandardize(&s.standardize(row));
            for (a, b) in back.iter().zip(row) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_channel_gets_unit_scale() {
        let data = vec![0.6, 1.0, 0.6, 2.0];
        let s = Standardizer::fit(std::iter::once((data.as_slice(), 2))).unwrap();
        assert_eq!(s.std[0], 1.0);
        assert!(s.std.iter().all(|v| *v > 0.0));
    }
}

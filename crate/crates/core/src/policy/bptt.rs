//! Lock-step forward and backward passes over a batch of sequences.
//!
//! Sequences of unequal length are padded; padded steps carry zero loss, and
//! since the recurrence is causal they contribute nothing to the gradient.

use super::{sigmoid, Layout, PolicyParams};
use crate::error::{Error, Result};
use crate::types::TrainingSequence;

/// Gradient of the summed squared error, with the totals it was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradients {
    pub grad: Vec<f64>,
    /// Sum of squared standardized errors.
    pub sse: f64,
    /// Number of scalar outputs that entered `sse`.
    pub count: usize,
}

impl BatchGradients {
    pub fn loss(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sse / self.count as f64
        }
    }
}

/// Borrowed, already standardized sequence.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StdSeq<'a> {
    pub inputs: &'a [f64],
    pub targets: &'a [f64],
    pub len: usize,
}

/// `C = A·B + beta·C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(k == 0 || last(m, k, rsa, csa) < a.len());
    assert!(k == 0 || last(k, n, rsb, csb) < b.len());
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Activations of one layer over the padded batch, indexed `(t·B + b)·width`.
struct LayerTape {
    /// `[x_t; h_{t−1}]`
    z: Vec<f64>,
    /// Activated gates i, f, g, o.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

struct Tape {
    layers: Vec<LayerTape>,
    /// Standardized predictions, `(t·B + b)·out`.
    y: Vec<f64>,
}

fn forward_batch(params: &PolicyParams, layout: &Layout, seqs: &[StdSeq], steps: usize) -> Tape {
    let arch = params.arch;
    let w = &params.weights;
    let hd = arch.hidden;
    let nb = seqs.len();
    let rows = steps * nb;
    let mut layers: Vec<LayerTape> = Vec::with_capacity(arch.layers);
    for (l, lo) in layout.layers.iter().enumerate() {
        let k = lo.k;
        let mut tape = LayerTape {
            z: vec![0.0; rows * k],
            gates: vec![0.0; rows * 4 * hd],
            c: vec![0.0; rows * hd],
            tanh_c: vec![0.0; rows * hd],
            h: vec![0.0; rows * hd],
        };
        for t in 0..steps {
            for (b, seq) in seqs.iter().enumerate() {
                let row = t * nb + b;
                let zr = &mut tape.z[row * k..row * k + lo.input];
                if l == 0 {
                    if t < seq.len {
                        zr.copy_from_slice(&seq.inputs[t * lo.input..(t + 1) * lo.input]);
                    }
                } else {
                    zr.copy_from_slice(&layers[l - 1].h[row * hd..(row + 1) * hd]);
                }
                if t > 0 {
                    let prev = (t - 1) * nb + b;
                    let (src, dst) = (prev * hd, row * k + lo.input);
                    tape.z[dst..dst + hd].copy_from_slice(&tape.h[src..src + hd]);
                }
            }
            let g = &mut tape.gates[t * nb * 4 * hd..(t + 1) * nb * 4 * hd];
            for r in g.chunks_exact_mut(4 * hd) {
                r.copy_from_slice(&w[lo.b..lo.b + 4 * hd]);
            }
            gemm(
                nb,
                k,
                4 * hd,
                &tape.z[t * nb * k..(t + 1) * nb * k],
                (k, 1),
                &w[lo.w..lo.w + 4 * hd * k],
                (1, k),
                1.0,
                g,
                (4 * hd, 1),
            );
            for b in 0..nb {
                let row = t * nb + b;
                let gr = &mut tape.gates[row * 4 * hd..(row + 1) * 4 * hd];
                for j in 0..hd {
                    gr[j] = sigmoid(gr[j]);
                    gr[hd + j] = sigmoid(gr[hd + j]);
                    gr[2 * hd + j] = gr[2 * hd + j].tanh();
                    gr[3 * hd + j] = sigmoid(gr[3 * hd + j]);
                }
                for j in 0..hd {
                    let c_prev = if t > 0 { tape.c[((t - 1) * nb + b) * hd + j] } else { 0.0 };
                    let (i, f, gg, o) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
                    let c = f * c_prev + i * gg;
                    let tc = c.tanh();
                    tape.c[row * hd + j] = c;
                    tape.tanh_c[row * hd + j] = tc;
                    tape.h[row * hd + j] = o * tc;
                }
            }
        }
        layers.push(tape);
    }
    let out = arch.output_dim;
    let mut y = vec![0.0; rows * out];
    for r in y.chunks_exact_mut(out) {
        r.copy_from_slice(&w[layout.head_b..layout.head_b + out]);
    }
    let top = &layers[arch.layers - 1].h;
    gemm(
        rows,
        hd,
        out,
        top,
        (hd, 1),
        &w[layout.head_w..layout.head_w + out * hd],
        (1, hd),
        1.0,
        &mut y,
        (out, 1),
    );
    Tape { layers, y }
}

/// Squared error of the padded predictions; fills `dy` with d(SSE)/dy when given.
fn squared_error(tape: &Tape, seqs: &[StdSeq], out: usize, steps: usize, mut dy: Option<&mut [f64]>) -> (f64, usize) {
    let nb = seqs.len();
    let mut sse = 0.0;
    let mut count = 0;
    for t in 0..steps {
        for (b, seq) in seqs.iter().enumerate() {
            if t >= seq.len {
                continue;
            }
            let row = t * nb + b;
            let pred = &tape.y[row * out..(row + 1) * out];
            let target = &seq.targets[t * out..(t + 1) * out];
            for j in 0..out {
                let d = pred[j] - target[j];
                sse += d * d;
                if let Some(dy) = dy.as_deref_mut() {
                    dy[row * out + j] = 2.0 * d;
                }
            }
            count += out;
        }
    }
    (sse, count)
}

pub(crate) fn loss_std(params: &PolicyParams, seqs: &[StdSeq]) -> (f64, usize) {
    if seqs.is_empty() {
        return (0.0, 0);
    }
    let layout = params.arch.layout();
    let steps = seqs.iter().map(|s| s.len).max().unwrap_or(0);
    let tape = forward_batch(params, &layout, seqs, steps);
    squared_error(&tape, seqs, params.arch.output_dim, steps, None)
}

pub(crate) fn gradients_std(params: &PolicyParams, seqs: &[StdSeq]) -> BatchGradients {
    let arch = params.arch;
    let layout = arch.layout();
    let w = &params.weights;
    let hd = arch.hidden;
    let out = arch.output_dim;
    let nb = seqs.len();
    let steps = seqs.iter().map(|s| s.len).max().unwrap_or(0);
    let mut grad = vec![0.0; w.len()];
    if nb == 0 || steps == 0 {
        return BatchGradients { grad, sse: 0.0, count: 0 };
    }
    let rows = steps * nb;
    let tape = forward_batch(params, &layout, seqs, steps);
    let mut dy = vec![0.0; rows * out];
    let (sse, count) = squared_error(&tape, seqs, out, steps, Some(&mut dy));

    let top = &tape.layers[arch.layers - 1].h;
    gemm(
        out,
        rows,
        hd,
        &dy,
        (1, out),
        top,
        (hd, 1),
        0.0,
        &mut grad[layout.head_w..layout.head_w + out * hd],
        (hd, 1),
    );
    for r in dy.chunks_exact(out) {
        for (g, d) in grad[layout.head_b..layout.head_b + out].iter_mut().zip(r) {
            *g += d;
        }
    }
    let mut d_above = vec![0.0; rows * hd];
    gemm(
        rows,
        out,
        hd,
        &dy,
        (out, 1),
        &w[layout.head_w..layout.head_w + out * hd],
        (hd, 1),
        0.0,
        &mut d_above,
        (hd, 1),
    );

    let mut dh_next = vec![0.0; nb * hd];
    let mut dc_next = vec![0.0; nb * hd];
    for (l, lo) in layout.layers.iter().enumerate().rev() {
        let tp = &tape.layers[l];
        let k = lo.k;
        let mut da = vec![0.0; rows * 4 * hd];
        let mut dz = vec![0.0; nb * k];
        let mut dx = if l > 0 { vec![0.0; rows * lo.input] } else { Vec::new() };
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        dc_next.iter_mut().for_each(|v| *v = 0.0);
        for t in (0..steps).rev() {
            for b in 0..nb {
                let row = t * nb + b;
                let gr = &tp.gates[row * 4 * hd..(row + 1) * 4 * hd];
                let dar = &mut da[row * 4 * hd..(row + 1) * 4 * hd];
                for j in 0..hd {
                    let dh = d_above[row * hd + j] + dh_next[b * hd + j];
                    let (i, f, g, o) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
                    let tc = tp.tanh_c[row * hd + j];
                    let c_prev = if t > 0 { tp.c[((t - 1) * nb + b) * hd + j] } else { 0.0 };
                    let d_o = dh * tc;
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[b * hd + j];
                    dc_next[b * hd + j] = dc * f;
                    dar[j] = dc * g * i * (1.0 - i);
                    dar[hd + j] = dc * c_prev * f * (1.0 - f);
                    dar[2 * hd + j] = dc * i * (1.0 - g * g);
                    dar[3 * hd + j] = d_o * o * (1.0 - o);
                }
            }
            gemm(
                nb,
                4 * hd,
                k,
                &da[t * nb * 4 * hd..(t + 1) * nb * 4 * hd],
                (4 * hd, 1),
                &w[lo.w..lo.w + 4 * hd * k],
                (k, 1),
                0.0,
                &mut dz,
                (k, 1),
            );
            for b in 0..nb {
                let zr = &dz[b * k..(b + 1) * k];
                if l > 0 {
                    let row = t * nb + b;
                    dx[row * lo.input..(row + 1) * lo.input].copy_from_slice(&zr[..lo.input]);
                }
                dh_next[b * hd..(b + 1) * hd].copy_from_slice(&zr[lo.input..]);
            }
        }
        gemm(
            4 * hd,
            rows,
            k,
            &da,
            (1, 4 * hd),
            &tp.z,
            (k, 1),
            0.0,
            &mut grad[lo.w..lo.w + 4 * hd * k],
            (k, 1),
        );
        for r in da.chunks_exact(4 * hd) {
            for (g, d) in grad[lo.b..lo.b + 4 * hd].iter_mut().zip(r) {
                *g += d;
            }
        }
        if l > 0 {
            d_above = dx;
        }
    }
    BatchGradients { grad, sse, count }
}

pub(crate) struct StandardizedSeq {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub len: usize,
}

impl StandardizedSeq {
    pub fn view(&self) -> StdSeq<'_> {
        StdSeq {
            inputs: &self.inputs,
            targets: &self.targets,
            len: self.len,
        }
    }
}

pub(crate) fn standardize_sequence(params: &PolicyParams, seq: &TrainingSequence) -> Result<StandardizedSeq> {
    let arch = params.arch;
    if seq.input_dim != arch.input_dim || seq.output_dim != arch.output_dim {
        return Err(Error::invalid(format!(
            "sequence dims {}→{} do not match policy {}→{}",
            seq.input_dim, seq.output_dim, arch.input_dim, arch.output_dim
        )));
    }
    let mut inputs = vec![0.0; seq.inputs.len()];
    for (src, dst) in seq.inputs.chunks_exact(seq.input_dim).zip(inputs.chunks_exact_mut(seq.input_dim)) {
        params.input_stats.standardize_into(src, dst);
    }
    let mut targets = vec![0.0; seq.targets.len()];
    for (src, dst) in seq.targets.chunks_exact(seq.output_dim).zip(targets.chunks_exact_mut(seq.output_dim)) {
        params.output_stats.standardize_into(src, dst);
    }
    Ok(StandardizedSeq {
        inputs,
        targets,
        len: seq.len(),
    })
}

/// Gradient of the summed squared (standardized) error over a batch.
pub fn batch_gradients(params: &PolicyParams, seqs: &[&TrainingSequence]) -> Result<BatchGradients> {
    let std: Vec<StandardizedSeq> = seqs.iter().map(|s| standardize_sequence(params, s)).collect::<Result<_>>()?;
    let views: Vec<StdSeq> = std.iter().map(|s| s.view()).collect();
    Ok(gradients_std(params, &views))
}

/// Exact BPTT gradient of the summed squared error of one sequence.
pub fn policy_backward(params: &PolicyParams, seq: &TrainingSequence) -> Result<BatchGradients> {
    if seq.is_empty() {
        return Err(Error::invalid("sequence must have at least one step"));
    }
    batch_gradients(params, &[seq])
}

/// Summed squared error and output count over a batch, forward only.
pub fn batch_loss(params: &PolicyParams, seqs: &[&TrainingSequence]) -> Result<(f64, usize)> {
    let std: Vec<StandardizedSeq> = seqs.iter().map(|s| standardize_sequence(params, s)).collect::<Result<_>>()?;
    let views: Vec<StdSeq> = std.iter().map(|s| s.view()).collect();
    Ok(loss_std(params, &views))
}

//! Time-wise normalization of demonstrations: resampling, velocity rescaling,
//! phase-shifted decimation and assembly of training sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Standardizer;
use crate::types::{
    DemoStep, Demonstration, JointVec, NormalizationConfig, Phase, RobotResponse,
    TrainingSequence, VelocityScaled, POLICY_INPUT_DIM, POLICY_OUTPUT_DIM,
};

/// Sample types that can be blended linearly.
pub trait Interpolate: Clone {
    /// `self + w·(other − self)` for `w ∈ [0, 1]`.
    fn lerp(&self, other: &Self, w: f64) -> Self;
}

impl Interpolate for f64 {
    fn lerp(&self, other: &f64, w: f64) -> f64 {
        self + w * (other - self)
    }
}

impl Interpolate for Vec<f64> {
    fn lerp(&self, other: &Self, w: f64) -> Self {
        self.iter().zip(other).map(|(a, b)| a.lerp(b, w)).collect()
    }
}

impl Interpolate for JointVec {
    fn lerp(&self, other: &Self, w: f64) -> Self {
        self.zip_map(*other, |a, b| a.lerp(&b, w))
    }
}

impl Interpolate for RobotResponse {
    fn lerp(&self, other: &Self, w: f64) -> Self {
        RobotResponse {
            theta: self.theta.lerp(&other.theta, w),
            omega: self.omega.lerp(&other.omega, w),
            tau: self.tau.lerp(&other.tau, w),
        }
    }
}

impl Interpolate for DemoStep {
    fn lerp(&self, other: &Self, w: f64) -> Self {
        DemoStep {
            leader: self.leader.lerp(&other.leader, w),
            follower: self.follower.lerp(&other.follower, w),
        }
    }
}

/// Phase tags snap to the nearest source sample.
impl Interpolate for Phase {
    fn lerp(&self, other: &Self, w: f64) -> Self {
        if w < 0.5 {
            *self
        } else {
            *other
        }
    }
}

/// Number of samples a uniform grid at `dst_rate` places inside the span of
/// `len` samples taken at `src_rate`, starting at the first sample.
pub fn resampled_len(len: usize, src_rate: f64, dst_rate: f64) -> usize {
    let span = (len - 1) as f64 * dst_rate / src_rate;
    (span + 1e-9).floor() as usize + 1
}

/// Linearly interpolate a uniformly sampled series onto a new uniform grid
/// with the same start time. The last output sample lies within one output
/// period of the last input sample.
pub fn linear_resample<T: Interpolate>(series: &[T], src_rate: f64, dst_rate: f64) -> Result<Vec<T>> {
    if series.len() < 2 {
        return Err(Error::invalid("resampling needs at least 2 samples"));
    }
    if !(src_rate.is_finite() && src_rate > 0.0 && dst_rate.is_finite() && dst_rate > 0.0) {
        return Err(Error::invalid("resampling rates must be finite and > 0"));
    }
    if src_rate == dst_rate {
        return Ok(series.to_vec());
    }
    let n_out = resampled_len(series.len(), src_rate, dst_rate);
    let step = src_rate / dst_rate;
    let last = series.len() - 1;
    let out = (0..n_out)
        .map(|j| {
            let pos = j as f64 * step;
            let mut i = pos.floor() as usize;
            let mut w = pos - i as f64;
            // snap grid points that land within rounding of a source sample
            if w > 1.0 - 1e-9 {
                i += 1;
                w = 0.0;
            } else if w < 1e-9 {
                w = 0.0;
            }
            if i >= last {
                series[last].clone()
            } else if w == 0.0 {
                series[i].clone()
            } else {
                series[i].lerp(&series[i + 1], w)
            }
        })
        .collect();
    Ok(out)
}

/// Multiply every angular velocity in `series` by `factor`; angles and torques are untouched.
pub fn scale_velocities<T: VelocityScaled + Clone>(series: &[T], factor: f64) -> Result<Vec<T>> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(Error::invalid(format!("velocity scale factor must be finite and > 0, got {factor}")));
    }
    Ok(series
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.scale_omega(factor);
            s
        })
        .collect())
}

/// Resample a demonstration so its motion plays at the base frequency `f0`
/// when read back at the original sample rate, and rescale velocities by `f0/f_i`.
///
/// The returned demonstration's `sample_rate` is the real-time rate of the new
/// grid, `sample_rate · f_i / f0`.
pub fn normalize_demonstration(demo: &Demonstration, cfg: &NormalizationConfig) -> Result<Demonstration> {
    demo.validate()?;
    cfg.validate()?;
    let fi = demo.motion_frequency;
    if fi == cfg.f0 {
        return Ok(demo.clone());
    }
    let new_rate = demo.sample_rate * (fi / cfg.f0);
    let steps = linear_resample(&demo.steps, demo.sample_rate, new_rate)?;
    let steps = scale_velocities(&steps, cfg.f0 / fi)?;
    let phases = linear_resample(&demo.phases, demo.sample_rate, new_rate)?;
    Ok(Demonstration {
        motion_frequency: fi,
        surface_height: demo.surface_height,
        sample_rate: new_rate,
        seed: demo.seed,
        steps,
        phases,
    })
}

/// Split a series into `factor` interleaved subsequences; subsequence `k`
/// holds samples `k, k + factor, k + 2·factor, …`.
pub fn decimate_phases<T: Clone>(series: &[T], factor: usize) -> Result<Vec<Vec<T>>> {
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be >= 1"));
    }
    if factor > series.len() {
        return Err(Error::invalid(format!(
            "decimation factor {factor} exceeds series length {}",
            series.len()
        )));
    }
    Ok((0..factor)
        .map(|k| series.iter().skip(k).step_by(factor).cloned().collect())
        .collect())
}

/// Policy input row for one follower response.
pub fn input_row(follower: &RobotResponse, label: f64) -> [f64; POLICY_INPUT_DIM] {
    let mut row = [0.0; POLICY_INPUT_DIM];
    row[..POLICY_INPUT_DIM - 1].copy_from_slice(&follower.to_row());
    row[POLICY_INPUT_DIM - 1] = label;
    row
}

/// Policy target row: follower block then leader block.
pub fn target_row(step: &DemoStep) -> [f64; POLICY_OUTPUT_DIM] {
    let mut row = [0.0; POLICY_OUTPUT_DIM];
    row[..POLICY_OUTPUT_DIM / 2].copy_from_slice(&step.follower.to_row());
    row[POLICY_OUTPUT_DIM / 2..].copy_from_slice(&step.leader.to_row());
    row
}

fn sequence_from_steps(steps: &[DemoStep], label: f64, step_period: f64) -> TrainingSequence {
    let n = steps.len().saturating_sub(1);
    let mut inputs = Vec::with_capacity(n * POLICY_INPUT_DIM);
    let mut targets = Vec::with_capacity(n * POLICY_OUTPUT_DIM);
    for pair in steps.windows(2) {
        inputs.extend_from_slice(&input_row(&pair[0].follower, label));
        targets.extend_from_slice(&target_row(&pair[1]));
    }
    TrainingSequence {
        label,
        step_period_original: step_period,
        input_dim: POLICY_INPUT_DIM,
        output_dim: POLICY_OUTPUT_DIM,
        inputs,
        targets,
    }
}

/// Where a training sequence came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceOrigin {
    pub demo_index: usize,
    pub phase_offset: usize,
    pub label: f64,
    pub surface_height: f64,
    pub len: usize,
}

/// Training sequences plus everything needed to reproduce and standardize them.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub vfil: bool,
    pub config: NormalizationConfig,
    pub sequences: Vec<TrainingSequence>,
    pub origins: Vec<SequenceOrigin>,
    pub input_stats: Standardizer,
    pub output_stats: Standardizer,
}

/// Normalize (when `vfil` is set) and decimate every demonstration into
/// training sequences, pairing the follower input at step `k` with the
/// follower and leader targets at step `k + 1`.
pub fn build_training_set(
    demos: &[Demonstration],
    cfg: &NormalizationConfig,
    vfil: bool,
) -> Result<TrainingSet> {
    if demos.is_empty() {
        return Err(Error::invalid("no demonstrations to build a training set from"));
    }
    cfg.validate()?;
    let mut sequences = Vec::new();
    let mut origins = Vec::new();
    for (demo_index, demo) in demos.iter().enumerate() {
        demo.validate()?;
        let fi = demo.motion_frequency;
        let (steps, factor, step_period) = if vfil {
            let norm = normalize_demonstration(demo, cfg)?;
            (norm.steps, cfg.decimation, cfg.model_period(fi))
        } else {
            let ratio = demo.sample_rate / cfg.model_rate;
            let factor = ratio.round() as usize;
            if factor == 0 || (ratio - factor as f64).abs() > 1e-9 * ratio {
                return Err(Error::invalid(format!(
                    "demo rate {} is not an integer multiple of the model rate {}",
                    demo.sample_rate, cfg.model_rate
                )));
            }
            (demo.steps.clone(), factor, 1.0 / cfg.model_rate)
        };
        for (phase_offset, sub) in decimate_phases(&steps, factor)?.into_iter().enumerate() {
            if sub.len() < 2 {
                continue;
            }
            let seq = sequence_from_steps(&sub, fi, step_period);
            origins.push(SequenceOrigin {
                demo_index,
                phase_offset,
                label: fi,
                surface_height: demo.surface_height,
                len: seq.len(),
            });
            sequences.push(seq);
        }
    }
    let input_stats = Standardizer::fit(sequences.iter().map(|s| (s.inputs.as_slice(), s.input_dim)))?;
    let output_stats = Standardizer::fit(sequences.iter().map(|s| (s.targets.as_slice(), s.output_dim)))?;
    Ok(TrainingSet {
        vfil,
        config: *cfg,
        sequences,
        origins,
        input_stats,
        output_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn synthetic_demo(fi: f64, rate: f64, seconds: f64) -> Demonstration {
        let n = (seconds * rate) as usize;
        let amp = 0.3;
        let steps = (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                let w = 2.0 * PI * fi;
                let r = RobotResponse {
                    theta: JointVec::new([amp * (w * t).sin(), 0.1 * (w * t).cos()]),
                    omega: JointVec::new([amp * w * (w * t).cos(), -0.1 * w * (w * t).sin()]),
                    tau: JointVec::new([1.0, -0.5]),
                };
                DemoStep { leader: r, follower: r }
            })
            .collect();
        Demonstration {
            motion_frequency: fi,
            surface_height: 0.1,
            sample_rate: rate,
            seed: 0,
            steps,
            phases: vec![Phase::Wipe; n],
        }
    }

    /// Mean spacing (in samples) between upward zero crossings, using linear
    /// interpolation between the bracketing samples.
    fn samples_per_cycle(x: &[f64]) -> f64 {
        let mut crossings = Vec::new();
        for k in 0..x.len() - 1 {
            if x[k] < 0.0 && x[k + 1] >= 0.0 {
                crossings.push(k as f64 + (-x[k]) / (x[k + 1] - x[k]));
            }
        }
        (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64
    }

    #[test]
    fn resample_identity_rate_is_copy() {
        let s: Vec<f64> = (0..10).map(|k| k as f64 * 0.3).collect();
        assert_eq!(linear_resample(&s, 500.0, 500.0).unwrap(), s);
    }

    #[test]
    fn resample_two_thirds_length() {
        let s: Vec<f64> = (0..20000).map(|k| k as f64).collect();
        let out = linear_resample(&s, 500.0, 500.0 * 0.4 / 0.6).unwrap();
        assert_eq!(out.len(), 20000 * 2 / 3);
        assert_eq!(out[0], s[0]);
        let in_dur = 19999.0 / 500.0;
        let rate = 500.0 * 0.4 / 0.6;
        let out_dur = (out.len() - 1) as f64 / rate;
        assert!((out_dur - in_dur).abs() <= 1.0 / rate);
    }

    #[test]
    fn resample_sine_matches_analytic() {
        let f = 0.4;
        let src = 500.0;
        let dst = 1000.0 / 3.0;
        let s: Vec<f64> = (0..5000).map(|k| (2.0 * PI * f * k as f64 / src).sin()).collect();
        let out = linear_resample(&s, src, dst).unwrap();
        let max_err = out
            .iter()
            .enumerate()
            .map(|(j, v)| (v - (2.0 * PI * f * j as f64 / dst).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-4, "max err {max_err}");
    }

    #[test]
    fn resample_rejects_short_series() {
        assert!(linear_resample(&[1.0], 500.0, 250.0).is_err());
        assert!(linear_resample::<f64>(&[], 500.0, 250.0).is_err());
    }

    #[test]
    fn endpoints_preserved_when_grid_lands_on_end() {
        let s: Vec<f64> = (0..7).map(|k| (k * k) as f64).collect();
        let out = linear_resample(&s, 6.0, 2.0).unwrap();
        assert_eq!(out, vec![0.0, 9.0, 36.0]);
    }

    #[test]
    fn velocity_scaling() {
        let r = RobotResponse {
            theta: JointVec::new([1.0, 2.0]),
            omega: JointVec::new([0.4, -0.8]),
            tau: JointVec::new([3.0, 4.0]),
        };
        let scaled = scale_velocities(&[r], 0.6 / 0.4).unwrap();
        assert!((scaled[0].omega[0] - 0.6).abs() < 1e-15);
        assert!((scaled[0].omega[1] + 1.2).abs() < 1e-15);
        assert_eq!(scaled[0].theta, r.theta);
        assert_eq!(scaled[0].tau, r.tau);
        assert_eq!(scale_velocities(&[r], 1.0).unwrap()[0], r);
        let back = scale_velocities(&scaled, 2.0 / 3.0).unwrap();
        assert!((back[0].omega - r.omega).max_abs() < 1e-15);
        assert!(scale_velocities(&[r], f64::NAN).is_err());
        assert!(scale_velocities(&[r], 0.0).is_err());
    }

    #[test]
    fn normalize_rates_and_velocity() {
        let cfg = NormalizationConfig::default();
        let demo = synthetic_demo(0.8, 500.0, 10.0);
        let norm = normalize_demonstration(&demo, &cfg).unwrap();
        assert!((norm.sample_rate - 666.666_666_666_666_6).abs() < 1e-9);
        // first sample sits on the grid, so only the velocity factor applies
        assert!((norm.steps[0].follower.omega[0] - 0.75 * demo.steps[0].follower.omega[0]).abs() < 1e-12);
        assert_eq!(norm.motion_frequency, 0.8);
    }

    #[test]
    fn normalize_at_base_frequency_is_identity() {
        let cfg = NormalizationConfig::default();
        let demo = synthetic_demo(0.6, 500.0, 4.0);
        assert_eq!(normalize_demonstration(&demo, &cfg).unwrap(), demo);
    }

    #[test]
    fn normalize_rejects_nonpositive_frequency() {
        let cfg = NormalizationConfig::default();
        let mut demo = synthetic_demo(0.6, 500.0, 1.0);
        demo.motion_frequency = 0.0;
        assert!(normalize_demonstration(&demo, &cfg).is_err());
    }

    #[test]
    fn samples_per_cycle_is_frequency_independent() {
        let cfg = NormalizationConfig::default();
        for fi in [0.4, 0.6, 0.8, 1.4] {
            let demo = synthetic_demo(fi, 500.0, 20.0);
            let norm = normalize_demonstration(&demo, &cfg).unwrap();
            let x: Vec<f64> = norm.steps.iter().map(|s| s.follower.theta[0]).collect();
            let spc = samples_per_cycle(&x);
            assert!((spc - 500.0 / 0.6).abs() <= 1.0, "f_i = {fi}: {spc}");
        }
    }

    #[test]
    fn decimation_shapes() {
        let s: Vec<usize> = (0..100).collect();
        let parts = decimate_phases(&s, 20).unwrap();
        assert_eq!(parts.len(), 20);
        assert!(parts.iter().all(|p| p.len() == 5));
        assert_eq!(parts[3], vec![3, 23, 43, 63, 83]);
        assert_eq!(decimate_phases(&s, 1).unwrap(), vec![s.clone()]);
        assert!(decimate_phases(&s, 101).is_err());
        assert!(decimate_phases(&s, 0).is_err());
    }

    #[test]
    fn decimated_rate_matches_model_rate_scaling() {
        let cfg = NormalizationConfig::default();
        let demo = synthetic_demo(0.8, 500.0, 2.0);
        let norm = normalize_demonstration(&demo, &cfg).unwrap();
        let sub_rate = norm.sample_rate / cfg.decimation as f64;
        assert!((sub_rate - 0.8 * cfg.model_rate / cfg.f0).abs() < 1e-9);
        assert!((sub_rate - 33.333).abs() < 1e-3);
    }

    #[test]
    fn training_set_pairs_and_labels() {
        let cfg = NormalizationConfig::default();
        let demo = synthetic_demo(0.4, 500.0, 40.0);
        let set = build_training_set(&[demo.clone()], &cfg, true).unwrap();
        assert_eq!(set.sequences.len(), 20);
        let norm_len = resampled_len(demo.steps.len(), 500.0, 500.0 * 0.4 / 0.6);
        assert_eq!(norm_len, 13333);
        for seq in &set.sequences {
            assert!((seq.len() as i64 - 666).abs() <= 1, "{}", seq.len());
            assert_eq!(seq.inputs.len() / seq.input_dim, seq.targets.len() / seq.output_dim);
            for k in 0..seq.len() {
                assert_eq!(seq.input(k)[POLICY_INPUT_DIM - 1], 0.4);
            }
            assert!((seq.step_period_original - 0.6 / (0.4 * 25.0)).abs() < 1e-15);
        }
        // target at k is the input state at k + 1
        let seq = &set.sequences[0];
        assert_eq!(&seq.target(0)[..6], &seq.input(1)[..6]);
    }

    #[test]
    fn training_set_base_frequency_is_mode_independent() {
        let cfg = NormalizationConfig::default();
        let demo = synthetic_demo(0.6, 500.0, 3.0);
        let a = build_training_set(&[demo.clone()], &cfg, true).unwrap();
        let b = build_training_set(&[demo], &cfg, false).unwrap();
        assert_eq!(a.sequences, b.sequences);
    }

    #[test]
    fn training_set_rejects_empty() {
        assert!(build_training_set(&[], &NormalizationConfig::default(), true).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decimation_partitions_indices(len in 1usize..400, factor in 1usize..40) {
                prop_assume!(factor <= len);
                let s: Vec<usize> = (0..len).collect();
                let mut all: Vec<usize> = decimate_phases(&s, factor).unwrap().concat();
                all.sort_unstable();
                prop_assert_eq!(all, s);
            }

            #[test]
            fn resampling_preserves_duration(len in 2usize..3000, src in 10.0f64..1000.0, ratio in 0.2f64..5.0) {
                let dst = src * ratio;
                let s: Vec<f64> = (0..len).map(|k| k as f64).collect();
                let out = linear_resample(&s, src, dst).unwrap();
                let din = (len - 1) as f64 / src;
                let dout = (out.len() - 1) as f64 / dst;
                prop_assert!((din - dout).abs() <= 1.0 / dst + 1e-12);
                prop_assert!(dout <= din + 1e-9);
                // a ramp is reproduced exactly by linear interpolation
                for (j, v) in out.iter().enumerate() {
                    prop_assert!((v - j as f64 * src / dst).abs() < 1e-6 * (1.0 + v.abs()));
                }
            }

            #[test]
            fn normalize_roundtrip_is_within_interpolation_error(fi in 0.3f64..1.5) {
                let cfg = NormalizationConfig::default();
                let demo = synthetic_demo(fi, 500.0, 6.0);
                let norm = normalize_demonstration(&demo, &cfg).unwrap();
                let back = linear_resample(&norm.steps, norm.sample_rate, demo.sample_rate).unwrap();
                let back = scale_velocities(&back, fi / cfg.f0).unwrap();
                // second-order bound h²/8·max|θ''| per pass, two passes
                let w = 2.0 * PI * fi;
                let h = 1.0 / norm.sample_rate.min(demo.sample_rate);
                let bound = 2.0 * h * h / 8.0 * 0.3 * w * w + 1e-12;
                for (a, b) in back.iter().zip(&demo.steps) {
                    prop_assert!((a.follower.theta[0] - b.follower.theta[0]).abs() <= bound);
                    prop_assert!((a.follower.omega[0] - b.follower.omega[0]).abs() <= bound * w + 1e-12);
                }
            }
        }
    }
}

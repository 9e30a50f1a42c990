//! Domain types shared by every stage of the pipeline.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degrees of freedom of the simulated arm.
pub const DOF: usize = 2;

/// Width of a policy input row: follower θ ⊕ ω ⊕ τ ⊕ frequency label.
pub const POLICY_INPUT_DIM: usize = 3 * DOF + 1;

/// Width of a policy output row: follower θ ⊕ ω ⊕ τ ⊕ leader θ ⊕ ω ⊕ τ.
pub const POLICY_OUTPUT_DIM: usize = 6 * DOF;

/// One value per joint. Units depend on context (rad, rad/s or N·m).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVec(pub [f64; DOF]);

impl JointVec {
    pub const ZERO: JointVec = JointVec([0.0; DOF]);

    pub fn new(values: [f64; DOF]) -> Self {
        JointVec(values)
    }

    pub fn splat(v: f64) -> Self {
        JointVec([v; DOF])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; DOF] = values
            .try_into()
            .map_err(|_| Error::invalid(format!("expected {DOF} joint values, got {}", values.len())))?;
        Ok(JointVec(arr))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        JointVec(self.0.map(f))
    }

    pub fn zip_map(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = self;
        for (o, b) in out.0.iter_mut().zip(other.0) {
            *o = f(*o, b);
        }
        out
    }

    /// Elementwise product.
    pub fn hadamard(self, other: Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for JointVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for JointVec {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for JointVec {
    type Output = JointVec;
    fn add(self, rhs: JointVec) -> JointVec {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl AddAssign for JointVec {
    fn add_assign(&mut self, rhs: JointVec) {
        *self = *self + rhs;
    }
}

impl Sub for JointVec {
    type Output = JointVec;
    fn sub(self, rhs: JointVec) -> JointVec {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for JointVec {
    type Output = JointVec;
    fn mul(self, rhs: f64) -> JointVec {
        self.map(|a| a * rhs)
    }
}

impl Neg for JointVec {
    type Output = JointVec;
    fn neg(self) -> JointVec {
        self.map(|a| -a)
    }
}

/// Measured state of one robot. `tau` is the observer-estimated external torque.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobotResponse {
    pub theta: JointVec,
    pub omega: JointVec,
    pub tau: JointVec,
}

impl RobotResponse {
    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.omega.is_finite() && self.tau.is_finite()
    }

    /// θ ⊕ ω ⊕ τ, in that order.
    pub fn to_row(&self) -> [f64; 3 * DOF] {
        let mut row = [0.0; 3 * DOF];
        row[..DOF].copy_from_slice(&self.theta.0);
        row[DOF..2 * DOF].copy_from_slice(&self.omega.0);
        row[2 * DOF..].copy_from_slice(&self.tau.0);
        row
    }

    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.len() != 3 * DOF {
            return Err(Error::invalid(format!(
                "response row needs {} values, got {}",
                3 * DOF,
                row.len()
            )));
        }
        Ok(RobotResponse {
            theta: JointVec::from_slice(&row[..DOF])?,
            omega: JointVec::from_slice(&row[DOF..2 * DOF])?,
            tau: JointVec::from_slice(&row[2 * DOF..])?,
        })
    }
}

/// Command handed to a joint controller.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobotCommand {
    pub theta: JointVec,
    pub omega: JointVec,
    pub tau: JointVec,
}

impl RobotCommand {
    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.omega.is_finite() && self.tau.is_finite()
    }

    /// Hold a pose with zero velocity and zero force.
    pub fn hold(theta: JointVec) -> Self {
        RobotCommand {
            theta,
            omega: JointVec::ZERO,
            tau: JointVec::ZERO,
        }
    }
}

/// Anything that carries angular velocities which must be rescaled when time is rescaled.
pub trait VelocityScaled {
    fn scale_omega(&mut self, factor: f64);
}

impl VelocityScaled for RobotResponse {
    fn scale_omega(&mut self, factor: f64) {
        self.omega = self.omega * factor;
    }
}

impl VelocityScaled for RobotCommand {
    fn scale_omega(&mut self, factor: f64) {
        self.omega = self.omega * factor;
    }
}

impl VelocityScaled for DemoStep {
    fn scale_omega(&mut self, factor: f64) {
        self.leader.scale_omega(factor);
        self.follower.scale_omega(factor);
    }
}

/// Time-normalization constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationConfig {
    /// Base motion frequency every demonstration is normalized to (Hz).
    pub f0: f64,
    /// Model sampling frequency at the base motion frequency (Hz).
    pub model_rate: f64,
    /// Fixed control-loop rate (Hz).
    pub control_rate: f64,
    /// Number of interleaved episodes cut out of each control-rate sequence.
    pub decimation: usize,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            f0: 0.6,
            model_rate: 25.0,
            control_rate: 500.0,
            decimation: 20,
        }
    }
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.f0) || !positive(self.model_rate) || !positive(self.control_rate) {
            return Err(Error::Config(
                "f0, model_rate and control_rate must be finite and > 0".into(),
            ));
        }
        if self.control_rate < self.model_rate {
            return Err(Error::Config("control_rate must be >= model_rate".into()));
        }
        if self.decimation == 0 {
            return Err(Error::Config("decimation must be >= 1".into()));
        }
        let ratio = self.control_rate / self.model_rate;
        if (ratio - self.decimation as f64).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "control_rate / model_rate = {ratio} does not match decimation {}",
                self.decimation
            )));
        }
        Ok(())
    }

    /// Control period in seconds.
    pub fn control_period(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Real-time interval between model steps at motion frequency `f`.
    pub fn model_period(&self, f: f64) -> f64 {
        (self.f0 / f) / self.model_rate
    }
}

/// Task phase marker attached to each recorded step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Press,
    Wipe,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Press => "press",
            Phase::Wipe => "wipe",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "press" => Some(Phase::Press),
            "wipe" => Some(Phase::Wipe),
            _ => None,
        }
    }
}

/// One control tick of a teleoperated demonstration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DemoStep {
    pub leader: RobotResponse,
    pub follower: RobotResponse,
}

/// A leader/follower trajectory recorded at a uniform rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    /// Motion frequency `f_i` of the wiping strokes (Hz).
    pub motion_frequency: f64,
    pub surface_height: f64,
    pub sample_rate: f64,
    pub seed: u64,
    pub steps: Vec<DemoStep>,
    pub phases: Vec<Phase>,
}

impl Demonstration {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("demonstration sample_rate must be > 0"));
        }
        if !(self.motion_frequency.is_finite() && self.motion_frequency > 0.0) {
            return Err(Error::invalid(format!(
                "motion frequency must be > 0, got {}",
                self.motion_frequency
            )));
        }
        if self.steps.is_empty() {
            return Err(Error::invalid("demonstration has no steps"));
        }
        if self.phases.len() != self.steps.len() {
            return Err(Error::invalid("phase markers do not match step count"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        (self.steps.len().saturating_sub(1)) as f64 / self.sample_rate
    }

    /// Index of the first wipe-phase step, if any.
    pub fn wipe_start(&self) -> Option<usize> {
        self.phases.iter().position(|p| *p == Phase::Wipe)
    }
}

/// Input/target pairs for one decimated episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSequence {
    /// Frequency label `f_i` (Hz).
    pub label: f64,
    /// Real time covered by one model step of this sequence (s).
    pub step_period_original: f64,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Row-major `len × input_dim`.
    pub inputs: Vec<f64>,
    /// Row-major `len × output_dim`.
    pub targets: Vec<f64>,
}

impl TrainingSequence {
    pub fn len(&self) -> usize {
        if self.input_dim == 0 {
            0
        } else {
            self.inputs.len() / self.input_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn target(&self, k: usize) -> &[f64] {
        &self.targets[k * self.output_dim..(k + 1) * self.output_dim]
    }
}

//! Variable-frequency runtime: the model-step scheduler, velocity
//! de/renormalization at the model boundary, and the closed-loop rollout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{ControlledArm, ControllerGains};
use crate::error::{Error, Result};
use crate::normalize::input_row;
use crate::plant::{contact_wrench, forward_kinematics, inverse_kinematics, PlantParams};
use crate::policy::{PolicyModel, PolicyRunner, TimeScaling};
use crate::types::{JointVec, NormalizationConfig, RobotCommand, RobotResponse, DOF};

/// Slack on the advance test so thresholds that are exact tick multiples
/// are not lost to rounding in the accumulator.
const TIME_EPS: f64 = 1e-12;

/// Remainder-update rule applied when the model advances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerMode {
    /// `t_r ← t − threshold`
    PaperCarry,
    /// `t_r ← t + t_r − threshold`
    ExactCarry,
}

impl SchedulerMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper-carry" => Some(SchedulerMode::PaperCarry),
            "exact-carry" => Some(SchedulerMode::ExactCarry),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulerState {
    /// Time since the last model step, s.
    pub t: f64,
    /// Carried remainder, s.
    pub t_r: f64,
    /// Model-step period `f0/(f·F)`, s.
    pub threshold: f64,
    /// Control period, s.
    pub ts: f64,
    pub mode: SchedulerMode,
    pub step_count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Advance,
    Hold,
}

pub fn scheduler_init(model_rate: f64, f0: f64, f: f64, ts: f64, mode: SchedulerMode) -> Result<SchedulerState> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid(format!("motion frequency must be > 0, got {f}")));
    }
    if !(model_rate > 0.0 && f0 > 0.0 && ts > 0.0) {
        return Err(Error::invalid("scheduler rates must be > 0"));
    }
    let threshold = (f0 / f) / model_rate;
    with_threshold(threshold, ts, mode)
}

/// Scheduler with an explicit model-step period.
pub fn with_threshold(threshold: f64, ts: f64, mode: SchedulerMode) -> Result<SchedulerState> {
    if !(threshold.is_finite() && ts.is_finite() && ts > 0.0) {
        return Err(Error::invalid("scheduler threshold and ts must be finite and > 0"));
    }
    if threshold + TIME_EPS < ts {
        return Err(Error::invalid(format!(
            "model step period {threshold} s is shorter than the control period {ts} s"
        )));
    }
    Ok(SchedulerState {
        t: 0.0,
        t_r: 0.0,
        threshold,
        ts,
        mode,
        step_count: 0,
    })
}

pub fn scheduler_tick(state: &mut SchedulerState) -> Decision {
    state.t += state.ts;
    if state.t + state.t_r >= state.threshold - TIME_EPS {
        state.t_r = match state.mode {
            SchedulerMode::PaperCarry => state.t - state.threshold,
            SchedulerMode::ExactCarry => state.t + state.t_r - state.threshold,
        };
        state.t = 0.0;
        state.step_count += 1;
        Decision::Advance
    } else {
        Decision::Hold
    }
}

/// Velocities seen by the model: `ω × (f0/f)`.
pub fn normalize_model_input(res: &RobotResponse, f: f64, f0: f64) -> RobotResponse {
    RobotResponse {
        omega: res.omega * (f0 / f),
        ..*res
    }
}

/// Follower command from a physical model output (follower block, then
/// leader block): the leader's predicted position and `ω × (f/f0)`, and the
/// negated leader force estimate, as the bilateral law would command.
pub fn denormalize_model_output(output: &[f64], f: f64, f0: f64) -> Result<RobotCommand> {
    leader_command(output, f / f0)
}

fn leader_command(output: &[f64], omega_scale: f64) -> Result<RobotCommand> {
    if output.len() != 6 * DOF {
        return Err(Error::invalid(format!("model output has {} channels, expected {}", output.len(), 6 * DOF)));
    }
    let leader = RobotResponse::from_row(&output[3 * DOF..])?;
    Ok(RobotCommand {
        theta: leader.theta,
        omega: leader.omega * omega_scale,
        tau: -leader.tau,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    /// Frequency label, Hz.
    pub frequency: f64,
    /// s
    pub duration: f64,
    /// m
    pub surface_height: f64,
    pub seed: u64,
    pub mode: SchedulerMode,
    /// End-effector start position (x, z), m.
    pub home: [f64; 2],
    /// Uniform start-position jitter, ± m per axis.
    pub start_jitter: f64,
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::invalid(format!("frequency must be > 0, got {}", self.frequency)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid("duration must be > 0"));
        }
        if !(self.start_jitter >= 0.0) {
            return Err(Error::invalid("start jitter must be >= 0"));
        }
        Ok(())
    }
}

/// One control tick of a rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    pub follower: RobotResponse,
    /// Command in force during this tick (the predicted leader state).
    pub command: RobotCommand,
    pub tau_ref: JointVec,
    pub normal_force: f64,
    pub ee_x: f64,
    pub ee_z: f64,
    pub model_step: bool,
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub config: RolloutConfig,
    pub time_scaling: TimeScaling,
    pub control_rate: f64,
    pub ticks: Vec<TickRecord>,
    /// Tick index of every model step.
    pub model_steps: Vec<usize>,
}

impl TrajectoryLog {
    pub fn ts(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Gaps between consecutive model steps, s.
    pub fn step_periods(&self) -> Vec<f64> {
        let ts = self.ts();
        self.model_steps.windows(2).map(|w| (w[1] - w[0]) as f64 * ts).collect()
    }

    pub fn mean_step_period(&self) -> Option<f64> {
        let p = self.step_periods();
        (!p.is_empty()).then(|| p.iter().sum::<f64>() / p.len() as f64)
    }

    /// Histogram of step gaps as (gap in ticks, count), sorted by gap.
    pub fn step_period_histogram(&self) -> Vec<(usize, usize)> {
        let mut h: std::collections::BTreeMap<usize, usize> = Default::default();
        for w in self.model_steps.windows(2) {
            *h.entry(w[1] - w[0]).or_default() += 1;
        }
        h.into_iter().collect()
    }
}

/// Run the policy in closed loop with the follower arm.
///
/// The model is evaluated at advance ticks; its output becomes the active
/// command at the following advance tick and is held in between.
pub fn rollout(
    cfg: &RolloutConfig,
    model: &PolicyModel,
    plant: &PlantParams,
    gains: &ControllerGains,
    norm: &NormalizationConfig,
) -> Result<TrajectoryLog> {
    rollout_with(cfg, model, model.header.time_scaling, plant, gains, norm)
}

/// As [`rollout`], with the time scaling chosen explicitly rather than from the model header.
pub fn rollout_with(
    cfg: &RolloutConfig,
    model: &PolicyModel,
    scaling: TimeScaling,
    plant: &PlantParams,
    gains: &ControllerGains,
    norm: &NormalizationConfig,
) -> Result<TrajectoryLog> {
    cfg.validate()?;
    norm.validate()?;
    plant.validate()?;
    gains.validate()?;
    let ts = norm.control_period();
    let f = cfg.frequency;
    let f0 = norm.f0;
    let (mut sched, in_scale, out_scale) = match scaling {
        TimeScaling::Variable => (scheduler_init(norm.model_rate, f0, f, ts, cfg.mode)?, f0 / f, f / f0),
        TimeScaling::Constant => (with_threshold(1.0 / norm.model_rate, ts, cfg.mode)?, 1.0, 1.0),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut start = cfg.home;
    if cfg.start_jitter > 0.0 {
        for v in &mut start {
            *v += rng.gen_range(-cfg.start_jitter..=cfg.start_jitter);
        }
    }
    let theta0 = inverse_kinematics(start, plant)
        .ok_or_else(|| Error::invalid(format!("start position {start:?} is out of reach")))?;
    let mut arm = ControlledArm::at_rest(theta0, Some(cfg.surface_height), plant);
    let mut runner = PolicyRunner::new(&model.params);

    let n = (cfg.duration * norm.control_rate).round() as usize;
    let mut ticks = Vec::with_capacity(n);
    let mut model_steps = Vec::new();
    let mut command = RobotCommand::hold(theta0);
    let mut pending: Option<RobotCommand> = None;
    let mut input = Vec::with_capacity(model.params.arch.input_dim);
    for k in 0..n {
        let res = arm.sense(ts, plant, gains);
        let advance = k == 0 || scheduler_tick(&mut sched) == Decision::Advance;
        if advance {
            if let Some(next) = pending.take() {
                command = next;
            }
            let scaled = RobotResponse {
                omega: res.omega * in_scale,
                ..res
            };
            input.clear();
            input.extend_from_slice(&input_row(&scaled, f));
            let out = runner.step(&input)?;
            let next = leader_command(&out, out_scale)?;
            if !next.is_finite() {
                return Err(Error::SimulationDiverged { sim_time: arm.state.sim_time });
            }
            pending = Some(next);
            model_steps.push(k);
        }
        let ctl = arm.control(&command, &res, gains);
        let wrench = contact_wrench(&arm.state, plant);
        let [x, z] = forward_kinematics(&arm.state.theta, plant);
        ticks.push(TickRecord {
            time: k as f64 * ts,
            follower: res,
            command,
            tau_ref: ctl.tau_ref,
            normal_force: wrench.normal,
            ee_x: x,
            ee_z: z,
            model_step: advance,
            clamped: ctl.clamped,
        });
        arm.advance(JointVec::ZERO, ts, plant)?;
    }
    Ok(TrajectoryLog {
        config: cfg.clone(),
        time_scaling: scaling,
        control_rate: norm.control_rate,
        ticks,
        model_steps,
    })
}

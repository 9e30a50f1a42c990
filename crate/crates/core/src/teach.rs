//! Scripted, metronome-timed operator and the demonstration recorder.
//!
//! The operator holds the leader's end effector with a Cartesian spring-damper
//! and moves its target: down from the home pose until the reflected contact
//! force reaches the press threshold, then a sinusoidal stroke along x. All
//! script timing is expressed in beats (two per motion cycle), so a demo at
//! frequency f is, apart from the plant's own dynamics, a time-scaled copy of
//! the demo at any other frequency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{bilateral_refs, ControlledArm, ControllerGains};
use crate::error::{Error, Result};
use crate::plant::{
    contact_wrench, end_effector_velocity, forward_kinematics, inverse_kinematics, jacobian,
    joint_to_cartesian_force, PlantParams,
};
use crate::seed::derive_seed;
use crate::types::{DemoStep, Demonstration, JointVec, NormalizationConfig, Phase};

/// Grid and operator settings for collecting demonstrations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachConfig {
    pub frequencies: Vec<f64>,
    pub heights: Vec<f64>,
    pub repeats: usize,
    /// s
    pub total_duration: f64,
    /// Length of the press window in metronome beats.
    pub press_beats: f64,
    /// Reflected normal force that marks the surface as found, N.
    pub press_force: f64,
    /// m
    pub wipe_amplitude: f64,
    /// End-effector home position (x, z), m.
    pub home: [f64; 2],
    /// Descent speed of the target at the base frequency, m/s.
    pub descent_speed: f64,
    /// Operator hand stiffness, N/m.
    pub hand_stiffness: f64,
    /// Operator hand damping, N·s/m.
    pub hand_damping: f64,
    /// Relative jitter on amplitude and on wipe-start timing (fraction of a period).
    pub jitter: f64,
}

impl Default for TeachConfig {
    fn default() -> Self {
        TeachConfig {
            frequencies: vec![0.4, 0.6, 0.8],
            heights: vec![0.10, 0.15],
            repeats: 3,
            total_duration: 40.0,
            press_beats: 4.0,
            press_force: 5.0,
            wipe_amplitude: 0.05,
            home: [0.35, 0.20],
            descent_speed: 0.06,
            hand_stiffness: 2000.0,
            hand_damping: 80.0,
            jitter: 0.05,
        }
    }
}

impl TeachConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if self.frequencies.is_empty() || self.heights.is_empty() || self.repeats == 0 {
            return Err(Error::Config("teach grids must be non-empty".into()));
        }
        if !self.frequencies.iter().all(|f| pos(*f)) {
            return Err(Error::Config("teach frequencies must be > 0".into()));
        }
        if !self.heights.iter().all(|h| h.is_finite() && *h < self.home[1]) {
            return Err(Error::Config("surface heights must lie below the home pose".into()));
        }
        if !pos(self.total_duration)
            || !pos(self.press_beats)
            || !pos(self.press_force)
            || !pos(self.wipe_amplitude)
            || !pos(self.descent_speed)
            || !pos(self.hand_stiffness)
            || !(self.hand_damping.is_finite() && self.hand_damping >= 0.0)
        {
            return Err(Error::Config("teach durations, forces, speeds and gains must be > 0".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config("jitter must lie in [0, 0.5)".into()));
        }
        Ok(())
    }

    /// Script for one grid cell, jittered by `seed`.
    pub fn script(&self, frequency: f64, norm: &NormalizationConfig, seed: u64) -> Result<TaskScript> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = self.jitter;
        let amp_scale = if j > 0.0 { 1.0 + rng.gen_range(-j..=j) } else { 1.0 };
        let shift = if j > 0.0 { rng.gen_range(-j..=j) } else { 0.0 };
        let script = TaskScript {
            wipe_frequency: frequency,
            press_duration: self.press_beats / (2.0 * frequency),
            press_force: self.press_force,
            wipe_amplitude: self.wipe_amplitude * amp_scale,
            wipe_delay: shift / frequency,
            total_duration: self.total_duration,
            home: self.home,
            descent_speed: self.descent_speed * frequency / norm.f0,
            hand_stiffness: self.hand_stiffness,
            hand_damping: self.hand_damping,
        };
        script.validate()?;
        Ok(script)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskScript {
    /// Hz
    pub wipe_frequency: f64,
    /// s
    pub press_duration: f64,
    /// N
    pub press_force: f64,
    /// m
    pub wipe_amplitude: f64,
    /// Offset of the first stroke from the end of the press window, s.
    pub wipe_delay: f64,
    /// s
    pub total_duration: f64,
    pub home: [f64; 2],
    /// m/s
    pub descent_speed: f64,
    pub hand_stiffness: f64,
    pub hand_damping: f64,
}

impl TaskScript {
    pub fn validate(&self) -> Result<()> {
        if !(self.wipe_frequency.is_finite() && self.wipe_frequency > 0.0) {
            return Err(Error::invalid("wipe frequency must be > 0"));
        }
        if !(self.wipe_amplitude > 0.0) {
            return Err(Error::invalid("wipe amplitude must be > 0"));
        }
        if !(self.total_duration > self.wipe_start()) || !(self.wipe_start() > 0.0) {
            return Err(Error::invalid("the wipe must start inside the trial"));
        }
        Ok(())
    }

    /// Time of the first stroke, s.
    pub fn wipe_start(&self) -> f64 {
        self.press_duration + self.wipe_delay
    }

    /// Beats per second (one per stroke direction).
    pub fn beat_rate(&self) -> f64 {
        2.0 * self.wipe_frequency
    }

    /// Metronome beats inside the wipe phase: the instants the stroke reverses.
    /// Even indices end a forward (+x) stroke, odd ones a backward stroke.
    pub fn beat_times(&self) -> Vec<f64> {
        let period = 1.0 / self.beat_rate();
        let first = self.wipe_start() + 0.5 * period;
        (0..)
            .map(|k| first + k as f64 * period)
            .take_while(|t| *t <= self.total_duration)
            .collect()
    }

    pub fn phase_at(&self, t: f64) -> Phase {
        if t < self.wipe_start() {
            Phase::Press
        } else {
            Phase::Wipe
        }
    }
}

/// Target position and velocity of the operator's hand, both (x, z).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandTarget {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// Stateful operator: remembers the height at which the surface was felt.
#[derive(Clone, Debug)]
pub struct ScriptedOperator {
    pub script: TaskScript,
    frozen_z: Option<f64>,
    detected_at: Option<f64>,
}

impl ScriptedOperator {
    pub fn new(script: TaskScript) -> Self {
        ScriptedOperator {
            script,
            frozen_z: None,
            detected_at: None,
        }
    }

    /// Time at which the press threshold was first reached.
    pub fn surface_detected_at(&self) -> Option<f64> {
        self.detected_at
    }

    /// Hand target at time `t`, given the normal force felt through the leader.
    pub fn target(&mut self, t: f64, sensed_normal: f64) -> Result<HandTarget> {
        let s = &self.script;
        let [x0, z_home] = s.home;
        let descending_z = z_home - s.descent_speed * t;
        if self.frozen_z.is_none() && sensed_normal >= s.press_force {
            self.frozen_z = Some(descending_z);
            self.detected_at = Some(t);
        }
        let (z, vz) = match self.frozen_z {
            Some(z) => (z, 0.0),
            None if t < s.press_duration => (descending_z, -s.descent_speed),
            None => {
                return Err(Error::TeachFailure(format!(
                    "surface not detected within the {:.2} s press window",
                    s.press_duration
                )))
            }
        };
        let tw = s.wipe_start();
        let (x, vx) = if t >= tw {
            let w = 2.0 * std::f64::consts::PI * s.wipe_frequency;
            let a = s.wipe_amplitude;
            (x0 + a * (w * (t - tw)).sin(), a * w * (w * (t - tw)).cos())
        } else {
            (x0, 0.0)
        };
        Ok(HandTarget {
            position: [x, z],
            velocity: [vx, vz],
        })
    }

    /// Joint torque the hand applies to the leader: `Jᵀ(K(p_t − p) + D(v_t − v))`.
    pub fn hand_torque(target: &HandTarget, theta: &JointVec, omega: &JointVec, script: &TaskScript, plant: &PlantParams) -> JointVec {
        let p = forward_kinematics(theta, plant);
        let v = end_effector_velocity(theta, omega, plant);
        let f: Vec<f64> = (0..2)
            .map(|i| {
                script.hand_stiffness * (target.position[i] - p[i]) + script.hand_damping * (target.velocity[i] - v[i])
            })
            .collect();
        let j = jacobian(theta, plant);
        JointVec::new([j[0][0] * f[0] + j[1][0] * f[1], j[0][1] * f[0] + j[1][1] * f[1]])
    }
}

/// Per-tick ground truth kept alongside a recorded demonstration.
#[derive(Clone, Debug, Default)]
pub struct TeachLog {
    pub time: Vec<f64>,
    /// Follower contact normal force, N.
    pub normal_force: Vec<f64>,
    /// Follower contact torque from the plant, N·m.
    pub contact_torque: Vec<JointVec>,
    pub target_x: Vec<f64>,
    pub follower_x: Vec<f64>,
    pub leader_x: Vec<f64>,
    pub surface_detected_at: f64,
    pub wipe_start: f64,
}

/// Record one demonstration with the full tick log.
pub fn record_demonstration_with_log(
    script: &TaskScript,
    surface_height: f64,
    seed: u64,
    plant: &PlantParams,
    gains: &ControllerGains,
    norm: &NormalizationConfig,
) -> Result<(Demonstration, TeachLog)> {
    script.validate()?;
    plant.validate()?;
    gains.validate()?;
    norm.validate()?;
    if surface_height >= script.home[1] {
        return Err(Error::invalid("surface must lie below the home pose"));
    }
    let ts = norm.control_period();
    let theta0 = inverse_kinematics(script.home, plant)
        .ok_or_else(|| Error::invalid(format!("home {:?} is out of reach", script.home)))?;
    let mut leader = ControlledArm::at_rest(theta0, None, plant);
    let mut follower = ControlledArm::at_rest(theta0, Some(surface_height), plant);
    let mut operator = ScriptedOperator::new(script.clone());
    let n = (script.total_duration * norm.control_rate).round() as usize;
    let mut steps = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    let mut log = TeachLog {
        wipe_start: script.wipe_start(),
        ..TeachLog::default()
    };
    for k in 0..n {
        let t = k as f64 * ts;
        let res_l = leader.sense(ts, plant, gains);
        let res_f = follower.sense(ts, plant, gains);
        steps.push(DemoStep {
            leader: res_l,
            follower: res_f,
        });
        phases.push(script.phase_at(t));
        let (cmd_l, cmd_f) = bilateral_refs(&res_l, &res_f);
        leader.control(&cmd_l, &res_l, gains);
        follower.control(&cmd_f, &res_f, gains);

        let felt = joint_to_cartesian_force(&res_l.theta, &res_l.tau, plant)[1];
        let target = operator.target(t, felt).map_err(|e| match e {
            Error::TeachFailure(m) => Error::TeachFailure(format!("f = {} Hz, height = {surface_height} m: {m}", script.wipe_frequency)),
            other => other,
        })?;
        let hand = ScriptedOperator::hand_torque(&target, &res_l.theta, &res_l.omega, script, plant);

        let wrench = contact_wrench(&follower.state, plant);
        log.time.push(t);
        log.normal_force.push(wrench.normal);
        log.target_x.push(target.position[0]);
        log.follower_x.push(forward_kinematics(&follower.state.theta, plant)[0]);
        log.leader_x.push(forward_kinematics(&leader.state.theta, plant)[0]);

        leader.advance(hand, ts, plant)?;
        let out = follower.advance(JointVec::ZERO, ts, plant)?;
        log.contact_torque.push(out.contact_torque);
    }
    log.surface_detected_at = operator.surface_detected_at().unwrap_or(f64::NAN);
    let demo = Demonstration {
        motion_frequency: script.wipe_frequency,
        surface_height,
        sample_rate: norm.control_rate,
        seed,
        steps,
        phases,
    };
    demo.validate()?;
    Ok((demo, log))
}

/// Record one demonstration at `frequency` over a surface at `surface_height`.
pub fn record_demonstration(
    frequency: f64,
    surface_height: f64,
    teach: &TeachConfig,
    plant: &PlantParams,
    gains: &ControllerGains,
    norm: &NormalizationConfig,
    seed: u64,
) -> Result<Demonstration> {
    let script = teach.script(frequency, norm, seed)?;
    record_demonstration_with_log(&script, surface_height, seed, plant, gains, norm).map(|(d, _)| d)
}

/// One row of the dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub index: usize,
    pub motion_frequency: f64,
    pub surface_height: f64,
    pub repeat: usize,
    pub seed: u64,
    pub steps: usize,
    pub wipe_start_step: usize,
    pub stem: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub global_seed: u64,
    pub teach: TeachConfig,
    pub normalization: NormalizationConfig,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    /// Number of demonstrations per motion frequency, in grid order.
    pub fn frequency_histogram(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for e in &self.entries {
            match out.iter_mut().find(|(f, _)| *f == e.motion_frequency) {
                Some((_, n)) => *n += 1,
                None => out.push((e.motion_frequency, 1)),
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub demos: Vec<Demonstration>,
    pub manifest: DatasetManifest,
}

/// Record the full frequency × height × repeat grid. Cells run in parallel;
/// the output order is always frequency, then height, then repeat.
pub fn collect_dataset(
    teach: &TeachConfig,
    plant: &PlantParams,
    gains: &ControllerGains,
    norm: &NormalizationConfig,
    global_seed: u64,
) -> Result<Dataset> {
    teach.validate()?;
    let mut cells = Vec::new();
    for (fi, &f) in teach.frequencies.iter().enumerate() {
        for (hi, &h) in teach.heights.iter().enumerate() {
            for r in 0..teach.repeats {
                let seed = derive_seed(global_seed, "teach", &[fi as u64, hi as u64, r as u64]);
                cells.push((f, h, r, seed));
            }
        }
    }
    let demos: Vec<Demonstration> = cells
        .par_iter()
        .map(|&(f, h, r, seed)| {
            record_demonstration(f, h, teach, plant, gains, norm, seed).map_err(|e| {
                Error::TeachFailure(format!("cell f = {f} Hz, height = {h} m, repeat {r}: {e}"))
            })
        })
        .collect::<Result<_>>()?;
    let entries = cells
        .iter()
        .zip(&demos)
        .enumerate()
        .map(|(index, (&(f, h, r, seed), d))| DatasetEntry {
            index,
            motion_frequency: f,
            surface_height: h,
            repeat: r,
            seed,
            steps: d.steps.len(),
            wipe_start_step: d.wipe_start().unwrap_or(d.steps.len()),
            stem: format!("demo_{index:03}_f{:.2}_h{:.2}_r{r}", f, h),
        })
        .collect();
    Ok(Dataset {
        demos,
        manifest: DatasetManifest {
            global_seed,
            teach: teach.clone(),
            normalization: *norm,
            entries,
        },
    })
}

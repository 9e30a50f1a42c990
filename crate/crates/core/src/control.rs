//! Per-joint acceleration-based controller with a disturbance observer (DOB)
//! and a reaction-force observer (RFOB), plus the four-channel bilateral law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{friction_model, gravity_torque, plant_step, PlantParams, PlantState, StepOutput};
use crate::types::{JointVec, RobotCommand, RobotResponse, DOF};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    /// Position gain, 1/s²
    pub kp: f64,
    /// Velocity gain, 1/s
    pub kd: f64,
    /// Force gain, dimensionless
    pub kf: f64,
    /// DOB cutoff, rad/s
    pub g_dob: f64,
    /// RFOB cutoff, rad/s
    pub g_rfob: f64,
    /// Nominal joint inertia, kg·m²
    pub j_n: JointVec,
    /// Nominal viscous friction, N·m·s/rad
    pub d_n: JointVec,
    /// Nominal Coulomb friction, N·m
    pub c_n: JointVec,
    /// N·m
    pub torque_limit: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains::for_plant(&PlantParams::default(), 1.0)
    }
}

impl ControllerGains {
    /// Default gains whose friction nominals copy the plant's, scaled by `mismatch`.
    pub fn for_plant(plant: &PlantParams, mismatch: f64) -> Self {
        ControllerGains {
            kp: 900.0,
            kd: 60.0,
            kf: 1.0,
            g_dob: 40.0,
            g_rfob: 40.0,
            j_n: JointVec::new([0.15, 0.04]),
            d_n: plant.joint_viscous * mismatch,
            c_n: plant.joint_coulomb * mismatch,
            torque_limit: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.kp) || !pos(self.kd) || !pos(self.g_dob) || !pos(self.g_rfob) || !pos(self.torque_limit) {
            return Err(Error::Config("kp, kd, g_dob, g_rfob and torque_limit must be > 0".into()));
        }
        if !(self.kf.is_finite() && self.kf >= 0.0) {
            return Err(Error::Config("kf must be >= 0".into()));
        }
        if !self.j_n.0.iter().all(|v| pos(*v)) {
            return Err(Error::Config("j_n must be > 0".into()));
        }
        if !self.d_n.is_finite() || !self.c_n.is_finite() {
            return Err(Error::Config("friction nominals must be finite".into()));
        }
        Ok(())
    }
}

/// Internal state of both observers for one robot.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObserverState {
    dob_filter: JointVec,
    rfob_filter: JointVec,
    /// Latest disturbance estimate τ̂_dis.
    pub tau_dis: JointVec,
    /// Latest external torque estimate τ̂_ext.
    pub tau_ext: JointVec,
    /// Torque reference applied during the previous period.
    pub last_tau_ref: JointVec,
}

impl ObserverState {
    /// Observers settled on a robot at rest whose controller already cancels `gravity`.
    pub fn at_rest(gravity: JointVec) -> Self {
        ObserverState {
            dob_filter: gravity,
            rfob_filter: JointVec::ZERO,
            tau_dis: gravity,
            tau_ext: JointVec::ZERO,
            last_tau_ref: gravity,
        }
    }
}

/// Backward-Euler first-order low-pass `y ← (y + g·ts·u) / (1 + g·ts)`.
fn low_pass(state: &mut f64, input: f64, g: f64, ts: f64) -> f64 {
    *state = (*state + g * ts * input) / (1.0 + g * ts);
    *state
}

/// Disturbance estimate `LPF(τ_ref + g·Jn·ω) − g·Jn·ω`.
pub fn dob_update(
    obs: &mut ObserverState,
    omega: &JointVec,
    tau_ref: &JointVec,
    ts: f64,
    gains: &ControllerGains,
) -> JointVec {
    let g = gains.g_dob;
    for j in 0..DOF {
        let m = g * gains.j_n[j] * omega[j];
        obs.tau_dis[j] = low_pass(&mut obs.dob_filter[j], tau_ref[j] + m, g, ts) - m;
    }
    obs.tau_dis
}

/// External torque estimate: the DOB structure with nominal friction and
/// gravity (`gravity_nominal`, evaluated at the current angles) removed.
pub fn rfob_update(
    obs: &mut ObserverState,
    omega: &JointVec,
    tau_ref: &JointVec,
    gravity_nominal: &JointVec,
    ts: f64,
    gains: &ControllerGains,
) -> JointVec {
    let g = gains.g_rfob;
    let fric = friction_model(omega, &gains.d_n, &gains.c_n);
    for j in 0..DOF {
        let m = g * gains.j_n[j] * omega[j];
        let u = tau_ref[j] + m - fric[j] - gravity_nominal[j];
        obs.tau_ext[j] = low_pass(&mut obs.rfob_filter[j], u, g, ts) - m;
    }
    obs.tau_ext
}

/// Refresh both observers from the newest velocity sample and the torque applied last period.
pub fn update_observers(
    obs: &mut ObserverState,
    omega: &JointVec,
    gravity_nominal: &JointVec,
    ts: f64,
    gains: &ControllerGains,
) {
    let tau_ref = obs.last_tau_ref;
    dob_update(obs, omega, &tau_ref, ts, gains);
    rfob_update(obs, omega, &tau_ref, gravity_nominal, ts, gains);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutput {
    pub tau_ref: JointVec,
    /// True when any joint hit the torque limit.
    pub clamped: bool,
}

/// `τ_ref = Jn·(Kp·Δθ + Kd·Δω) + Kf·(τ_cmd − τ̂_ext) + τ̂_dis`, clamped to the torque limit.
/// The applied reference is stored in `obs` for the next observer update.
pub fn joint_control(
    cmd: &RobotCommand,
    res: &RobotResponse,
    obs: &mut ObserverState,
    gains: &ControllerGains,
) -> ControlOutput {
    let mut tau_ref = JointVec::ZERO;
    let mut clamped = false;
    let lim = gains.torque_limit;
    for j in 0..DOF {
        let acc = gains.kp * (cmd.theta[j] - res.theta[j]) + gains.kd * (cmd.omega[j] - res.omega[j]);
        let raw = gains.j_n[j] * acc + gains.kf * (cmd.tau[j] - obs.tau_ext[j]) + obs.tau_dis[j];
        let t = if raw.is_nan() { 0.0 } else { raw.clamp(-lim, lim) };
        clamped |= t != raw;
        tau_ref[j] = t;
    }
    obs.last_tau_ref = tau_ref;
    ControlOutput { tau_ref, clamped }
}

/// Four-channel bilateral references: each robot tracks the other's position
/// and velocity, and is commanded the negation of the other's external torque.
pub fn bilateral_refs(leader: &RobotResponse, follower: &RobotResponse) -> (RobotCommand, RobotCommand) {
    let leader_cmd = RobotCommand {
        theta: follower.theta,
        omega: follower.omega,
        tau: -follower.tau,
    };
    let follower_cmd = RobotCommand {
        theta: leader.theta,
        omega: leader.omega,
        tau: -leader.tau,
    };
    (leader_cmd, follower_cmd)
}

/// One simulated arm with its observers and controller state.
#[derive(Clone, Copy, Debug)]
pub struct ControlledArm {
    pub state: PlantState,
    pub obs: ObserverState,
}

impl ControlledArm {
    /// Arm at rest at `theta`, observers settled on holding it against gravity.
    pub fn at_rest(theta: JointVec, surface_height: Option<f64>, plant: &PlantParams) -> Self {
        ControlledArm {
            state: PlantState::at_rest(theta, surface_height),
            obs: ObserverState::at_rest(gravity_torque(&theta, plant)),
        }
    }

    /// Update the observers from the current sample and return the response.
    pub fn sense(&mut self, ts: f64, plant: &PlantParams, gains: &ControllerGains) -> RobotResponse {
        let g = gravity_torque(&self.state.theta, plant);
        update_observers(&mut self.obs, &self.state.omega, &g, ts, gains);
        RobotResponse {
            theta: self.state.theta,
            omega: self.state.omega,
            tau: self.obs.tau_ext,
        }
    }

    pub fn control(&mut self, cmd: &RobotCommand, res: &RobotResponse, gains: &ControllerGains) -> ControlOutput {
        joint_control(cmd, res, &mut self.obs, gains)
    }

    /// Apply the last torque reference plus `applied` for one period.
    pub fn advance(&mut self, applied: JointVec, ts: f64, plant: &PlantParams) -> Result<StepOutput> {
        let out = plant_step(&self.state, self.obs.last_tau_ref, applied, ts, plant)?;
        self.state = out.state;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gains() -> ControllerGains {
        ControllerGains {
            d_n: JointVec::ZERO,
            c_n: JointVec::ZERO,
            ..ControllerGains::default()
        }
    }

    #[test]
    fn null_case_estimates_zero() {
        let g = gains();
        let mut obs = ObserverState::default();
        for _ in 0..100 {
            let d = dob_update(&mut obs, &JointVec::ZERO, &JointVec::ZERO, 0.002, &g);
            assert_eq!(d, JointVec::ZERO);
        }
    }

    #[test]
    fn observer_step_response_is_monotone_without_overshoot() {
        // robot held still, torque reference steps: both estimates rise monotonically to it
        let g = gains();
        let mut obs = ObserverState::default();
        let step = JointVec::new([2.0, -1.0]);
        let mut prev = JointVec::ZERO;
        for _ in 0..2000 {
            let d = dob_update(&mut obs, &JointVec::ZERO, &step, 0.002, &g);
            for j in 0..DOF {
                assert!(d[j].abs() >= prev[j].abs() - 1e-15);
                assert!(d[j].abs() <= step[j].abs() + 1e-12);
            }
            prev = d;
        }
        assert!((prev - step).max_abs() < 1e-9);
    }

    #[test]
    fn control_with_zero_error_returns_disturbance_only() {
        let g = gains();
        let res = RobotResponse {
            theta: JointVec::new([0.3, -1.0]),
            omega: JointVec::new([0.1, 0.2]),
            tau: JointVec::new([0.5, 0.25]),
        };
        let mut obs = ObserverState {
            tau_dis: JointVec::new([1.5, -0.7]),
            tau_ext: res.tau,
            ..ObserverState::default()
        };
        let cmd = RobotCommand {
            theta: res.theta,
            omega: res.omega,
            tau: res.tau,
        };
        let out = joint_control(&cmd, &res, &mut obs, &g);
        assert_eq!(out.tau_ref, JointVec::new([1.5, -0.7]));
        assert!(!out.clamped);
        assert_eq!(obs.last_tau_ref, out.tau_ref);
    }

    #[test]
    fn control_clamps_to_limit() {
        let g = gains();
        let res = RobotResponse::default();
        let cmd = RobotCommand::hold(JointVec::new([10.0, -10.0]));
        let mut obs = ObserverState::default();
        let out = joint_control(&cmd, &res, &mut obs, &g);
        assert!(out.clamped);
        assert_eq!(out.tau_ref, JointVec::new([g.torque_limit, -g.torque_limit]));
    }

    #[test]
    fn bilateral_fixed_point() {
        let s = RobotResponse {
            theta: JointVec::new([0.2, -1.2]),
            omega: JointVec::new([0.3, 0.1]),
            tau: JointVec::ZERO,
        };
        let (l, f) = bilateral_refs(&s, &s);
        assert_eq!(l.theta, s.theta);
        assert_eq!(f.omega, s.omega);
        assert_eq!(l.tau, JointVec::ZERO);
        assert_eq!(f.tau, JointVec::ZERO);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn response() -> impl Strategy<Value = RobotResponse> {
            prop::array::uniform6(-5.0f64..5.0).prop_map(|v| RobotResponse::from_row(&v).unwrap())
        }

        proptest! {
            #[test]
            fn bilateral_swap_mirrors(a in response(), b in response()) {
                let (l1, f1) = bilateral_refs(&a, &b);
                let (l2, f2) = bilateral_refs(&b, &a);
                prop_assert_eq!(l1, f2);
                prop_assert_eq!(f1, l2);
            }

            #[test]
            fn output_is_bounded(cmd in prop::array::uniform6(-1e3f64..1e3), res in response(),
                                 dis in prop::array::uniform2(-1e3f64..1e3)) {
                let g = gains();
                let cmd = RobotResponse::from_row(&cmd).unwrap();
                let cmd = RobotCommand { theta: cmd.theta, omega: cmd.omega, tau: cmd.tau };
                let mut obs = ObserverState { tau_dis: JointVec(dis), ..ObserverState::default() };
                let out = joint_control(&cmd, &res, &mut obs, &g);
                prop_assert!(out.tau_ref.max_abs() <= g.torque_limit);
            }
        }
    }
}

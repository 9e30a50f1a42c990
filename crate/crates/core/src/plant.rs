//! Two-link planar arm pressing on a horizontal surface.
//!
//! Joint 1 is measured from the +x axis, joint 2 relative to link 1; +z is up
//! and gravity acts along −z. Contact is a penalty spring-damper on the
//! end effector with regularized Coulomb plus viscous tangential friction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{JointVec, DOF};

/// Velocity scale of the tanh-regularized tangential Coulomb friction (m/s).
pub const TANGENTIAL_SMOOTHING: f64 = 1e-3;

/// Velocity scale of the tanh-regularized joint Coulomb friction (rad/s).
pub const JOINT_SMOOTHING: f64 = 1e-2;

pub type Mat2 = [[f64; 2]; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// m
    pub link_lengths: JointVec,
    /// kg, uniform rods
    pub link_masses: JointVec,
    /// Reflected actuator inertia per joint, kg·m²
    pub rotor_inertia: JointVec,
    /// N·m·s/rad
    pub joint_viscous: JointVec,
    /// N·m
    pub joint_coulomb: JointVec,
    /// m/s²
    pub gravity: f64,
    /// N/m
    pub contact_stiffness: f64,
    /// N·s/m
    pub contact_damping: f64,
    pub tangential_coulomb: f64,
    /// N·s/m
    pub tangential_viscous: f64,
    /// Actuator saturation, N·m
    pub torque_cap: f64,
    /// Integration substeps per control period
    pub substeps: usize,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            link_lengths: JointVec::new([0.3, 0.3]),
            link_masses: JointVec::new([1.0, 1.0]),
            rotor_inertia: JointVec::new([0.01, 0.01]),
            joint_viscous: JointVec::new([0.05, 0.05]),
            joint_coulomb: JointVec::new([0.05, 0.05]),
            gravity: 9.81,
            contact_stiffness: 5000.0,
            contact_damping: 50.0,
            tangential_coulomb: 0.3,
            tangential_viscous: 1.0,
            torque_cap: 40.0,
            substeps: 1,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let all = |j: &JointVec, f: &dyn Fn(f64) -> bool| j.0.iter().all(|v| f(*v));
        if !all(&self.link_lengths, &pos) || !all(&self.link_masses, &pos) {
            return Err(Error::Config("link lengths and masses must be > 0".into()));
        }
        if !all(&self.rotor_inertia, &nonneg)
            || !all(&self.joint_viscous, &nonneg)
            || !all(&self.joint_coulomb, &nonneg)
        {
            return Err(Error::Config("rotor inertia and joint friction must be >= 0".into()));
        }
        if !nonneg(self.gravity)
            || !pos(self.contact_stiffness)
            || !nonneg(self.contact_damping)
            || !nonneg(self.tangential_coulomb)
            || !nonneg(self.tangential_viscous)
            || !pos(self.torque_cap)
        {
            return Err(Error::Config("contact, friction, gravity and torque cap must be non-negative".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be >= 1".into()));
        }
        Ok(())
    }

    /// Same arm with every friction coefficient removed.
    pub fn frictionless(&self) -> Self {
        PlantParams {
            joint_viscous: JointVec::ZERO,
            joint_coulomb: JointVec::ZERO,
            tangential_coulomb: 0.0,
            tangential_viscous: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantState {
    pub theta: JointVec,
    pub omega: JointVec,
    pub sim_time: f64,
    /// Height of the wiping surface; `None` for a robot moving in free space.
    pub surface_height: Option<f64>,
}

impl PlantState {
    pub fn at_rest(theta: JointVec, surface_height: Option<f64>) -> Self {
        PlantState {
            theta,
            omega: JointVec::ZERO,
            sim_time: 0.0,
            surface_height,
        }
    }
}

/// Contact force on the end effector: normal along +z, tangential along +x.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactWrench {
    pub normal: f64,
    pub tangential: f64,
}

pub fn forward_kinematics(theta: &JointVec, p: &PlantParams) -> [f64; 2] {
    let [l1, l2] = p.link_lengths.0;
    let (q1, q12) = (theta[0], theta[0] + theta[1]);
    [l1 * q1.cos() + l2 * q12.cos(), l1 * q1.sin() + l2 * q12.sin()]
}

/// Rows are (x, z), columns are joints.
pub fn jacobian(theta: &JointVec, p: &PlantParams) -> Mat2 {
    let [l1, l2] = p.link_lengths.0;
    let (q1, q12) = (theta[0], theta[0] + theta[1]);
    let (s1, c1, s12, c12) = (q1.sin(), q1.cos(), q12.sin(), q12.cos());
    [[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]]
}

pub fn end_effector_velocity(theta: &JointVec, omega: &JointVec, p: &PlantParams) -> [f64; 2] {
    mat_vec(&jacobian(theta, p), omega.0)
}

/// Elbow-up inverse kinematics (θ₂ ≤ 0). `None` when the point is out of reach.
pub fn inverse_kinematics(pos: [f64; 2], p: &PlantParams) -> Option<JointVec> {
    let [l1, l2] = p.link_lengths.0;
    let [x, z] = pos;
    let c2 = (x * x + z * z - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&c2) {
        return None;
    }
    let q2 = -c2.acos();
    let q1 = z.atan2(x) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
    Some(JointVec::new([q1, q2]))
}

pub fn mass_matrix(theta: &JointVec, p: &PlantParams) -> Mat2 {
    let [l1, l2] = p.link_lengths.0;
    let [m1, m2] = p.link_masses.0;
    let [r1, r2] = p.rotor_inertia.0;
    let (lc1, lc2) = (l1 / 2.0, l2 / 2.0);
    let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
    let c2 = theta[1].cos();
    let m11 = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2) + r1;
    let m12 = i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2);
    let m22 = i2 + m2 * lc2 * lc2 + r2;
    [[m11, m12], [m12, m22]]
}

/// Coriolis and centrifugal torques C(θ, ω)·ω.
pub fn coriolis(theta: &JointVec, omega: &JointVec, p: &PlantParams) -> JointVec {
    let l1 = p.link_lengths[0];
    let lc2 = p.link_lengths[1] / 2.0;
    let h = p.link_masses[1] * l1 * lc2 * theta[1].sin();
    let (w1, w2) = (omega[0], omega[1]);
    JointVec::new([-h * (2.0 * w1 * w2 + w2 * w2), h * w1 * w1])
}

pub fn gravity_torque(theta: &JointVec, p: &PlantParams) -> JointVec {
    let [l1, l2] = p.link_lengths.0;
    let [m1, m2] = p.link_masses.0;
    let (c1, c12) = (theta[0].cos(), (theta[0] + theta[1]).cos());
    let g = p.gravity;
    JointVec::new([
        g * (m1 * l1 / 2.0 * c1 + m2 * (l1 * c1 + l2 / 2.0 * c12)),
        g * m2 * l2 / 2.0 * c12,
    ])
}

/// Joint friction torque opposing motion.
pub fn joint_friction(omega: &JointVec, p: &PlantParams) -> JointVec {
    friction_model(omega, &p.joint_viscous, &p.joint_coulomb)
}

/// `viscous·ω + coulomb·tanh(ω / JOINT_SMOOTHING)`, shared by the plant and the observers' nominal model.
pub fn friction_model(omega: &JointVec, viscous: &JointVec, coulomb: &JointVec) -> JointVec {
    let mut out = JointVec::ZERO;
    for j in 0..DOF {
        out[j] = viscous[j] * omega[j] + coulomb[j] * (omega[j] / JOINT_SMOOTHING).tanh();
    }
    out
}

pub fn contact_wrench(state: &PlantState, p: &PlantParams) -> ContactWrench {
    let Some(surface) = state.surface_height else {
        return ContactWrench::default();
    };
    let [_, z] = forward_kinematics(&state.theta, p);
    let penetration = surface - z;
    if penetration <= 0.0 {
        return ContactWrench::default();
    }
    let [xd, zd] = end_effector_velocity(&state.theta, &state.omega, p);
    let normal = (p.contact_stiffness * penetration + p.contact_damping * (-zd).max(0.0)).max(0.0);
    let tangential = -(p.tangential_coulomb * normal * (xd / TANGENTIAL_SMOOTHING).tanh()
        + p.tangential_viscous * xd);
    ContactWrench { normal, tangential }
}

/// Joint torque produced by a contact wrench, Jᵀ·F.
pub fn contact_torque(theta: &JointVec, wrench: &ContactWrench, p: &PlantParams) -> JointVec {
    let j = jacobian(theta, p);
    let f = [wrench.tangential, wrench.normal];
    JointVec::new([j[0][0] * f[0] + j[1][0] * f[1], j[0][1] * f[0] + j[1][1] * f[1]])
}

/// Kinetic plus potential energy, with potential measured from the arm hanging straight down.
pub fn mechanical_energy(state: &PlantState, p: &PlantParams) -> f64 {
    let m = mass_matrix(&state.theta, p);
    let w = state.omega.0;
    let ke = 0.5 * (w[0] * (m[0][0] * w[0] + m[0][1] * w[1]) + w[1] * (m[1][0] * w[0] + m[1][1] * w[1]));
    let [l1, l2] = p.link_lengths.0;
    let [m1, m2] = p.link_masses.0;
    let (s1, s12) = (state.theta[0].sin(), (state.theta[0] + state.theta[1]).sin());
    let height = m1 * l1 / 2.0 * s1 + m2 * (l1 * s1 + l2 / 2.0 * s12);
    let lowest = -(m1 * l1 / 2.0 + m2 * (l1 + l2 / 2.0));
    ke + p.gravity * (height - lowest)
}

/// Result of advancing the plant by one control period.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub state: PlantState,
    /// Motor torque after the actuator cap.
    pub motor_torque: JointVec,
    /// Contact torque Jᵀ·F averaged over the period.
    pub contact_torque: JointVec,
    /// Joint friction torque (opposing motion) averaged over the period.
    pub friction_torque: JointVec,
}

impl StepOutput {
    /// Everything acting on the joints besides the motor, gravity and inertia,
    /// expressed as torque the environment applies to the arm.
    pub fn external_torque(&self) -> JointVec {
        self.contact_torque - self.friction_torque
    }
}

/// Advance one control period of length `ts` with semi-implicit Euler.
///
/// `motor` is clamped to the torque cap; `applied` is an external torque on
/// the joints (e.g. an operator's hand) that bypasses the cap.
pub fn plant_step(
    state: &PlantState,
    motor: JointVec,
    applied: JointVec,
    ts: f64,
    p: &PlantParams,
) -> Result<StepOutput> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::invalid(format!("plant step needs ts > 0, got {ts}")));
    }
    if !motor.is_finite() || !applied.is_finite() {
        return Err(Error::SimulationDiverged {
            sim_time: state.sim_time,
        });
    }
    let cap = p.torque_cap;
    let motor = motor.map(|t| t.clamp(-cap, cap));
    let n = p.substeps.max(1);
    let h = ts / n as f64;
    let mut s = *state;
    let mut contact_sum = JointVec::ZERO;
    let mut friction_sum = JointVec::ZERO;
    for _ in 0..n {
        let wrench = contact_wrench(&s, p);
        let tau_contact = contact_torque(&s.theta, &wrench, p);
        let fric = joint_friction(&s.omega, p);
        let rhs = motor + applied + tau_contact
            - coriolis(&s.theta, &s.omega, p)
            - gravity_torque(&s.theta, p)
            - fric;
        let acc = solve2(&mass_matrix(&s.theta, p), rhs.0);
        s.omega = s.omega + JointVec(acc) * h;
        s.theta = s.theta + s.omega * h;
        contact_sum += tau_contact;
        friction_sum += fric;
    }
    s.sim_time = state.sim_time + ts;
    if !s.theta.is_finite() || !s.omega.is_finite() {
        return Err(Error::SimulationDiverged {
            sim_time: s.sim_time,
        });
    }
    let inv = 1.0 / n as f64;
    Ok(StepOutput {
        state: s,
        motor_torque: motor,
        contact_torque: contact_sum * inv,
        friction_torque: friction_sum * inv,
    })
}

pub fn mat_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn solve2(m: &Mat2, b: [f64; 2]) -> [f64; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        (m[1][1] * b[0] - m[0][1] * b[1]) / det,
        (m[0][0] * b[1] - m[1][0] * b[0]) / det,
    ]
}

/// Solve Jᵀ·F = τ for the end-effector force F.
pub fn joint_to_cartesian_force(theta: &JointVec, tau: &JointVec, p: &PlantParams) -> [f64; 2] {
    let j = jacobian(theta, p);
    let jt = [[j[0][0], j[1][0]], [j[0][1], j[1][1]]];
    solve2(&jt, tau.0)
}

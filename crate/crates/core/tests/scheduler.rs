use proptest::prelude::*;
use vfil::infer::{
    denormalize_model_output, normalize_model_input, scheduler_init, scheduler_tick, with_threshold, Decision,
    SchedulerMode,
};
use vfil::types::{JointVec, RobotResponse};

/// Tick indices (1-based) at which the scheduler advances.
fn advance_ticks(threshold: f64, ts: f64, mode: SchedulerMode, ticks: usize) -> Vec<usize> {
    let mut s = with_threshold(threshold, ts, mode).unwrap();
    (1..=ticks).filter(|_| scheduler_tick(&mut s) == Decision::Advance).collect()
}

fn gaps(ticks: &[usize]) -> Vec<usize> {
    ticks.windows(2).map(|w| w[1] - w[0]).collect()
}

#[test]
fn init_thresholds() {
    let s = scheduler_init(25.0, 0.6, 0.2, 0.002, SchedulerMode::PaperCarry).unwrap();
    assert!((s.threshold - 0.120).abs() < 1e-15);
    let s = scheduler_init(25.0, 0.6, 0.6, 0.002, SchedulerMode::PaperCarry).unwrap();
    assert_eq!(s.threshold, 1.0 / 25.0);
    let s = scheduler_init(25.0, 0.6, 1.4, 0.002, SchedulerMode::PaperCarry).unwrap();
    assert!((s.threshold - 0.6 / 35.0).abs() < 1e-15);
    assert_eq!((s.t, s.t_r, s.step_count), (0.0, 0.0, 0));
    assert!(scheduler_init(25.0, 0.6, 0.0, 0.002, SchedulerMode::PaperCarry).is_err());
    assert!(scheduler_init(25.0, 0.6, -1.0, 0.002, SchedulerMode::ExactCarry).is_err());
}

#[test]
fn paper_carry_alternates_six_and_four_ms() {
    let t = advance_ticks(0.005, 0.002, SchedulerMode::PaperCarry, 1000);
    let g = gaps(&t);
    for (i, w) in g.windows(2).enumerate() {
        assert_ne!(w[0], w[1], "gap pattern breaks at {i}: {:?}", &g[..10]);
        assert!(w[0] == 3 || w[0] == 2);
    }
    let mean = g.iter().sum::<usize>() as f64 * 0.002 / g.len() as f64;
    assert!((mean - 0.005).abs() < 1e-4);
}

#[test]
fn divisible_threshold_advances_every_nth_tick() {
    for mode in [SchedulerMode::PaperCarry, SchedulerMode::ExactCarry] {
        let mut s = with_threshold(0.040, 0.002, mode).unwrap();
        for k in 1..=2000 {
            let d = scheduler_tick(&mut s);
            assert_eq!(d == Decision::Advance, k % 20 == 0, "tick {k}");
            assert!(s.t_r.abs() < 1e-12);
        }
    }
}

#[test]
fn carry_modes_long_run_means() {
    let n = 100_000;
    let paper = gaps(&advance_ticks(0.0045, 0.002, SchedulerMode::PaperCarry, n));
    let exact = gaps(&advance_ticks(0.0045, 0.002, SchedulerMode::ExactCarry, n));
    let mean = |g: &[usize]| g.iter().sum::<usize>() as f64 * 0.002 / g.len() as f64;
    assert!((mean(&paper) - 0.0050).abs() < 1e-6, "{}", mean(&paper));
    assert!((mean(&exact) - 0.0045).abs() < 1e-6, "{}", mean(&exact));
}

#[test]
fn threshold_below_ts_is_rejected() {
    assert!(with_threshold(0.001, 0.002, SchedulerMode::ExactCarry).is_err());
}

#[test]
fn velocity_boundary_scaling() {
    let r = RobotResponse {
        theta: JointVec::new([0.3, -0.2]),
        omega: JointVec::new([1.0, -2.0]),
        tau: JointVec::new([0.5, 0.1]),
    };
    let n = normalize_model_input(&r, 0.2, 0.6);
    assert!((n.omega - JointVec::new([3.0, -6.0])).max_abs() < 1e-12, "{:?}", n.omega);
    assert_eq!((n.theta, n.tau), (r.theta, r.tau));
    assert_eq!(normalize_model_input(&r, 0.6, 0.6), r);

    let mut out = vec![0.0; 12];
    out[6..].copy_from_slice(&[0.1, 0.2, 0.6, -0.3, 1.0, 2.0]);
    let cmd = denormalize_model_output(&out, 1.4, 0.6).unwrap();
    assert!((cmd.omega[0] - 0.6 * 1.4 / 0.6).abs() < 1e-15);
    assert_eq!(cmd.theta, JointVec::new([0.1, 0.2]));
    assert_eq!(cmd.tau, JointVec::new([-1.0, -2.0]));
    let same = denormalize_model_output(&out, 0.6, 0.6).unwrap();
    assert_eq!(same.omega, JointVec::new([0.6, -0.3]));
    assert!(denormalize_model_output(&out[..11], 0.6, 0.6).is_err());
}

proptest! {
    #[test]
    fn exact_carry_rate_and_two_gap_values(ratio in 1.0f64..80.0, ticks in 500usize..20_000) {
        let ts = 0.002;
        let thr = ratio * ts;
        let t = advance_ticks(thr, ts, SchedulerMode::ExactCarry, ticks);
        let expected = ticks as f64 * ts / thr;
        prop_assert!((t.len() as f64 - expected).abs() <= 1.0, "{} vs {}", t.len(), expected);
        let hi = (thr / ts - 1e-9).ceil() as usize;
        for g in gaps(&t) {
            prop_assert!(g == hi || g + 1 == hi, "gap {} outside {{{}, {}}}", g, hi - 1, hi);
        }
    }

    #[test]
    fn paper_carry_mean_period_not_below_threshold(ratio in 1.0f64..80.0) {
        let ts = 0.002;
        let thr = ratio * ts;
        let g = gaps(&advance_ticks(thr, ts, SchedulerMode::PaperCarry, 50_000));
        prop_assume!(g.len() > 10);
        let mean = g.iter().sum::<usize>() as f64 * ts / g.len() as f64;
        prop_assert!(mean >= thr - 1e-9, "mean {} < threshold {}", mean, thr);
    }

    #[test]
    fn paper_carry_remainder_is_bounded(ratio in 1.0f64..80.0) {
        let mut s = with_threshold(ratio * 0.002, 0.002, SchedulerMode::PaperCarry).unwrap();
        for _ in 0..5_000 {
            scheduler_tick(&mut s);
            prop_assert!(s.t_r.abs() <= s.threshold + 1e-12);
        }
    }

    #[test]
    fn normalize_denormalize_is_identity_on_omega(f in 0.05f64..3.0, w in -10.0f64..10.0) {
        let r = RobotResponse { theta: JointVec::ZERO, omega: JointVec::new([w, -w]), tau: JointVec::ZERO };
        let n = normalize_model_input(&r, f, 0.6);
        let mut out = vec![0.0; 12];
        out[8] = n.omega[0];
        out[9] = n.omega[1];
        let back = denormalize_model_output(&out, f, 0.6).unwrap();
        prop_assert!((back.omega[0] - w).abs() <= 1e-12 * (1.0 + w.abs()));
    }
}

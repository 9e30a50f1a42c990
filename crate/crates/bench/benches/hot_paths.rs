use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use vfil::infer::{scheduler_init, scheduler_tick};
use vfil::plant::{gravity_torque, inverse_kinematics, plant_step};
use vfil::policy::{policy_backward, policy_init, PolicyRunner};
use vfil::{PlantParams, PlantState, PolicyArch, SchedulerMode, TrainingSequence, POLICY_INPUT_DIM, POLICY_OUTPUT_DIM};

const ARCH: PolicyArch = PolicyArch {
    layers: 2,
    hidden: 64,
    input_dim: POLICY_INPUT_DIM,
    output_dim: POLICY_OUTPUT_DIM,
};

fn plant(c: &mut Criterion) {
    let p = PlantParams::default();
    let theta = inverse_kinematics([0.35, 0.1005], &p).unwrap();
    let state = PlantState::at_rest(theta, Some(0.1));
    let motor = gravity_torque(&theta, &p);
    c.bench_function("plant_step in contact", |b| {
        b.iter(|| plant_step(black_box(&state), black_box(motor), vfil::JointVec::ZERO, 0.002, &p).unwrap())
    });
}

fn scheduler(c: &mut Criterion) {
    let mut s = scheduler_init(25.0, 0.6, 1.4, 0.002, SchedulerMode::PaperCarry).unwrap();
    c.bench_function("scheduler_tick", |b| b.iter(|| scheduler_tick(black_box(&mut s))));
}

fn policy(c: &mut Criterion) {
    let params = policy_init(ARCH, 1).unwrap();
    let mut runner = PolicyRunner::new(&params);
    let input = [0.9, -1.7, 0.1, 0.2, 0.3, -0.4, 0.6];
    c.bench_function("policy step 2x64", |b| b.iter(|| runner.step(black_box(&input)).unwrap()));

    let len = 200;
    let seq = TrainingSequence {
        label: 0.6,
        step_period_original: 0.04,
        input_dim: ARCH.input_dim,
        output_dim: ARCH.output_dim,
        inputs: (0..len * ARCH.input_dim).map(|k| (k as f64 * 0.37).sin()).collect(),
        targets: (0..len * ARCH.output_dim).map(|k| (k as f64 * 0.21).cos()).collect(),
    };
    let mut g = c.benchmark_group("bptt");
    g.sample_size(20);
    g.bench_function("backward 200 steps 2x64", |b| b.iter(|| policy_backward(&params, black_box(&seq)).unwrap()));
    g.finish();
}

criterion_group!(benches, plant, scheduler, policy);
criterion_main!(benches);

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vfil::normalize::{SequenceOrigin, TrainingSet};
use vfil::policy::{
    batch_gradients, compute_loss, policy_backward, policy_forward, policy_init, train, HiddenState, PolicyArch,
    PolicyParams, Standardizer, TrainConfig,
};
use vfil::types::{NormalizationConfig, TrainingSequence};

fn random_sequence(rng: &mut ChaCha8Rng, len: usize, input_dim: usize, output_dim: usize) -> TrainingSequence {
    TrainingSequence {
        label: 0.6,
        step_period_original: 0.04,
        input_dim,
        output_dim,
        inputs: (0..len * input_dim).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        targets: (0..len * output_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

fn small_params(seed: u64) -> PolicyParams {
    let arch = PolicyArch {
        layers: 2,
        hidden: 6,
        input_dim: 4,
        output_dim: 3,
    };
    let mut p = policy_init(arch, seed).unwrap();
    p.input_stats = Standardizer {
        mean: vec![0.1, -0.2, 0.0, 0.3],
        std: vec![1.5, 0.7, 1.0, 2.0],
    };
    p.output_stats = Standardizer {
        mean: vec![0.05, 0.0, -0.1],
        std: vec![0.8, 1.2, 1.0],
    };
    p
}

/// Summed squared error computed step by step with `policy_forward`.
fn sse_reference(p: &PolicyParams, seq: &TrainingSequence) -> f64 {
    let mut h = HiddenState::zeros(&p.arch);
    let mut sse = 0.0;
    for k in 0..seq.len() {
        let x = p.input_stats.standardize(seq.input(k));
        let (y, next) = policy_forward(p, &h, &x).unwrap();
        let t = p.output_stats.standardize(seq.target(k));
        sse += y.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        h = next;
    }
    sse
}

#[test]
fn bptt_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = small_params(3);
    let seq = random_sequence(&mut rng, 9, 4, 3);
    let g = policy_backward(&p, &seq).unwrap();
    assert!((g.sse - sse_reference(&p, &seq)).abs() < 1e-10);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let i = rng.gen_range(0..p.weights.len());
        let mut plus = p.clone();
        plus.weights[i] += eps;
        let mut minus = p.clone();
        minus.weights[i] -= eps;
        let numeric = (sse_reference(&plus, &seq) - sse_reference(&minus, &seq)) / (2.0 * eps);
        let analytic = g.grad[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn padded_batch_equals_sum_of_singles() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = small_params(8);
    let a = random_sequence(&mut rng, 7, 4, 3);
    let b = random_sequence(&mut rng, 3, 4, 3);
    let both = batch_gradients(&p, &[&a, &b]).unwrap();
    let ga = policy_backward(&p, &a).unwrap();
    let gb = policy_backward(&p, &b).unwrap();
    assert_eq!(both.count, ga.count + gb.count);
    assert!((both.sse - ga.sse - gb.sse).abs() < 1e-12);
    for i in 0..p.weights.len() {
        assert!((both.grad[i] - ga.grad[i] - gb.grad[i]).abs() < 1e-11);
    }
}

#[test]
fn duplicated_sequence_doubles_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = small_params(2);
    let a = random_sequence(&mut rng, 6, 4, 3);
    let one = policy_backward(&p, &a).unwrap();
    let two = batch_gradients(&p, &[&a, &a]).unwrap();
    for i in 0..p.weights.len() {
        assert!((two.grad[i] - 2.0 * one.grad[i]).abs() <= 1e-12 * (1.0 + one.grad[i].abs()));
    }
}

#[test]
fn exact_prediction_has_zero_loss_and_gradient() {
    let arch = PolicyArch {
        layers: 1,
        hidden: 4,
        input_dim: 2,
        output_dim: 2,
    };
    let mut p = policy_init(arch, 0).unwrap();
    p.weights.iter_mut().for_each(|w| *w = 0.0);
    let n = p.weights.len();
    p.weights[n - 2] = 0.25;
    p.weights[n - 1] = -0.5;
    let seq = TrainingSequence {
        label: 0.6,
        step_period_original: 0.04,
        input_dim: 2,
        output_dim: 2,
        inputs: vec![0.0; 10],
        targets: [0.25, -0.5].repeat(5),
    };
    assert_eq!(compute_loss(&p, &[&seq]).unwrap(), 0.0);
    let g = policy_backward(&p, &seq).unwrap();
    assert!(g.grad.iter().all(|v| *v == 0.0));
}

#[test]
fn constant_offset_loss() {
    let arch = PolicyArch {
        layers: 1,
        hidden: 3,
        input_dim: 1,
        output_dim: 4,
    };
    let mut p = policy_init(arch, 0).unwrap();
    p.weights.iter_mut().for_each(|w| *w = 0.0);
    let d = 0.3;
    let mut targets = vec![0.0; 4 * 6];
    for k in 0..6 {
        targets[4 * k + 2] = d;
    }
    let seq = TrainingSequence {
        label: 0.6,
        step_period_original: 0.04,
        input_dim: 1,
        output_dim: 4,
        inputs: vec![1.0; 6],
        targets,
    };
    let loss = compute_loss(&p, &[&seq]).unwrap();
    assert!((loss - d * d / 4.0).abs() < 1e-15);
    assert!(compute_loss(&p, &[]).is_err());
}

fn toy_set(seqs: Vec<TrainingSequence>) -> TrainingSet {
    let origins = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| SequenceOrigin {
            demo_index: 0,
            phase_offset: i,
            label: s.label,
            surface_height: 0.1,
            len: s.len(),
        })
        .collect();
    let (i, o) = (seqs[0].input_dim, seqs[0].output_dim);
    TrainingSet {
        vfil: true,
        config: NormalizationConfig::default(),
        sequences: seqs,
        origins,
        input_stats: Standardizer::identity(i),
        output_stats: Standardizer::identity(o),
    }
}

fn toy_config(steps: usize) -> TrainConfig {
    TrainConfig {
        layers: 1,
        hidden: 8,
        learning_rate: 1e-2,
        final_lr_fraction: 0.1,
        steps,
        batch_size: 2,
        window: 0,
        grad_clip: 10.0,
        seed: 1,
        validation_stride: 0,
        eval_every: 1,
        input_noise: 0.0,
        label_noise: 0.0,
        snapshots: 0,
    }
}

#[test]
fn loss_decreases_over_first_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let set = toy_set(vec![random_sequence(&mut rng, 20, 2, 2), random_sequence(&mut rng, 20, 2, 2)]);
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 2,
        ..toy_config(10)
    };
    let out = train(policy_init(cfg.arch(2, 2), 4).unwrap(), &set, &cfg).unwrap();
    // without a validation split the monitored loss is the full training set
    let losses: Vec<f64> = out.curve.iter().filter_map(|p| p.val_loss).collect();
    assert_eq!(losses.len(), 11);
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn toy_linear_target_is_learned() {
    // target = affine map of the current input
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let seqs = (0..4)
        .map(|_| {
            let mut s = random_sequence(&mut rng, 30, 2, 2);
            for k in 0..s.len() {
                let (a, b) = (s.inputs[2 * k], s.inputs[2 * k + 1]);
                s.targets[2 * k] = 0.5 * a - 0.2 * b;
                s.targets[2 * k + 1] = 0.3 * b + 0.1;
            }
            s
        })
        .collect();
    let set = toy_set(seqs);
    let cfg = TrainConfig {
        batch_size: 4,
        eval_every: 50,
        ..toy_config(600)
    };
    let out = train(policy_init(cfg.arch(2, 2), 2).unwrap(), &set, &cfg).unwrap();
    let all: Vec<&TrainingSequence> = set.sequences.iter().collect();
    let loss = compute_loss(&out.params, &all).unwrap();
    assert!(loss < 1e-3, "final loss {loss}");
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let set = toy_set((0..3).map(|_| random_sequence(&mut rng, 12, 2, 2)).collect());
    let cfg = TrainConfig {
        window: 5,
        ..toy_config(30)
    };
    let a = train(policy_init(cfg.arch(2, 2), 1).unwrap(), &set, &cfg).unwrap();
    let b = train(policy_init(cfg.arch(2, 2), 1).unwrap(), &set, &cfg).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.params, b.params);
}

#[test]
fn diverging_training_reports_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = random_sequence(&mut rng, 5, 2, 2);
    s.targets[3] = f64::NAN;
    let set = toy_set(vec![s]);
    let err = train(policy_init(toy_config(5).arch(2, 2), 1).unwrap(), &set, &toy_config(5)).unwrap_err();
    assert!(matches!(err, vfil::Error::TrainingFailure { step: 0, .. }), "{err}");
}

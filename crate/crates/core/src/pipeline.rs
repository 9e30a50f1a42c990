//! Stage wiring shared by the command-line tool and the integration tests,
//! so both derive seeds and build models the same way.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{detect_rollout_success, measured_frequency, method_name, run_benchmark, BenchmarkConfig, Report};
use crate::infer::{rollout, RolloutConfig, TrajectoryLog};
use crate::io::TrajectorySummary;
use crate::normalize::{build_training_set, TrainingSet};
use crate::policy::{init_for_set, train, PolicyModel, PolicyParams, TimeScaling, TrainConfig, TrainOutcome};
use crate::seed::derive_seed;
use crate::teach::{collect_dataset, Dataset};
use crate::types::Demonstration;

pub fn generate_demos(cfg: &RunConfig) -> Result<Dataset> {
    cfg.validate()?;
    collect_dataset(&cfg.teach, &cfg.plant, &cfg.gains, &cfg.normalization, cfg.global_seed)
}

/// Training config with its seed replaced by the `train` substream of the
/// global seed. Both methods get the same stream.
pub fn effective_train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(cfg.global_seed, "train", &[cfg.train.seed]),
        ..cfg.train.clone()
    }
}

pub struct TrainedModel {
    pub model: PolicyModel,
    pub outcome: TrainOutcome,
    pub set: TrainingSet,
    /// Closed-loop score of every snapshot, in training order.
    pub selection: Vec<SnapshotScore>,
    /// Snapshot the model was taken from; `None` means the best validation checkpoint.
    pub selected: Option<usize>,
}

impl TrainedModel {
    /// Validation loss of the parameters actually shipped in `model`.
    pub fn val_loss(&self) -> f64 {
        match self.selected {
            Some(i) => self.outcome.snapshots[i].val_loss,
            None => self.outcome.best_val_loss,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotScore {
    pub step: usize,
    pub val_loss: f64,
    pub successes: usize,
    pub trials: usize,
    /// Mean |actual − label| / label; a trial without a measurement counts as 1.
    pub frequency_error: f64,
}

pub fn train_model(demos: &[Demonstration], scaling: TimeScaling, cfg: &RunConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let set = build_training_set(demos, &cfg.normalization, scaling == TimeScaling::Variable)?;
    let tc = effective_train_config(cfg);
    let params = init_for_set(&set, &tc)?;
    let outcome = train(params, &set, &tc)?;
    let hash = tc.hash();
    let wrap = |p: &PolicyParams| PolicyModel::new(p.clone(), cfg.normalization, scaling, hash.clone());
    let selection = outcome
        .snapshots
        .iter()
        .map(|s| score_snapshot(&wrap(&s.params), s.step, s.val_loss, cfg))
        .collect::<Result<Vec<_>>>()?;
    let selected = (0..selection.len()).min_by(|&a, &b| {
        let (x, y) = (&selection[a], &selection[b]);
        y.successes
            .cmp(&x.successes)
            .then(x.frequency_error.total_cmp(&y.frequency_error))
            .then(x.val_loss.total_cmp(&y.val_loss))
    });
    let model = match selected {
        Some(i) => wrap(&outcome.snapshots[i].params),
        None => wrap(&outcome.params),
    };
    if let Some(i) = selected {
        log::info!("selected snapshot at step {} ({}/{} closed-loop successes)", selection[i].step, selection[i].successes, selection[i].trials);
    }
    Ok(TrainedModel {
        model,
        outcome,
        set,
        selection,
        selected,
    })
}

/// One rollout per demonstrated (frequency, height) cell, on seeds from the
/// `select` substream, so selection never sees the benchmark's labels or starts.
fn score_snapshot(model: &PolicyModel, step: usize, val_loss: f64, cfg: &RunConfig) -> Result<SnapshotScore> {
    let bench = BenchmarkConfig {
        labels: cfg.teach.frequencies.clone(),
        heights: cfg.teach.heights.clone(),
        trials: 1,
        ..cfg.benchmark.clone()
    };
    let seed = derive_seed(cfg.global_seed, "select", &[]);
    let report = run_benchmark(&[("snapshot", model)], &bench, cfg.scheduler_mode, &cfg.plant, &cfg.gains, &cfg.normalization, seed)?;
    let trials = &report.methods[0].trials;
    let frequency_error = trials
        .iter()
        .map(|t| t.actual_frequency.map_or(1.0, |a| ((a - t.label) / t.label).abs()))
        .sum::<f64>()
        / trials.len().max(1) as f64;
    Ok(SnapshotScore {
        step,
        val_loss,
        successes: trials.iter().filter(|t| t.success).count(),
        trials: trials.len(),
        frequency_error,
    })
}

/// Benchmark each model under the name of its time scaling.
pub fn benchmark(models: &[&PolicyModel], cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let named: Vec<(&str, &PolicyModel)> = models.iter().map(|m| (method_name(m.header.time_scaling), *m)).collect();
    run_benchmark(
        &named,
        &cfg.benchmark,
        cfg.scheduler_mode,
        &cfg.plant,
        &cfg.gains,
        &cfg.normalization,
        cfg.global_seed,
    )
}

/// One rollout at `frequency` against a surface at `height`, with the
/// duration, start pose and scheduler taken from `cfg`.
pub fn single_rollout(
    model: &PolicyModel,
    frequency: f64,
    height: f64,
    seed: u64,
    cfg: &RunConfig,
) -> Result<(TrajectoryLog, TrajectorySummary)> {
    cfg.validate()?;
    if model.header.normalization != cfg.normalization {
        return Err(Error::invalid(format!(
            "model was trained with normalization {:?}, config has {:?}",
            model.header.normalization, cfg.normalization
        )));
    }
    let rc = RolloutConfig {
        frequency,
        duration: cfg.benchmark.duration,
        surface_height: height,
        seed,
        mode: cfg.scheduler_mode,
        home: cfg.benchmark.home,
        start_jitter: cfg.benchmark.start_jitter,
    };
    let log = rollout(&rc, model, &cfg.plant, &cfg.gains, &cfg.normalization)?;
    let (success, loss) = match detect_rollout_success(&log) {
        Ok((ok, loss)) => (Some(ok), loss),
        Err(_) => (None, None),
    };
    let summary = TrajectorySummary {
        config: rc,
        time_scaling: model.header.time_scaling,
        control_rate: log.control_rate,
        ticks: log.ticks.len(),
        model_steps: log.model_steps.len(),
        mean_step_period: log.mean_step_period(),
        step_period_histogram: log.step_period_histogram(),
        success,
        first_contact_loss_time: loss,
        actual_frequency: measured_frequency(&log, cfg.benchmark.min_amplitude),
    };
    Ok((log, summary))
}

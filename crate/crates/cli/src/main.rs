//! `vfil`: demonstrations, training, rollouts, benchmark and plot data.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgGroup, Parser, Subcommand};
use log::info;
use sha2::{Digest, Sha256};
use vfil::eval::{emit_report, plot_files, summarize, table_text};
use vfil::io::{read_dataset, write_dataset, write_trajectory};
use vfil::pipeline::{benchmark, generate_demos, single_rollout, train_model};
use vfil::policy::{load_model, save_model, write_loss_curve};
use vfil::{Error, RunConfig, TimeScaling};

#[derive(Parser, Debug)]
#[command(name = "vfil", version, about = "Variable-frequency imitation learning on a simulated bilateral arm")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the effective configuration as JSON.
    Config,
    /// Record the demonstration grid by simulated teleoperation.
    GenDemos {
        /// Dataset directory [default: <output_root>/demos].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a policy on a recorded dataset.
    #[command(group(ArgGroup::new("method").required(true).args(["vfil", "baseline"])))]
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Frequency-normalized training set, variable-rate runtime.
        #[arg(long)]
        vfil: bool,
        /// Plain 25 Hz downsampling, constant-rate runtime.
        #[arg(long)]
        baseline: bool,
        /// Model file [default: <output_root>/models/<method>.bin]; the loss curve goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one autonomous wiping rollout.
    Rollout {
        #[arg(long)]
        model: PathBuf,
        /// Commanded motion frequency, Hz.
        #[arg(long, value_parser = positive, allow_hyphen_values = true)]
        freq: f64,
        /// Surface height, m.
        #[arg(long, default_value_t = 0.15)]
        height: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory [default: <output_root>/rollouts].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark both policies over the label × height grid.
    Eval {
        #[arg(long)]
        vfil: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Trials per cell, overriding the config.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trials: Option<u64>,
        /// Report directory [default: <output_root>/report].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write gnuplot data for the label vs actual frequency scatter.
    Plot {
        /// Report directory containing scatter.csv [default: <output_root>/report].
        #[arg(long)]
        report: Option<PathBuf>,
        /// Output directory [default: the report directory].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be a finite number > 0".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VFIL_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config(_))));
            ExitCode::from(if config_error { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let root = PathBuf::from(&cfg.output_root);
    match cli.cmd {
        Cmd::Config => println!("{}", cfg.to_json()),
        Cmd::GenDemos { out } => {
            let dir = out.unwrap_or_else(|| root.join("demos"));
            let data = generate_demos(&cfg)?;
            write_dataset(&dir, &data)?;
            println!("{} demonstrations in {}", data.demos.len(), dir.display());
            for (f, n) in data.manifest.frequency_histogram() {
                println!("  {f} Hz: {n}");
            }
            println!("dataset sha256 {}", dir_digest(&dir)?);
        }
        Cmd::Train { data, vfil, out, .. } => {
            let scaling = if vfil { TimeScaling::Variable } else { TimeScaling::Constant };
            let name = vfil::eval::method_name(scaling);
            let dir = data.unwrap_or_else(|| root.join("demos"));
            let dataset = read_dataset(&dir).with_context(|| format!("reading dataset {}", dir.display()))?;
            let path = out.unwrap_or_else(|| root.join("models").join(format!("{name}.bin")));
            info!("training {name} on {} demonstrations", dataset.demos.len());
            let t = train_model(&dataset.demos, scaling, &cfg)?;
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            save_model(&path, &t.model)?;
            let curve = path.with_extension("loss.csv");
            write_loss_curve(&curve, &t.outcome.curve)?;
            println!(
                "{name}: {} train / {} validation sequences, validation loss {:.5} -> {:.5}",
                t.outcome.train_sequences,
                t.outcome.val_sequences,
                t.outcome.initial_val_loss,
                t.val_loss()
            );
            for (i, s) in t.selection.iter().enumerate() {
                let mark = if t.selected == Some(i) { " <- selected" } else { "" };
                println!(
                    "  step {:>5}: val {:.5}, closed loop {}/{}, frequency error {:.1}%{mark}",
                    s.step,
                    s.val_loss,
                    s.successes,
                    s.trials,
                    s.frequency_error * 100.0
                );
            }
            println!("model {}, loss curve {}", path.display(), curve.display());
        }
        Cmd::Rollout { model, freq, height, seed, out } => {
            let m = load_model(&model)?;
            let (log, summary) = single_rollout(&m, freq, height, seed, &cfg)?;
            let dir = out.unwrap_or_else(|| root.join("rollouts"));
            let stem = format!("rollout_f{freq:.2}_h{height:.2}_s{seed}");
            let (csv, json) = write_trajectory(&dir, &stem, &log, &summary)?;
            let opt = |v: Option<f64>, scale: f64, unit: &str| v.map_or("-".to_string(), |x| format!("{:.3} {unit}", x * scale));
            println!("success: {}", summary.success.map_or("undetermined".to_string(), |s| s.to_string()));
            println!("measured frequency: {}", opt(summary.actual_frequency, 1.0, "Hz"));
            println!("mean model step period: {}", opt(summary.mean_step_period, 1e3, "ms"));
            println!("{} model steps over {} ticks; {} / {}", summary.model_steps, summary.ticks, csv.display(), json.display());
        }
        Cmd::Eval { vfil, baseline, trials, out } => {
            let models = root.join("models");
            let vp = vfil.unwrap_or_else(|| models.join("vfil.bin"));
            let bp = baseline.unwrap_or_else(|| models.join("baseline.bin"));
            let vm = load_model(&vp)?;
            let bm = load_model(&bp)?;
            if vm.header.time_scaling != TimeScaling::Variable || bm.header.time_scaling != TimeScaling::Constant {
                bail!("expected a variable-rate model for --vfil and a constant-rate model for --baseline");
            }
            let mut cfg = cfg;
            if let Some(n) = trials {
                cfg.benchmark.trials = n as usize;
            }
            let report = benchmark(&[&vm, &bm], &cfg)?;
            let dir = out.unwrap_or_else(|| root.join("report"));
            emit_report(&report, &dir)?;
            for m in &report.methods {
                println!("{}", table_text(m));
            }
            let s = summarize(&report);
            let n: usize = report.methods.iter().map(|m| m.trials.len()).sum();
            println!("{n} rollouts, report in {}", dir.display());
            if s.partial {
                println!("benchmark partial: some rollouts failed outright (see report.csv trials)");
            }
        }
        Cmd::Plot { report, out } => {
            let dir = report.unwrap_or_else(|| root.join("report"));
            let scatter = dir.join("scatter.csv");
            let text = std::fs::read_to_string(&scatter).with_context(|| format!("reading {}", scatter.display()))?;
            let out = out.unwrap_or(dir);
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, body) in plot_files(&text)? {
                std::fs::write(out.join(&name), body).with_context(|| format!("writing {name}"))?;
            }
            println!("plot data in {}; render with: gnuplot figure.gp", out.display());
        }
    }
    Ok(())
}

/// SHA-256 over the directory's regular files, visited in name order.
fn dir_digest(dir: &Path) -> anyhow::Result<String> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    names.retain(|p| p.is_file());
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap().as_encoded_bytes());
        h.update(std::fs::read(&p)?);
    }
    Ok(hex::encode(h.finalize()))
}

//! File formats: demonstrations (JSON + CSV), datasets, training-set
//! manifests and trajectory logs. Floats are written with round-trip precision.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{RolloutConfig, TrajectoryLog};
use crate::normalize::{SequenceOrigin, TrainingSet};
use crate::policy::{Standardizer, TimeScaling};
use crate::teach::{Dataset, DatasetManifest};
use crate::types::{DemoStep, Demonstration, NormalizationConfig, Phase, RobotResponse, DOF};

fn write_file(path: &Path, content: &[u8]) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn read_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = read_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::format(path, e.to_string()))
}

fn response_columns(prefix: &str, out: &mut Vec<String>) {
    for q in ["theta", "omega", "tau"] {
        for j in 1..=DOF {
            out.push(format!("{prefix}_{q}{j}"));
        }
    }
}

/// Header row of a demonstration CSV.
pub fn demo_csv_header() -> String {
    let mut cols = vec!["time_s".to_string()];
    response_columns("leader", &mut cols);
    response_columns("follower", &mut cols);
    cols.push("phase".into());
    cols.join(",")
}

/// Sidecar metadata of a demonstration CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoMeta {
    pub motion_frequency: f64,
    pub surface_height: f64,
    pub sample_rate: f64,
    pub seed: u64,
    pub steps: usize,
    /// First step of the wipe phase (equals `steps` if there is none).
    pub wipe_start_step: usize,
    pub csv: String,
}

pub fn write_demonstration(dir: &Path, stem: &str, demo: &Demonstration) -> Result<()> {
    demo.validate()?;
    let mut csv = demo_csv_header();
    csv.push('\n');
    for (k, (s, p)) in demo.steps.iter().zip(&demo.phases).enumerate() {
        let _ = write!(csv, "{:?}", k as f64 / demo.sample_rate);
        for v in s.leader.to_row().iter().chain(s.follower.to_row().iter()) {
            let _ = write!(csv, ",{v:?}");
        }
        let _ = writeln!(csv, ",{}", p.as_str());
    }
    let csv_name = format!("{stem}.csv");
    write_file(&dir.join(&csv_name), csv.as_bytes())?;
    let meta = DemoMeta {
        motion_frequency: demo.motion_frequency,
        surface_height: demo.surface_height,
        sample_rate: demo.sample_rate,
        seed: demo.seed,
        steps: demo.steps.len(),
        wipe_start_step: demo.wipe_start().unwrap_or(demo.steps.len()),
        csv: csv_name,
    };
    write_json(&dir.join(format!("{stem}.json")), &meta)
}

pub fn read_demonstration(dir: &Path, stem: &str) -> Result<Demonstration> {
    let meta_path = dir.join(format!("{stem}.json"));
    let meta: DemoMeta = read_json(&meta_path)?;
    let csv_path = dir.join(&meta.csv);
    let text = read_string(&csv_path)?;
    let mut lines = text.lines();
    if lines.next() != Some(demo_csv_header().as_str()) {
        return Err(Error::format(&csv_path, "unexpected header"));
    }
    let width = 1 + 6 * DOF + 1;
    let mut steps = Vec::with_capacity(meta.steps);
    let mut phases = Vec::with_capacity(meta.steps);
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::format(&csv_path, format!("line {}: {} fields, expected {width}", i + 2, fields.len())));
        }
        let vals: Vec<f64> = fields[1..width - 1]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(&csv_path, format!("line {}: {e}", i + 2)))?;
        steps.push(DemoStep {
            leader: RobotResponse::from_row(&vals[..3 * DOF])?,
            follower: RobotResponse::from_row(&vals[3 * DOF..])?,
        });
        phases.push(
            Phase::parse(fields[width - 1])
                .ok_or_else(|| Error::format(&csv_path, format!("line {}: bad phase", i + 2)))?,
        );
    }
    if steps.len() != meta.steps {
        return Err(Error::format(&csv_path, format!("{} rows, manifest says {}", steps.len(), meta.steps)));
    }
    let demo = Demonstration {
        motion_frequency: meta.motion_frequency,
        surface_height: meta.surface_height,
        sample_rate: meta.sample_rate,
        seed: meta.seed,
        steps,
        phases,
    };
    demo.validate()?;
    Ok(demo)
}

pub const DATASET_MANIFEST: &str = "manifest.json";

pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (e, d) in data.manifest.entries.iter().zip(&data.demos) {
        write_demonstration(dir, &e.stem, d)?;
    }
    write_json(&dir.join(DATASET_MANIFEST), &data.manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(&dir.join(DATASET_MANIFEST))?;
    let demos = manifest
        .entries
        .iter()
        .map(|e| read_demonstration(dir, &e.stem))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { demos, manifest })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub file: String,
    pub origin: SequenceOrigin,
    pub step_period_original: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSetManifest {
    pub vfil: bool,
    pub config: NormalizationConfig,
    pub input_stats: Standardizer,
    pub output_stats: Standardizer,
    pub sequences: Vec<SequenceFile>,
}

/// Write every sequence as CSV (inputs then targets per row) plus `training_set.json`.
pub fn write_training_set(dir: &Path, set: &TrainingSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(set.sequences.len());
    for (i, (seq, origin)) in set.sequences.iter().zip(&set.origins).enumerate() {
        let name = format!("seq_{i:04}.csv");
        let mut csv = String::new();
        let cols: Vec<String> = (0..seq.input_dim)
            .map(|c| format!("in{c}"))
            .chain((0..seq.output_dim).map(|c| format!("out{c}")))
            .collect();
        csv.push_str(&cols.join(","));
        csv.push('\n');
        for k in 0..seq.len() {
            let row: Vec<String> = seq.input(k).iter().chain(seq.target(k)).map(|v| format!("{v:?}")).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        write_file(&dir.join(&name), csv.as_bytes())?;
        files.push(SequenceFile {
            file: name,
            origin: origin.clone(),
            step_period_original: seq.step_period_original,
        });
    }
    let manifest = TrainingSetManifest {
        vfil: set.vfil,
        config: set.config,
        input_stats: set.input_stats.clone(),
        output_stats: set.output_stats.clone(),
        sequences: files,
    };
    write_json(&dir.join("training_set.json"), &manifest)
}

/// Summary written next to a trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub config: RolloutConfig,
    pub time_scaling: TimeScaling,
    pub control_rate: f64,
    pub ticks: usize,
    pub model_steps: usize,
    pub mean_step_period: Option<f64>,
    /// (gap in ticks, count)
    pub step_period_histogram: Vec<(usize, usize)>,
    pub success: Option<bool>,
    pub first_contact_loss_time: Option<f64>,
    pub actual_frequency: Option<f64>,
}

pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let mut cols = vec!["time_s".to_string()];
    response_columns("follower", &mut cols);
    response_columns("command", &mut cols);
    for j in 1..=DOF {
        cols.push(format!("tau_ref{j}"));
    }
    for c in ["normal_force", "ee_x", "ee_z", "model_step", "clamped"] {
        cols.push(c.into());
    }
    let mut out = cols.join(",");
    out.push('\n');
    for t in &log.ticks {
        let _ = write!(out, "{:?}", t.time);
        let cmd = RobotResponse {
            theta: t.command.theta,
            omega: t.command.omega,
            tau: t.command.tau,
        };
        for v in t.follower.to_row().iter().chain(cmd.to_row().iter()).chain(t.tau_ref.as_slice()) {
            let _ = write!(out, ",{v:?}");
        }
        let _ = writeln!(
            out,
            ",{:?},{:?},{:?},{},{}",
            t.normal_force, t.ee_x, t.ee_z, t.model_step as u8, t.clamped as u8
        );
    }
    out
}

/// Write `<stem>.csv` and `<stem>.json`; returns both paths.
pub fn write_trajectory(dir: &Path, stem: &str, log: &TrajectoryLog, summary: &TrajectorySummary) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    write_file(&csv, trajectory_csv(log).as_bytes())?;
    write_json(&json, summary)?;
    Ok((csv, json))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}

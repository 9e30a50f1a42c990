//! Success detection, frequency estimation, the benchmark grid and report files.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControllerGains;
use crate::error::{Error, Result};
use crate::infer::{rollout_with, RolloutConfig, SchedulerMode, TrajectoryLog};
use crate::plant::PlantParams;
use crate::policy::{PolicyModel, TimeScaling};
use crate::seed::derive_seed;
use crate::types::NormalizationConfig;

/// Contact counts as lost at or below this normal force, N.
pub const CONTACT_THRESHOLD: f64 = 0.1;

/// Contact must persist this long to count as the end of the press phase, s.
pub const SUSTAINED_CONTACT: f64 = 0.5;

/// Delay between sustained contact and the start of the frequency window, s.
pub const WIPE_SETTLE: f64 = 2.0;

/// Success iff the normal force stays above `CONTACT_THRESHOLD` at every
/// tick from `press_end` on. Returns the first violating time otherwise.
pub fn detect_success(time: &[f64], normal_force: &[f64], press_end: f64) -> Result<(bool, Option<f64>)> {
    if time.len() != normal_force.len() {
        return Err(Error::invalid("time and force series differ in length"));
    }
    if time.last().map_or(true, |t| *t < press_end) {
        return Err(Error::invalid("log ends before the press phase does"));
    }
    for (t, n) in time.iter().zip(normal_force) {
        if *t >= press_end && *n <= CONTACT_THRESHOLD {
            return Ok((false, Some(*t)));
        }
    }
    Ok((true, None))
}

/// Start of the first run of contact lasting at least `SUSTAINED_CONTACT`.
pub fn first_sustained_contact(time: &[f64], normal_force: &[f64]) -> Option<f64> {
    let mut start: Option<f64> = None;
    for (t, n) in time.iter().zip(normal_force) {
        if *n > CONTACT_THRESHOLD {
            let s = *start.get_or_insert(*t);
            if t - s >= SUSTAINED_CONTACT {
                return Some(s);
            }
        } else {
            start = None;
        }
    }
    None
}

/// Outcome of a rollout's success check: press end is the first sustained contact.
pub fn detect_rollout_success(log: &TrajectoryLog) -> Result<(bool, Option<f64>)> {
    let time: Vec<f64> = log.ticks.iter().map(|t| t.time).collect();
    let force: Vec<f64> = log.ticks.iter().map(|t| t.normal_force).collect();
    if time.is_empty() {
        return Err(Error::invalid("empty trajectory log"));
    }
    match first_sustained_contact(&time, &force) {
        Some(press_end) => detect_success(&time, &force, press_end),
        None => Ok((false, Some(time[0]))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyEstimate {
    /// Reversal-counting estimate, Hz.
    pub frequency: f64,
    /// Periodogram peak, Hz.
    pub periodogram: f64,
    pub reversals: usize,
    /// Peak-to-peak excursion of the window.
    pub peak_to_peak: f64,
}

/// Times of direction reversals, with hysteresis of `frac` × peak-to-peak.
pub fn reversal_times(x: &[f64], rate: f64, frac: f64) -> Vec<f64> {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let band = frac * (hi - lo);
    if x.len() < 3 || !(band > 0.0) {
        return Vec::new();
    }
    let mut out = Vec::new();
    // +1 rising, −1 falling, 0 undecided
    let mut dir = 0i8;
    let (mut ext, mut ext_i) = (x[0], 0usize);
    for (i, &v) in x.iter().enumerate().skip(1) {
        match dir {
            0 => {
                if v - ext > band {
                    dir = 1;
                    (ext, ext_i) = (v, i);
                } else if ext - v > band {
                    dir = -1;
                    (ext, ext_i) = (v, i);
                }
            }
            1 => {
                if v > ext {
                    (ext, ext_i) = (v, i);
                } else if ext - v > band {
                    out.push(ext_i as f64 / rate);
                    dir = -1;
                    (ext, ext_i) = (v, i);
                }
            }
            _ => {
                if v < ext {
                    (ext, ext_i) = (v, i);
                } else if v - ext > band {
                    out.push(ext_i as f64 / rate);
                    dir = 1;
                    (ext, ext_i) = (v, i);
                }
            }
        }
    }
    out
}

/// Frequency of the largest periodogram bin on a 0.005 Hz grid up to `max_hz`.
pub fn periodogram_peak(x: &[f64], rate: f64, max_hz: f64) -> f64 {
    // keep at least 8 samples per cycle of the highest bin
    let stride = ((rate / (8.0 * max_hz)).floor() as usize).max(1);
    let x: Vec<f64> = x.iter().step_by(stride).copied().collect();
    let rate = rate / stride as f64;
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n.max(1) as f64;
    let mut best = (0.0, f64::NEG_INFINITY);
    let step = 0.005;
    let mut f = step;
    while f <= max_hz {
        let w = 2.0 * std::f64::consts::PI * f / rate;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in x.iter().enumerate() {
            let ph = w * k as f64;
            re += (v - mean) * ph.cos();
            im += (v - mean) * ph.sin();
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (f, p);
        }
        f += step;
    }
    best.0
}

/// Dominant frequency of `x` (sampled at `rate`) by reversal counting,
/// `(n − 1) / (2·(t_last − t_first))`, cross-checked against the periodogram.
pub fn estimate_frequency(x: &[f64], rate: f64) -> Result<FrequencyEstimate> {
    if !(rate > 0.0) {
        return Err(Error::invalid("sample rate must be > 0"));
    }
    let rev = reversal_times(x, rate, 0.1);
    if rev.len() < 2 {
        return Err(Error::InsufficientMotion(format!("{} direction reversals", rev.len())));
    }
    let span = rev[rev.len() - 1] - rev[0];
    let frequency = (rev.len() - 1) as f64 / (2.0 * span);
    let periodogram = periodogram_peak(x, rate, (4.0 * frequency).max(2.0));
    if (periodogram - frequency).abs() > 0.1 * frequency {
        log::debug!("reversal estimate {frequency:.3} Hz disagrees with periodogram {periodogram:.3} Hz");
    }
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(FrequencyEstimate {
        frequency,
        periodogram,
        reversals: rev.len(),
        peak_to_peak: hi - lo,
    })
}

/// End-effector x over the rollout's wipe window (first sustained contact + settle).
pub fn rollout_wipe_window(log: &TrajectoryLog) -> Option<Vec<f64>> {
    let time: Vec<f64> = log.ticks.iter().map(|t| t.time).collect();
    let force: Vec<f64> = log.ticks.iter().map(|t| t.normal_force).collect();
    let start = first_sustained_contact(&time, &force)? + WIPE_SETTLE;
    let x: Vec<f64> = log.ticks.iter().filter(|t| t.time >= start).map(|t| t.ee_x).collect();
    (x.len() >= 3).then_some(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: String,
    pub label: f64,
    pub height: f64,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub first_contact_loss_time: Option<f64>,
    pub actual_frequency: Option<f64>,
    pub mean_step_period: Option<f64>,
    /// Set when the rollout itself failed.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub labels: Vec<f64>,
    pub heights: Vec<f64>,
    pub trials: usize,
    pub duration: f64,
    pub home: [f64; 2],
    pub start_jitter: f64,
    /// Wipe peak-to-peak below this yields no frequency measurement, m.
    pub min_amplitude: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            labels: vec![0.2, 0.6, 1.0, 1.4],
            heights: vec![0.10, 0.15],
            trials: 5,
            duration: 40.0,
            home: [0.35, 0.20],
            start_jitter: 0.005,
            min_amplitude: 0.01,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.labels.iter().any(|f| !(*f > 0.0 && f.is_finite())) || self.heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::Config("benchmark labels must be > 0 and heights finite".into()));
        }
        if !(self.duration > 0.0) || !(self.start_jitter >= 0.0) || !(self.min_amplitude >= 0.0) {
            return Err(Error::Config("benchmark duration must be > 0, jitter and min_amplitude >= 0".into()));
        }
        Ok(())
    }
}

/// Evaluate one trial; rollout failures become failed trials carrying the cause.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    method: &str,
    model: &PolicyModel,
    label: f64,
    height: f64,
    trial: usize,
    seed: u64,
    bench: &BenchmarkConfig,
    mode: SchedulerMode,
    plant: &PlantParams,
    gains: &ControllerGains,
    norm: &NormalizationConfig,
) -> TrialResult {
    let cfg = RolloutConfig {
        frequency: label,
        duration: bench.duration,
        surface_height: height,
        seed,
        mode,
        home: bench.home,
        start_jitter: bench.start_jitter,
    };
    let mut result = TrialResult {
        method: method.to_string(),
        label,
        height,
        trial,
        seed,
        success: false,
        first_contact_loss_time: None,
        actual_frequency: None,
        mean_step_period: None,
        error: None,
    };
    let log = match rollout_with(&cfg, model, model.header.time_scaling, plant, gains, norm) {
        Ok(log) => log,
        Err(e) => {
            result.first_contact_loss_time = Some(0.0);
            result.error = Some(e.to_string());
            return result;
        }
    };
    result.mean_step_period = log.mean_step_period();
    match detect_rollout_success(&log) {
        Ok((ok, loss)) => {
            result.success = ok;
            result.first_contact_loss_time = loss;
        }
        Err(e) => {
            result.first_contact_loss_time = Some(0.0);
            result.error = Some(e.to_string());
        }
    }
    result.actual_frequency = measured_frequency(&log, bench.min_amplitude);
    result
}

/// Wiping frequency over the rollout's wipe window; `None` when there is no
/// window or the stroke is below `min_amplitude` peak-to-peak.
pub fn measured_frequency(log: &TrajectoryLog, min_amplitude: f64) -> Option<f64> {
    let x = rollout_wipe_window(log)?;
    let est = estimate_frequency(&x, log.control_rate).ok()?;
    (est.peak_to_peak >= min_amplitude).then_some(est.frequency)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: f64,
    pub height: f64,
    pub successes: usize,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub labels: Vec<f64>,
    pub heights: Vec<f64>,
    /// Row-major over (height, label) in the order given.
    pub cells: Vec<Cell>,
    pub trials: Vec<TrialResult>,
}

impl MethodReport {
    /// Aggregate trial results onto the label × height grid.
    pub fn from_trials(method: &str, labels: &[f64], heights: &[f64], trials: Vec<TrialResult>) -> Self {
        let mut cells = Vec::new();
        for &h in heights {
            for &l in labels {
                let in_cell: Vec<&TrialResult> = trials.iter().filter(|t| t.label == l && t.height == h).collect();
                cells.push(Cell {
                    label: l,
                    height: h,
                    successes: in_cell.iter().filter(|t| t.success).count(),
                    trials: in_cell.len(),
                });
            }
        }
        MethodReport {
            method: method.to_string(),
            labels: labels.to_vec(),
            heights: heights.to_vec(),
            cells,
            trials,
        }
    }

    /// Report from per-cell counts only, `counts[h][l]` out of `trials` each.
    pub fn from_counts(method: &str, labels: &[f64], heights: &[f64], counts: &[Vec<usize>], trials: usize) -> Self {
        let mut cells = Vec::new();
        for (hi, &h) in heights.iter().enumerate() {
            for (li, &l) in labels.iter().enumerate() {
                cells.push(Cell {
                    label: l,
                    height: h,
                    successes: counts[hi][li],
                    trials,
                });
            }
        }
        MethodReport {
            method: method.to_string(),
            labels: labels.to_vec(),
            heights: heights.to_vec(),
            cells,
            trials: Vec::new(),
        }
    }

    pub fn cell(&self, label: f64, height: f64) -> Option<&Cell> {
        self.cells.iter().find(|c| c.label == label && c.height == height)
    }

    pub fn total(&self) -> (usize, usize) {
        self.cells.iter().fold((0, 0), |(s, n), c| (s + c.successes, n + c.trials))
    }

    /// Successful trials with a measured frequency, as (label, actual).
    pub fn scatter(&self) -> Vec<(f64, f64)> {
        self.trials
            .iter()
            .filter(|t| t.success)
            .filter_map(|t| t.actual_frequency.map(|a| (t.label, a)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub methods: Vec<MethodReport>,
}

/// Run every (method, label, height, trial) rollout. Trial seeds depend only on
/// the grid position, so both methods face identical start conditions.
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    models: &[(&str, &PolicyModel)],
    bench: &BenchmarkConfig,
    mode: SchedulerMode,
    plant: &PlantParams,
    gains: &ControllerGains,
    norm: &NormalizationConfig,
    global_seed: u64,
) -> Result<Report> {
    bench.validate()?;
    let mut jobs = Vec::new();
    for (mi, _) in models.iter().enumerate() {
        for (li, &l) in bench.labels.iter().enumerate() {
            for (hi, &h) in bench.heights.iter().enumerate() {
                for trial in 0..bench.trials {
                    let seed = derive_seed(global_seed, "eval", &[li as u64, hi as u64, trial as u64]);
                    jobs.push((mi, l, h, trial, seed));
                }
            }
        }
    }
    let results: Vec<(usize, TrialResult)> = jobs
        .par_iter()
        .map(|&(mi, l, h, trial, seed)| {
            let (name, model) = models[mi];
            (mi, run_trial(name, model, l, h, trial, seed, bench, mode, plant, gains, norm))
        })
        .collect();
    let methods = models
        .iter()
        .enumerate()
        .map(|(mi, (name, _))| {
            let trials = results.iter().filter(|(m, _)| *m == mi).map(|(_, t)| t.clone()).collect();
            MethodReport::from_trials(name, &bench.labels, &bench.heights, trials)
        })
        .collect();
    Ok(Report { methods })
}

/// `"34/40(85%)"`, with the percentage rounded half up.
pub fn format_ratio(successes: usize, trials: usize) -> String {
    if trials == 0 {
        return format!("{successes}/0(-)");
    }
    let pct = (200 * successes + trials) / (2 * trials);
    format!("{successes}/{trials}({pct}%)")
}

fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// Aligned text table: heights in cm, descending, rows then a total row.
pub fn table_text(m: &MethodReport) -> String {
    let mut heights = m.heights.clone();
    heights.sort_by(|a, b| b.total_cmp(a));
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Height (cm)".to_string()];
    header.extend(m.labels.iter().map(|l| format!("{l:?} Hz")));
    header.push("Total".into());
    rows.push(header);
    for &h in &heights {
        let mut row = vec![format!("{}", (h * 100.0).round() as i64)];
        let (mut s, mut n) = (0, 0);
        for &l in &m.labels {
            let c = m.cell(l, h).copied().unwrap_or(Cell { label: l, height: h, successes: 0, trials: 0 });
            row.push(format_ratio(c.successes, c.trials));
            s += c.successes;
            n += c.trials;
        }
        row.push(format_ratio(s, n));
        rows.push(row);
    }
    let mut total = vec!["Total".to_string()];
    for &l in &m.labels {
        let (s, n) = m.cells.iter().filter(|c| c.label == l).fold((0, 0), |(s, n), c| (s + c.successes, n + c.trials));
        total.push(format_ratio(s, n));
    }
    let (s, n) = m.total();
    total.push(format_ratio(s, n));
    rows.push(total);

    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = format!("Success rate: {}\n", m.method);
    for r in &rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Summary figures written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub methods: Vec<MethodSummary>,
    /// Success-rate difference (first method minus second), percentage points.
    pub success_delta_percent: Option<f64>,
    /// True when any trial hit a hard rollout failure.
    pub partial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: Option<f64>,
    pub mean_abs_frequency_error: Vec<(f64, Option<f64>)>,
}

pub fn summarize(report: &Report) -> ReportSummary {
    let methods: Vec<MethodSummary> = report
        .methods
        .iter()
        .map(|m| {
            let (s, n) = m.total();
            let errs = m
                .labels
                .iter()
                .map(|&l| {
                    let e: Vec<f64> = m.scatter().iter().filter(|(x, _)| *x == l).map(|(x, a)| (a - x).abs()).collect();
                    (l, (!e.is_empty()).then(|| e.iter().sum::<f64>() / e.len() as f64))
                })
                .collect();
            MethodSummary {
                method: m.method.clone(),
                successes: s,
                trials: n,
                success_rate: (n > 0).then(|| s as f64 / n as f64),
                mean_abs_frequency_error: errs,
            }
        })
        .collect();
    let success_delta_percent = match (methods.first(), methods.get(1)) {
        (Some(a), Some(b)) => match (a.success_rate, b.success_rate) {
            (Some(x), Some(y)) => Some(100.0 * (x - y)),
            _ => None,
        },
        _ => None,
    };
    let partial = report.methods.iter().flat_map(|m| &m.trials).any(|t| t.error.is_some());
    ReportSummary {
        methods,
        success_delta_percent,
        partial,
    }
}

fn write(dir: &Path, name: &str, content: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, content).map_err(|e| Error::io(p, e))
}

/// Write report.csv, report.txt, scatter.csv, periods.csv and summary.json into `dir`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from("method,height,label,successes,trials\n");
    let mut txt = String::new();
    let mut scatter = String::from("label,actual,method\n");
    let mut periods = String::from("method,label,height,trial,mean_step_period\n");
    for m in &report.methods {
        for c in &m.cells {
            let _ = writeln!(csv, "{},{},{},{},{}", m.method, fmt_num(c.height), fmt_num(c.label), c.successes, c.trials);
        }
        if !txt.is_empty() {
            txt.push('\n');
        }
        txt.push_str(&table_text(m));
        for (l, a) in m.scatter() {
            let _ = writeln!(scatter, "{},{},{}", fmt_num(l), fmt_num(a), m.method);
        }
        for t in &m.trials {
            if let Some(p) = t.mean_step_period {
                let _ = writeln!(periods, "{},{},{},{},{}", m.method, fmt_num(t.label), fmt_num(t.height), t.trial, fmt_num(p));
            }
        }
    }
    write(dir, "report.csv", &csv)?;
    write(dir, "report.txt", &txt)?;
    write(dir, "scatter.csv", &scatter)?;
    write(dir, "periods.csv", &periods)?;
    let summary = serde_json::to_string_pretty(&summarize(report))?;
    write(dir, "summary.json", &(summary + "\n"))
}

/// Upper end of both plot axes, Hz.
pub const PLOT_AXIS_MAX: f64 = 1.5;

/// Turn a `scatter.csv` into gnuplot inputs: one `scatter_<method>.csv` per
/// method (rows `label,actual`), `identity.csv` for the label = actual
/// reference, and `figure.gp` which renders `figure.svg`.
pub fn plot_files(scatter_csv: &str) -> Result<Vec<(String, String)>> {
    let mut lines = scatter_csv.lines();
    if lines.next().map(str::trim) != Some("label,actual,method") {
        return Err(Error::invalid("scatter data must start with the header label,actual,method"));
    }
    let mut series: Vec<(String, String)> = Vec::new();
    for (i, row) in lines.enumerate().filter(|(_, r)| !r.trim().is_empty()) {
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        let bad = || Error::invalid(format!("scatter row {}: expected label,actual,method", i + 2));
        if cols.len() != 3 {
            return Err(bad());
        }
        let l: f64 = cols[0].parse().map_err(|_| bad())?;
        let a: f64 = cols[1].parse().map_err(|_| bad())?;
        let name = format!("scatter_{}.csv", cols[2]);
        let body = match series.iter_mut().find(|(n, _)| *n == name) {
            Some((_, b)) => b,
            None => {
                series.push((name, String::new()));
                &mut series.last_mut().unwrap().1
            }
        };
        let _ = writeln!(body, "{},{}", fmt_num(l), fmt_num(a));
    }
    let mut gp = String::from("set datafile separator ','\nset terminal svg size 640,480\nset output 'figure.svg'\n");
    let _ = writeln!(gp, "set xrange [0:{m}]\nset yrange [0:{m}]", m = fmt_num(PLOT_AXIS_MAX));
    gp.push_str("set xlabel 'label frequency [Hz]'\nset ylabel 'actual frequency [Hz]'\nset key top left\n");
    gp.push_str("plot 'identity.csv' with lines dashtype 2 title 'label = actual'");
    for (name, _) in &series {
        let method = name.trim_start_matches("scatter_").trim_end_matches(".csv");
        let _ = write!(gp, ", \\\n     '{name}' with points title '{method}'");
    }
    gp.push('\n');
    let mut files = vec![(
        "identity.csv".to_string(),
        format!("0.0,0.0\n{m},{m}\n", m = fmt_num(PLOT_AXIS_MAX)),
    )];
    files.extend(series);
    files.push(("figure.gp".to_string(), gp));
    Ok(files)
}

/// Label the methods by their model's time scaling.
pub fn method_name(scaling: TimeScaling) -> &'static str {
    match scaling {
        TimeScaling::Variable => "vfil",
        TimeScaling::Constant => "baseline",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_passes_points_through() {
        let files = plot_files("label,actual,method\n1.0,0.97,vfil\n").unwrap();
        let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["identity.csv", "scatter_vfil.csv", "figure.gp"]);
        assert_eq!(files[1].1, "1.0,0.97\n");
        assert!(files[2].1.contains("'scatter_vfil.csv' with points"));
    }

    #[test]
    fn plot_of_empty_scatter_is_identity_only() {
        let files = plot_files("label,actual,method\n").unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].1, "0.0,0.0\n1.5,1.5\n");
        assert!(plot_files("nope\n").is_err());
        assert!(plot_files("label,actual,method\n1.0,x,vfil\n").is_err());
    }

    #[test]
    fn ratio_rounds_half_up() {
        assert_eq!(format_ratio(34, 40), "34/40(85%)");
        assert_eq!(format_ratio(29, 40), "29/40(73%)");
        assert_eq!(format_ratio(1, 8), "1/8(13%)");
        assert_eq!(format_ratio(0, 5), "0/5(0%)");
    }

    #[test]
    fn success_examples() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.01).collect();
        let mut f = vec![1.0; 100];
        assert_eq!(detect_success(&t, &f, 0.2).unwrap(), (true, None));
        f[50] = 0.0;
        assert_eq!(detect_success(&t, &f, 0.2).unwrap(), (false, Some(0.5)));
        f[10] = 0.0;
        assert_eq!(detect_success(&t, &f, 0.2).unwrap(), (false, Some(0.5)));
        assert!(detect_success(&t, &f, 2.0).is_err());
    }

    #[test]
    fn sine_frequency() {
        let rate = 500.0;
        let x: Vec<f64> = (0..5000).map(|k| (2.0 * std::f64::consts::PI * k as f64 / rate).sin()).collect();
        let est = estimate_frequency(&x, rate).unwrap();
        assert!((est.frequency - 1.0).abs() < 0.01, "{est:?}");
        assert!((est.periodogram - 1.0).abs() < 0.01);
    }

    #[test]
    fn constant_signal_is_insufficient_motion() {
        assert!(matches!(estimate_frequency(&[0.3; 1000], 500.0), Err(Error::InsufficientMotion(_))));
    }
}

//! Experiment summaries and report files.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{ExperimentRun, FailureEvent};
use super::plot;
use super::HarnessError;
use crate::autoscalers::{write_decisions_csv, Action, ScalingDecision};
use crate::simulator::{measured_recovery_time, read_metrics_csv, write_metrics_csv, SimMetrics};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub scheduled_s: f64,
    pub injected_s: Option<f64>,
    pub workload_rate: f64,
    pub scaleout: u32,
    pub checkpoint_age_s: f64,
    pub measured_s: Option<f64>,
    /// Never recovered, or took more than twice the target.
    pub not_recovered: bool,
    /// Best recovery any scaleout in the set could achieve here, from the
    /// true workload and capacity.
    pub best_possible_s: f64,
    /// `best_possible_s` meets the target.
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub policy: String,
    pub seed: u64,
    pub duration_s: f64,
    pub rc_target_s: f64,
    pub recovery_table: Vec<RecoveryRow>,
    pub cumulative_cost: f64,
    pub reconfig_count: usize,
    pub mean_scaleout: f64,
    /// Mean |measured - target| / target over feasible, recovered failures (%).
    pub recovery_error_pct: Option<f64>,
    pub not_recovered_count: usize,
    pub near_optimal_threshold_ms: f64,
    pub near_optimal_fraction: f64,
    pub p95_latency_ms: Option<f64>,
    #[serde(skip)]
    pub latency_ecdf: Vec<(f64, f64)>,
}

/// Sorted samples paired with their cumulative fraction.
pub fn ecdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

/// 95th-percentile latency over tumbling windows.
pub fn latency_p95(metrics: &[SimMetrics], window_s: f64) -> Result<TimeSeries, HarnessError> {
    if metrics.is_empty() {
        return Ok(TimeSeries::empty());
    }
    let s = TimeSeries::new(metrics.iter().map(|m| m.time_s).collect(), metrics.iter().map(|m| m.latency_ms).collect())
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    s.windowed_percentile(window_s, 95.0).map_err(|e| HarnessError::Runtime(e.to_string()))
}

fn mean_offered(metrics: &[SimMetrics], from: f64, to: f64) -> f64 {
    let (sum, n) = metrics.iter().filter(|m| m.time_s > from && m.time_s <= to).fold((0.0, 0usize), |(s, n), m| (s + m.offered_rate, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn build_report(
    cfg: &ExperimentConfig,
    label: &str,
    metrics: &[SimMetrics],
    decisions: &[ScalingDecision],
    failures: &[FailureEvent],
) -> Result<ExperimentReport, HarnessError> {
    let tick = cfg.sim.tick_s;
    let target = cfg.policy.rc_target_s;
    let d = cfg.sim.failure_downtime_s();
    let profile = cfg.job.profile()?;
    let s_max = cfg.profiler.scaleout_set().map_err(|e| HarnessError::Config(e.to_string()))?.max();
    let tmax_best = profile.tmax(s_max as f64);
    let schedule = cfg.failure_schedule()?;

    let recovery_table: Vec<RecoveryRow> = schedule
        .injection_times
        .iter()
        .enumerate()
        .map(|(i, &at)| {
            let ev = failures.get(i);
            let (t, age) = ev.map_or((at, cfg.sim.checkpoint_interval_s), |e| (e.injected_s, e.checkpoint_age_s));
            let at_tick = metrics.iter().find(|m| m.time_s > t).copied();
            let measured = ev.and_then(|e| measured_recovery_time(metrics, e.injected_s, tick));
            let lambda = mean_offered(metrics, t - age, t + target);
            let best = if lambda < tmax_best { d + lambda * (age + d) / (tmax_best - lambda) } else { f64::INFINITY };
            RecoveryRow {
                scheduled_s: at,
                injected_s: ev.map(|e| e.injected_s),
                workload_rate: at_tick.map_or(0.0, |m| m.offered_rate),
                scaleout: ev.map_or(0, |e| e.scaleout),
                checkpoint_age_s: age,
                measured_s: measured,
                not_recovered: measured.is_none_or(|r| r > 2.0 * target),
                best_possible_s: best,
                feasible: best <= target,
            }
        })
        .collect();

    let errs: Vec<f64> = recovery_table.iter().filter(|r| r.feasible).filter_map(|r| r.measured_s).map(|m| (m - target).abs() / target * 100.0).collect();
    let p95 = latency_p95(metrics, cfg.harness.percentile_window_s)?;
    let latency_ecdf = ecdf(p95.values());
    let threshold = cfg.harness.near_optimal_factor * cfg.job.base_latency_ms;
    let near = if latency_ecdf.is_empty() { 0.0 } else { p95.values().iter().filter(|v| **v <= threshold).count() as f64 / p95.len() as f64 };
    let cost = metrics.last().map_or(0.0, |m| m.cum_container_s);
    Ok(ExperimentReport {
        policy: label.to_string(),
        seed: cfg.sim.seed,
        duration_s: cfg.harness.duration_s,
        rc_target_s: target,
        not_recovered_count: recovery_table.iter().filter(|r| r.not_recovered).count(),
        recovery_table,
        cumulative_cost: cost,
        reconfig_count: decisions.iter().filter(|d| d.action == Action::Rescale).count(),
        mean_scaleout: if metrics.is_empty() { 0.0 } else { metrics.iter().map(|m| m.scaleout as f64).sum::<f64>() / metrics.len() as f64 },
        recovery_error_pct: if errs.is_empty() { None } else { Some(errs.iter().sum::<f64>() / errs.len() as f64) },
        near_optimal_threshold_ms: threshold,
        near_optimal_fraction: near,
        p95_latency_ms: latency_ecdf.iter().find(|p| p.1 >= 0.95).map(|p| p.0),
        latency_ecdf,
    })
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<File, HarnessError> {
    File::create(path).map_err(io(path))
}

fn write_pairs(path: &Path, header: [&str; 2], rows: impl Iterator<Item = (f64, f64)>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| HarnessError::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for (a, b) in rows {
        w.write_record([a.to_string(), b.to_string()]).map_err(err)?;
    }
    w.flush().map_err(io(path))
}

fn write_recovery_csv(path: &Path, rows: &[RecoveryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| HarnessError::Io(e.to_string());
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        "scheduled_s",
        "injected_s",
        "workload_rate",
        "scaleout",
        "checkpoint_age_s",
        "measured_s",
        "not_recovered",
        "best_possible_s",
        "feasible",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.scheduled_s.to_string(),
            opt(r.injected_s),
            r.workload_rate.to_string(),
            r.scaleout.to_string(),
            r.checkpoint_age_s.to_string(),
            opt(r.measured_s),
            r.not_recovered.to_string(),
            r.best_possible_s.to_string(),
            r.feasible.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(io(path))
}

/// Writes CSVs, `summary.json` and SVG figures for one run into `dir`.
pub fn render_report(run: &ExperimentRun, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let p = |name: &str| dir.join(name);
    write_metrics_csv(&run.metrics, create(&p("metrics.csv"))?).map_err(|e| HarnessError::Io(e.to_string()))?;
    write_decisions_csv(&run.decisions, create(&p("decisions.csv"))?).map_err(|e| HarnessError::Io(e.to_string()))?;
    render_summary(&run.report, &run.metrics, dir)
}

fn render_summary(report: &ExperimentReport, metrics: &[SimMetrics], dir: &Path) -> Result<(), HarnessError> {
    let p = |name: &str| dir.join(name);
    write_recovery_csv(&p("recovery.csv"), &report.recovery_table)?;
    write_pairs(&p("ecdf.csv"), ["p95_latency_ms", "fraction"], report.latency_ecdf.iter().copied())?;
    write_pairs(&p("cost.csv"), ["time_s", "cum_container_s"], metrics.iter().map(|m| (m.time_s, m.cum_container_s)))?;
    write_json(&p("summary.json"), report)?;

    let label = report.policy.as_str();
    plot::lines(&p("ecdf.svg"), "p95 latency ECDF", "latency (ms)", "fraction", &[(label, report.latency_ecdf.clone())])?;
    plot::lines(&p("cost.svg"), "cumulative cost", "time (s)", "container-seconds", &[(label, thin(metrics.iter().map(|m| (m.time_s, m.cum_container_s))))])?;
    plot::workload_overlay(
        &p("workload_scaleout.svg"),
        &thin(metrics.iter().map(|m| (m.time_s, m.offered_rate))),
        &thin(metrics.iter().map(|m| (m.time_s, m.scaleout as f64))),
    )?;
    let bars: Vec<(String, f64)> = report.recovery_table.iter().map(|r| (format!("{}", r.scheduled_s), r.measured_s.unwrap_or(f64::NAN))).collect();
    plot::recovery_bars(&p("recovery.svg"), &bars, report.rc_target_s)
}

// Keep plots small: at most ~2000 points per series.
fn thin(points: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let v: Vec<(f64, f64)> = points.collect();
    let every = (v.len() / 2000).max(1);
    v.into_iter().step_by(every).collect()
}

/// A run loaded back from its output directory.
#[derive(Debug, Clone)]
pub struct SavedRun {
    pub dir: PathBuf,
    pub report: ExperimentReport,
    pub metrics: Vec<SimMetrics>,
}

pub fn load_run(dir: &Path, percentile_window_s: f64) -> Result<SavedRun, HarnessError> {
    let summary = dir.join("summary.json");
    let text = std::fs::read_to_string(&summary).map_err(io(&summary))?;
    let mut report: ExperimentReport = serde_json::from_str(&text).map_err(|e| HarnessError::Io(format!("{}: {e}", summary.display())))?;
    let mpath = dir.join("metrics.csv");
    let metrics = read_metrics_csv(File::open(&mpath).map_err(io(&mpath))?).map_err(|e| HarnessError::Io(e.to_string()))?;
    report.latency_ecdf = ecdf(latency_p95(&metrics, percentile_window_s)?.values());
    Ok(SavedRun { dir: dir.to_path_buf(), report, metrics })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub seed: u64,
    pub cumulative_cost: f64,
    pub normalized_cost: Option<f64>,
    pub reconfig_count: usize,
    pub not_recovered_count: usize,
    pub recovery_error_pct: Option<f64>,
    pub near_optimal_fraction: f64,
}

fn static_size(policy: &str) -> Option<u32> {
    policy.strip_prefix("static-").and_then(|s| s.parse().ok())
}

/// Compares runs; costs are normalized by the largest static run's cost.
pub fn compare(runs: &[SavedRun]) -> Vec<ComparisonRow> {
    let baseline = runs.iter().filter_map(|r| static_size(&r.report.policy).map(|s| (s, r.report.cumulative_cost))).max_by_key(|x| x.0).map(|x| x.1);
    runs.iter()
        .map(|r| ComparisonRow {
            policy: r.report.policy.clone(),
            seed: r.report.seed,
            cumulative_cost: r.report.cumulative_cost,
            normalized_cost: baseline.filter(|b| *b > 0.0).map(|b| r.report.cumulative_cost / b),
            reconfig_count: r.report.reconfig_count,
            not_recovered_count: r.report.not_recovered_count,
            recovery_error_pct: r.report.recovery_error_pct,
            near_optimal_fraction: r.report.near_optimal_fraction,
        })
        .collect()
}

/// Writes `comparison.csv` and one overlay figure per metric.
pub fn render_comparison(runs: &[SavedRun], dir: &Path) -> Result<Vec<ComparisonRow>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let rows = compare(runs);
    let path = dir.join("comparison.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let err = |e: csv::Error| HarnessError::Io(e.to_string());
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        "policy",
        "seed",
        "cumulative_cost",
        "normalized_cost",
        "reconfig_count",
        "not_recovered_count",
        "recovery_error_pct",
        "near_optimal_fraction",
    ])
    .map_err(err)?;
    for r in &rows {
        w.write_record([
            r.policy.clone(),
            r.seed.to_string(),
            r.cumulative_cost.to_string(),
            opt(r.normalized_cost),
            r.reconfig_count.to_string(),
            r.not_recovered_count.to_string(),
            opt(r.recovery_error_pct),
            r.near_optimal_fraction.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(io(&path))?;

    let names: Vec<String> = runs.iter().map(|r| format!("{} (seed {})", r.report.policy, r.report.seed)).collect();
    let ecdfs: Vec<(&str, Vec<(f64, f64)>)> = runs.iter().zip(&names).map(|(r, n)| (n.as_str(), r.report.latency_ecdf.clone())).collect();
    plot::lines(&dir.join("ecdf_overlay.svg"), "p95 latency ECDF", "latency (ms)", "fraction", &ecdfs)?;
    let costs: Vec<(&str, Vec<(f64, f64)>)> =
        runs.iter().zip(&names).map(|(r, n)| (n.as_str(), thin(r.metrics.iter().map(|m| (m.time_s, m.cum_container_s))))).collect();
    plot::lines(&dir.join("cost_overlay.svg"), "cumulative cost", "time (s)", "container-seconds", &costs)?;
    let scaleouts: Vec<(&str, Vec<(f64, f64)>)> =
        runs.iter().zip(&names).map(|(r, n)| (n.as_str(), thin(r.metrics.iter().map(|m| (m.time_s, m.scaleout as f64))))).collect();
    plot::lines(&dir.join("scaleout_overlay.svg"), "scaleout", "time (s)", "workers", &scaleouts)?;
    Ok(rows)
}

/// Median of each summary number over repeated runs of one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub policy: String,
    pub seeds: Vec<u64>,
    pub cumulative_cost: f64,
    pub reconfig_count: f64,
    pub not_recovered_count: f64,
    pub recovery_error_pct: Option<f64>,
    pub near_optimal_fraction: f64,
    /// Per scheduled failure: median measured recovery (`None` when most
    /// repeats did not recover).
    pub recovery_s: Vec<Option<f64>>,
    pub feasible: Vec<bool>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

pub fn aggregate(reports: &[ExperimentReport]) -> Option<AggregateReport> {
    let first = reports.first()?;
    let med = |f: &dyn Fn(&ExperimentReport) -> f64| median(&mut reports.iter().map(f).collect::<Vec<_>>()).unwrap_or(0.0);
    let rows = first.recovery_table.len();
    let recovery_s = (0..rows)
        .map(|i| {
            let mut v: Vec<f64> = reports.iter().map(|r| r.recovery_table.get(i).and_then(|x| x.measured_s).unwrap_or(f64::INFINITY)).collect();
            median(&mut v).filter(|m| m.is_finite())
        })
        .collect();
    let feasible = (0..rows).map(|i| reports.iter().filter(|r| r.recovery_table.get(i).is_some_and(|x| x.feasible)).count() * 2 > reports.len()).collect();
    let mut errs: Vec<f64> = reports.iter().filter_map(|r| r.recovery_error_pct).collect();
    Some(AggregateReport {
        policy: first.policy.clone(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        cumulative_cost: med(&|r| r.cumulative_cost),
        reconfig_count: med(&|r| r.reconfig_count as f64),
        not_recovered_count: med(&|r| r.not_recovered_count as f64),
        recovery_error_pct: median(&mut errs),
        near_optimal_fraction: med(&|r| r.near_optimal_fraction),
        recovery_s,
        feasible,
    })
}

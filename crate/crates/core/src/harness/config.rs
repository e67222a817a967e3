//! Experiment configuration file (TOML).
//!
//! ```toml
//! [sim]
//! tick_s = 1
//! checkpoint_interval_s = 10
//! detection_timeout_s = 20
//! restart_time_s = 10
//! seed = 1
//!
//! [job]
//! tmax_curve = [[2, 32000], [24, 384000]]
//! base_latency_ms = 800
//!
//! [workload]
//! kind = "sinusoid"
//! mean = 110000
//!
//! [failure]
//! first_s = 1200
//! interval_s = 1200
//! count = 8
//!
//! [policy]
//! name = "phoebe"
//! rc_target_s = 180
//!
//! [harness]
//! duration_s = 21600
//! ```
//!
//! Every section and key is optional; missing keys take their defaults.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::autoscalers::PolicyConfig;
use crate::forecasting::ForecastConfig;
use crate::models::RecoveryParams;
use crate::profiler::ProfilerConfig;
use crate::simulator::{FailureSchedule, JobProfile, SimConfig};
use crate::workloads::WorkloadSpec;

/// `job.*` keys: the synthetic job being scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    /// `[scaleout, msg/s]` pairs.
    pub tmax_curve: Vec<(u32, f64)>,
    pub base_latency_ms: f64,
    pub queue_coeff_ms: f64,
    pub noise_pct: f64,
    pub cpu_at_tmax: f64,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig { tmax_curve: vec![(1, 10_000.0), (24, 240_000.0)], base_latency_ms: 800.0, queue_coeff_ms: 5.0, noise_pct: 0.05, cpu_at_tmax: 1.0 }
    }
}

impl JobConfig {
    pub fn profile(&self) -> Result<JobProfile, HarnessError> {
        let p = JobProfile::new(self.tmax_curve.clone(), self.base_latency_ms, self.queue_coeff_ms, self.noise_pct)
            .and_then(|p| p.with_cpu_at_tmax(self.cpu_at_tmax))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(p)
    }
}

/// `failure.*` keys. Explicit `times` win over the periodic fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureConfig {
    pub times: Vec<f64>,
    pub first_s: f64,
    pub interval_s: f64,
    pub count: usize,
}

impl Default for FailureConfig {
    fn default() -> Self {
        FailureConfig { times: Vec::new(), first_s: 1200.0, interval_s: 1200.0, count: 8 }
    }
}

/// `harness.*` keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub duration_s: f64,
    /// Width of the buckets the workload history is averaged into.
    pub history_sample_s: f64,
    /// How much history the forecaster sees.
    pub history_window_s: f64,
    /// ECDF threshold as a multiple of the job's zero-load latency.
    pub near_optimal_factor: f64,
    /// Window for the latency percentile series.
    pub percentile_window_s: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            duration_s: 21_600.0,
            history_sample_s: 60.0,
            history_window_s: 3600.0,
            near_optimal_factor: 1.25,
            percentile_window_s: 120.0,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub job: JobConfig,
    pub workload: WorkloadSpec,
    pub failure: FailureConfig,
    pub profiler: ProfilerConfig,
    pub forecast: ForecastConfig,
    pub models: RecoveryParams,
    pub policy: PolicyConfig,
    pub harness: HarnessConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative trace paths are resolved against the config file
        if let (Some(trace), Some(dir)) = (&cfg.workload.trace_path, path.parent()) {
            if trace.is_relative() {
                cfg.workload.trace_path = Some(dir.join(trace));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn downtime_s(&self) -> f64 {
        self.policy.rc_downtime_s.unwrap_or(self.sim.failure_downtime_s())
    }

    pub fn failure_schedule(&self) -> Result<FailureSchedule, HarnessError> {
        let f = &self.failure;
        let sched = if f.times.is_empty() {
            FailureSchedule::periodic(f.first_s, f.interval_s, f.count, self.sim.detection_timeout_s, self.sim.restart_time_s)
        } else {
            FailureSchedule::new(f.times.clone(), self.sim.detection_timeout_s, self.sim.restart_time_s)
        };
        sched.map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        self.sim.validate().map_err(|e| cfg(&e))?;
        self.job.profile()?;
        self.workload.validate().map_err(|e| cfg(&e))?;
        self.profiler.validate().map_err(|e| cfg(&e))?;
        self.profiler.scaleout_set().map_err(|e| cfg(&e))?;
        self.forecast.method().map_err(|e| cfg(&e))?;
        self.policy.validate(self.sim.failure_downtime_s()).map_err(|e| cfg(&e))?;
        let h = &self.harness;
        if !(h.duration_s >= self.sim.tick_s) {
            return Err(HarnessError::Config("duration_s must cover at least one tick".into()));
        }
        if !(h.history_sample_s >= self.sim.tick_s) || !(h.history_window_s >= h.history_sample_s) {
            return Err(HarnessError::Config("need tick_s <= history_sample_s <= history_window_s".into()));
        }
        if !(h.near_optimal_factor > 0.0) || !(h.percentile_window_s > 0.0) {
            return Err(HarnessError::Config("near_optimal_factor and percentile_window_s must be positive".into()));
        }
        if self.models.bin_count == 0 || !(self.models.epsilon_s > 0.0) {
            return Err(HarnessError::Config("models.bin_count >= 1 and models.epsilon_s > 0 required".into()));
        }
        let sched = self.failure_schedule()?;
        if let Some(last) = sched.injection_times.last() {
            if *last >= h.duration_s || sched.injection_times[0] < 0.0 {
                return Err(HarnessError::Config(format!("failure at {last} s is outside the {} s experiment", h.duration_s)));
            }
        }
        Ok(())
    }
}

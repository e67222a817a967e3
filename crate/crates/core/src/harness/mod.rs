//! Experiment harness: profiling campaigns, scaling experiments and reports.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod report;

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

pub use config::ExperimentConfig;
pub use experiment::{policy_label, run_experiment, ExperimentRun, FailureEvent};
pub use report::{aggregate, render_comparison, render_report, AggregateReport, ExperimentReport, RecoveryRow};

use crate::models::{persist, ModelSet, RecoveryParams};
use crate::profiler::{run_profiling, ProfilingDataset, SimEnvironment};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("runtime: {0}")]
    Runtime(String),
    #[error("io: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub const MODEL_FILE: &str = "models.txt";

/// Profiles the configured job on the simulator and fits both models.
pub fn run_profile(cfg: &ExperimentConfig) -> Result<ModelSet, HarnessError> {
    cfg.validate()?;
    let set = cfg.profiler.scaleout_set().map_err(|e| HarnessError::Config(e.to_string()))?;
    let env = SimEnvironment { profile: cfg.job.profile()?, config: cfg.sim.clone() };
    let dataset = run_profiling(&set, &env, &cfg.profiler).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    ModelSet::fit(dataset, cfg.models.clone()).map_err(|e| HarnessError::Runtime(e.to_string()))
}

pub fn save_models(models: &ModelSet, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    models.dataset().save(dir).map_err(|e| HarnessError::Io(e.to_string()))?;
    persist::save(&dir.join(MODEL_FILE), &models.latency, &models.capacity).map_err(|e| HarnessError::Io(e.to_string()))
}

pub fn load_models(dir: &Path, params: RecoveryParams) -> Result<ModelSet, HarnessError> {
    let (latency, capacity) = persist::load(&dir.join(MODEL_FILE)).map_err(|e| HarnessError::Config(e.to_string()))?;
    let dataset = ProfilingDataset::load(dir).map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(ModelSet::from_parts(latency, capacity, params, dataset))
}

/// Runs `repeats` copies of the experiment with consecutive seeds, in parallel.
pub fn run_repeats(cfg: &ExperimentConfig, models: Option<&ModelSet>, repeats: u32) -> Result<Vec<ExperimentRun>, HarnessError> {
    (0..repeats.max(1) as u64)
        .into_par_iter()
        .map(|k| {
            let mut c = cfg.clone();
            c.sim.seed = cfg.sim.seed.wrapping_add(k);
            run_experiment(&c, models)
        })
        .collect()
}

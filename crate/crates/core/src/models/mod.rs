//! Latency and recovery models trained from profiling data.

pub mod capacity;
pub mod cluster;
pub mod latency;
pub mod persist;
pub mod recovery;

use log::{debug, warn};
use thiserror::Error;

pub use capacity::CapacityModel;
pub use latency::{LatencyModel, LatencyPrediction, PreprocessParams, Target};
pub use recovery::{estimate_recovery, RecoveryEstimate, RecoveryParams};

use crate::profiler::{ProfilingDataset, ProfilingRecord};
use crate::timeseries::{SeriesError, TimeSeries};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("capacity model needs at least 2 points, have {0}")]
    InsufficientPoints(usize),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("coverage: {0}")]
    Coverage(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model file: {0}")]
    Parse(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Both fitted models plus the data they were trained on, updated from
/// runtime observations.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub latency: LatencyModel,
    pub capacity: CapacityModel,
    pub params: RecoveryParams,
    dataset: ProfilingDataset,
    pending: u32,
}

impl ModelSet {
    pub fn fit(dataset: ProfilingDataset, params: RecoveryParams) -> Result<Self, ModelError> {
        let latency = LatencyModel::fit(&dataset)?;
        let capacity = CapacityModel::fit(&dataset.tmax_points)?;
        Ok(ModelSet { latency, capacity, params, dataset, pending: 0 })
    }

    /// Rebuilds a set from persisted models and their training data.
    pub fn from_parts(latency: LatencyModel, capacity: CapacityModel, params: RecoveryParams, dataset: ProfilingDataset) -> Self {
        ModelSet { latency, capacity, params, dataset, pending: 0 }
    }

    pub fn dataset(&self) -> &ProfilingDataset {
        &self.dataset
    }

    pub fn recovery(&self, scaleout: u32, f: &TimeSeries, t0: f64, i: f64, d: f64, horizon: f64) -> Result<RecoveryEstimate, ModelError> {
        estimate_recovery(self.capacity.tmax(scaleout as f64), f, t0, i, d, horizon, &self.params)
    }

    /// Records a steady-state observation. The latency model is refit after
    /// every `refit_every_evals` observations; a failed refit keeps the old model.
    pub fn observe(&mut self, scaleout: u32, rate: f64, latency_ms: f64) {
        if !(latency_ms > 0.0) || !rate.is_finite() {
            return;
        }
        let valid = self.latency.predict(scaleout, rate).cluster == 0;
        self.dataset.records.push(ProfilingRecord { scaleout, offered_rate: rate, avg_latency_ms: latency_ms, valid });
        self.pending += 1;
        if self.params.refit_every_evals > 0 && self.pending >= self.params.refit_every_evals {
            self.pending = 0;
            match LatencyModel::fit(&self.dataset) {
                Ok(m) => {
                    debug!("latency model refit on {} records", self.dataset.records.len());
                    self.latency = m;
                }
                Err(e) => warn!("latency refit skipped: {e}"),
            }
        }
    }

    /// Records a drain rate seen while catching up; raises capacity if it
    /// beats the current estimate.
    pub fn observe_drain(&mut self, scaleout: u32, processed_rate: f64) -> bool {
        let raised = self.capacity.raise(scaleout, processed_rate);
        if raised {
            self.dataset.tmax_points.insert(scaleout, self.capacity.tmax(scaleout as f64));
        }
        raised
    }
}

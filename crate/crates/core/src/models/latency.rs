//! Latency regressor with a validity boundary.
//!
//! Latency is regressed on polynomial features of scaleout `s` and rate
//! `r`. Two targets are fitted, raw latency and log latency, and the one
//! with the lower mean relative training error is kept: raw latency
//! reproduces smooth surfaces exactly, log latency copes with the jump to
//! backlog-dominated latencies above capacity.

use nalgebra::{DMatrix, DVector};

use super::cluster::two_means;
use super::ModelError;
use crate::profiler::ProfilingDataset;
use crate::timeseries::nearest_rank;

pub const N_FEATURES: usize = 7;
const PREPROCESS_EPS: f64 = 1e-6;
const MIN_LATENCY_MS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Linear,
    Log,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Linear => "linear",
            Target::Log => "log",
        }
    }
}

/// Percentile bounds used to normalise latencies before the log transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessParams {
    pub p1: f64,
    pub p99: f64,
}

impl PreprocessParams {
    pub fn apply(&self, x: f64) -> f64 {
        let span = self.p99 - self.p1;
        let z = if span > 0.0 { (x - self.p1) / span } else { 1.0 };
        z.max(PREPROCESS_EPS).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyModel {
    pub coefficients: [f64; N_FEATURES],
    pub target: Target,
    /// Feature scales: max training scaleout, rate and rate per worker.
    pub scales: [f64; 3],
    pub s_bounds: (f64, f64),
    pub r_bounds: (f64, f64),
    pub preprocess: PreprocessParams,
    /// Midpoint between the cluster centroids in preprocessed space; `None`
    /// when training latencies did not form two clusters.
    pub cluster_boundary: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyPrediction {
    pub avg_latency_ms: f64,
    /// 0 = normal, 1 = in the high (invalid) cluster.
    pub cluster: u8,
}

fn features(s: f64, r: f64, scales: &[f64; 3]) -> [f64; N_FEATURES] {
    let (x, y) = (s / scales[0], r / scales[1]);
    let u = r / s / scales[2];
    [1.0, x, y, x * y, x * x, y * y, u]
}

fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<[f64; N_FEATURES], ModelError> {
    let svd = a.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max() * a.nrows().max(a.ncols()) as f64;
    if svd.rank(tol) < 3 {
        return Err(ModelError::DegenerateFit("feature matrix has effective rank below 3".into()));
    }
    let x = svd.solve(b, tol).map_err(|e| ModelError::DegenerateFit(e.to_string()))?;
    let mut out = [0.0; N_FEATURES];
    out.copy_from_slice(x.as_slice());
    Ok(out)
}

impl LatencyModel {
    /// Fits on every record, valid or not.
    pub fn fit(data: &ProfilingDataset) -> Result<Self, ModelError> {
        let recs = &data.records;
        let mut scaleouts: Vec<u32> = recs.iter().map(|r| r.scaleout).collect();
        scaleouts.sort_unstable();
        scaleouts.dedup();
        let mut rates: Vec<f64> = recs.iter().map(|r| r.offered_rate).collect();
        rates.sort_by(f64::total_cmp);
        rates.dedup();
        if recs.len() < 6 || scaleouts.len() < 2 || rates.len() < 3 {
            return Err(ModelError::InsufficientData(format!(
                "need >= 6 records over >= 2 scaleouts and >= 3 rates, have {} / {} / {}",
                recs.len(),
                scaleouts.len(),
                rates.len()
            )));
        }
        if recs.iter().any(|r| !(r.avg_latency_ms > 0.0) || !(r.offered_rate >= 0.0) || r.scaleout == 0) {
            return Err(ModelError::InsufficientData("records need positive latency and scaleout".into()));
        }
        let s_max = *scaleouts.last().unwrap() as f64;
        let r_max = rates.last().unwrap().max(1.0);
        let u_max = recs.iter().map(|r| r.offered_rate / r.scaleout as f64).fold(0.0, f64::max).max(1.0);
        let scales = [s_max, r_max, u_max];

        let rows: Vec<f64> = recs.iter().flat_map(|r| features(r.scaleout as f64, r.offered_rate, &scales)).collect();
        let a = DMatrix::from_row_slice(recs.len(), N_FEATURES, &rows);
        let y: Vec<f64> = recs.iter().map(|r| r.avg_latency_ms).collect();
        let lin = solve(&a, &DVector::from_column_slice(&y))?;
        let log = solve(&a, &DVector::from_iterator(y.len(), y.iter().map(|v| v.ln())))?;

        let mut sorted = y.clone();
        let preprocess = PreprocessParams { p1: nearest_rank(&mut sorted, 1.0), p99: nearest_rank(&mut sorted, 99.0) };
        let pre: Vec<f64> = y.iter().map(|v| preprocess.apply(*v)).collect();
        let cluster_boundary = two_means(&pre).map(|tm| tm.boundary());

        let bounds = |it: &mut dyn Iterator<Item = f64>| it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let mut model = LatencyModel {
            coefficients: lin,
            target: Target::Linear,
            scales,
            s_bounds: bounds(&mut scaleouts.iter().map(|s| *s as f64)),
            r_bounds: bounds(&mut rates.iter().copied()),
            preprocess,
            cluster_boundary,
        };
        let lin_err = model.mean_relative_error(data);
        let log_model = LatencyModel { coefficients: log, target: Target::Log, ..model.clone() };
        if log_model.mean_relative_error(data) < lin_err {
            model = log_model;
        }
        Ok(model)
    }

    fn mean_relative_error(&self, data: &ProfilingDataset) -> f64 {
        let n = data.records.len() as f64;
        data.records.iter().map(|r| (self.raw_latency(r.scaleout as f64, r.offered_rate) - r.avg_latency_ms).abs() / r.avg_latency_ms).sum::<f64>() / n
    }

    fn raw_latency(&self, s: f64, r: f64) -> f64 {
        let s = s.clamp(self.s_bounds.0, self.s_bounds.1);
        let r = r.clamp(self.r_bounds.0, self.r_bounds.1);
        let x = features(s, r, &self.scales);
        let v: f64 = x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum();
        let v = match self.target {
            Target::Linear => v,
            Target::Log => v.min(700.0).exp(),
        };
        if v.is_finite() {
            v.max(MIN_LATENCY_MS)
        } else {
            MIN_LATENCY_MS
        }
    }

    pub fn preprocess(&self, x: f64) -> f64 {
        self.preprocess.apply(x)
    }

    pub fn predict(&self, scaleout: u32, rate: f64) -> LatencyPrediction {
        let avg_latency_ms = self.raw_latency(scaleout.max(1) as f64, rate.max(0.0));
        let cluster = match self.cluster_boundary {
            Some(b) if self.preprocess(avg_latency_ms) >= b => 1,
            _ => 0,
        };
        LatencyPrediction { avg_latency_ms, cluster }
    }
}

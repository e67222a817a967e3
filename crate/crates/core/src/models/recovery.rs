//! Recovery-time estimation.
//!
//! After a failure at `t0` the job restarts from the last checkpoint, up to
//! `I` seconds old, and is down for `D` seconds. The events from
//! `[t0 - I, t0 + D]` must be replayed at `Tmax`, which takes `c(0)` seconds,
//! during which more events arrive, taking `c(1)` seconds, and so on until
//! a step is shorter than `epsilon`.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::timeseries::{SeriesError, TimeSeries};

/// `models.*` configuration keys for the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryParams {
    pub epsilon_s: f64,
    pub max_steps: u32,
    pub bin_count: usize,
    pub refit_every_evals: u32,
    /// Feed runtime observations back into the models.
    pub runtime_updates: bool,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        RecoveryParams { epsilon_s: 1.0, max_steps: 200, bin_count: 5, refit_every_evals: 6, runtime_updates: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryEstimate {
    pub r: f64,
    pub d: f64,
    pub c: f64,
    pub n_steps: u32,
    pub projected_tavg: f64,
    pub feasible: bool,
}

const DIVERGENCE_RUN: u32 = 3;

/// Estimates recovery for a job with capacity `tmax` failing at `t0`.
///
/// `f` must cover `[t0 - i, t0 + horizon]`. A catch-up that runs past the
/// end of `f` is reported infeasible.
pub fn estimate_recovery(tmax: f64, f: &TimeSeries, t0: f64, i: f64, d: f64, horizon: f64, params: &RecoveryParams) -> Result<RecoveryEstimate, ModelError> {
    if !(params.epsilon_s > 0.0) || !(i >= 0.0) || !(d >= 0.0) || params.bin_count == 0 {
        return Err(ModelError::InvalidArgument("epsilon > 0, I >= 0, D >= 0 and bin_count >= 1 required".into()));
    }
    let projected_tavg = f.bin_means(t0, horizon, params.bin_count)?.iter().map(|b| b.mean_value).fold(0.0, f64::max);
    let backlog = match f.integrate(t0 - i, t0 + d) {
        Err(SeriesError::Domain { .. }) => return Err(ModelError::Coverage(format!("workload does not cover [{}, {}]", t0 - i, t0 + d))),
        other => other?,
    };
    let infeasible = RecoveryEstimate { r: f64::INFINITY, d, c: f64::INFINITY, n_steps: 0, projected_tavg, feasible: false };
    if !(tmax > 0.0) {
        return Ok(infeasible);
    }
    let end = f.domain_end().unwrap_or(f64::NEG_INFINITY);

    let mut prev = backlog / tmax;
    let mut total = prev;
    let mut t = t0 + d;
    let mut k = 0u32;
    let mut rising = 0u32;
    while prev >= params.epsilon_s {
        k += 1;
        if k > params.max_steps || t + prev > end {
            return Ok(infeasible);
        }
        let c = f.integrate(t, t + prev)? / tmax;
        t += prev;
        total += c;
        if c >= prev {
            rising += 1;
            if rising >= DIVERGENCE_RUN {
                return Ok(infeasible);
            }
        } else {
            rising = 0;
        }
        prev = c;
    }
    Ok(RecoveryEstimate { r: d + total, d, c: total, n_steps: k + 1, projected_tavg, feasible: true })
}

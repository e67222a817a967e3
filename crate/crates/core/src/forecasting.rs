//! Multistep-ahead workload forecasting.
//!
//! Every method is a pure function of the history and its parameters; the
//! model is refit from scratch on each call. Forecast step width equals the
//! spacing of the last two history samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{SeriesError, TimeSeries};

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("insufficient history: need {needed} samples, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("unknown forecasting method {0:?}")]
    UnknownMethod(String),
    #[error("forecast origin {origin} does not match last history timestamp {last}")]
    MisalignedOrigin { origin: f64, last: f64 },
    #[error("horizon {horizon} is not a whole number of {step} s steps")]
    NonIntegralHorizon { horizon: f64, step: f64 },
    #[error("horizon {horizon} exceeds the configured maximum {max}")]
    HorizonTooLong { horizon: f64, max: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForecastMethod {
    NaiveLast,
    SeasonalNaive { period_s: f64 },
    HoltLinear { alpha: f64, beta: f64 },
}

impl ForecastMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ForecastMethod::NaiveLast => "naive-last",
            ForecastMethod::SeasonalNaive { .. } => "seasonal-naive",
            ForecastMethod::HoltLinear { .. } => "holt-linear",
        }
    }
}

/// `forecast.*` configuration keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub method: String,
    pub horizon_s: f64,
    pub seasonal_period_s: f64,
    pub holt_alpha: f64,
    pub holt_beta: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig { method: "holt-linear".into(), horizon_s: 600.0, seasonal_period_s: 3600.0, holt_alpha: 0.5, holt_beta: 0.1 }
    }
}

impl ForecastConfig {
    pub fn method(&self) -> Result<ForecastMethod, ForecastError> {
        let m = match self.method.as_str() {
            "naive-last" => ForecastMethod::NaiveLast,
            "seasonal-naive" => {
                if !(self.seasonal_period_s > 0.0) {
                    return Err(ForecastError::InvalidParameter("seasonal_period_s must be positive"));
                }
                ForecastMethod::SeasonalNaive { period_s: self.seasonal_period_s }
            }
            "holt-linear" => {
                let ok = |x: f64| x > 0.0 && x <= 1.0;
                if !ok(self.holt_alpha) || !ok(self.holt_beta) {
                    return Err(ForecastError::InvalidParameter("holt smoothing factors must be in (0, 1]"));
                }
                ForecastMethod::HoltLinear { alpha: self.holt_alpha, beta: self.holt_beta }
            }
            other => return Err(ForecastError::UnknownMethod(other.to_string())),
        };
        Ok(m)
    }
}

/// Predicted workload over `(origin, origin + horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub origin: f64,
    pub steps: TimeSeries,
    pub method: String,
}

const MIN_HISTORY: usize = 10;

/// Forecasts `horizon` seconds past `t0`, which must be the last history timestamp.
pub fn forecast(history: &TimeSeries, t0: f64, horizon: f64, method: ForecastMethod) -> Result<Forecast, ForecastError> {
    let have = history.len();
    let last = history.last_time().ok_or(ForecastError::InsufficientHistory { needed: MIN_HISTORY, have })?;
    if (last - t0).abs() > 1e-9 * t0.abs().max(1.0) {
        return Err(ForecastError::MisalignedOrigin { origin: t0, last });
    }
    if !(horizon >= 0.0) {
        return Err(ForecastError::InvalidParameter("horizon must be non-negative"));
    }
    let step = history.last_spacing();
    if have < 2 || step <= 0.0 {
        return Err(ForecastError::InsufficientHistory { needed: MIN_HISTORY, have });
    }
    let n_steps = (horizon / step).round();
    if (n_steps * step - horizon).abs() > 1e-6 * horizon.max(1.0) {
        return Err(ForecastError::NonIntegralHorizon { horizon, step });
    }
    let n_steps = n_steps as usize;
    let x = history.values();

    let predicted: Vec<f64> = match method {
        ForecastMethod::NaiveLast => {
            require(have, MIN_HISTORY)?;
            vec![x[have - 1]; n_steps]
        }
        ForecastMethod::SeasonalNaive { period_s } => {
            let period = (period_s / step).round().max(1.0) as usize;
            require(have, 2 * period)?;
            (1..=n_steps)
                .map(|k| {
                    let cycles = k.div_ceil(period);
                    x[have - 1 + k - cycles * period]
                })
                .collect()
        }
        ForecastMethod::HoltLinear { alpha, beta } => {
            require(have, MIN_HISTORY)?;
            let (level, trend) = holt_state(x, alpha, beta);
            (1..=n_steps).map(|k| level + k as f64 * trend).collect()
        }
    };

    let times = (1..=n_steps).map(|k| t0 + k as f64 * step).collect();
    let values = predicted.into_iter().map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 }).collect();
    Ok(Forecast { origin: t0, steps: TimeSeries::new(times, values)?, method: method.name().to_string() })
}

fn require(have: usize, needed: usize) -> Result<(), ForecastError> {
    if have < needed {
        Err(ForecastError::InsufficientHistory { needed, have })
    } else {
        Ok(())
    }
}

/// Final level and trend of Holt's double exponential smoothing.
fn holt_state(x: &[f64], alpha: f64, beta: f64) -> (f64, f64) {
    let mut level = x[0];
    let mut trend = x[1] - x[0];
    for &obs in &x[1..] {
        let prev = level;
        level = alpha * obs + (1.0 - alpha) * (level + trend);
        trend = beta * (level - prev) + (1.0 - beta) * trend;
    }
    (level, trend)
}

/// History followed by the forecast steps: the workload function used for
/// recovery estimation.
pub fn combined_series(history: &TimeSeries, fc: &Forecast) -> Result<TimeSeries, ForecastError> {
    let last = history.last_time().unwrap_or(f64::NAN);
    if (last - fc.origin).abs() > 1e-9 * last.abs().max(1.0) || last.is_nan() {
        return Err(ForecastError::MisalignedOrigin { origin: fc.origin, last });
    }
    let mut times = history.times().to_vec();
    let mut values = history.values().to_vec();
    times.extend_from_slice(fc.steps.times());
    values.extend_from_slice(fc.steps.values());
    Ok(TimeSeries::new(times, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn holt() -> ForecastMethod {
        ForecastConfig::default().method().unwrap()
    }

    #[test]
    fn naive_last_repeats_final_value() {
        let mut v = vec![90.0; 11];
        v.push(120.0);
        let h = TimeSeries::regular(0.0, 1.0, v).unwrap();
        let fc = forecast(&h, 11.0, 5.0, ForecastMethod::NaiveLast).unwrap();
        assert_eq!(fc.steps.values(), &[120.0; 5]);
        assert_eq!(fc.steps.times(), &[12.0, 13.0, 14.0, 15.0, 16.0]);
        assert_eq!(fc.method, "naive-last");
    }

    #[test]
    fn seasonal_naive_repeats_period_exactly() {
        let pattern = [5.0, 9.0, 2.0, 7.0];
        let v: Vec<f64> = pattern.iter().cycle().take(12).copied().collect();
        let h = TimeSeries::regular(0.0, 10.0, v).unwrap();
        let fc = forecast(&h, 110.0, 80.0, ForecastMethod::SeasonalNaive { period_s: 40.0 }).unwrap();
        assert_eq!(fc.steps.values(), &[5.0, 9.0, 2.0, 7.0, 5.0, 9.0, 2.0, 7.0]);
    }

    #[test]
    fn seasonal_needs_two_periods() {
        let h = TimeSeries::regular(0.0, 1.0, vec![1.0; 15]).unwrap();
        assert_eq!(forecast(&h, 14.0, 3.0, ForecastMethod::SeasonalNaive { period_s: 8.0 }), Err(ForecastError::InsufficientHistory { needed: 16, have: 15 }));
    }

    #[test]
    fn holt_tracks_a_line() {
        let h = TimeSeries::regular(1.0, 1.0, (1..=10).map(|k| 10.0 * k as f64).collect()).unwrap();
        let fc = forecast(&h, 10.0, 8.0, holt()).unwrap();
        for (k, v) in fc.steps.values().iter().enumerate() {
            let expect = 100.0 + 10.0 * (k + 1) as f64;
            assert!((v - expect).abs() <= 0.05 * expect, "step {k}: {v} vs {expect}");
        }
    }

    #[test]
    fn forecasts_are_clamped_non_negative() {
        let h = TimeSeries::regular(0.0, 1.0, (0..10).map(|k| 100.0 - 10.0 * k as f64).collect()).unwrap();
        let fc = forecast(&h, 9.0, 20.0, holt()).unwrap();
        assert!(fc.steps.values().iter().all(|v| *v >= 0.0));
        assert_eq!(*fc.steps.values().last().unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let short = TimeSeries::regular(0.0, 1.0, vec![1.0; 9]).unwrap();
        assert!(matches!(forecast(&short, 8.0, 2.0, holt()), Err(ForecastError::InsufficientHistory { .. })));
        let h = TimeSeries::regular(0.0, 2.0, vec![1.0; 12]).unwrap();
        assert!(matches!(forecast(&h, 20.0, 4.0, holt()), Err(ForecastError::MisalignedOrigin { .. })));
        assert!(matches!(forecast(&h, 22.0, 5.0, holt()), Err(ForecastError::NonIntegralHorizon { .. })));
        let cfg = ForecastConfig { method: "arima".into(), ..Default::default() };
        assert_eq!(cfg.method(), Err(ForecastError::UnknownMethod("arima".into())));
    }

    #[test]
    fn combine_examples() {
        let h = TimeSeries::regular(0.0, 10.0, vec![50.0; 11]).unwrap();
        let empty = forecast(&h, 100.0, 0.0, ForecastMethod::NaiveLast).unwrap();
        assert_eq!(combined_series(&h, &empty).unwrap(), h);

        let fc = forecast(&h, 100.0, 50.0, ForecastMethod::NaiveLast).unwrap();
        let f = combined_series(&h, &fc).unwrap();
        assert_eq!(f.len(), 16);
        assert!(f.values().iter().all(|v| *v == 50.0));

        let early = Forecast { origin: 90.0, ..fc };
        assert!(matches!(combined_series(&h, &early), Err(ForecastError::MisalignedOrigin { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn length_and_determinism(v in prop::collection::vec(0.0f64..1e6, 24..80), steps in 0usize..40, which in 0usize..3) {
                let h = TimeSeries::regular(0.0, 5.0, v).unwrap();
                let t0 = h.last_time().unwrap();
                let method = match which {
                    0 => ForecastMethod::NaiveLast,
                    1 => ForecastMethod::SeasonalNaive { period_s: 50.0 },
                    _ => ForecastMethod::HoltLinear { alpha: 0.5, beta: 0.1 },
                };
                let a = forecast(&h, t0, 5.0 * steps as f64, method).unwrap();
                let b = forecast(&h, t0, 5.0 * steps as f64, method).unwrap();
                prop_assert_eq!(a.steps.len(), steps);
                prop_assert!(a.steps.values().iter().all(|x| *x >= 0.0));
                prop_assert_eq!(a, b);
            }
        }
    }
}

//! Workload generators and trace replay.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{SeriesError, TimeSeries};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("trace {path}: {source}")]
    Trace { path: PathBuf, source: SeriesError },
}

/// `workload.*` configuration keys. Which fields are read depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    /// `constant`, `ramp`, `sinusoid` or `trace`.
    pub kind: String,
    pub level: f64,
    pub start: f64,
    pub slope: f64,
    pub mean: f64,
    pub amplitude: f64,
    pub period_s: f64,
    pub trace_path: Option<PathBuf>,
    /// Rate multiplier applied to a trace by event deletion/replication.
    pub trace_scale: f64,
    /// Uniform multiplicative noise: each tick is scaled by `1 + U(-v, v)`.
    pub variance_pct: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            kind: "sinusoid".into(),
            level: 0.0,
            start: 0.0,
            slope: 0.0,
            mean: 110_000.0,
            amplitude: 90_000.0,
            period_s: 7200.0,
            trace_path: None,
            trace_scale: 1.0,
            variance_pct: 0.10,
        }
    }
}

impl WorkloadSpec {
    pub fn constant(level: f64) -> Self {
        WorkloadSpec { kind: "constant".into(), level, variance_pct: 0.0, ..Self::default() }
    }

    pub fn sinusoid(mean: f64, amplitude: f64, period_s: f64, variance_pct: f64) -> Self {
        WorkloadSpec { kind: "sinusoid".into(), mean, amplitude, period_s, variance_pct, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::Invalid(m.into()));
        if !(0.0..1.0).contains(&self.variance_pct) {
            return bad("variance_pct must be in [0, 1)");
        }
        match self.kind.as_str() {
            "constant" if !(self.level >= 0.0) => bad("level must be non-negative"),
            "ramp" if !self.start.is_finite() || !self.slope.is_finite() => bad("ramp needs finite start and slope"),
            "sinusoid" if !(self.period_s > 0.0) || !self.mean.is_finite() || !self.amplitude.is_finite() => {
                bad("sinusoid needs finite mean/amplitude and positive period_s")
            }
            "trace" if self.trace_path.is_none() => bad("trace needs trace_path"),
            "trace" if !(self.trace_scale > 0.0) => bad("trace_scale must be positive"),
            "constant" | "ramp" | "sinusoid" | "trace" => Ok(()),
            other => Err(WorkloadError::Invalid(format!("unknown workload kind {other:?}"))),
        }
    }
}

/// Samples the workload at `k * tick` for `k = 0..=duration/tick`.
pub fn generate(spec: &WorkloadSpec, duration: f64, tick: f64, seed: u64) -> Result<TimeSeries, WorkloadError> {
    spec.validate()?;
    if !(duration > 0.0) || !(tick > 0.0) {
        return Err(WorkloadError::Invalid("duration and tick must be positive".into()));
    }
    let n = (duration / tick).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * tick).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = match spec.kind.as_str() {
        "constant" => vec![spec.level; n + 1],
        "ramp" => times.iter().map(|t| spec.start + spec.slope * t).collect(),
        "sinusoid" => times.iter().map(|t| spec.mean + spec.amplitude * (2.0 * std::f64::consts::PI * t / spec.period_s).sin()).collect(),
        _ => {
            let path = spec.trace_path.clone().unwrap_or_default();
            let trace = TimeSeries::load(&path).map_err(|source| WorkloadError::Trace { path: path.clone(), source })?;
            let trace = if spec.trace_scale != 1.0 { scale_trace(&trace, spec.trace_scale, seed ^ 0x5EED) } else { trace };
            times.iter().map(|t| sample_clamped(&trace, *t)).collect()
        }
    };
    let v = spec.variance_pct;
    let values = base
        .into_iter()
        .map(|x| {
            let noisy = if v > 0.0 { x * (1.0 + rng.gen_range(-v..=v)) } else { x };
            noisy.max(0.0)
        })
        .collect();
    TimeSeries::new(times, values).map_err(|e| WorkloadError::Invalid(e.to_string()))
}

// Linear interpolation, holding the first/last value outside the trace.
fn sample_clamped(trace: &TimeSeries, t: f64) -> f64 {
    match (trace.first_time(), trace.last_time()) {
        (Some(a), _) if t <= a => trace.values()[0],
        (_, Some(b)) if t >= b => trace.last_value().unwrap_or(0.0),
        (Some(_), Some(_)) => trace.value_at(t).unwrap_or(0.0),
        _ => 0.0,
    }
}

/// Scales a rate trace by deleting or replicating events: each sample's
/// scaled event count is rounded up or down at random so that its expected
/// value is exact.
pub fn scale_trace(trace: &TimeSeries, factor: f64, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = trace.times();
    let n = times.len();
    let last = if n > 1 { trace.last_spacing() } else { 1.0 };
    let values = (0..n)
        .map(|i| {
            let dt = if i + 1 < n { times[i + 1] - times[i] } else { last };
            let events = trace.values()[i] * dt * factor;
            let floor = events.floor();
            let extra = if rng.gen::<f64>() < events - floor { 1.0 } else { 0.0 };
            (floor + extra) / dt
        })
        .collect();
    TimeSeries::new(times.to_vec(), values).expect("scaling keeps times and non-negativity")
}

/// Synthetic daily commuter traffic: a sharp morning peak and a broader,
/// lower evening peak over a constant floor.
pub fn commuter_rate(t_s: f64) -> f64 {
    let h = (t_s / 3600.0).rem_euclid(24.0);
    let bump = |mu: f64, sigma: f64| (-0.5 * ((h - mu) / sigma).powi(2)).exp();
    (15_000.0 + 150_000.0 * bump(8.0, 0.9) + 110_000.0 * bump(17.5, 1.6) + 0.5).floor()
}

pub fn commuter_trace(step_s: f64) -> TimeSeries {
    let n = (86_400.0 / step_s).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * step_s).collect();
    let values = times.iter().map(|t| commuter_rate(*t)).collect();
    TimeSeries::new(times, values).expect("commuter trace is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_flat() {
        let s = generate(&WorkloadSpec::constant(50_000.0), 100.0, 1.0, 1).unwrap();
        assert_eq!(s.len(), 101);
        assert!(s.values().iter().all(|v| *v == 50_000.0));
    }

    #[test]
    fn sinusoid_peak() {
        let s = generate(&WorkloadSpec::sinusoid(100_000.0, 80_000.0, 400.0, 0.0), 400.0, 1.0, 1).unwrap();
        assert!((s.value_at(100.0).unwrap() - 180_000.0).abs() < 1e-6);
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let spec = WorkloadSpec::sinusoid(100_000.0, 80_000.0, 400.0, 0.1);
        let clean = generate(&WorkloadSpec { variance_pct: 0.0, ..spec.clone() }, 2000.0, 1.0, 1).unwrap();
        let a = generate(&spec, 2000.0, 1.0, 9).unwrap();
        for (x, c) in a.values().iter().zip(clean.values()) {
            assert!(*x >= 0.9 * c - 1e-9 && *x <= 1.1 * c + 1e-9);
        }
        assert_eq!(a, generate(&spec, 2000.0, 1.0, 9).unwrap());
        assert_ne!(a, generate(&spec, 2000.0, 1.0, 10).unwrap());
    }

    #[test]
    fn ramp_clamps_at_zero() {
        let spec = WorkloadSpec { kind: "ramp".into(), start: 100.0, slope: -1.0, variance_pct: 0.0, ..Default::default() };
        let s = generate(&spec, 200.0, 1.0, 0).unwrap();
        assert_eq!(s.values()[50], 50.0);
        assert_eq!(s.values()[150], 0.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&WorkloadSpec { kind: "square".into(), ..Default::default() }, 10.0, 1.0, 0).is_err());
        assert!(generate(&WorkloadSpec { kind: "trace".into(), ..Default::default() }, 10.0, 1.0, 0).is_err());
        let missing = WorkloadSpec { kind: "trace".into(), trace_path: Some("/nonexistent.csv".into()), ..Default::default() };
        assert!(matches!(generate(&missing, 10.0, 1.0, 0), Err(WorkloadError::Trace { .. })));
        assert!(generate(&WorkloadSpec::constant(1.0), 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn scale_examples() {
        let c = TimeSeries::regular(0.0, 1.0, vec![10_000.0; 50]).unwrap();
        assert_eq!(scale_trace(&c, 1.0, 3), c);
        assert!(scale_trace(&c, 2.0, 3).values().iter().all(|v| *v == 20_000.0));

        let ones = TimeSeries::regular(0.0, 1.0, vec![1.0; 10_000]).unwrap();
        let half = scale_trace(&ones, 0.5, 3);
        assert!(half.values().iter().all(|v| *v == 0.0 || *v == 1.0));
        let mean = half.values().iter().sum::<f64>() / 10_000.0;
        // 3 sigma for Bernoulli(0.5) over 10k draws
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / 100.0, "{mean}");
    }

    #[test]
    fn commuter_shape() {
        let t = commuter_trace(60.0);
        assert_eq!(t.len(), 1441);
        let am = commuter_rate(8.0 * 3600.0);
        let pm = commuter_rate(17.5 * 3600.0);
        let night = commuter_rate(3.0 * 3600.0);
        assert!(am > pm && pm > night && night >= 15_000.0);
    }
}

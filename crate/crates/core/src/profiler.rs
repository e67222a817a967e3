//! Stepped-rate profiling of parallel deployments.
//!
//! One deployment per scaleout runs at the same offered rate. After each
//! rate step the measured latencies are compared, deployments that fell
//! behind are retired, and the last rate they handled is their `Tmax`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::cluster::two_means;
use crate::simulator::{JobProfile, SimConfig, SimError, Simulation};

#[derive(Debug, Error)]
pub enum ProfilerError {
    #[error("invalid scaleout range: {0}")]
    InvalidRange(String),
    #[error("invalid profiler config: {0}")]
    InvalidConfig(String),
    #[error("rate {rate} exceeded the overflow guard; {} deployments still live", .live.len())]
    RateOverflow { rate: f64, live: Vec<u32>, partial: Box<ProfilingDataset> },
    #[error("profiling stopped before every deployment was retired")]
    IncompleteDataset { partial: Box<ProfilingDataset> },
    #[error("deployment: {0}")]
    Deployment(#[from] SimError),
    #[error("dataset io: {0}")]
    Io(String),
}

/// Ordered set of candidate scaleouts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleoutSet(Vec<u32>);

impl ScaleoutSet {
    pub fn new(mut scaleouts: Vec<u32>) -> Result<Self, ProfilerError> {
        scaleouts.sort_unstable();
        scaleouts.dedup();
        if scaleouts.is_empty() || scaleouts[0] == 0 {
            return Err(ProfilerError::InvalidRange("scaleouts must be non-empty and positive".into()));
        }
        Ok(ScaleoutSet(scaleouts))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn min(&self) -> u32 {
        self.0[0]
    }

    pub fn max(&self) -> u32 {
        self.0[self.0.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn clamp(&self, s: u32) -> u32 {
        s.clamp(self.min(), self.max())
    }
}

/// `s_count` equally spaced scaleouts between `s_min` and `s_max`, rounded;
/// collisions move to the next unused integer.
pub fn build_scaleout_set(s_min: u32, s_max: u32, s_count: u32) -> Result<ScaleoutSet, ProfilerError> {
    if s_min < 1 || s_min >= s_max {
        return Err(ProfilerError::InvalidRange(format!("need 1 <= s_min < s_max, got {s_min}..{s_max}")));
    }
    if s_count < 2 || s_count > s_max - s_min + 1 {
        return Err(ProfilerError::InvalidRange(format!("s_count {s_count} outside 2..={}", s_max - s_min + 1)));
    }
    let step = (s_max - s_min) as f64 / (s_count - 1) as f64;
    let mut out: Vec<u32> = Vec::with_capacity(s_count as usize);
    for k in 0..s_count {
        let mut s = (s_min as f64 + k as f64 * step).round() as u32;
        if let Some(&prev) = out.last() {
            s = s.max(prev + 1);
        }
        out.push(s.min(s_max));
    }
    ScaleoutSet::new(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfilingRecord {
    pub scaleout: u32,
    pub offered_rate: f64,
    pub avg_latency_ms: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfilingDataset {
    pub records: Vec<ProfilingRecord>,
    pub tmax_points: BTreeMap<u32, f64>,
}

impl ProfilingDataset {
    pub fn write_records_csv<W: Write>(&self, writer: W) -> Result<(), ProfilerError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| ProfilerError::Io(e.to_string());
        w.write_record(["scaleout", "offered_rate", "avg_latency_ms", "valid"]).map_err(io)?;
        for r in &self.records {
            w.write_record([r.scaleout.to_string(), r.offered_rate.to_string(), r.avg_latency_ms.to_string(), r.valid.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| ProfilerError::Io(e.to_string()))
    }

    pub fn write_tmax_csv<W: Write>(&self, writer: W) -> Result<(), ProfilerError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| ProfilerError::Io(e.to_string());
        w.write_record(["scaleout", "tmax"]).map_err(io)?;
        for (s, t) in &self.tmax_points {
            w.write_record([s.to_string(), t.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| ProfilerError::Io(e.to_string()))
    }

    pub fn read_csv<R1: Read, R2: Read>(records: R1, tmax: R2) -> Result<Self, ProfilerError> {
        let io = |e: csv::Error| ProfilerError::Io(e.to_string());
        let mut rd = csv::Reader::from_reader(records);
        check_header(rd.headers().map_err(io)?, &["scaleout", "offered_rate", "avg_latency_ms", "valid"])?;
        let mut out = ProfilingDataset::default();
        for row in rd.records() {
            let row = row.map_err(io)?;
            out.records.push(ProfilingRecord {
                scaleout: parse(&row[0])?,
                offered_rate: parse(&row[1])?,
                avg_latency_ms: parse(&row[2])?,
                valid: parse(&row[3])?,
            });
        }
        let mut rd = csv::Reader::from_reader(tmax);
        check_header(rd.headers().map_err(io)?, &["scaleout", "tmax"])?;
        for row in rd.records() {
            let row = row.map_err(io)?;
            out.tmax_points.insert(parse(&row[0])?, parse(&row[1])?);
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ProfilerError> {
        let io = |e: std::io::Error| ProfilerError::Io(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        self.write_records_csv(std::fs::File::create(dir.join("profiling.csv")).map_err(io)?)?;
        self.write_tmax_csv(std::fs::File::create(dir.join("tmax.csv")).map_err(io)?)
    }

    pub fn load(dir: &Path) -> Result<Self, ProfilerError> {
        let io = |e: std::io::Error| ProfilerError::Io(e.to_string());
        Self::read_csv(std::fs::File::open(dir.join("profiling.csv")).map_err(io)?, std::fs::File::open(dir.join("tmax.csv")).map_err(io)?)
    }
}

fn check_header(h: &csv::StringRecord, want: &[&str]) -> Result<(), ProfilerError> {
    if h.iter().ne(want.iter().copied()) {
        return Err(ProfilerError::Io(format!("expected header {}", want.join(","))));
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, ProfilerError> {
    s.trim().parse().map_err(|_| ProfilerError::Io(format!("cannot parse {s:?}")))
}

/// `profiler.*` configuration keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfilerConfig {
    pub s_min: u32,
    pub s_max: u32,
    pub s_count: u32,
    pub rate_start: f64,
    pub rate_step: f64,
    pub dwell_s: f64,
    pub settle_s: f64,
    pub cluster_gap_factor: f64,
    pub deviation_factor: f64,
    /// Minimum latency ratio between the two clusters before the higher one
    /// is considered to have fallen behind.
    pub min_ratio: f64,
    /// Stop after this many rate steps (0 = unlimited).
    pub max_steps: u32,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        ProfilerConfig {
            s_min: 2,
            s_max: 24,
            s_count: 8,
            rate_start: 20_000.0,
            rate_step: 20_000.0,
            dwell_s: 60.0,
            settle_s: 30.0,
            cluster_gap_factor: 2.0,
            deviation_factor: 2.0,
            min_ratio: 2.0,
            max_steps: 0,
        }
    }
}

impl ProfilerConfig {
    pub fn validate(&self) -> Result<(), ProfilerError> {
        let bad = |m: &str| Err(ProfilerError::InvalidConfig(m.into()));
        if !(self.rate_start > 0.0) {
            return bad("rate_start must be positive");
        }
        if !(self.rate_step > 0.0) {
            return bad("rate_step must be positive");
        }
        if !(self.dwell_s > self.settle_s) || !(self.settle_s >= 0.0) {
            return bad("need dwell_s > settle_s >= 0");
        }
        if !(self.cluster_gap_factor > 0.0) || !(self.deviation_factor > 1.0) || !(self.min_ratio >= 1.0) {
            return bad("cluster_gap_factor > 0, deviation_factor > 1 and min_ratio >= 1 required");
        }
        Ok(())
    }

    pub fn scaleout_set(&self) -> Result<ScaleoutSet, ProfilerError> {
        build_scaleout_set(self.s_min, self.s_max, self.s_count)
    }
}

/// A running job instance that can be driven at a fixed rate.
pub trait Deployment: Send {
    /// Runs at `rate` for `dwell_s` and returns the mean latency after `settle_s`.
    fn run(&mut self, rate: f64, dwell_s: f64, settle_s: f64) -> Result<f64, ProfilerError>;
}

/// Something that can start deployments.
pub trait Environment {
    type Deployment: Deployment;
    fn deploy(&self, scaleout: u32) -> Result<Self::Deployment, ProfilerError>;
}

/// Simulator-backed environment; each scaleout gets its own seeded job.
#[derive(Debug, Clone)]
pub struct SimEnvironment {
    pub profile: JobProfile,
    pub config: SimConfig,
}

pub struct SimDeployment(Simulation);

impl Deployment for SimDeployment {
    fn run(&mut self, rate: f64, dwell_s: f64, settle_s: f64) -> Result<f64, ProfilerError> {
        let tick = self.0.config().tick_s;
        let ticks = (dwell_s / tick).round() as u64;
        let start = self.0.time();
        let (mut sum, mut n) = (0.0, 0usize);
        for _ in 0..ticks {
            let m = self.0.step(rate);
            if m.time_s - start > settle_s + 1e-9 {
                sum += m.latency_ms;
                n += 1;
            }
        }
        if n == 0 {
            return Err(ProfilerError::InvalidConfig("dwell leaves no measurement ticks after settle".into()));
        }
        Ok(sum / n as f64)
    }
}

impl Environment for SimEnvironment {
    type Deployment = SimDeployment;

    fn deploy(&self, scaleout: u32) -> Result<SimDeployment, ProfilerError> {
        let seed = self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(scaleout as u64);
        let config = SimConfig { seed, ..self.config.clone() };
        Ok(SimDeployment(Simulation::new(self.profile.clone(), config, scaleout)?))
    }
}

/// Decides which live deployments are still keeping up at `rate`.
///
/// `latencies` holds the current measurement per scaleout; `history` holds
/// each scaleout's earlier valid `(rate, latency)` points.
pub fn assess_validity(latencies: &BTreeMap<u32, f64>, history: &BTreeMap<u32, Vec<(f64, f64)>>, rate: f64, cfg: &ProfilerConfig) -> BTreeMap<u32, bool> {
    if latencies.len() >= 3 {
        let logs: Vec<f64> = latencies.values().map(|l| l.max(f64::MIN_POSITIVE).ln()).collect();
        let split = two_means(&logs).filter(|tm| tm.gap() > cfg.cluster_gap_factor * tm.max_spread(&logs) && tm.gap() >= cfg.min_ratio.ln());
        return match split {
            Some(tm) => latencies.keys().zip(tm.high_member).map(|(s, high)| (*s, !high)).collect(),
            None => latencies.keys().map(|s| (*s, true)).collect(),
        };
    }
    latencies
        .iter()
        .map(|(s, lat)| {
            let prior = history.get(s).map(Vec::as_slice).unwrap_or(&[]);
            let valid = match predict_line(prior, rate) {
                Some(pred) => *lat <= cfg.deviation_factor * pred,
                None => true,
            };
            (*s, valid)
        })
        .collect()
}

// Least-squares line through prior points evaluated at `x`, floored at the
// smallest prior latency.
fn predict_line(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let floor = points.iter().map(|p| p.1).reduce(f64::min)?;
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Some(my.max(floor));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((my + sxy / sxx * (x - mx)).max(floor))
}

/// Runs the stepped-rate protocol until every deployment is retired.
pub fn run_profiling<E: Environment>(set: &ScaleoutSet, env: &E, cfg: &ProfilerConfig) -> Result<ProfilingDataset, ProfilerError> {
    cfg.validate()?;
    let mut live: Vec<(u32, E::Deployment)> = set.as_slice().iter().map(|s| Ok((*s, env.deploy(*s)?))).collect::<Result<_, ProfilerError>>()?;
    let mut history: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    let mut data = ProfilingDataset::default();
    let mut step = 0u32;

    while !live.is_empty() {
        let rate = cfg.rate_start + step as f64 * cfg.rate_step;
        if rate > 100.0 * cfg.rate_start {
            return Err(ProfilerError::RateOverflow { rate, live: live.iter().map(|d| d.0).collect(), partial: Box::new(data) });
        }
        if cfg.max_steps > 0 && step >= cfg.max_steps {
            return Err(ProfilerError::IncompleteDataset { partial: Box::new(data) });
        }
        let measured: Vec<(u32, f64)> =
            live.par_iter_mut().map(|(s, d)| Ok((*s, d.run(rate, cfg.dwell_s, cfg.settle_s)?))).collect::<Result<_, ProfilerError>>()?;
        let latencies: BTreeMap<u32, f64> = measured.into_iter().collect();
        let validity = assess_validity(&latencies, &history, rate, cfg);
        debug!("rate {rate}: {latencies:?} -> {validity:?}");

        for (s, lat) in &latencies {
            let valid = validity[s];
            data.records.push(ProfilingRecord { scaleout: *s, offered_rate: rate, avg_latency_ms: *lat, valid });
            if valid {
                history.entry(*s).or_default().push((rate, *lat));
            } else {
                let tmax = history.get(s).and_then(|h| h.last()).map_or(0.0, |p| p.0);
                info!("scaleout {s} retired at {rate} msg/s, tmax {tmax}");
                data.tmax_points.insert(*s, tmax);
            }
        }
        live.retain(|(s, _)| validity[s]);
        step += 1;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ProfilerConfig {
        ProfilerConfig::default()
    }

    #[test]
    fn scaleout_set_examples() {
        assert_eq!(build_scaleout_set(2, 24, 8).unwrap().as_slice(), &[2, 5, 8, 11, 15, 18, 21, 24]);
        assert_eq!(build_scaleout_set(2, 4, 3).unwrap().as_slice(), &[2, 3, 4]);
        assert!(build_scaleout_set(4, 4, 2).is_err());
        assert!(build_scaleout_set(2, 4, 4).is_err());
        assert!(build_scaleout_set(0, 4, 2).is_err());
        assert_eq!(build_scaleout_set(1, 10, 10).unwrap().as_slice(), &(1..=10).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn clustering_flags_outlier() {
        let lat: BTreeMap<u32, f64> = [(2, 40_000.0), (5, 900.0), (8, 850.0), (11, 820.0)].into();
        let v = assess_validity(&lat, &BTreeMap::new(), 0.0, &cfg());
        assert_eq!(v, [(2, false), (5, true), (8, true), (11, true)].into());
    }

    #[test]
    fn close_latencies_all_valid() {
        let lat: BTreeMap<u32, f64> = [(2, 1000.0), (5, 1040.0), (8, 1020.0), (11, 1049.0), (15, 1001.0)].into();
        let v = assess_validity(&lat, &BTreeMap::new(), 0.0, &cfg());
        assert!(v.values().all(|x| *x));
        // congestion, not backlog: tight clusters but under 2x apart
        let lat: BTreeMap<u32, f64> = [(2, 1300.0), (5, 801.0), (8, 800.0)].into();
        assert!(assess_validity(&lat, &BTreeMap::new(), 0.0, &cfg()).values().all(|x| *x));
    }

    #[test]
    fn regression_path() {
        let lat: BTreeMap<u32, f64> = [(4, 30_000.0)].into();
        let hist: BTreeMap<u32, Vec<(f64, f64)>> = [(4, vec![(10_000.0, 800.0), (20_000.0, 900.0)])].into();
        assert!(!assess_validity(&lat, &hist, 30_000.0, &cfg())[&4]);
        let ok: BTreeMap<u32, f64> = [(4, 1050.0)].into();
        assert!(assess_validity(&ok, &hist, 30_000.0, &cfg())[&4]);
        assert!(assess_validity(&lat, &BTreeMap::new(), 30_000.0, &cfg())[&4]);
        let one: BTreeMap<u32, Vec<(f64, f64)>> = [(4, vec![(10_000.0, 800.0)])].into();
        assert!(!assess_validity(&lat, &one, 20_000.0, &cfg())[&4]);
    }

    #[test]
    fn csv_round_trip() {
        let d = ProfilingDataset {
            records: vec![
                ProfilingRecord { scaleout: 2, offered_rate: 10_000.0, avg_latency_ms: 812.5, valid: true },
                ProfilingRecord { scaleout: 2, offered_rate: 20_000.0, avg_latency_ms: 9000.0, valid: false },
            ],
            tmax_points: [(2, 10_000.0)].into(),
        };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        d.write_records_csv(&mut a).unwrap();
        d.write_tmax_csv(&mut b).unwrap();
        assert!(String::from_utf8_lossy(&a).starts_with("scaleout,offered_rate,avg_latency_ms,valid\n2,10000,812.5,true\n"));
        assert_eq!(ProfilingDataset::read_csv(a.as_slice(), b.as_slice()).unwrap(), d);
    }
}

//! Fixed-step simulation of a checkpointed stream-processing job.
//!
//! The job consumes an offered rate each tick and processes up to its
//! capacity `Tmax(scaleout)`. Unprocessed events queue as backlog. A
//! failure or reconfiguration takes the job down; on restart it rolls back
//! to the last checkpoint, so every event offered after that checkpoint is
//! replayed, and the job drains the replay at full capacity before it is
//! considered caught up.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid job profile: {0}")]
    InvalidProfile(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("reconfiguration to the current scaleout {0}")]
    SameScaleout(u32),
    #[error("reconfiguration rejected while job is {0}")]
    NotRunning(Phase),
    #[error("scaleout must be positive")]
    ZeroScaleout,
    #[error("io: {0}")]
    Io(String),
}

/// Synthetic job: capacity curve plus latency model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct JobProfile {
    tmax_curve: Vec<(u32, f64)>,
    pub base_latency_ms: f64,
    pub queue_coeff_ms: f64,
    pub noise_pct: f64,
    /// CPU utilization reported while processing at full capacity.
    pub cpu_at_tmax: f64,
}

impl JobProfile {
    pub fn new(mut tmax_curve: Vec<(u32, f64)>, base_latency_ms: f64, queue_coeff_ms: f64, noise_pct: f64) -> Result<Self, SimError> {
        tmax_curve.sort_by_key(|p| p.0);
        if tmax_curve.is_empty() {
            return Err(SimError::InvalidProfile("tmax_curve is empty".into()));
        }
        if tmax_curve[0].0 == 0 {
            return Err(SimError::InvalidProfile("tmax_curve scaleouts must be positive".into()));
        }
        for w in tmax_curve.windows(2) {
            if w[1].0 == w[0].0 || !(w[1].1 > w[0].1) {
                return Err(SimError::InvalidProfile("tmax_curve must be strictly increasing".into()));
            }
        }
        if tmax_curve.iter().any(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
            return Err(SimError::InvalidProfile("capacities must be positive".into()));
        }
        if !(base_latency_ms > 0.0) {
            return Err(SimError::InvalidProfile("base_latency_ms must be positive".into()));
        }
        if !(queue_coeff_ms >= 0.0) {
            return Err(SimError::InvalidProfile("queue_coeff_ms must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&noise_pct) {
            return Err(SimError::InvalidProfile("noise_pct must be in [0, 1)".into()));
        }
        Ok(JobProfile { tmax_curve, base_latency_ms, queue_coeff_ms, noise_pct, cpu_at_tmax: 1.0 })
    }

    /// Capacity that grows linearly with the number of workers.
    pub fn linear(per_worker: f64, max_scaleout: u32, base_latency_ms: f64, queue_coeff_ms: f64, noise_pct: f64) -> Result<Self, SimError> {
        Self::new(vec![(1, per_worker), (max_scaleout.max(2), per_worker * max_scaleout.max(2) as f64)], base_latency_ms, queue_coeff_ms, noise_pct)
    }

    pub fn with_cpu_at_tmax(mut self, cpu: f64) -> Result<Self, SimError> {
        if !(cpu > 0.0 && cpu <= 1.0) {
            return Err(SimError::InvalidProfile("cpu_at_tmax must be in (0, 1]".into()));
        }
        self.cpu_at_tmax = cpu;
        Ok(self)
    }

    pub fn tmax_curve(&self) -> &[(u32, f64)] {
        &self.tmax_curve
    }

    /// Maximum processing rate (msg/s) at `scaleout`, interpolated linearly
    /// between curve points and extrapolated from the end segments.
    pub fn tmax(&self, scaleout: f64) -> f64 {
        let c = &self.tmax_curve;
        if c.len() == 1 {
            return c[0].1 * scaleout / c[0].0 as f64;
        }
        let seg = |i: usize| {
            let (s0, t0) = (c[i].0 as f64, c[i].1);
            let (s1, t1) = (c[i + 1].0 as f64, c[i + 1].1);
            t0 + (t1 - t0) * (scaleout - s0) / (s1 - s0)
        };
        let i = c.partition_point(|p| (p.0 as f64) <= scaleout);
        let v = if i == 0 {
            seg(0)
        } else if i >= c.len() {
            seg(c.len() - 2)
        } else {
            seg(i - 1)
        };
        v.max(f64::MIN_POSITIVE)
    }

    /// Latency before noise: base + congestion + time to drain the backlog.
    pub fn latency_ms(&self, offered: f64, backlog: f64, tmax: f64) -> f64 {
        let rho = offered / tmax;
        self.base_latency_ms + self.queue_coeff_ms * rho / (1.0 - rho.min(0.99)) + 1000.0 * backlog / tmax
    }
}

/// `sim.*` configuration keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub tick_s: f64,
    pub checkpoint_interval_s: f64,
    pub detection_timeout_s: f64,
    pub restart_time_s: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { tick_s: 1.0, checkpoint_interval_s: 10.0, detection_timeout_s: 20.0, restart_time_s: 10.0, seed: 0 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.tick_s > 0.0) {
            return Err(SimError::InvalidConfig("tick_s must be positive".into()));
        }
        if !(self.checkpoint_interval_s >= self.tick_s) {
            return Err(SimError::InvalidConfig("checkpoint_interval_s must be at least one tick".into()));
        }
        if !(self.detection_timeout_s >= 0.0) || !(self.restart_time_s >= 0.0) {
            return Err(SimError::InvalidConfig("timeouts must be non-negative".into()));
        }
        Ok(())
    }

    fn ticks(&self, seconds: f64) -> u64 {
        (seconds / self.tick_s).round() as u64
    }

    /// Downtime after a detected failure.
    pub fn failure_downtime_s(&self) -> f64 {
        self.detection_timeout_s + self.restart_time_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Running,
    Down,
    CatchingUp,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Running => "running",
            Phase::Down => "down",
            Phase::CatchingUp => "catching_up",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub scaleout: u32,
    pub backlog: f64,
    pub last_checkpoint_t: f64,
    pub uptime: f64,
    pub phase: Phase,
    pub cumulative_container_seconds: f64,
    pub rejected_reconfigurations: u32,
}

/// Per-tick observation, stamped at the end of the tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimMetrics {
    pub time_s: f64,
    pub scaleout: u32,
    pub offered_rate: f64,
    pub processed_rate: f64,
    pub backlog: f64,
    pub latency_ms: f64,
    pub cpu_util: f64,
    pub phase: Phase,
    pub uptime_s: f64,
    pub cum_container_s: f64,
}

pub const METRICS_HEADER: [&str; 10] =
    ["time_s", "scaleout", "offered_rate", "processed_rate", "backlog", "latency_ms", "cpu_util", "phase", "uptime_s", "cum_container_s"];

pub fn write_metrics_csv<W: Write>(metrics: &[SimMetrics], writer: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| SimError::Io(e.to_string());
    w.write_record(METRICS_HEADER).map_err(io)?;
    for m in metrics {
        w.write_record([
            m.time_s.to_string(),
            m.scaleout.to_string(),
            m.offered_rate.to_string(),
            m.processed_rate.to_string(),
            m.backlog.to_string(),
            m.latency_ms.to_string(),
            m.cpu_util.to_string(),
            m.phase.to_string(),
            m.uptime_s.to_string(),
            m.cum_container_s.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| SimError::Io(e.to_string()))
}

pub fn read_metrics_csv<R: std::io::Read>(reader: R) -> Result<Vec<SimMetrics>, SimError> {
    let mut r = csv::Reader::from_reader(reader);
    let io = |e: csv::Error| SimError::Io(e.to_string());
    if r.headers().map_err(io)?.iter().ne(METRICS_HEADER) {
        return Err(SimError::Io(format!("expected header {}", METRICS_HEADER.join(","))));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| SimError::Io(format!("bad number {s:?}")));
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(io)?;
        let phase = match &row[7] {
            "running" => Phase::Running,
            "down" => Phase::Down,
            "catching_up" => Phase::CatchingUp,
            other => return Err(SimError::Io(format!("bad phase {other:?}"))),
        };
        out.push(SimMetrics {
            time_s: num(&row[0])?,
            scaleout: row[1].parse().map_err(|_| SimError::Io(format!("bad scaleout {:?}", &row[1])))?,
            offered_rate: num(&row[2])?,
            processed_rate: num(&row[3])?,
            backlog: num(&row[4])?,
            latency_ms: num(&row[5])?,
            cpu_util: num(&row[6])?,
            phase,
            uptime_s: num(&row[8])?,
            cum_container_s: num(&row[9])?,
        });
    }
    Ok(out)
}

/// Failure injection plan.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureSchedule {
    pub injection_times: Vec<f64>,
    pub detection_timeout_s: f64,
    pub restart_time_s: f64,
}

impl FailureSchedule {
    pub fn new(injection_times: Vec<f64>, detection_timeout_s: f64, restart_time_s: f64) -> Result<Self, SimError> {
        if injection_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::InvalidConfig("failure injection times must be strictly increasing".into()));
        }
        if !(detection_timeout_s > 0.0) || !(restart_time_s > 0.0) {
            return Err(SimError::InvalidConfig("failure timeouts must be positive".into()));
        }
        Ok(FailureSchedule { injection_times, detection_timeout_s, restart_time_s })
    }

    /// `count` failures `interval_s` apart starting at `first_s`.
    pub fn periodic(first_s: f64, interval_s: f64, count: usize, detection_timeout_s: f64, restart_time_s: f64) -> Result<Self, SimError> {
        Self::new((0..count).map(|k| first_s + k as f64 * interval_s).collect(), detection_timeout_s, restart_time_s)
    }
}

/// A single simulated job. Owns its state and RNG.
#[derive(Debug, Clone)]
pub struct Simulation {
    profile: JobProfile,
    config: SimConfig,
    rng: ChaCha8Rng,
    tick_index: u64,
    scaleout: u32,
    backlog: f64,
    phase: Phase,
    uptime_ticks: u64,
    down_ticks_left: u64,
    last_checkpoint_t: f64,
    checkpoint_backlog: f64,
    offered_since_checkpoint: f64,
    container_seconds: f64,
    rejected: u32,
}

impl Simulation {
    pub fn new(profile: JobProfile, config: SimConfig, scaleout: u32) -> Result<Self, SimError> {
        config.validate()?;
        if scaleout == 0 {
            return Err(SimError::ZeroScaleout);
        }
        Ok(Simulation {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            profile,
            config,
            tick_index: 0,
            scaleout,
            backlog: 0.0,
            phase: Phase::Running,
            uptime_ticks: 0,
            down_ticks_left: 0,
            last_checkpoint_t: 0.0,
            checkpoint_backlog: 0.0,
            offered_since_checkpoint: 0.0,
            container_seconds: 0.0,
            rejected: 0,
        })
    }

    pub fn profile(&self) -> &JobProfile {
        &self.profile
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.tick_index as f64 * self.config.tick_s
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn scaleout(&self) -> u32 {
        self.scaleout
    }

    pub fn uptime(&self) -> f64 {
        self.uptime_ticks as f64 * self.config.tick_s
    }

    pub fn state(&self) -> SimState {
        SimState {
            time: self.time(),
            scaleout: self.scaleout,
            backlog: self.backlog,
            last_checkpoint_t: self.last_checkpoint_t,
            uptime: self.uptime(),
            phase: self.phase,
            cumulative_container_seconds: self.container_seconds,
            rejected_reconfigurations: self.rejected,
        }
    }

    fn caught_up(&self, offered: f64) -> bool {
        self.backlog < (offered * self.config.tick_s).max(1.0)
    }

    /// Advances one tick at `offered_rate` msg/s.
    pub fn step(&mut self, offered_rate: f64) -> SimMetrics {
        let offered_rate = if offered_rate.is_finite() { offered_rate.max(0.0) } else { 0.0 };
        let tick = self.config.tick_s;
        let tmax = self.profile.tmax(self.scaleout as f64);
        let offered = offered_rate * tick;
        self.offered_since_checkpoint += offered;

        let processed = match self.phase {
            Phase::Down => {
                self.backlog += offered;
                self.down_ticks_left = self.down_ticks_left.saturating_sub(1);
                if self.down_ticks_left == 0 {
                    self.restart();
                }
                0.0
            }
            Phase::Running | Phase::CatchingUp => {
                let processed = (offered + self.backlog).min(tmax * tick);
                self.backlog = (self.backlog + offered - processed).max(0.0);
                self.uptime_ticks += 1;
                if self.phase == Phase::CatchingUp && self.caught_up(offered_rate) {
                    self.phase = Phase::Running;
                }
                let every = self.config.ticks(self.config.checkpoint_interval_s).max(1);
                if self.uptime_ticks.is_multiple_of(every) {
                    self.last_checkpoint_t = (self.tick_index + 1) as f64 * tick;
                    self.checkpoint_backlog = self.backlog;
                    self.offered_since_checkpoint = 0.0;
                }
                processed
            }
        };
        self.tick_index += 1;
        self.container_seconds += self.scaleout as f64 * tick;

        let mut latency = self.profile.latency_ms(offered_rate, self.backlog, tmax);
        if self.profile.noise_pct > 0.0 {
            let n = self.profile.noise_pct;
            latency *= 1.0 + self.rng.gen_range(-n..=n);
        }
        let cpu_util = match self.phase {
            Phase::Running => (self.profile.cpu_at_tmax * offered_rate / tmax).min(1.0),
            Phase::CatchingUp => self.profile.cpu_at_tmax,
            Phase::Down => 0.0,
        };
        SimMetrics {
            time_s: self.time(),
            scaleout: self.scaleout,
            offered_rate,
            processed_rate: processed / tick,
            backlog: self.backlog,
            latency_ms: latency,
            cpu_util,
            phase: self.phase,
            uptime_s: self.uptime(),
            cum_container_s: self.container_seconds,
        }
    }

    // Roll back to the last checkpoint: everything offered since then is replayed.
    fn restart(&mut self) {
        self.backlog = self.checkpoint_backlog + self.offered_since_checkpoint;
        self.phase = Phase::CatchingUp;
        self.uptime_ticks = 0;
    }

    fn go_down(&mut self, downtime_s: f64) {
        self.phase = Phase::Down;
        self.uptime_ticks = 0;
        self.down_ticks_left = self.config.ticks(downtime_s);
        if self.down_ticks_left == 0 {
            self.restart();
        }
    }

    /// Kills the job; it is detected and restarted after
    /// `detection_timeout_s + restart_time_s`. Returns false (no-op) if the
    /// job is already down.
    pub fn inject_failure(&mut self) -> bool {
        if self.phase == Phase::Down {
            return false;
        }
        self.go_down(self.config.failure_downtime_s());
        true
    }

    /// Restarts the job at `new_scaleout` from the latest checkpoint.
    pub fn reconfigure(&mut self, new_scaleout: u32) -> Result<(), SimError> {
        if new_scaleout == 0 {
            return Err(SimError::ZeroScaleout);
        }
        if new_scaleout == self.scaleout {
            return Err(SimError::SameScaleout(new_scaleout));
        }
        if self.phase != Phase::Running {
            self.rejected += 1;
            return Err(SimError::NotRunning(self.phase));
        }
        self.scaleout = new_scaleout;
        self.go_down(self.config.restart_time_s);
        Ok(())
    }
}

/// Seconds from `failure_t` until the job is caught up again: not down,
/// backlog under one tick of input, and latency back under 1.5x its mean
/// over the two minutes before the failure. `None` if that never happens.
pub fn measured_recovery_time(metrics: &[SimMetrics], failure_t: f64, tick_s: f64) -> Option<f64> {
    const PRE_WINDOW_S: f64 = 120.0;
    let eps = 1e-9 * failure_t.abs().max(1.0);
    let pre: Vec<f64> = metrics.iter().filter(|m| m.time_s > failure_t - PRE_WINDOW_S + eps && m.time_s <= failure_t + eps).map(|m| m.latency_ms).collect();
    let threshold = if pre.is_empty() { 1.5 * metrics.first()?.latency_ms } else { 1.5 * pre.iter().sum::<f64>() / pre.len() as f64 };
    metrics
        .iter()
        .filter(|m| m.time_s > failure_t + eps)
        .find(|m| m.phase != Phase::Down && m.backlog < (m.offered_rate * tick_s).max(1.0) && m.latency_ms < threshold)
        .map(|m| m.time_s - failure_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn profile(tmax: f64) -> JobProfile {
        JobProfile::new(vec![(1, tmax), (2, 2.0 * tmax)], 500.0, 100.0, 0.0).unwrap()
    }

    fn cfg(i: f64, detect: f64, restart: f64) -> SimConfig {
        SimConfig { tick_s: 1.0, checkpoint_interval_s: i, detection_timeout_s: detect, restart_time_s: restart, seed: 7 }
    }

    #[test]
    fn tmax_interpolates_and_extrapolates() {
        let p = JobProfile::new(vec![(2, 20_000.0), (8, 80_000.0), (16, 120_000.0)], 1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(p.tmax(5.0), 50_000.0);
        assert_relative_eq!(p.tmax(12.0), 100_000.0);
        assert_relative_eq!(p.tmax(1.0), 10_000.0);
        assert_relative_eq!(p.tmax(20.0), 140_000.0);
        assert!(JobProfile::new(vec![(2, 5.0), (4, 5.0)], 1.0, 0.0, 0.0).is_err());
        assert!(JobProfile::new(vec![(2, 5.0)], 0.0, 0.0, 0.0).is_err());
        assert!(JobProfile::new(vec![(2, 5.0)], 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn running_below_capacity() {
        let mut sim = Simulation::new(profile(100_000.0), cfg(10.0, 20.0, 10.0), 1).unwrap();
        let m = sim.step(50_000.0);
        assert_eq!(m.backlog, 0.0);
        // rho = 0.5: base + queue * 0.5 / 0.5
        assert_relative_eq!(m.latency_ms, 500.0 + 100.0);
        assert_relative_eq!(m.cpu_util, 0.5);
        assert_eq!(m.phase, Phase::Running);
    }

    #[test]
    fn down_phase_accumulates_offered() {
        let mut sim = Simulation::new(profile(100_000.0), cfg(10.0, 20.0, 10.0), 1).unwrap();
        sim.step(10_000.0);
        sim.inject_failure();
        let before = sim.state().backlog;
        let m = sim.step(10_000.0);
        assert_eq!(m.backlog - before, 10_000.0);
        assert_eq!(m.processed_rate, 0.0);
        assert_eq!(m.cpu_util, 0.0);
        assert_eq!(m.uptime_s, 0.0);
    }

    #[test]
    fn catch_up_drains_at_capacity() {
        let mut sim = Simulation::new(profile(100_000.0), cfg(1000.0, 1.0, 1.0), 1).unwrap();
        sim.phase = Phase::CatchingUp;
        sim.backlog = 300_000.0;
        let m = sim.step(50_000.0);
        assert_eq!(m.backlog, 250_000.0);
        assert_eq!(m.processed_rate, 100_000.0);
        assert_eq!(m.cpu_util, 1.0);
        assert_eq!(m.phase, Phase::CatchingUp);
    }

    #[test]
    fn replay_covers_checkpoint_interval_and_downtime() {
        let mut sim = Simulation::new(profile(100_000.0), cfg(10.0, 15.0, 5.0), 1).unwrap();
        for _ in 0..20 {
            sim.step(50_000.0);
        }
        assert_eq!(sim.state().last_checkpoint_t, 20.0);
        for _ in 0..10 {
            sim.step(50_000.0);
        }
        // failure just before the next checkpoint completes
        let mut sim_early = sim.clone();
        for _ in 0..9 {
            sim_early.step(50_000.0);
        }
        assert_eq!(sim_early.state().last_checkpoint_t, 30.0);
        assert!(sim_early.inject_failure());
        for _ in 0..19 {
            assert_eq!(sim_early.step(50_000.0).phase, Phase::Down);
        }
        let m = sim_early.step(50_000.0);
        assert_eq!(m.phase, Phase::CatchingUp);
        assert_eq!(m.backlog, 50_000.0 * (9.0 + 20.0));
    }

    #[test]
    fn zero_workload_failure() {
        let mut sim = Simulation::new(profile(100_000.0), cfg(10.0, 20.0, 10.0), 1).unwrap();
        for _ in 0..5 {
            sim.step(0.0);
        }
        sim.inject_failure();
        assert!(!sim.inject_failure());
        let mut last = None;
        for _ in 0..30 {
            last = Some(sim.step(0.0));
        }
        assert_eq!(last.unwrap().backlog, 0.0);
        let m = sim.step(0.0);
        assert_eq!(m.phase, Phase::Running);
    }

    #[test]
    fn reconfigure_rules() {
        let mut sim = Simulation::new(profile(10_000.0), cfg(10.0, 20.0, 10.0), 4).unwrap();
        assert_eq!(sim.reconfigure(4), Err(SimError::SameScaleout(4)));
        sim.reconfigure(8).unwrap();
        assert_eq!(sim.reconfigure(6), Err(SimError::NotRunning(Phase::Down)));
        assert_eq!(sim.state().rejected_reconfigurations, 1);
        for _ in 0..10 {
            sim.step(0.0);
        }
        let m = sim.step(0.0);
        assert_eq!(m.scaleout, 8);
        assert_eq!(m.phase, Phase::Running);
        assert_eq!(m.backlog, 0.0);
    }

    #[test]
    fn recovery_matches_closed_form() {
        // lambda = 50k, Tmax = 100k, I = 10, D = 20 -> 20 + 50k * 30 / 50k = 50 s
        let mut sim2 = Simulation::new(profile(100_000.0), cfg(10.0, 15.0, 5.0), 1).unwrap();
        let mut metrics = Vec::new();
        for _ in 0..209 {
            metrics.push(sim2.step(50_000.0));
        }
        let failure_t = sim2.time();
        let i = failure_t - sim2.state().last_checkpoint_t;
        assert_eq!(i, 9.0);
        sim2.inject_failure();
        for _ in 0..200 {
            metrics.push(sim2.step(50_000.0));
        }
        let r = measured_recovery_time(&metrics, failure_t, 1.0).unwrap();
        let expect = 20.0 + 50_000.0 * (i + 20.0) / 50_000.0;
        assert!((r - expect).abs() <= 2.0, "{r} vs {expect}");
    }

    #[test]
    fn zero_workload_recovery_is_downtime() {
        let mut sim = Simulation::new(profile(100_000.0), cfg(10.0, 20.0, 10.0), 1).unwrap();
        let mut metrics: Vec<_> = (0..150).map(|_| sim.step(0.0)).collect();
        sim.inject_failure();
        metrics.extend((0..100).map(|_| sim.step(0.0)));
        let r = measured_recovery_time(&metrics, 150.0, 1.0).unwrap();
        assert!((r - 30.0).abs() <= 1.0, "{r}");
    }

    #[test]
    fn overload_never_recovers() {
        let mut sim = Simulation::new(profile(100_000.0), cfg(10.0, 20.0, 10.0), 1).unwrap();
        let mut metrics: Vec<_> = (0..150).map(|_| sim.step(100_000.0)).collect();
        sim.inject_failure();
        metrics.extend((0..500).map(|_| sim.step(120_000.0)));
        assert_eq!(measured_recovery_time(&metrics, 150.0, 1.0), None);
    }

    #[test]
    fn reconfigure_recovery_uses_new_capacity() {
        let p = JobProfile::new(vec![(4, 40_000.0), (8, 80_000.0)], 500.0, 10.0, 0.0).unwrap();
        let mut sim = Simulation::new(p, cfg(10.0, 20.0, 10.0), 4).unwrap();
        let lambda = 30_000.0;
        let mut metrics: Vec<_> = (0..155).map(|_| sim.step(lambda)).collect();
        let t = sim.time();
        let i = t - sim.state().last_checkpoint_t;
        sim.reconfigure(8).unwrap();
        metrics.extend((0..300).map(|_| sim.step(lambda)));
        let r = measured_recovery_time(&metrics, t, 1.0).unwrap();
        let expect = 10.0 + lambda * (i + 10.0) / (80_000.0 - lambda);
        assert!((r - expect).abs() <= 1.0 + 1e-9, "{r} vs {expect}");
    }

    #[test]
    fn metrics_csv_header() {
        let mut sim = Simulation::new(profile(1000.0), cfg(10.0, 20.0, 10.0), 1).unwrap();
        let m = vec![sim.step(10.0)];
        let mut out = Vec::new();
        write_metrics_csv(&m, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("time_s,scaleout,offered_rate,processed_rate,backlog,latency_ms,cpu_util,phase,uptime_s,cum_container_s\n1,1,10,10,0,"));
        assert!(text.trim_end().ends_with(",running,1,1"));
        assert_eq!(read_metrics_csv(text.as_bytes()).unwrap(), m);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn run(seed: u64, scaleout: u32, rates: &[f64], fail_at: usize) -> Vec<SimMetrics> {
            let p = JobProfile::new(vec![(1, 10_000.0), (24, 240_000.0)], 800.0, 5.0, 0.05).unwrap();
            let mut sim = Simulation::new(p, SimConfig { seed, ..SimConfig::default() }, scaleout).unwrap();
            rates
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    if k == fail_at {
                        sim.inject_failure();
                    }
                    sim.step(*r)
                })
                .collect()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn conservation_and_cost(rates in prop::collection::vec(0.0f64..200_000.0, 50..300), s in 1u32..24, fail in 0usize..300) {
                let m = run(3, s, &rates, fail);
                let mut prev_backlog = 0.0;
                let mut prev_cost = 0.0;
                let mut prev_phase = Phase::Running;
                for x in &m {
                    prop_assert!(x.backlog >= 0.0);
                    prop_assert!((x.cum_container_s - prev_cost - s as f64).abs() < 1e-9);
                    let restarted = prev_phase == Phase::Down && x.phase != Phase::Down;
                    if !restarted {
                        let expect = x.offered_rate;
                        let got = x.processed_rate + x.backlog - prev_backlog;
                        prop_assert!((expect - got).abs() <= 1e-6 * expect.max(1.0), "{expect} vs {got}");
                    }
                    if x.phase == Phase::Down {
                        prop_assert_eq!(x.processed_rate, 0.0);
                    }
                    prev_backlog = x.backlog;
                    prev_cost = x.cum_container_s;
                    prev_phase = x.phase;
                }
            }

            #[test]
            fn deterministic(rates in prop::collection::vec(0.0f64..200_000.0, 10..100), seed in 0u64..1000) {
                prop_assert_eq!(run(seed, 8, &rates, 5), run(seed, 8, &rates, 5));
            }

            #[test]
            fn larger_scaleout_recovers_no_slower(level in 5_000.0f64..60_000.0, s in 2u32..12, extra in 1u32..12, fail in 150usize..170) {
                let rates = vec![level; 900];
                let small = run(1, s, &rates, fail);
                let large = run(1, s + extra, &rates, fail);
                let ft = fail as f64;
                let rs = measured_recovery_time(&small, ft, 1.0).unwrap_or(f64::INFINITY);
                let rl = measured_recovery_time(&large, ft, 1.0).unwrap_or(f64::INFINITY);
                prop_assert!(rl <= rs, "{rl} > {rs}");
            }
        }
    }
}

//! Tick-by-tick experiment driver.

use log::{debug, info};

use super::config::ExperimentConfig;
use super::report::{build_report, ExperimentReport};
use super::HarnessError;
use crate::autoscalers::{phoebe_decide, reactive_decide, static_decide, twres_decide, Action, ForecastContext, PolicyKind, ScalingDecision};
use crate::models::ModelSet;
use crate::simulator::{Phase, SimConfig, SimMetrics, Simulation};
use crate::timeseries::TimeSeries;
use crate::workloads::generate;

const WORKLOAD_SALT: u64 = 0x57AB_1E00_D5EE_D001;

/// One scheduled failure and when it actually hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureEvent {
    pub scheduled_s: f64,
    pub injected_s: f64,
    /// Seconds since the last completed checkpoint at injection.
    pub checkpoint_age_s: f64,
    pub scaleout: u32,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub label: String,
    pub seed: u64,
    pub metrics: Vec<SimMetrics>,
    pub decisions: Vec<ScalingDecision>,
    pub failures: Vec<FailureEvent>,
    pub report: ExperimentReport,
}

/// Run label: the policy name, with the scaleout for static runs.
pub fn policy_label(cfg: &ExperimentConfig) -> String {
    match cfg.policy.kind() {
        Ok(PolicyKind::Static) => format!("static-{}", cfg.policy.static_scaleout),
        _ => cfg.policy.name.clone(),
    }
}

/// Mean offered rate over consecutive `sample_s` buckets ending at `now`,
/// covering at most `window_s`; each point is stamped at its bucket end.
pub fn workload_history(metrics: &[SimMetrics], now: f64, tick: f64, sample_s: f64, window_s: f64) -> Option<TimeSeries> {
    let per = (sample_s / tick).round() as usize;
    let end = (now / tick).round() as usize;
    if per == 0 || end > metrics.len() {
        return None;
    }
    let buckets = ((window_s / sample_s).floor() as usize).min(end / per);
    if buckets == 0 {
        return None;
    }
    let mut times = Vec::with_capacity(buckets);
    let mut values = Vec::with_capacity(buckets);
    for j in (0..buckets).rev() {
        let hi = end - j * per;
        let slice = &metrics[hi - per..hi];
        times.push(hi as f64 * tick);
        values.push(slice.iter().map(|m| m.offered_rate).sum::<f64>() / per as f64);
    }
    TimeSeries::new(times, values).ok()
}

fn recent_mean(metrics: &[SimMetrics], ticks: usize, f: impl Fn(&SimMetrics) -> f64) -> Option<f64> {
    let n = ticks.min(metrics.len());
    if n == 0 {
        return None;
    }
    Some(metrics[metrics.len() - n..].iter().map(f).sum::<f64>() / n as f64)
}

/// Runs one experiment. `models` is required for the phoebe and twres policies.
pub fn run_experiment(cfg: &ExperimentConfig, models: Option<&ModelSet>) -> Result<ExperimentRun, HarnessError> {
    cfg.validate()?;
    let kind = cfg.policy.kind().map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut models = match (kind, models) {
        (PolicyKind::Phoebe | PolicyKind::Twres, None) => return Err(HarnessError::Config(format!("policy {} needs fitted models", cfg.policy.name))),
        (_, m) => m.cloned(),
    };
    let tick = cfg.sim.tick_s;
    let duration = cfg.harness.duration_s;
    let n = (duration / tick).round() as usize;
    let seed = cfg.sim.seed;
    let workload = generate(&cfg.workload, duration, tick, seed ^ WORKLOAD_SALT).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let rates = workload.values();
    let set = cfg.profiler.scaleout_set().map_err(|e| HarnessError::Config(e.to_string()))?;
    let method = cfg.forecast.method().map_err(|e| HarnessError::Config(e.to_string()))?;
    let ctx = ForecastContext {
        set: &set,
        method,
        horizon_s: cfg.forecast.horizon_s,
        eval_interval_s: cfg.policy.eval_interval_s,
        checkpoint_interval_s: cfg.sim.checkpoint_interval_s,
        downtime_s: cfg.downtime_s(),
        rc_target_s: cfg.policy.rc_target_s,
    };
    let initial = match kind {
        PolicyKind::Static => cfg.policy.static_scaleout,
        _ => cfg.policy.initial_scaleout.unwrap_or(set.max()),
    };
    let profile = cfg.job.profile()?;
    let sim_cfg = SimConfig { seed, ..cfg.sim.clone() };
    let mut sim = Simulation::new(profile, sim_cfg, initial).map_err(|e| HarnessError::Config(e.to_string()))?;

    let schedule = cfg.failure_schedule()?;
    let e = cfg.policy.eval_interval_s;
    let interval = match kind {
        PolicyKind::Reactive if cfg.policy.reactive_fast_eval => e / 10.0,
        _ => e,
    };
    let sample_ticks = (cfg.harness.history_sample_s / tick).round() as usize;
    let eps = 1e-9 * duration.max(1.0);
    let updates = cfg.models.runtime_updates;

    let mut metrics: Vec<SimMetrics> = Vec::with_capacity(n);
    let mut decisions = Vec::new();
    let mut failures = Vec::new();
    let mut next_failure = 0usize;
    let mut next_eval = interval;
    let mut cpu_sum = 0.0;
    let mut cpu_ticks = 0usize;
    let mut prev_phase = sim.phase();

    for (k, &rate) in rates.iter().take(n).enumerate() {
        let now = k as f64 * tick;

        if let Some(&at) = schedule.injection_times.get(next_failure) {
            if now >= at - eps && sim.phase() != Phase::Down {
                let st = sim.state();
                sim.inject_failure();
                info!("failure at {now} s (scheduled {at}), scaleout {}", st.scaleout);
                failures.push(FailureEvent { scheduled_s: at, injected_s: now, checkpoint_age_s: now - st.last_checkpoint_t, scaleout: st.scaleout });
                next_failure += 1;
            }
        }

        if now >= next_eval - eps {
            next_eval += interval;
            let current = sim.scaleout();
            let mut d = match kind {
                PolicyKind::Static => static_decide(now, cfg.policy.static_scaleout),
                PolicyKind::Reactive => {
                    let cpu = if cpu_ticks > 0 { cpu_sum / cpu_ticks as f64 } else { 0.0 };
                    reactive_decide(now, current, cpu, cfg.policy.target_cpu_util, cfg.policy.cpu_tolerance, &set)
                }
                PolicyKind::Phoebe => {
                    let m = models.as_mut().expect("checked above");
                    if updates && sim.uptime() >= e {
                        if let (Some(r), Some(l)) =
                            (recent_mean(&metrics, sample_ticks, |x| x.offered_rate), recent_mean(&metrics, sample_ticks, |x| x.latency_ms))
                        {
                            m.observe(current, r, l);
                        }
                    }
                    match workload_history(&metrics, now, tick, cfg.harness.history_sample_s, cfg.harness.history_window_s) {
                        Some(h) => phoebe_decide(now, sim.uptime(), &h, current, &*m, &ctx),
                        None => phoebe_decide(now, sim.uptime(), &TimeSeries::empty(), current, &*m, &ctx),
                    }
                }
                PolicyKind::Twres => {
                    let m = models.as_ref().expect("checked above");
                    let lat = recent_mean(&metrics, sample_ticks, |x| x.latency_ms).unwrap_or(0.0);
                    let h = workload_history(&metrics, now, tick, cfg.harness.history_sample_s, cfg.harness.history_window_s).unwrap_or_else(TimeSeries::empty);
                    twres_decide(now, &h, current, m, lat, cfg.policy.latency_constraint_ms, &ctx)
                }
            };
            cpu_sum = 0.0;
            cpu_ticks = 0;
            if d.action == Action::Rescale {
                if let Err(err) = sim.reconfigure(d.target_scaleout) {
                    debug!("rescale to {} at {now} rejected: {err}", d.target_scaleout);
                    d.action = Action::Hold;
                    d.target_scaleout = current;
                    d.error = Some(err.to_string());
                }
            }
            decisions.push(d);
        }

        let m = sim.step(rate);
        cpu_sum += m.cpu_util;
        cpu_ticks += 1;
        if updates && prev_phase == Phase::CatchingUp && m.phase == Phase::CatchingUp && m.backlog > 0.0 {
            if let Some(ms) = models.as_mut() {
                if ms.observe_drain(m.scaleout, m.processed_rate) {
                    debug!("capacity of {} raised to {}", m.scaleout, m.processed_rate);
                }
            }
        }
        prev_phase = m.phase;
        metrics.push(m);
    }

    let label = policy_label(cfg);
    let report = build_report(cfg, &label, &metrics, &decisions, &failures)?;
    Ok(ExperimentRun { label, seed, metrics, decisions, failures, report })
}

//! Scaling policies: the proactive recovery-aware policy and three baselines.
//!
//! Every policy is a pure function from its inputs to a [`ScalingDecision`];
//! the harness owns the clock and applies the decisions.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecasting::{combined_series, forecast, ForecastMethod};
use crate::models::{LatencyPrediction, ModelError, ModelSet, RecoveryEstimate};
use crate::profiler::ScaleoutSet;
use crate::timeseries::TimeSeries;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Hold,
    Rescale,
    SkipRecoveryGate,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Hold => "hold",
            Action::Rescale => "rescale",
            Action::SkipRecoveryGate => "skip_recovery_gate",
        })
    }
}

/// Model outputs behind a decision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evidence {
    /// Estimated recovery time per evaluated scaleout, ascending.
    pub recovery: Vec<(u32, f64)>,
    pub projected_tavg: Option<f64>,
    pub r_chosen: Option<f64>,
    pub l_avg_chosen: Option<f64>,
    pub l_c_chosen: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingDecision {
    pub issued_at: f64,
    pub policy: &'static str,
    pub current_scaleout: u32,
    pub target_scaleout: u32,
    pub action: Action,
    pub evidence: Evidence,
    pub error: Option<String>,
}

impl ScalingDecision {
    fn new(policy: &'static str, now: f64, current: u32, target: u32, evidence: Evidence) -> Self {
        let action = if target != current { Action::Rescale } else { Action::Hold };
        ScalingDecision { issued_at: now, policy, current_scaleout: current, target_scaleout: target, action, evidence, error: None }
    }

    fn failed(policy: &'static str, now: f64, current: u32, error: String) -> Self {
        ScalingDecision {
            issued_at: now,
            policy,
            current_scaleout: current,
            target_scaleout: current,
            action: Action::Hold,
            evidence: Evidence::default(),
            error: Some(error),
        }
    }
}

/// `policy.*` configuration keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: String,
    pub eval_interval_s: f64,
    pub rc_target_s: f64,
    /// Downtime assumed by the recovery estimate; defaults to detection
    /// timeout plus restart time.
    pub rc_downtime_s: Option<f64>,
    pub latency_constraint_ms: f64,
    pub target_cpu_util: f64,
    pub cpu_tolerance: f64,
    pub static_scaleout: u32,
    /// Scaleout at experiment start; defaults to the largest in the set.
    pub initial_scaleout: Option<u32>,
    /// Evaluate the reactive policy ten times per interval.
    pub reactive_fast_eval: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            name: "phoebe".into(),
            eval_interval_s: 600.0,
            rc_target_s: 180.0,
            rc_downtime_s: None,
            latency_constraint_ms: 2000.0,
            target_cpu_util: 0.35,
            cpu_tolerance: 0.1,
            static_scaleout: 24,
            initial_scaleout: None,
            reactive_fast_eval: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Phoebe,
    Reactive,
    Twres,
    Static,
}

impl PolicyConfig {
    pub fn kind(&self) -> Result<PolicyKind, PolicyError> {
        Ok(match self.name.as_str() {
            "phoebe" => PolicyKind::Phoebe,
            "reactive" => PolicyKind::Reactive,
            "twres" => PolicyKind::Twres,
            "static" => PolicyKind::Static,
            other => return Err(PolicyError::InvalidConfig(format!("unknown policy {other:?}"))),
        })
    }

    pub fn validate(&self, downtime_s: f64) -> Result<(), PolicyError> {
        self.kind()?;
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.into()));
        if !(self.eval_interval_s > 0.0) {
            return bad("eval_interval_s must be positive");
        }
        if !(self.rc_target_s > self.rc_downtime_s.unwrap_or(downtime_s)) {
            return bad("rc_target_s must exceed the downtime");
        }
        if !(self.target_cpu_util > 0.0 && self.target_cpu_util <= 1.0) {
            return bad("target_cpu_util must be in (0, 1]");
        }
        if !(self.cpu_tolerance >= 0.0) || !(self.latency_constraint_ms > 0.0) {
            return bad("cpu_tolerance >= 0 and latency_constraint_ms > 0 required");
        }
        if self.static_scaleout == 0 {
            return bad("static_scaleout must be positive");
        }
        Ok(())
    }
}

/// Inputs shared by the forecast-driven policies.
#[derive(Debug, Clone)]
pub struct ForecastContext<'a> {
    pub set: &'a ScaleoutSet,
    pub method: ForecastMethod,
    pub horizon_s: f64,
    pub eval_interval_s: f64,
    pub checkpoint_interval_s: f64,
    pub downtime_s: f64,
    pub rc_target_s: f64,
}

/// What the proactive policy needs from the fitted models.
pub trait QosModels {
    fn recovery(&self, scaleout: u32, f: &TimeSeries, t0: f64, i: f64, d: f64, horizon: f64) -> Result<RecoveryEstimate, ModelError>;
    fn latency(&self, scaleout: u32, rate: f64) -> LatencyPrediction;
    fn capacity(&self, scaleout: u32) -> f64;
}

impl QosModels for ModelSet {
    fn recovery(&self, scaleout: u32, f: &TimeSeries, t0: f64, i: f64, d: f64, horizon: f64) -> Result<RecoveryEstimate, ModelError> {
        ModelSet::recovery(self, scaleout, f, t0, i, d, horizon)
    }

    fn latency(&self, scaleout: u32, rate: f64) -> LatencyPrediction {
        self.latency.predict(scaleout, rate)
    }

    fn capacity(&self, scaleout: u32) -> f64 {
        self.capacity.tmax(scaleout as f64)
    }
}

fn workload_function(history: &TimeSeries, now: f64, ctx: &ForecastContext) -> Result<TimeSeries, String> {
    let fc = forecast(history, now, ctx.horizon_s, ctx.method).map_err(|e| e.to_string())?;
    combined_series(history, &fc).map_err(|e| e.to_string())
}

/// Picks the smallest scaleout whose estimated recovery meets the target
/// and whose predicted latency is in the normal cluster.
pub fn phoebe_decide<M: QosModels>(now: f64, uptime: f64, history: &TimeSeries, current: u32, models: &M, ctx: &ForecastContext) -> ScalingDecision {
    const NAME: &str = "phoebe";
    if uptime < ctx.eval_interval_s {
        let mut d = ScalingDecision::new(NAME, now, current, current, Evidence::default());
        d.action = Action::SkipRecoveryGate;
        return d;
    }
    let f = match workload_function(history, now, ctx) {
        Ok(f) => f,
        Err(e) => return ScalingDecision::failed(NAME, now, current, e),
    };
    let mut evidence = Evidence::default();
    let mut chosen = ctx.set.max();
    for &s in ctx.set.as_slice() {
        let est = match models.recovery(s, &f, now, ctx.checkpoint_interval_s, ctx.downtime_s, ctx.horizon_s) {
            Ok(e) => e,
            Err(e) => return ScalingDecision::failed(NAME, now, current, e.to_string()),
        };
        evidence.recovery.push((s, est.r));
        evidence.projected_tavg = Some(est.projected_tavg);
        if est.r <= ctx.rc_target_s {
            let p = models.latency(s, est.projected_tavg);
            if p.cluster == 0 {
                chosen = s;
                evidence.r_chosen = Some(est.r);
                evidence.l_avg_chosen = Some(p.avg_latency_ms);
                evidence.l_c_chosen = Some(p.cluster);
                break;
            }
        }
    }
    if evidence.r_chosen.is_none() {
        evidence.r_chosen = evidence.recovery.last().map(|x| x.1);
        if let Some(rate) = evidence.projected_tavg {
            let p = models.latency(chosen, rate);
            evidence.l_avg_chosen = Some(p.avg_latency_ms);
            evidence.l_c_chosen = Some(p.cluster);
        }
    }
    ScalingDecision::new(NAME, now, current, chosen, evidence)
}

/// Utilization-proportional scaling with a tolerance band.
pub fn reactive_decide(now: f64, current: u32, cpu_util: f64, target_util: f64, tolerance: f64, set: &ScaleoutSet) -> ScalingDecision {
    const NAME: &str = "reactive";
    if !(target_util > 0.0 && target_util <= 1.0) {
        return ScalingDecision::failed(NAME, now, current, "target_util must be in (0, 1]".into());
    }
    let ratio = cpu_util / target_util;
    let desired = set.clamp((current as f64 * ratio).ceil().max(0.0) as u32);
    let target = if (ratio - 1.0).abs() > tolerance { desired } else { current };
    ScalingDecision::new(NAME, now, current, target, Evidence::default())
}

/// Smallest scaleout able to handle the forecast peak; never downscales
/// while the latency constraint is violated.
pub fn twres_decide<M: QosModels>(
    now: f64,
    history: &TimeSeries,
    current: u32,
    models: &M,
    current_latency_ms: f64,
    latency_constraint_ms: f64,
    ctx: &ForecastContext,
) -> ScalingDecision {
    const NAME: &str = "twres";
    let fc = match forecast(history, now, ctx.horizon_s, ctx.method) {
        Ok(fc) => fc,
        Err(e) => return ScalingDecision::failed(NAME, now, current, e.to_string()),
    };
    let demand = fc.steps.max_value().unwrap_or_else(|| history.last_value().unwrap_or(0.0));
    let candidate = ctx.set.as_slice().iter().copied().find(|s| models.capacity(*s) >= demand).unwrap_or(ctx.set.max());
    let target = if candidate < current && current_latency_ms > latency_constraint_ms { (current + 1).min(ctx.set.max()) } else { candidate };
    let evidence = Evidence { projected_tavg: Some(demand), ..Evidence::default() };
    ScalingDecision::new(NAME, now, current, target, evidence)
}

pub fn static_decide(now: f64, fixed: u32) -> ScalingDecision {
    ScalingDecision::new("static", now, fixed, fixed, Evidence::default())
}

pub const DECISION_HEADER: [&str; 9] =
    ["time_s", "policy", "current_scaleout", "target_scaleout", "action", "projected_tavg", "R_chosen", "L_avg_chosen", "L_C_chosen"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_decisions_csv<W: Write>(decisions: &[ScalingDecision], writer: W) -> Result<(), PolicyError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| PolicyError::Io(e.to_string());
    w.write_record(DECISION_HEADER).map_err(io)?;
    for d in decisions {
        w.write_record([
            d.issued_at.to_string(),
            d.policy.to_string(),
            d.current_scaleout.to_string(),
            d.target_scaleout.to_string(),
            d.action.to_string(),
            opt(d.evidence.projected_tavg),
            opt(d.evidence.r_chosen),
            opt(d.evidence.l_avg_chosen),
            opt(d.evidence.l_c_chosen),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| PolicyError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;
    use std::collections::BTreeMap;

    struct Stub {
        r: BTreeMap<u32, f64>,
        invalid: Vec<u32>,
        per_worker: f64,
        calls: Cell<u32>,
    }

    impl QosModels for Stub {
        fn recovery(&self, s: u32, _: &TimeSeries, _: f64, _: f64, d: f64, _: f64) -> Result<RecoveryEstimate, ModelError> {
            self.calls.set(self.calls.get() + 1);
            let r = self.r[&s];
            Ok(RecoveryEstimate { r, d, c: r - d, n_steps: 1, projected_tavg: 50_000.0, feasible: r.is_finite() })
        }
        fn latency(&self, s: u32, _: f64) -> LatencyPrediction {
            self.calls.set(self.calls.get() + 1);
            LatencyPrediction { avg_latency_ms: 900.0, cluster: u8::from(self.invalid.contains(&s)) }
        }
        fn capacity(&self, s: u32) -> f64 {
            self.per_worker * s as f64
        }
    }

    fn set() -> ScaleoutSet {
        ScaleoutSet::new(vec![2, 5, 8, 11, 15, 18, 21, 24]).unwrap()
    }

    fn stub(invalid: Vec<u32>) -> Stub {
        let r = [(2, f64::INFINITY), (5, 400.0), (8, 170.0), (11, 150.0), (15, 120.0), (18, 100.0), (21, 90.0), (24, 80.0)].into();
        Stub { r, invalid, per_worker: 10_000.0, calls: Cell::new(0) }
    }

    fn history(level: f64) -> TimeSeries {
        TimeSeries::regular(0.0, 60.0, vec![level; 30]).unwrap()
    }

    fn ctx(set: &ScaleoutSet, rc: f64) -> ForecastContext<'_> {
        ForecastContext {
            set,
            method: ForecastMethod::NaiveLast,
            horizon_s: 600.0,
            eval_interval_s: 600.0,
            checkpoint_interval_s: 10.0,
            downtime_s: 30.0,
            rc_target_s: rc,
        }
    }

    #[test]
    fn phoebe_stub_table() {
        let s = set();
        let h = history(50_000.0);
        let d = phoebe_decide(1740.0, 900.0, &h, 24, &stub(vec![]), &ctx(&s, 180.0));
        assert_eq!((d.target_scaleout, d.action), (8, Action::Rescale));
        let d = phoebe_decide(1740.0, 900.0, &h, 24, &stub(vec![8]), &ctx(&s, 180.0));
        assert_eq!(d.target_scaleout, 11);
        let st = stub(vec![]);
        let d = phoebe_decide(1740.0, 300.0, &h, 24, &st, &ctx(&s, 180.0));
        assert_eq!((d.target_scaleout, d.action), (24, Action::SkipRecoveryGate));
        assert_eq!(st.calls.get(), 0);
    }

    #[test]
    fn phoebe_falls_back_to_max_and_holds_on_error() {
        let s = set();
        let d = phoebe_decide(1740.0, 900.0, &history(1.0), 8, &stub(vec![]), &ctx(&s, 50.0));
        assert_eq!(d.target_scaleout, 24);
        let short = TimeSeries::regular(0.0, 60.0, vec![1.0; 3]).unwrap();
        let d = phoebe_decide(120.0, 900.0, &short, 8, &stub(vec![]), &ctx(&s, 180.0));
        assert_eq!((d.target_scaleout, d.action), (8, Action::Hold));
        assert!(d.error.is_some());
    }

    #[test]
    fn reactive_examples() {
        let s = set();
        assert_eq!(reactive_decide(0.0, 4, 0.70, 0.35, 0.1, &s).target_scaleout, 8);
        assert_eq!(reactive_decide(0.0, 4, 0.35, 0.35, 0.1, &s).action, Action::Hold);
        let d = reactive_decide(0.0, 24, 0.9, 0.35, 0.1, &s);
        assert_eq!((d.target_scaleout, d.action), (24, Action::Hold));
        assert_eq!(reactive_decide(0.0, 10, 0.37, 0.35, 0.1, &s).action, Action::Hold);
        assert_eq!(reactive_decide(0.0, 10, 0.1, 0.35, 0.1, &s).target_scaleout, 3);
    }

    #[test]
    fn twres_examples() {
        let s = set();
        let c = ctx(&s, 180.0);
        let st = stub(vec![]);
        assert_eq!(twres_decide(1740.0, &history(150_000.0), 24, &st, 900.0, 2000.0, &c).target_scaleout, 15);
        assert_eq!(twres_decide(1740.0, &history(45_000.0), 8, &st, 2500.0, 2000.0, &c).target_scaleout, 9);
        assert_eq!(twres_decide(1740.0, &history(45_000.0), 8, &st, 1500.0, 2000.0, &c).target_scaleout, 5);
        assert_eq!(twres_decide(1740.0, &history(900_000.0), 8, &st, 900.0, 2000.0, &c).target_scaleout, 24);
    }

    #[test]
    fn static_holds() {
        for s in [24, 12, 4] {
            let d = static_decide(0.0, s);
            assert_eq!((d.target_scaleout, d.action), (s, Action::Hold));
        }
    }

    #[test]
    fn raising_target_never_raises_choice() {
        let s = set();
        let h = history(50_000.0);
        let mut prev = u32::MAX;
        for rc in [60.0, 85.0, 95.0, 110.0, 130.0, 160.0, 200.0, 500.0] {
            let d = phoebe_decide(1740.0, 900.0, &h, 24, &stub(vec![]), &ctx(&s, rc));
            assert!(d.target_scaleout <= prev);
            prev = d.target_scaleout;
        }
    }

    #[test]
    fn decision_csv() {
        let s = set();
        let d = phoebe_decide(1740.0, 900.0, &history(50_000.0), 24, &stub(vec![]), &ctx(&s, 180.0));
        let mut out = Vec::new();
        write_decisions_csv(&[d, static_decide(0.0, 4)], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time_s,policy,current_scaleout,target_scaleout,action,projected_tavg,R_chosen,L_avg_chosen,L_C_chosen");
        assert_eq!(lines[1], "1740,phoebe,24,8,rescale,50000,170,900,0");
        assert_eq!(lines[2], "0,static,4,4,hold,,,,");
    }
}

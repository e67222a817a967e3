use std::collections::BTreeMap;

use approx::assert_relative_eq;
use qosscale::models::{estimate_recovery, persist, ModelSet, RecoveryParams};
use qosscale::profiler::{run_profiling, ProfilerConfig, ProfilingDataset, SimEnvironment};
use qosscale::simulator::{measured_recovery_time, JobProfile, SimConfig, Simulation};
use qosscale::timeseries::TimeSeries;

fn concave_profile() -> JobProfile {
    JobProfile::new(vec![(2, 23_000.0), (8, 71_000.0), (16, 118_000.0), (24, 151_000.0)], 700.0, 4.0, 0.05).unwrap()
}

fn profile_concave() -> (ProfilerConfig, ProfilingDataset) {
    let cfg = ProfilerConfig { rate_start: 5_000.0, rate_step: 5_000.0, ..ProfilerConfig::default() };
    let env = SimEnvironment { profile: concave_profile(), config: SimConfig { seed: 3, ..SimConfig::default() } };
    let set = cfg.scaleout_set().unwrap();
    let data = run_profiling(&set, &env, &cfg).unwrap();
    (cfg, data)
}

#[test]
fn profiling_is_one_step_accurate_on_a_concave_curve() {
    let (cfg, data) = profile_concave();
    let truth = concave_profile();
    assert_eq!(data.tmax_points.len(), 8);
    for (s, p) in &data.tmax_points {
        let t = truth.tmax(*s as f64);
        assert!(t - cfg.rate_step < *p && *p <= t, "s={s}: {p} vs {t}");
    }
}

#[test]
fn invalid_records_sit_above_the_discovered_capacity() {
    let (_, data) = profile_concave();
    for r in &data.records {
        let tmax = data.tmax_points[&r.scaleout];
        if r.valid {
            assert!(r.offered_rate <= tmax);
        } else {
            assert!(r.offered_rate > tmax);
        }
    }
    // the smallest deployment saturates first
    let last_valid = |s: u32| data.records.iter().filter(|r| r.scaleout == s && r.valid).map(|r| r.offered_rate).fold(0.0, f64::max);
    assert!(last_valid(2) < last_valid(5));
}

#[test]
fn dataset_and_models_round_trip_through_files() {
    let (_, data) = profile_concave();
    let dir = tempfile::tempdir().unwrap();
    data.save(dir.path()).unwrap();
    assert_eq!(ProfilingDataset::load(dir.path()).unwrap(), data);

    let models = ModelSet::fit(data, RecoveryParams::default()).unwrap();
    let path = dir.path().join("models.txt");
    persist::save(&path, &models.latency, &models.capacity).unwrap();
    let (latency, capacity) = persist::load(&path).unwrap();
    assert_eq!(latency, models.latency);
    assert_eq!(capacity, models.capacity);
    for s in [2, 7, 24] {
        for r in [10_000.0, 80_000.0, 200_000.0] {
            assert_eq!(latency.predict(s, r), models.latency.predict(s, r));
        }
    }
}

#[test]
fn fitted_capacity_reproduces_profiled_points() {
    let (cfg, data) = profile_concave();
    let models = ModelSet::fit(data.clone(), RecoveryParams::default()).unwrap();
    let truth = concave_profile();
    for (s, p) in &data.tmax_points {
        assert_relative_eq!(models.capacity.tmax(*s as f64), *p);
        assert!(truth.tmax(*s as f64) - models.capacity.tmax(*s as f64) < cfg.rate_step);
    }
    assert!(models.capacity.tmax(4.0) >= models.capacity.tmax(2.0));
}

#[test]
fn latency_model_flags_overload_on_profiled_job() {
    let (_, data) = profile_concave();
    let models = ModelSet::fit(data, RecoveryParams::default()).unwrap();
    let truth = concave_profile();
    for s in [2u32, 8, 16, 24] {
        let cap = truth.tmax(s as f64);
        assert_eq!(models.latency.predict(s, 0.2 * cap).cluster, 0, "s={s} light load");
        assert_eq!(models.latency.predict(s, 1.3 * cap).cluster, 1, "s={s} overload");
    }
}

#[test]
fn estimator_tracks_simulated_recovery_across_scaleouts() {
    let profile = concave_profile();
    let config = SimConfig { seed: 5, ..SimConfig::default() };
    let rates: Vec<f64> = (0..=2400).map(|t| 40_000.0 + 15_000.0 * (t as f64 / 300.0).sin()).collect();
    let f = TimeSeries::regular(0.0, 1.0, rates.clone()).unwrap();
    let mut previous = f64::INFINITY;
    for s in [8u32, 16, 24] {
        let mut sim = Simulation::new(profile.clone(), config.clone(), s).unwrap();
        let t0 = 1203.0;
        let mut age = 0.0;
        let metrics: Vec<_> = rates[..2400]
            .iter()
            .enumerate()
            .map(|(t, r)| {
                if t as f64 == t0 {
                    age = t0 - sim.state().last_checkpoint_t;
                    sim.inject_failure();
                }
                sim.step(*r)
            })
            .collect();
        let measured = measured_recovery_time(&metrics, t0, 1.0).unwrap();
        let est = estimate_recovery(profile.tmax(s as f64), &f, t0, age, config.failure_downtime_s(), 600.0, &RecoveryParams::default()).unwrap();
        assert!((est.r - measured).abs() <= (0.1 * measured).max(2.0), "s={s}: {} vs {measured}", est.r);
        assert!(measured <= previous);
        previous = measured;
    }
}

#[test]
fn runtime_drain_observations_raise_capacity() {
    let mut points = BTreeMap::new();
    points.insert(2, 20_000.0);
    points.insert(8, 60_000.0);
    let (_, data) = profile_concave();
    let mut models = ModelSet::fit(ProfilingDataset { tmax_points: points, ..data }, RecoveryParams::default()).unwrap();
    assert!(models.observe_drain(8, 70_000.0));
    assert_relative_eq!(models.capacity.tmax(8.0), 70_000.0);
    assert!(!models.observe_drain(8, 65_000.0));
}

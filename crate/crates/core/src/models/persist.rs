//! Plain-text model file.
//!
//! ```text
//! # qosscale models v1
//! [latency]
//! target = log
//! coefficients = c0,c1,c2,c3,c4,c5,c6
//! scales = s,r,u
//! s_bounds = lo,hi
//! r_bounds = lo,hi
//! p1 = 812.4
//! p99 = 41230.9
//! cluster_boundary = -3.2     (or "none")
//!
//! [capacity]
//! points = 2:20000,5:50000,...
//! ```
//!
//! Floats are written in shortest round-trip form, so a reload is exact.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::latency::N_FEATURES;
use super::{CapacityModel, LatencyModel, ModelError, PreprocessParams, Target};

const HEADER: &str = "# qosscale models v1";

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn to_text(latency: &LatencyModel, capacity: &CapacityModel) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push_str("\n[latency]\n");
    out.push_str(&format!("target = {}\n", latency.target.name()));
    out.push_str(&format!("coefficients = {}\n", join(&latency.coefficients)));
    out.push_str(&format!("scales = {}\n", join(&latency.scales)));
    out.push_str(&format!("s_bounds = {}\n", join(&[latency.s_bounds.0, latency.s_bounds.1])));
    out.push_str(&format!("r_bounds = {}\n", join(&[latency.r_bounds.0, latency.r_bounds.1])));
    out.push_str(&format!("p1 = {}\np99 = {}\n", latency.preprocess.p1, latency.preprocess.p99));
    match latency.cluster_boundary {
        Some(b) => out.push_str(&format!("cluster_boundary = {b}\n")),
        None => out.push_str("cluster_boundary = none\n"),
    }
    out.push_str("\n[capacity]\npoints = ");
    let pts: Vec<String> = capacity.points().iter().map(|(s, t)| format!("{}:{}", *s as u32, t)).collect();
    out.push_str(&pts.join(","));
    out.push('\n');
    out
}

fn sections(text: &str) -> Result<HashMap<String, HashMap<String, String>>, ModelError> {
    let mut out: HashMap<String, HashMap<String, String>> = HashMap::new();
    let mut current: Option<String> = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.to_string());
            out.entry(name.to_string()).or_default();
            continue;
        }
        let (Some(sec), Some((k, v))) = (&current, line.split_once('=')) else {
            return Err(ModelError::Parse(format!("line {}: expected key = value inside a section", n + 1)));
        };
        out.get_mut(sec).unwrap().insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn floats(s: &str) -> Result<Vec<f64>, ModelError> {
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| ModelError::Parse(format!("bad number {x:?}")))).collect()
}

fn fixed<const N: usize>(s: &str, key: &str) -> Result<[f64; N], ModelError> {
    floats(s)?.try_into().map_err(|_| ModelError::Parse(format!("{key} needs {N} values")))
}

pub fn from_text(text: &str) -> Result<(LatencyModel, CapacityModel), ModelError> {
    let secs = sections(text)?;
    let get = |sec: &str, key: &str| -> Result<&str, ModelError> {
        secs.get(sec).and_then(|m| m.get(key)).map(String::as_str).ok_or_else(|| ModelError::Parse(format!("missing {sec}.{key}")))
    };
    let target = match get("latency", "target")? {
        "linear" => Target::Linear,
        "log" => Target::Log,
        other => return Err(ModelError::Parse(format!("unknown target {other:?}"))),
    };
    let coefficients: [f64; N_FEATURES] = fixed(get("latency", "coefficients")?, "coefficients")?;
    let scales: [f64; 3] = fixed(get("latency", "scales")?, "scales")?;
    let [slo, shi] = fixed(get("latency", "s_bounds")?, "s_bounds")?;
    let [rlo, rhi] = fixed(get("latency", "r_bounds")?, "r_bounds")?;
    let [p1] = fixed(get("latency", "p1")?, "p1")?;
    let [p99] = fixed(get("latency", "p99")?, "p99")?;
    let cluster_boundary = match get("latency", "cluster_boundary")? {
        "none" => None,
        b => Some(fixed::<1>(b, "cluster_boundary")?[0]),
    };
    let latency =
        LatencyModel { coefficients, target, scales, s_bounds: (slo, shi), r_bounds: (rlo, rhi), preprocess: PreprocessParams { p1, p99 }, cluster_boundary };
    let mut points = BTreeMap::new();
    for item in get("capacity", "points")?.split(',') {
        let (s, t) = item.split_once(':').ok_or_else(|| ModelError::Parse(format!("bad capacity point {item:?}")))?;
        let s: u32 = s.trim().parse().map_err(|_| ModelError::Parse(format!("bad scaleout {s:?}")))?;
        points.insert(s, fixed::<1>(t, "capacity")?[0]);
    }
    Ok((latency, CapacityModel::fit(&points)?))
}

pub fn save(path: &Path, latency: &LatencyModel, capacity: &CapacityModel) -> std::io::Result<()> {
    std::fs::write(path, to_text(latency, capacity))
}

pub fn load(path: &Path) -> Result<(LatencyModel, CapacityModel), ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Parse(format!("{}: {e}", path.display())))?;
    from_text(&text)
}

//! Timestamped scalar series with trapezoidal integration, binning and
//! windowed percentiles.
//!
//! Values between samples are linearly interpolated. Queries up to one
//! sample interval past the last point see the last value held constant;
//! anything further out is a domain error.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("timestamps must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("value at index {0} is not finite or is negative")]
    BadValue(usize),
    #[error("interval [{a}, {b}] lies outside the series domain [{start}, {end}]")]
    Domain { a: f64, b: f64, start: f64, end: f64 },
    #[error("interval bounds out of order: {a} > {b}")]
    Reversed { a: f64, b: f64 },
    #[error("series does not cover [{from}, {to}]")]
    InsufficientCoverage { from: f64, to: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("csv: {0}")]
    Csv(String),
}

/// A mean value over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub start: f64,
    pub end: f64,
    pub mean_value: f64,
}

/// Immutable sequence of `(timestamp_s, value)` samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    // cumulative trapezoidal integral from times[0] to times[i]
    cumulative: Vec<f64>,
}

const EDGE_TOL: f64 = 1e-9;

fn tol(x: f64) -> f64 {
    EDGE_TOL * x.abs().max(1.0)
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, SeriesError> {
        if times.len() != values.len() {
            return Err(SeriesError::InvalidArgument("times and values differ in length"));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 || !times[i].is_finite() {
                return Err(SeriesError::BadValue(i));
            }
        }
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                return Err(SeriesError::NotIncreasing(i));
            }
        }
        let mut cumulative = Vec::with_capacity(times.len());
        let mut acc = 0.0;
        for i in 0..times.len() {
            if i > 0 {
                acc += 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
            }
            cumulative.push(acc);
        }
        Ok(TimeSeries { times, values, cumulative })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self, SeriesError> {
        let (t, v) = points.iter().copied().unzip();
        Self::new(t, v)
    }

    /// Samples `values` at `start, start + step, ...`.
    pub fn regular(start: f64, step: f64, values: Vec<f64>) -> Result<Self, SeriesError> {
        if !(step > 0.0) {
            return Err(SeriesError::InvalidArgument("step must be positive"));
        }
        let times = (0..values.len()).map(|i| start + i as f64 * step).collect();
        Self::new(times, values)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    pub fn first_time(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn last_value(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// Width of the final sample interval, used for the hold-last extension.
    pub fn last_spacing(&self) -> f64 {
        match self.times.len() {
            0 | 1 => 0.0,
            n => self.times[n - 1] - self.times[n - 2],
        }
    }

    /// Last instant that may be queried (last sample plus one spacing).
    pub fn domain_end(&self) -> Option<f64> {
        self.last_time().map(|t| t + self.last_spacing())
    }

    pub fn max_value(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::max)
    }

    pub fn min_value(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::min)
    }

    fn check_domain(&self, a: f64, b: f64) -> Result<(), SeriesError> {
        let (start, end) = match (self.first_time(), self.domain_end()) {
            (Some(s), Some(e)) => (s, e),
            _ => return Err(SeriesError::Domain { a, b, start: f64::NAN, end: f64::NAN }),
        };
        if a < start - tol(start) || b > end + tol(end) {
            return Err(SeriesError::Domain { a, b, start, end });
        }
        Ok(())
    }

    /// Linearly interpolated value at `t` (hold-last past the final sample).
    pub fn value_at(&self, t: f64) -> Result<f64, SeriesError> {
        self.check_domain(t, t)?;
        Ok(self.interpolate(t))
    }

    fn interpolate(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        // first index with times[i] > t
        let i = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    // Antiderivative measured from times[0].
    fn antiderivative(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return 0.0;
        }
        if t >= self.times[n - 1] {
            return self.cumulative[n - 1] + (t - self.times[n - 1]) * self.values[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t);
        let t0 = self.times[i - 1];
        let v0 = self.values[i - 1];
        let vt = self.interpolate(t);
        self.cumulative[i - 1] + 0.5 * (v0 + vt) * (t - t0)
    }

    /// Trapezoidal integral of the interpolated series over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64, SeriesError> {
        if a > b {
            return Err(SeriesError::Reversed { a, b });
        }
        self.check_domain(a, b)?;
        if a == b {
            return Ok(0.0);
        }
        Ok((self.antiderivative(b) - self.antiderivative(a)).max(0.0))
    }

    /// Splits `[start, start + horizon)` into `bin_count` equal bins.
    ///
    /// A bin's mean is the arithmetic mean of the samples falling inside it.
    /// Bins narrower than the sample spacing that catch no sample fall back
    /// to the interpolated average over the bin.
    pub fn bin_means(&self, start: f64, horizon: f64, bin_count: usize) -> Result<Vec<Bin>, SeriesError> {
        if !(horizon > 0.0) {
            return Err(SeriesError::InvalidArgument("horizon must be positive"));
        }
        if bin_count == 0 {
            return Err(SeriesError::InvalidArgument("bin_count must be at least 1"));
        }
        let end = start + horizon;
        if self.check_domain(start, end).is_err() {
            return Err(SeriesError::InsufficientCoverage { from: start, to: end });
        }
        let width = horizon / bin_count as f64;
        let eps = EDGE_TOL * width;
        let mut bins = Vec::with_capacity(bin_count);
        for k in 0..bin_count {
            let lo = start + k as f64 * width;
            let hi = if k + 1 == bin_count { end } else { start + (k + 1) as f64 * width };
            let first = self.times.partition_point(|&t| t < lo - eps);
            let last = self.times.partition_point(|&t| t < hi - eps);
            let mean_value =
                if last > first { self.values[first..last].iter().sum::<f64>() / (last - first) as f64 } else { self.integrate(lo, hi)? / (hi - lo) };
            bins.push(Bin { start: lo, end: hi, mean_value });
        }
        Ok(bins)
    }

    /// Tumbling-window nearest-rank percentile.
    ///
    /// Windows start at the first timestamp; each output point carries the
    /// window end as its timestamp. Empty windows produce no point.
    pub fn windowed_percentile(&self, window: f64, q: f64) -> Result<TimeSeries, SeriesError> {
        if !(window > 0.0) {
            return Err(SeriesError::InvalidArgument("window must be positive"));
        }
        if !(q > 0.0 && q <= 100.0) {
            return Err(SeriesError::InvalidArgument("percentile must be in (0, 100]"));
        }
        let Some(origin) = self.first_time() else {
            return Ok(TimeSeries::empty());
        };
        let mut out_t = Vec::new();
        let mut out_v = Vec::new();
        let mut buf: Vec<f64> = Vec::new();
        let mut current = 0u64;
        for (t, v) in self.points() {
            let idx = ((t - origin) / window + EDGE_TOL).floor() as u64;
            if idx != current && !buf.is_empty() {
                out_t.push(origin + (current + 1) as f64 * window);
                out_v.push(nearest_rank(&mut buf, q));
                buf.clear();
            }
            current = idx;
            buf.push(v);
        }
        if !buf.is_empty() {
            out_t.push(origin + (current + 1) as f64 * window);
            out_v.push(nearest_rank(&mut buf, q));
        }
        TimeSeries::new(out_t, out_v)
    }

    /// Samples with `from <= t <= to`.
    pub fn slice(&self, from: f64, to: f64) -> TimeSeries {
        let lo = self.times.partition_point(|&t| t < from);
        let hi = self.times.partition_point(|&t| t <= to);
        TimeSeries::new(self.times[lo..hi].to_vec(), self.values[lo..hi].to_vec()).expect("sub-slice of a valid series is valid")
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SeriesError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| SeriesError::Csv(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "timestamp_s" || &headers[1] != "value" {
            return Err(SeriesError::Csv(format!("expected header timestamp_s,value, found {:?}", headers)));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SeriesError::Csv(e.to_string()))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| SeriesError::Csv(format!("row {}: {e}", line + 2)));
            times.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        Self::new(times, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SeriesError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| SeriesError::Csv(e.to_string());
        wtr.write_record(["timestamp_s", "value"]).map_err(err)?;
        for (t, v) in self.points() {
            wtr.write_record([t.to_string(), v.to_string()]).map_err(err)?;
        }
        wtr.flush().map_err(|e| SeriesError::Csv(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SeriesError> {
        let file = std::fs::File::open(path).map_err(|e| SeriesError::Csv(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), SeriesError> {
        let file = std::fs::File::create(path).map_err(|e| SeriesError::Csv(format!("{}: {e}", path.display())))?;
        self.write_csv(file)
    }
}

/// Nearest-rank percentile; sorts `values` in place. Returns NaN when empty.
pub fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    values[rank.clamp(1, n) - 1]
}

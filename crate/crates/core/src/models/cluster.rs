//! One-dimensional 2-means (Lloyd) with deterministic initialization.

use crate::timeseries::nearest_rank;

const MAX_ITER: usize = 100;

/// Result of splitting a set of scalars into a low and a high group.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoMeans {
    pub low: f64,
    pub high: f64,
    /// `true` for members of the high cluster, in input order.
    pub high_member: Vec<bool>,
    pub iterations: usize,
}

impl TwoMeans {
    pub fn boundary(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    pub fn gap(&self) -> f64 {
        self.high - self.low
    }

    /// Largest population standard deviation of the two clusters.
    pub fn max_spread(&self, values: &[f64]) -> f64 {
        let spread = |want: bool, c: f64| {
            let (n, ss) =
                values.iter().zip(&self.high_member).filter(|(_, h)| **h == want).fold((0usize, 0.0), |(n, ss), (v, _)| (n + 1, ss + (v - c).powi(2)));
            if n == 0 {
                0.0
            } else {
                (ss / n as f64).sqrt()
            }
        };
        spread(false, self.low).max(spread(true, self.high))
    }

    /// Within-cluster sum of squares.
    pub fn wcss(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.high_member).map(|(v, h)| (v - if *h { self.high } else { self.low }).powi(2)).sum()
    }
}

/// Splits `values` into two clusters. Lloyd iterations start from the 10th
/// and 90th percentiles; the result is then checked against the best sorted
/// split, which replaces it when Lloyd stalled in a worse local optimum.
/// Returns `None` when fewer than two distinct values exist.
pub fn two_means(values: &[f64]) -> Option<TwoMeans> {
    if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut sorted = values.to_vec();
    let mut low = nearest_rank(&mut sorted, 10.0);
    let mut high = nearest_rank(&mut sorted, 90.0);
    if !(high > low) {
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        if !(max > min) {
            return None;
        }
        low = min;
        high = max;
    }
    sorted.sort_by(f64::total_cmp);
    let lloyd = lloyd(values, low, high);
    let best = best_split(&sorted)?;
    match lloyd {
        Some(tm) if tm.wcss(values) <= best.2 * (1.0 + 1e-12) + 1e-12 => Some(tm),
        other => {
            let (low, high, _) = best;
            let cut = 0.5 * (low + high);
            let high_member = values.iter().map(|v| *v > cut).collect();
            Some(TwoMeans { low, high, high_member, iterations: other.map_or(MAX_ITER, |t| t.iterations) })
        }
    }
}

// Best contiguous split of sorted values: (low mean, high mean, wcss).
fn best_split(sorted: &[f64]) -> Option<(f64, f64, f64)> {
    let n = sorted.len();
    let shift = sorted[n / 2];
    let (total, total_sq) = sorted.iter().fold((0.0, 0.0), |(a, b), v| (a + (v - shift), b + (v - shift).powi(2)));
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut best: Option<(f64, f64, f64)> = None;
    for k in 1..n {
        let x = sorted[k - 1] - shift;
        sum += x;
        sq += x * x;
        if !(sorted[k] > sorted[k - 1]) {
            continue;
        }
        let (nl, nr) = (k as f64, (n - k) as f64);
        let (sr, qr) = (total - sum, total_sq - sq);
        let w = (sq - sum * sum / nl).max(0.0) + (qr - sr * sr / nr).max(0.0);
        if best.is_none_or(|b| w < b.2) {
            best = Some((sum / nl + shift, sr / nr + shift, w));
        }
    }
    best
}

fn lloyd(values: &[f64], mut low: f64, mut high: f64) -> Option<TwoMeans> {
    let mut member = vec![false; values.len()];
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mid = 0.5 * (low + high);
        for (m, v) in member.iter_mut().zip(values) {
            *m = *v > mid;
        }
        let (mut sl, mut nl, mut sh, mut nh) = (0.0, 0usize, 0.0, 0usize);
        for (v, m) in values.iter().zip(&member) {
            if *m {
                sh += v;
                nh += 1;
            } else {
                sl += v;
                nl += 1;
            }
        }
        if nl == 0 || nh == 0 {
            return None;
        }
        let (nlow, nhigh) = (sl / nl as f64, sh / nh as f64);
        if nlow == low && nhigh == high {
            break;
        }
        low = nlow;
        high = nhigh;
    }
    Some(TwoMeans { low, high, high_member: member, iterations })
}

use std::collections::BTreeMap;

use super::ModelError;

/// Monotone piecewise-linear `Tmax(scaleout)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityModel {
    points: Vec<(f64, f64)>,
}

impl CapacityModel {
    pub fn fit(tmax_points: &BTreeMap<u32, f64>) -> Result<Self, ModelError> {
        if tmax_points.len() < 2 {
            return Err(ModelError::InsufficientPoints(tmax_points.len()));
        }
        if tmax_points.values().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(ModelError::InsufficientData("capacities must be finite and non-negative".into()));
        }
        let mut running = 0.0f64;
        let points = tmax_points
            .iter()
            .map(|(s, t)| {
                running = running.max(*t);
                (*s as f64, running)
            })
            .collect();
        Ok(CapacityModel { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn breakpoints(&self) -> BTreeMap<u32, f64> {
        self.points.iter().map(|(s, t)| (*s as u32, *t)).collect()
    }

    pub fn tmax(&self, scaleout: f64) -> f64 {
        let p = &self.points;
        let seg = |i: usize| {
            let ((s0, t0), (s1, t1)) = (p[i], p[i + 1]);
            t0 + (t1 - t0) * (scaleout - s0) / (s1 - s0)
        };
        let i = p.partition_point(|q| q.0 <= scaleout);
        let v = if i == 0 {
            seg(0)
        } else if i >= p.len() {
            seg(p.len() - 2)
        } else if p[i - 1].0 == scaleout {
            p[i - 1].1
        } else {
            seg(i - 1)
        };
        v.max(0.0)
    }

    /// Raises the capacity at `scaleout` to `observed` if it is higher,
    /// restoring monotonicity afterwards. Returns whether anything changed.
    pub fn raise(&mut self, scaleout: u32, observed: f64) -> bool {
        if !observed.is_finite() || observed <= self.tmax(scaleout as f64) {
            return false;
        }
        let s = scaleout as f64;
        match self.points.iter_mut().find(|p| p.0 == s) {
            Some(p) => p.1 = observed,
            None => {
                let i = self.points.partition_point(|p| p.0 < s);
                self.points.insert(i, (s, observed));
            }
        }
        let mut running = 0.0f64;
        for p in &mut self.points {
            running = running.max(p.1);
            p.1 = running;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_examples() {
        let m = CapacityModel::fit(&[(2, 20_000.0), (8, 80_000.0)].into()).unwrap();
        assert_eq!(m.tmax(5.0), 50_000.0);
        assert_eq!(m.tmax(8.0), 80_000.0);
        assert_eq!(m.tmax(1.0), 10_000.0);
        assert_eq!(m.tmax(0.0), 0.0);
        let m = CapacityModel::fit(&[(2, 20_000.0), (8, 80_000.0), (16, 160_000.0)].into()).unwrap();
        assert_eq!(m.tmax(12.0), 120_000.0);
        assert_eq!(m.tmax(20.0), 200_000.0);
        assert!(CapacityModel::fit(&[(2, 1.0)].into()).is_err());
    }

    #[test]
    fn monotone_and_exact() {
        let pts: BTreeMap<u32, f64> = [(2, 20_000.0), (5, 60_000.0), (8, 55_000.0), (11, 110_000.0)].into();
        let m = CapacityModel::fit(&pts).unwrap();
        let mut prev = 0.0;
        for k in 0..200 {
            let v = m.tmax(k as f64 * 0.1);
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(m.tmax(2.0), 20_000.0);
        assert_eq!(m.tmax(11.0), 110_000.0);
    }

    #[test]
    fn raise_only_upwards() {
        let mut m = CapacityModel::fit(&[(2, 20_000.0), (8, 80_000.0)].into()).unwrap();
        assert!(!m.raise(2, 15_000.0));
        assert!(m.raise(2, 30_000.0));
        assert_eq!(m.tmax(2.0), 30_000.0);
        assert!(m.raise(5, 70_000.0));
        assert_eq!(m.tmax(5.0), 70_000.0);
        assert!(m.raise(6, 95_000.0));
        assert_eq!(m.tmax(8.0), 95_000.0);
    }
}

use serde::{Deserialize, Serialize};

/// Transmon populations (P_g, P_e, P_f) over time, traced over the
/// resonator, together with the mean photon number.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PopulationTrajectory {
    /// Seconds.
    pub times: Vec<f64>,
    pub pops: Vec<[f64; 3]>,
    pub photon: Vec<f64>,
}

impl PopulationTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// P_e + P_f at each time.
    pub fn excited(&self) -> Vec<f64> {
        self.pops.iter().map(|p| p[1] + p[2]).collect()
    }

    /// Excited population interpolated linearly at `t`.
    pub fn excited_at(&self, t: f64) -> Option<f64> {
        let exc = self.excited();
        interp(&self.times, &exc, t)
    }

    /// First time after which P_e + P_f stays below `level` for the rest
    /// of the trajectory.
    pub fn settling_time(&self, level: f64) -> Option<f64> {
        let exc = self.excited();
        let last_above = exc.iter().rposition(|&p| p >= level);
        match last_above {
            None => self.times.first().copied(),
            Some(i) if i + 1 == exc.len() => None,
            Some(i) => {
                // linear crossing between samples i and i+1
                let (t0, t1) = (self.times[i], self.times[i + 1]);
                let (p0, p1) = (exc[i], exc[i + 1]);
                Some(t0 + (p0 - level) / (p0 - p1) * (t1 - t0))
            }
        }
    }

    pub fn csv_header() -> &'static str {
        "time_ns,p_g,p_e,p_f,p_exc,photon"
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.times
            .iter()
            .zip(&self.pops)
            .zip(&self.photon)
            .map(|((&t, p), &n)| vec![t * 1e9, p[0], p[1], p[2], p[1] + p[2], n])
            .collect()
    }
}

pub(crate) fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return Some(ys[0]);
    }
    if i >= xs.len() {
        return Some(ys[xs.len() - 1]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    if x1 == x0 {
        return Some(ys[i]);
    }
    Some(ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0))
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settling_time_interpolates() {
        let tr = PopulationTrajectory {
            times: vec![0.0, 1.0, 2.0, 3.0],
            pops: vec![[0.0, 1.0, 0.0], [0.5, 0.5, 0.0], [0.9, 0.1, 0.0], [0.99, 0.01, 0.0]],
            photon: vec![0.0; 4],
        };
        let t = tr.settling_time(0.3).unwrap();
        assert!((t - 1.5).abs() < 1e-12);
        assert!(tr.settling_time(0.001).is_none());
        assert_eq!(tr.excited_at(0.5), Some(0.75));
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.0, 1.0, 5);
        assert_eq!(v, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}

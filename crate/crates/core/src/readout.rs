//! Single-shot qutrit readout: shared-covariance Gaussian mixture fits,
//! assignment regions, assignment-matrix correction and ground-state heralding.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    G = 0,
    E = 1,
    F = 2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::G, Level::E, Level::F];

    pub fn from_index(i: usize) -> Option<Level> {
        Level::ALL.get(i).copied()
    }

    pub fn symbol(self) -> char {
        ['g', 'e', 'f'][self as usize]
    }
}

/// Integrated single-shot quadratures with the latent level when known.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShotSet {
    pub points: Vec<[f64; 2]>,
    pub labels: Option<Vec<Level>>,
    /// Heralding principal-component value per shot, if recorded.
    pub herald: Option<Vec<f64>>,
}

impl ShotSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub means: [[f64; 2]; 3],
    /// Shared covariance, row-major.
    pub cov: [[f64; 2]; 2],
    /// weights[p][s]: weight of component s in the set prepared in p.
    pub weights: [[f64; 3]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn mat2(c: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1])
}

fn cond2(m: &Matrix2<f64>) -> f64 {
    let e = SymmetricEigen::new(*m).eigenvalues;
    let (lo, hi) = (e[0].min(e[1]), e[0].max(e[1]));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

impl GmmModel {
    fn precision(&self) -> Option<(Matrix2<f64>, f64)> {
        let c = mat2(&self.cov);
        let det = c.determinant();
        if !(det > 0.0) {
            return None;
        }
        c.try_inverse().map(|p| (p, det))
    }

    pub fn condition_number(&self) -> f64 {
        cond2(&mat2(&self.cov))
    }

    /// Squared Mahalanobis distance of `x` from component `s`.
    pub fn mahalanobis2(&self, x: [f64; 2], s: Level) -> f64 {
        let (p, _) = self.precision().expect("covariance validated at construction");
        let m = self.means[s as usize];
        let d = Vector2::new(x[0] - m[0], x[1] - m[1]);
        (d.transpose() * p * d)[0]
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cov;
        if (c[0][1] - c[1][0]).abs() > 1e-12 * (c[0][0].abs() + c[1][1].abs()) {
            return Err(Error::InvalidParameter("covariance not symmetric".into()));
        }
        let k = self.condition_number();
        if !(k <= 1e12) {
            return Err(Error::fit("gmm", format!("covariance condition number {k:.3e}")));
        }
        for w in &self.weights {
            if (w.iter().sum::<f64>() - 1.0).abs() > 1e-8 || w.iter().any(|x| *x < 0.0) {
                return Err(Error::InvalidParameter("mixture weights must sum to one".into()));
            }
        }
        Ok(())
    }
}

/// Maximum-likelihood mixture fit to the three reference sets (prepared in
/// g, e, f). Means and covariance are shared; weights are per preparation.
pub fn fit_gmm(reference: &[ShotSet; 3]) -> Result<GmmFit> {
    for (p, set) in reference.iter().enumerate() {
        if set.len() < 100 {
            return Err(Error::fit(
                "gmm",
                format!("reference set {} has {} shots, need 100", Level::ALL[p].symbol(), set.len()),
            ));
        }
    }
    let n_total: usize = reference.iter().map(|s| s.len()).sum();

    // start from per-set sample means and pooled covariance
    let mut means = [[0.0; 2]; 3];
    let mut pooled = Matrix2::zeros();
    for (p, set) in reference.iter().enumerate() {
        let n = set.len() as f64;
        let m = set.points.iter().fold([0.0, 0.0], |a, x| [a[0] + x[0] / n, a[1] + x[1] / n]);
        means[p] = m;
        for x in &set.points {
            let d = Vector2::new(x[0] - m[0], x[1] - m[1]);
            pooled += d * d.transpose();
        }
    }
    pooled /= n_total as f64;
    let mut model = GmmModel {
        means,
        cov: [[pooled[(0, 0)], pooled[(0, 1)]], [pooled[(1, 0)], pooled[(1, 1)]]],
        weights: [[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]],
    };
    check_cov(&model)?;

    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    for _ in 0..5000 {
        iterations += 1;
        let (prec, det) = model.precision().ok_or_else(|| Error::fit("gmm", "singular covariance"))?;
        let norm = -LN_2PI - 0.5 * det.ln();
        let mut ll = 0.0;
        let mut nk = [0.0; 3];
        let mut sx = [[0.0; 2]; 3];
        let mut new_w = [[0.0; 3]; 3];
        let mut resp_all: Vec<[f64; 3]> = Vec::with_capacity(n_total);
        for (p, set) in reference.iter().enumerate() {
            for x in &set.points {
                let mut lp = [0.0; 3];
                for s in 0..3 {
                    let m = model.means[s];
                    let d = Vector2::new(x[0] - m[0], x[1] - m[1]);
                    let w = model.weights[p][s];
                    lp[s] = if w > 0.0 {
                        w.ln() + norm - 0.5 * (d.transpose() * prec * d)[0]
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                let mx = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = lp.iter().map(|v| (v - mx).exp()).sum();
                ll += mx + z.ln();
                let mut r = [0.0; 3];
                for s in 0..3 {
                    r[s] = (lp[s] - mx).exp() / z;
                    nk[s] += r[s];
                    sx[s][0] += r[s] * x[0];
                    sx[s][1] += r[s] * x[1];
                    new_w[p][s] += r[s];
                }
                resp_all.push(r);
            }
        }
        trace.push(ll);
        if (ll - prev).abs() / (n_total as f64) < 1e-9 {
            break;
        }
        prev = ll;

        for s in 0..3 {
            if nk[s] < 1e-9 {
                return Err(Error::fit("gmm", format!("component {} lost all weight", Level::ALL[s].symbol())));
            }
            model.means[s] = [sx[s][0] / nk[s], sx[s][1] / nk[s]];
        }
        let mut c = Matrix2::zeros();
        let mut k = 0;
        for set in reference.iter() {
            for x in &set.points {
                let r = resp_all[k];
                k += 1;
                for s in 0..3 {
                    let m = model.means[s];
                    let d = Vector2::new(x[0] - m[0], x[1] - m[1]);
                    c += d * d.transpose() * r[s];
                }
            }
        }
        c /= n_total as f64;
        model.cov = [[c[(0, 0)], 0.5 * (c[(0, 1)] + c[(1, 0)])], [0.5 * (c[(0, 1)] + c[(1, 0)]), c[(1, 1)]]];
        for (p, set) in reference.iter().enumerate() {
            for s in 0..3 {
                model.weights[p][s] = new_w[p][s] / set.len() as f64;
            }
        }
        check_cov(&model)?;
    }

    // means closer than one standard deviation cannot be told apart
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let m = model.means[b];
        if model.mahalanobis2(m, Level::ALL[a]) < 1.0 {
            return Err(Error::fit(
                "gmm",
                format!(
                    "collapsed means for {} and {}",
                    Level::ALL[a].symbol(),
                    Level::ALL[b].symbol()
                ),
            ));
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: trace,
        iterations,
    })
}

fn check_cov(m: &GmmModel) -> Result<()> {
    let k = m.condition_number();
    if !(k <= 1e12) {
        return Err(Error::fit("gmm", format!("degenerate covariance (condition number {k:.3e})")));
    }
    Ok(())
}

/// Maximum-posterior level under equal priors; ties go to the lower level.
pub fn classify(model: &GmmModel, point: [f64; 2]) -> Level {
    let mut best = Level::G;
    let mut best_d = model.mahalanobis2(point, Level::G);
    for s in [Level::E, Level::F] {
        let d = model.mahalanobis2(point, s);
        if d < best_d {
            best = s;
            best_d = d;
        }
    }
    best
}

pub fn classify_all(model: &GmmModel, points: &[[f64; 2]], exec: Exec) -> Vec<Level> {
    exec.map(points, |x| classify(model, *x))
}

/// Fraction of shots assigned to each level.
pub fn assignment_frequencies(model: &GmmModel, shots: &ShotSet, exec: Exec) -> Result<[f64; 3]> {
    if shots.is_empty() {
        return Err(Error::DegenerateData("no shots to classify".into()));
    }
    let mut counts = [0usize; 3];
    for l in classify_all(model, &shots.points, exec) {
        counts[l as usize] += 1;
    }
    let n = shots.len() as f64;
    Ok(counts.map(|c| c as f64 / n))
}

/// r[m][s] = p(assigned m | prepared s); columns sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    pub r: [[f64; 3]; 3],
}

impl AssignmentMatrix {
    pub fn identity() -> Self {
        AssignmentMatrix {
            r: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn from_columns(cols: [[f64; 3]; 3]) -> Result<Self> {
        let mut r = [[0.0; 3]; 3];
        for s in 0..3 {
            let sum: f64 = cols[s].iter().sum();
            if cols[s].iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidParameter(format!("column {s} is not a probability vector")));
            }
            for m in 0..3 {
                r[m][s] = cols[s][m];
            }
        }
        Ok(AssignmentMatrix { r })
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.r[i][j])
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix().singular_values();
        let lo = sv.min();
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            sv.max() / lo
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.matrix() * Vector3::from(p);
        [v[0], v[1], v[2]]
    }

    pub fn diagonal(&self) -> [f64; 3] {
        [self.r[0][0], self.r[1][1], self.r[2][2]]
    }
}

/// Classifies each reference set and normalises the counts per preparation.
pub fn assignment_matrix(model: &GmmModel, reference: &[ShotSet; 3], exec: Exec) -> Result<AssignmentMatrix> {
    let mut cols = [[0.0; 3]; 3];
    for (s, set) in reference.iter().enumerate() {
        cols[s] = assignment_frequencies(model, set, exec)?;
    }
    AssignmentMatrix::from_columns(cols)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectedPopulations {
    /// R⁻¹·M, possibly slightly outside the simplex.
    pub raw: [f64; 3],
    /// Raw values clipped at zero and renormalised.
    pub clipped: [f64; 3],
    pub condition: f64,
}

pub fn correct_populations(m: [f64; 3], r: &AssignmentMatrix) -> Result<CorrectedPopulations> {
    let condition = r.condition_number();
    if !(condition < 1e12) {
        return Err(Error::InversionFailure { condition });
    }
    let lu = r.matrix().lu();
    let p = lu
        .solve(&Vector3::from(m))
        .ok_or(Error::InversionFailure { condition })?;
    let raw = [p[0], p[1], p[2]];
    let c = raw.map(|x| x.max(0.0));
    let s: f64 = c.iter().sum();
    let clipped = if s > 0.0 { c.map(|x| x / s) } else { c };
    Ok(CorrectedPopulations { raw, clipped, condition })
}

/// Threshold c_thr with p(c > c_thr | excited) = `p_tail`, the ground
/// cluster lying at larger values.
pub fn herald_threshold(mu_exc: f64, sigma_exc: f64, p_tail: f64) -> Result<f64> {
    if !(p_tail > 0.0 && p_tail < 0.5) && p_tail != 0.5 {
        return Err(Error::InvalidParameter("p_tail must lie in (0, 0.5]".into()));
    }
    if !(sigma_exc > 0.0) {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }
    let z = Normal::standard().inverse_cdf(1.0 - p_tail);
    Ok(mu_exc + z * sigma_exc)
}

/// Two-component 1-D Gaussian mixture; component 0 has the larger mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bimodal {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub sigmas: [f64; 2],
}

impl Bimodal {
    pub fn ground(&self) -> (f64, f64, f64) {
        (self.weights[0], self.means[0], self.sigmas[0])
    }

    pub fn excited(&self) -> (f64, f64, f64) {
        (self.weights[1], self.means[1], self.sigmas[1])
    }

    /// Probability that a ground-state sample lands above `thr`.
    pub fn ground_survival(&self, thr: f64) -> f64 {
        let n = Normal::new(self.means[0], self.sigmas[0]).expect("positive sigma");
        1.0 - n.cdf(thr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BimodalFit {
    pub model: Bimodal,
    pub log_likelihood: Vec<f64>,
}

pub fn fit_bimodal_herald(samples: &[f64]) -> Result<BimodalFit> {
    if samples.len() < 100 {
        return Err(Error::fit("herald", format!("{} samples, need 100", samples.len())));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let spread = sorted[n - 1] - sorted[0];
    if !(spread > 0.0) {
        return Err(Error::fit("herald", "all samples identical"));
    }
    // split at the largest gap between deciles of the sorted data
    let q = |f: f64| sorted[((n - 1) as f64 * f) as usize];
    let mut mu = [q(0.9), q(0.1)];
    let sd0 = (spread / 6.0).max(1e-12);
    let mut sd = [sd0, sd0];
    let mut w = [0.5f64, 0.5];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..5000 {
        let mut ll = 0.0;
        let mut sr = [0.0; 2];
        let mut sx = [0.0; 2];
        let mut sxx = [0.0; 2];
        for &x in samples {
            let mut lp = [0.0f64; 2];
            for k in 0..2 {
                let z = (x - mu[k]) / sd[k];
                lp[k] = w[k].ln() - 0.5 * z * z - sd[k].ln() - 0.5 * LN_2PI;
            }
            let mx = lp[0].max(lp[1]);
            let s = (lp[0] - mx).exp() + (lp[1] - mx).exp();
            ll += mx + s.ln();
            for k in 0..2 {
                let r = (lp[k] - mx).exp() / s;
                sr[k] += r;
                sx[k] += r * x;
                sxx[k] += r * x * x;
            }
        }
        trace.push(ll);
        if (ll - prev).abs() / (n as f64) < 1e-10 {
            break;
        }
        prev = ll;
        for k in 0..2 {
            if sr[k] < 1e-9 * n as f64 {
                return Err(Error::fit("herald", "a component lost all weight"));
            }
            w[k] = sr[k] / n as f64;
            mu[k] = sx[k] / sr[k];
            let var = sxx[k] / sr[k] - mu[k] * mu[k];
            if !(var > (1e-9 * spread).powi(2)) {
                return Err(Error::fit("herald", "component collapsed onto a point"));
            }
            sd[k] = var.sqrt();
        }
    }
    let mut model = Bimodal { weights: w, means: mu, sigmas: sd };
    if model.means[1] > model.means[0] {
        model = Bimodal {
            weights: [w[1], w[0]],
            means: [mu[1], mu[0]],
            sigmas: [sd[1], sd[0]],
        };
    }
    Ok(BimodalFit { model, log_likelihood: trace })
}

/// Leading principal axis of the sample covariance (first non-zero
/// coordinate positive) and the projection of every point onto it.
pub fn principal_axis(points: &[[f64; 2]]) -> Result<([f64; 2], Vec<f64>)> {
    if points.len() < 2 {
        return Err(Error::DegenerateData("need at least two points".into()));
    }
    let n = points.len() as f64;
    let m = points.iter().fold([0.0, 0.0], |a, x| [a[0] + x[0] / n, a[1] + x[1] / n]);
    let mut c = Matrix2::zeros();
    for x in points {
        let d = Vector2::new(x[0] - m[0], x[1] - m[1]);
        c += d * d.transpose();
    }
    c /= n;
    if !(c.trace() > 0.0) {
        return Err(Error::DegenerateData("points have zero variance".into()));
    }
    let e = SymmetricEigen::new(c);
    let k = if e.eigenvalues[0] >= e.eigenvalues[1] { 0 } else { 1 };
    let mut v = [e.eigenvectors[(0, k)], e.eigenvectors[(1, k)]];
    let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
    v = [v[0] / nv, v[1] / nv];
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = [-v[0], -v[1]];
    }
    let proj = points.iter().map(|x| x[0] * v[0] + x[1] * v[1]).collect();
    Ok((v, proj))
}

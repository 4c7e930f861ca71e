//! Fit models for the four-step drive calibration and the pipeline that
//! turns their results into drive settings.
//!
//! Time axes are in µs and fitted rates in rad/µs; frequency axes and
//! Stark coefficients are in MHz.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::effective::two_level_pf;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lab::{DriveSettings, StepPrior, VirtualLab};
use crate::lm::{fit as lm_fit, fit_multistart, LmFit, LmOptions};
use crate::params::DriveConfig;
use crate::rng::{stream, tag};
use crate::units::Frequency;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub step: u8,
    /// Swept drive amplitude (V).
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibDataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_err: Option<Vec<f64>>,
    pub meta: DatasetMeta,
}

impl CalibDataset {
    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() || self.y_err.as_ref().is_some_and(|e| e.len() != self.x.len()) {
            return Err(Error::Format("dataset columns have different lengths".into()));
        }
        if self.x.iter().any(|v| !v.is_finite()) || self.y.iter().any(|v| !(-0.05..=1.05).contains(v)) {
            return Err(Error::Format("dataset values out of range".into()));
        }
        Ok(())
    }

    fn range(&self) -> f64 {
        let lo = self.y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

fn lm_opts() -> LmOptions {
    LmOptions {
        ftol: 1e-10,
        ..Default::default()
    }
}

/// Deterministic log-normal perturbations of a starting point; the first
/// start is returned unchanged.
fn perturbed_starts(base: &[f64], scaled: &[usize], n: usize) -> Vec<Vec<f64>> {
    let mut rng = stream(0, &[tag::MULTISTART, base.len() as u64]);
    let mut out = vec![base.to_vec()];
    for _ in 1..n {
        let mut p = base.to_vec();
        for &k in scaled {
            let z: f64 = rng.sample(StandardNormal);
            p[k] *= (0.35 * z).exp();
        }
        out.push(p);
    }
    out
}

/// Angular frequency of the strongest Fourier component of y(x).
fn dominant_frequency(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let span = x[n - 1] - x[0];
    let dx = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min).max(1e-12);
    let (lo, hi) = (PI / span, PI / dx);
    let mut best = (lo, 0.0);
    for k in 0..2000 {
        let w = lo + (hi - lo) * k as f64 / 1999.0;
        let (mut c, mut s) = (0.0, 0.0);
        for (xi, yi) in x.iter().zip(y) {
            c += (yi - mean) * (w * xi).cos();
            s += (yi - mean) * (w * xi).sin();
        }
        let p = c * c + s * s;
        if p > best.1 {
            best = (w, p);
        }
    }
    best.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPeak {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub center_err: f64,
    pub chi2: f64,
}

/// offset + amplitude·exp(−(x − center)²/(2·width²)); the sign of the
/// peak is detected from the data.
pub fn fit_gaussian_peak(d: &CalibDataset) -> Result<GaussianPeak> {
    d.validate()?;
    let ctx = "gaussian peak";
    if d.x.len() < 5 {
        return Err(Error::fit(ctx, "need at least 5 points"));
    }
    if d.range() <= 1e-12 {
        return Err(Error::fit(ctx, "flat data"));
    }
    let mut ys = d.y.clone();
    ys.sort_by(f64::total_cmp);
    let median = ys[ys.len() / 2];
    let (imax, ymax) = d.y.iter().cloned().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    let (imin, ymin) = d.y.iter().cloned().enumerate().fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
    let (ipk, ypk) = if ymax - median >= median - ymin { (imax, ymax) } else { (imin, ymin) };
    let xlo = d.x.iter().cloned().fold(f64::INFINITY, f64::min);
    let xhi = d.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let half = 0.5 * (ypk + median);
    let above = d.y.iter().filter(|v| (*v - half) * (ypk - half) > 0.0).count().max(1);
    let w0 = ((xhi - xlo) * above as f64 / d.x.len() as f64 / 2.355).max((xhi - xlo) / d.x.len() as f64);
    let base = vec![d.x[ipk], w0, ypk - median, median];
    let mut starts = perturbed_starts(&base, &[1], 6);
    starts.push(vec![d.x[ipk], 2.0 * w0, ypk - median, median]);
    starts.push(vec![0.5 * (xlo + xhi), w0, ypk - median, median]);
    let f = |p: &[f64]| -> Vec<f64> {
        d.x.iter()
            .zip(&d.y)
            .map(|(x, y)| p[3] + p[2] * (-(x - p[0]).powi(2) / (2.0 * p[1] * p[1])).exp() - y)
            .collect()
    };
    let first = fit_multistart(ctx, f, &starts, &lm_opts())?;
    // refit on a window symmetric about the peak so that tails of a
    // non-Gaussian line do not pull the centre
    let (c1, w1) = (first.params[0], first.params[1].abs());
    let reach = (c1 - xlo).min(xhi - c1).min(3.0 * w1);
    let idx: Vec<usize> = (0..d.x.len()).filter(|&i| (d.x[i] - c1).abs() <= reach).collect();
    let r = if idx.len() >= 7 && idx.len() < d.x.len() {
        let g = |p: &[f64]| -> Vec<f64> {
            idx.iter()
                .map(|&i| p[3] + p[2] * (-(d.x[i] - p[0]).powi(2) / (2.0 * p[1] * p[1])).exp() - d.y[i])
                .collect()
        };
        lm_fit(ctx, g, &first.params, &lm_opts()).unwrap_or(first)
    } else {
        first
    };
    let (c, w, a) = (r.params[0], r.params[1].abs(), r.params[2]);
    if !(c >= xlo && c <= xhi) {
        return Err(Error::fit(ctx, format!("center {c:.4} outside the swept range")));
    }
    if !(a.abs() > 5.0 * r.stderr(2)) {
        return Err(Error::fit(ctx, format!("peak amplitude {a:.3e} not significant (chi2 {:.3e})", r.chi2)));
    }
    Ok(GaussianPeak {
        center: c,
        width: w,
        amplitude: a,
        offset: r.params[3],
        center_err: r.stderr(0),
        chi2: r.chi2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    /// Coefficient of V², MHz/V².
    pub c2: f64,
    pub c0: Option<f64>,
    /// Covariance of (c2[, c0]).
    pub covariance: Vec<Vec<f64>>,
}

impl QuadraticFit {
    pub fn c2_err(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn eval(&self, v: f64) -> f64 {
        self.c2 * v * v + self.c0.unwrap_or(0.0)
    }
}

fn linear_lsq(ctx: &str, cols: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    let m = y.len();
    let n = cols.len();
    let a = nalgebra::DMatrix::from_fn(m, n, |i, j| cols[j][i]);
    let ata = a.transpose() * &a;
    let scale = ata.diagonal().iter().cloned().fold(0.0, f64::max);
    let sv = ata.clone().singular_values();
    if !(scale > 0.0) || sv.min() <= 1e-12 * sv.max() {
        return Err(Error::fit(ctx, "rank-deficient design"));
    }
    let inv = ata.try_inverse().ok_or_else(|| Error::fit(ctx, "singular normal matrix"))?;
    let beta = &inv * (a.transpose() * nalgebra::DVector::from_column_slice(y));
    let resid = &a * &beta - nalgebra::DVector::from_column_slice(y);
    let chi2 = resid.norm_squared();
    let s2 = if m > n { chi2 / (m - n) as f64 } else { 0.0 };
    let cov = (0..n).map(|i| (0..n).map(|j| inv[(i, j)] * s2).collect()).collect();
    Ok((beta.iter().cloned().collect(), cov, chi2))
}

/// Δ(V) = c2·V² (+ c0 when `with_offset`).
pub fn fit_quadratic_stark(amplitudes: &[f64], shifts: &[f64], with_offset: bool) -> Result<QuadraticFit> {
    let ctx = "quadratic stark";
    if amplitudes.len() != shifts.len() {
        return Err(Error::Format("amplitude and shift counts differ".into()));
    }
    if amplitudes.len() < 3 {
        return Err(Error::fit(ctx, "need at least 3 points"));
    }
    let mut cols = vec![amplitudes.iter().map(|v| v * v).collect::<Vec<f64>>()];
    if with_offset {
        cols.push(vec![1.0; amplitudes.len()]);
    }
    let (b, cov, _) = linear_lsq(ctx, &cols, shifts)?;
    Ok(QuadraticFit {
        c2: b[0],
        c0: with_offset.then(|| b[1]),
        covariance: cov,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
    pub reduced_chi2: f64,
}

/// Ordinary least-squares straight line.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Format("x and y counts differ".into()));
    }
    if x.len() < 3 {
        return Err(Error::fit("linear", "need at least 3 points"));
    }
    let (b, cov, chi2) = linear_lsq("linear", &[x.to_vec(), vec![1.0; x.len()]], y)?;
    Ok(LinearFit {
        slope: b[0],
        intercept: b[1],
        slope_err: cov[0][0].max(0.0).sqrt(),
        intercept_err: cov[1][1].max(0.0).sqrt(),
        reduced_chi2: chi2 / (x.len() - 2) as f64,
    })
}

/// A fitted value with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedFit {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
}

impl SharedFit {
    fn from_lm(names: Vec<String>, r: &LmFit) -> Self {
        let n = r.params.len();
        SharedFit {
            names,
            values: r.params.clone(),
            covariance: (0..n).map(|i| (0..n).map(|j| r.covariance[(i, j)]).collect()).collect(),
            chi2: r.chi2,
            dof: r.dof,
        }
    }

    pub fn get(&self, name: &str) -> Option<Estimate> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(Estimate {
            value: self.values[i],
            err: self.covariance[i][i].max(0.0).sqrt(),
        })
    }
}

/// Least squares over all datasets with multistart; when the data carry
/// shot-noise errors, a second pass weights each point by the binomial
/// spread of the first-pass prediction.
fn global_fit(
    ctx: &str,
    sets: &[CalibDataset],
    model: impl Fn(&[f64], usize, f64) -> f64,
    starts: &[Vec<f64>],
) -> Result<LmFit> {
    let resid = |p: &[f64], w: Option<&Vec<Vec<f64>>>| -> Vec<f64> {
        let mut r = Vec::new();
        for (i, d) in sets.iter().enumerate() {
            for (k, (t, y)) in d.x.iter().zip(&d.y).enumerate() {
                let wk = w.map_or(1.0, |w| w[i][k]);
                r.push(wk * (model(p, i, *t) - y));
            }
        }
        r
    };
    let first = fit_multistart(ctx, |p: &[f64]| resid(p, None), starts, &lm_opts())?;
    if sets.iter().all(|d| d.y_err.is_none()) {
        return Ok(first);
    }
    let w: Vec<Vec<f64>> = sets
        .iter()
        .enumerate()
        .map(|(i, d)| {
            d.x.iter()
                .map(|t| {
                    let q = model(&first.params, i, *t).clamp(0.0, 1.0);
                    1.0 / (q * (1.0 - q)).max(1e-3).sqrt()
                })
                .collect()
        })
        .collect();
    Ok(lm_fit(ctx, |p: &[f64]| resid(p, Some(&w)), &first.params, &lm_opts()).unwrap_or(first))
}

fn check_rabi_sets(ctx: &str, sets: &[CalibDataset]) -> Result<()> {
    if sets.is_empty() {
        return Err(Error::fit(ctx, "no datasets"));
    }
    for d in sets {
        d.validate()?;
        if d.x.len() < 8 {
            return Err(Error::fit(ctx, "each dataset needs at least 8 time points"));
        }
        if d.range() < 0.05 {
            return Err(Error::fit(
                ctx,
                format!("no oscillation in the dataset at amplitude {}", d.meta.amplitude),
            ));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F0g1RabiFit {
    /// g̃ per dataset, rad/µs.
    pub g_tilde: Vec<Estimate>,
    pub lambda: Estimate,
    pub mu: Estimate,
    pub t0: Estimate,
    /// rad/µs.
    pub kappa: Estimate,
    pub shared: SharedFit,
}

fn f0g1_model(t: f64, lambda: f64, mu: f64, t0: f64, g: f64, kappa: f64, gamma: f64) -> f64 {
    lambda * two_level_pf((t - t0).max(0.0), g, kappa, gamma) + mu
}

/// Global fit of λ·P_f(t − t₀) + µ with P_f the lossy two-level
/// population; λ, µ, t₀ and κ are shared, g̃ is free per dataset and the
/// f-level decay `gamma` (rad/µs) is held fixed.
pub fn fit_f0g1_rabi(sets: &[CalibDataset], gamma: f64, kappa_guess: f64) -> Result<F0g1RabiFit> {
    let ctx = "f0-g1 rabi";
    check_rabi_sets(ctx, sets)?;
    let n = sets.len();
    let mut base = vec![1.0, 0.0, 0.0, kappa_guess];
    for d in sets {
        let w = dominant_frequency(&d.x, &d.y);
        base.push((0.5 * w).max(0.3 * kappa_guess));
    }
    let scaled: Vec<usize> = (3..4 + n).collect();
    let starts = perturbed_starts(&base, &scaled, 8);
    let model = |p: &[f64], i: usize, t: f64| f0g1_model(t, p[0], p[1], p[2], p[4 + i].abs(), p[3].abs(), gamma);
    let r = global_fit(ctx, sets, model, &starts)?;
    let mut names: Vec<String> = ["lambda", "mu", "t0", "kappa"].iter().map(|s| s.to_string()).collect();
    names.extend((0..n).map(|i| format!("g_tilde_{i}")));
    let mut fit = SharedFit::from_lm(names, &r);
    fit.values[3] = fit.values[3].abs();
    for i in 0..n {
        fit.values[4 + i] = fit.values[4 + i].abs();
    }
    let est = |i: usize| Estimate {
        value: fit.values[i],
        err: fit.covariance[i][i].max(0.0).sqrt(),
    };
    Ok(F0g1RabiFit {
        g_tilde: (0..n).map(|i| est(4 + i)).collect(),
        lambda: est(0),
        mu: est(1),
        t0: est(2),
        kappa: est(3),
        shared: fit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfRabiFit {
    /// Ω_fit per dataset exactly as it enters the model, rad/µs.
    pub omega_fit: Vec<Estimate>,
    pub gamma_a: Estimate,
    pub gamma_b: Estimate,
    pub t0: Estimate,
    pub shared: SharedFit,
}

pub fn ef_model(t: f64, gamma_a: f64, gamma_b: f64, t0: f64, omega: f64) -> f64 {
    let ts = t - t0;
    0.5 * (-gamma_a * ts).exp() * (1.0 - (-gamma_b * ts).exp() * (omega * ts / 2.0).cos())
}

/// Global fit of ½e^{−γa t*}(1 − e^{−γb t*}cos(Ω t*/2)), t* = t − t₀, with
/// γa, γb, t₀ shared and Ω free per dataset.
pub fn fit_ef_rabi(sets: &[CalibDataset]) -> Result<EfRabiFit> {
    let ctx = "e-f rabi";
    check_rabi_sets(ctx, sets)?;
    let n = sets.len();
    let mut base = vec![0.3, 0.3, 0.0];
    for d in sets {
        base.push(2.0 * dominant_frequency(&d.x, &d.y));
    }
    let scaled: Vec<usize> = (3..3 + n).collect();
    let mut starts = perturbed_starts(&base, &scaled, 8);
    for s in starts.iter_mut().skip(1) {
        // keep at least one start near the spectral estimate for each set
        for k in 3..3 + n {
            s[k] = 0.5 * (s[k] + base[k]);
        }
    }
    let model = |p: &[f64], i: usize, t: f64| ef_model(t, p[0], p[1], p[2], p[3 + i]);
    let r = global_fit(ctx, sets, model, &starts)?;
    let mut names: Vec<String> = ["gamma_a", "gamma_b", "t0"].iter().map(|s| s.to_string()).collect();
    names.extend((0..n).map(|i| format!("omega_fit_{i}")));
    let mut fit = SharedFit::from_lm(names, &r);
    for i in 0..n {
        fit.values[3 + i] = fit.values[3 + i].abs();
    }
    let est = |i: usize| Estimate {
        value: fit.values[i],
        err: fit.covariance[i][i].max(0.0).sqrt(),
    };
    let omega_fit: Vec<Estimate> = (0..n).map(|i| est(3 + i)).collect();
    for (o, d) in omega_fit.iter().zip(sets) {
        if !(o.err < 0.5 * o.value) {
            return Err(Error::fit(ctx, format!("rate at amplitude {} unresolved", d.meta.amplitude)));
        }
    }
    Ok(EfRabiFit {
        omega_fit,
        gamma_a: est(0),
        gamma_b: est(1),
        t0: est(2),
        shared: fit,
    })
}

/// Fitted value at one drive amplitude, in cyclic MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudePoint {
    pub amplitude: f64,
    pub value_mhz: f64,
    /// Half-width of the 95% confidence interval.
    pub ci95_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub stark_f0g1: QuadraticFit,
    pub stark_ef: QuadraticFit,
    pub rate_slope_f0g1: LinearFit,
    pub rate_slope_ef: LinearFit,
    pub kappa_fit: Frequency,
    pub kappa_err_mhz: f64,
    pub f0g1_shifts: Vec<AmplitudePoint>,
    pub ef_shifts: Vec<AmplitudePoint>,
    pub f0g1_rates: Vec<AmplitudePoint>,
    pub ef_rates: Vec<AmplitudePoint>,
    pub f0g1_fit: SharedFit,
    pub ef_fit: SharedFit,
}

impl CalibrationResult {
    /// Amplitudes and carrier offsets realising `target` (rates as matrix
    /// elements, detunings from the shifted transitions).
    pub fn drive_settings(&self, target: &DriveConfig) -> Result<DriveSettings> {
        let g = target.g_tilde.mhz();
        let w = target.omega_ef.mhz();
        let a = &self.rate_slope_f0g1;
        let b = &self.rate_slope_ef;
        if !(a.slope > 0.0) || !(b.slope > 0.0) {
            return Err(Error::InvalidParameter("calibrated slopes must be positive".into()));
        }
        let v_f0g1 = if g > 0.0 { ((g - a.intercept) / a.slope).max(0.0) } else { 0.0 };
        let v_ef = if w > 0.0 { ((w - b.intercept) / b.slope).max(0.0) } else { 0.0 };
        Ok(DriveSettings {
            v_f0g1,
            v_ef,
            f0g1_offset_mhz: self.stark_f0g1.eval(v_f0g1) + target.delta_f0g1.mhz(),
            ef_offset_mhz: self.stark_ef.eval(v_f0g1) + target.delta_ef.mhz(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Known f-level decay rate used in the f0-g1 model, 1/µs.
    pub gamma_f: f64,
    /// Starting guess for κ, rad/µs.
    pub kappa_guess: f64,
    pub stark_offset: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            gamma_f: 0.0,
            kappa_guess: 2.0 * PI * 8.0,
            stark_offset: false,
        }
    }
}

const Z95: f64 = 1.959_963_984_540_054;

fn peaks(sets: &[CalibDataset], exec: Exec) -> Result<Vec<AmplitudePoint>> {
    let fits = exec.try_map_range(sets.len(), |i| fit_gaussian_peak(&sets[i]))?;
    Ok(fits
        .iter()
        .zip(sets)
        .map(|(p, d)| AmplitudePoint {
            amplitude: d.meta.amplitude,
            value_mhz: p.center,
            ci95_mhz: Z95 * p.center_err,
        })
        .collect())
}

fn stark(points: &[AmplitudePoint], with_offset: bool) -> Result<QuadraticFit> {
    let v: Vec<f64> = points.iter().map(|p| p.amplitude).collect();
    let s: Vec<f64> = points.iter().map(|p| p.value_mhz).collect();
    fit_quadratic_stark(&v, &s, with_offset)
}

fn line(points: &[AmplitudePoint]) -> Result<LinearFit> {
    let v: Vec<f64> = points.iter().map(|p| p.amplitude).collect();
    let s: Vec<f64> = points.iter().map(|p| p.value_mhz).collect();
    fit_linear(&v, &s)
}

pub struct Step1 {
    pub shifts: Vec<AmplitudePoint>,
    pub stark: QuadraticFit,
}

pub struct Step2 {
    pub rates: Vec<AmplitudePoint>,
    pub slope: LinearFit,
    pub fit: SharedFit,
}

pub struct Step4 {
    pub rates: Vec<AmplitudePoint>,
    pub slope: LinearFit,
    pub kappa: Estimate,
    pub fit: SharedFit,
}

pub fn analyze_step1(sets: &[CalibDataset], opts: &AnalysisOptions, exec: Exec) -> Result<Step1> {
    let go = || -> Result<Step1> {
        let shifts = peaks(sets, exec)?;
        let stark = stark(&shifts, opts.stark_offset)?;
        Ok(Step1 { shifts, stark })
    };
    go().map_err(|e| e.at_step(1))
}

/// e-f drive rate = (population oscillation frequency)/2 = Ω_fit/4.
pub fn analyze_step2(sets: &[CalibDataset]) -> Result<Step2> {
    let go = || -> Result<Step2> {
        let f = fit_ef_rabi(sets)?;
        let rates: Vec<AmplitudePoint> = f
            .omega_fit
            .iter()
            .zip(sets)
            .map(|(o, d)| AmplitudePoint {
                amplitude: d.meta.amplitude,
                value_mhz: o.value / 4.0 / (2.0 * PI),
                ci95_mhz: Z95 * o.err / 4.0 / (2.0 * PI),
            })
            .collect();
        let slope = line(&rates)?;
        Ok(Step2 { rates, slope, fit: f.shared })
    };
    go().map_err(|e| e.at_step(2))
}

pub fn analyze_step3(sets: &[CalibDataset], opts: &AnalysisOptions, exec: Exec) -> Result<Step1> {
    let go = || -> Result<Step1> {
        let shifts = peaks(sets, exec)?;
        let stark = stark(&shifts, opts.stark_offset)?;
        Ok(Step1 { shifts, stark })
    };
    go().map_err(|e| e.at_step(3))
}

/// f0-g1 drive rate = fitted g̃, whose undamped population oscillation is 2g̃.
pub fn analyze_step4(sets: &[CalibDataset], opts: &AnalysisOptions) -> Result<Step4> {
    let go = || -> Result<Step4> {
        let f = fit_f0g1_rabi(sets, opts.gamma_f, opts.kappa_guess)?;
        let rates: Vec<AmplitudePoint> = f
            .g_tilde
            .iter()
            .zip(sets)
            .map(|(g, d)| AmplitudePoint {
                amplitude: d.meta.amplitude,
                value_mhz: g.value / (2.0 * PI),
                ci95_mhz: Z95 * g.err / (2.0 * PI),
            })
            .collect();
        let slope = line(&rates)?;
        Ok(Step4 { rates, slope, kappa: f.kappa, fit: f.shared })
    };
    go().map_err(|e| e.at_step(4))
}

fn assemble(s1: Step1, s2: Step2, s3: Step1, s4: Step4) -> CalibrationResult {
    CalibrationResult {
        stark_f0g1: s1.stark,
        stark_ef: s3.stark,
        rate_slope_f0g1: s4.slope,
        rate_slope_ef: s2.slope,
        kappa_fit: Frequency::from_rad_per_s(s4.kappa.value * 1e6),
        kappa_err_mhz: s4.kappa.err / (2.0 * PI),
        f0g1_shifts: s1.shifts,
        ef_shifts: s3.shifts,
        f0g1_rates: s4.rates,
        ef_rates: s2.rates,
        f0g1_fit: s4.fit,
        ef_fit: s2.fit,
    }
}

/// Analyses previously recorded data for all four steps.
pub fn analyze(steps: &[Option<Vec<CalibDataset>>; 4], opts: &AnalysisOptions, exec: Exec) -> Result<CalibrationResult> {
    let get = |k: usize| -> Result<&Vec<CalibDataset>> {
        match &steps[k] {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(Error::MissingStep(k as u8 + 1)),
        }
    };
    let (d1, d2, d3, d4) = (get(0)?, get(1)?, get(2)?, get(3)?);
    let s1 = analyze_step1(d1, opts, exec)?;
    let s2 = analyze_step2(d2)?;
    let s3 = analyze_step3(d3, opts, exec)?;
    let s4 = analyze_step4(d4, opts)?;
    Ok(assemble(s1, s2, s3, s4))
}

/// Analysis options an experimenter would use for this lab.
pub fn options_for(lab: &VirtualLab) -> AnalysisOptions {
    let p = &lab.truth.params;
    AnalysisOptions {
        gamma_f: if lab.truth.decoherence { p.gamma1_ef() * (1.0 + p.n_th) * 1e-6 } else { 0.0 },
        ..Default::default()
    }
}

/// Runs the four steps in order, each using the results of the earlier
/// ones to set carriers and amplitudes.
pub fn run_pipeline(lab: &VirtualLab, seed: u64) -> Result<CalibrationResult> {
    run_pipeline_with(lab, seed, &options_for(lab))
}

pub fn run_pipeline_with(lab: &VirtualLab, seed: u64, opts: &AnalysisOptions) -> Result<CalibrationResult> {
    let blind = StepPrior { stark_f0g1: 0.0, slope_ef: 0.0 };
    let s1 = analyze_step1(&lab.measure_step(1, &blind, seed)?, opts, lab.exec)?;
    let s2 = analyze_step2(&lab.measure_step(2, &blind, seed)?)?;
    let prior = StepPrior {
        stark_f0g1: s1.stark.c2,
        slope_ef: s2.slope.slope,
    };
    let s3 = analyze_step3(&lab.measure_step(3, &prior, seed)?, opts, lab.exec)?;
    let s4 = analyze_step4(&lab.measure_step(4, &prior, seed)?, opts)?;
    Ok(assemble(s1, s2, s3, s4))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(x: Vec<f64>, y: Vec<f64>, step: u8, amplitude: f64) -> CalibDataset {
        CalibDataset { x, y, y_err: None, meta: DatasetMeta { step, amplitude } }
    }

    #[test]
    fn gaussian_exact_recovery() {
        let x: Vec<f64> = (0..41).map(|i| -10.0 + 0.5 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.9 - 0.6 * (-(v + 2.3f64).powi(2) / (2.0 * 1.7f64.powi(2))).exp()).collect();
        let p = fit_gaussian_peak(&ds(x, y, 3, 0.1)).unwrap();
        assert!((p.center + 2.3).abs() < 2.3e-10, "{}", p.center);
        assert!((p.amplitude + 0.6).abs() < 1e-8);
    }

    #[test]
    fn gaussian_flat_fails() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(fit_gaussian_peak(&ds(x.clone(), vec![0.4; 20], 1, 0.1)).is_err());
        assert!(fit_gaussian_peak(&ds(x[..4].to_vec(), vec![0.1, 0.5, 0.2, 0.1], 1, 0.1)).is_err());
    }

    #[test]
    fn quadratic_exact() {
        let v = [0.1, 0.2, 0.3, 0.4];
        let s: Vec<f64> = v.iter().map(|x| -47.5 * x * x).collect();
        let q = fit_quadratic_stark(&v, &s, false).unwrap();
        assert!((q.c2 + 47.5).abs() < 1e-12 * 47.5);
        assert!(fit_quadratic_stark(&[0.2], &[1.0], false).is_err());
        assert!(fit_quadratic_stark(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], false).is_err());
    }

    #[test]
    fn f0g1_self_inverse() {
        let g = 2.0 * PI * 4.0;
        let k = 2.0 * PI * 9.0;
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 0.005).collect();
        let y: Vec<f64> = t.iter().map(|&t| two_level_pf(t, g, k, 0.5)).collect();
        let f = fit_f0g1_rabi(&[ds(t, y, 4, 0.3)], 0.5, 2.0 * PI * 8.0).unwrap();
        assert!((f.g_tilde[0].value / g - 1.0).abs() < 1e-6, "{:?}", f.g_tilde);
        assert!((f.kappa.value / k - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ef_self_inverse() {
        let sets: Vec<CalibDataset> = [5.0, 11.0, 17.0]
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let t: Vec<f64> = (0..80).map(|k| k as f64 * 0.015).collect();
                let y = t.iter().map(|&t| ef_model(t, 0.4, 0.7, 0.01, w)).collect();
                ds(t, y, 2, i as f64 + 1.0)
            })
            .collect();
        let f = fit_ef_rabi(&sets).unwrap();
        for (o, w) in f.omega_fit.iter().zip([5.0, 11.0, 17.0]) {
            assert!((o.value - w).abs() < 1e-6 * w, "{} {}", o.value, w);
        }
        assert!((f.t0.value - 0.01).abs() < 1e-7);
    }

    #[test]
    fn flat_rabi_fails() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.05).collect();
        let r = fit_ef_rabi(&[ds(t, vec![0.001; 20], 2, 0.01)]);
        assert!(matches!(r, Err(Error::FitFailure { .. })));
    }
}

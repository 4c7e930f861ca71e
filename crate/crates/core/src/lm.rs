//! Levenberg–Marquardt least squares with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the relative reduction of χ² falls below this.
    pub ftol: f64,
    /// Stop when the relative parameter step falls below this.
    pub xtol: f64,
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 500,
            ftol: 1e-12,
            xtol: 1e-10,
            lambda0: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Σ r², with residuals as returned by the model (already weighted).
    pub chi2: f64,
    pub dof: usize,
    /// (JᵀJ)⁻¹ scaled by χ²/dof.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
}

impl LmFit {
    pub fn stderr(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
}

fn sumsq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn jacobian<F>(f: &F, p: &[f64], r0: &[f64]) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = r0.len();
    let mut j = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-7 * p[k].abs().max(1e-7);
        q[k] = p[k] + h;
        let rp = f(&q);
        q[k] = p[k] - h;
        let rm = f(&q);
        q[k] = p[k];
        if rp.len() != m || rm.len() != m {
            return None;
        }
        for i in 0..m {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    j.iter().all(|v| v.is_finite()).then_some(j)
}

/// Minimises Σ rᵢ(p)² starting from `p0`. `context` labels failures.
pub fn fit<F>(context: &str, f: F, p0: &[f64], opts: &LmOptions) -> Result<LmFit>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = f(&p);
    let m = r.len();
    if m < n {
        return Err(Error::fit(context, format!("{m} points for {n} parameters")));
    }
    let mut chi2 = sumsq(&r);
    if !chi2.is_finite() {
        return Err(Error::fit(context, "non-finite residual at start"));
    }
    let mut lambda = opts.lambda0;
    let mut iterations = 0;
    let mut jac = jacobian(&f, &p, &r).ok_or_else(|| Error::fit(context, "non-finite Jacobian"))?;

    while iterations < opts.max_iter {
        iterations += 1;
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let mut improved = false;
        let mut small_step = false;
        for _ in 0..40 {
            let mut aa = a.clone();
            for k in 0..n {
                aa[(k, k)] += lambda * a[(k, k)].max(1e-30);
            }
            let Some(step) = aa.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rq = f(&q);
            let c2 = sumsq(&rq);
            if c2.is_finite() && c2 <= chi2 {
                let rel = (chi2 - c2) / chi2.max(1e-300);
                small_step = step
                    .iter()
                    .zip(&p)
                    .all(|(s, x)| s.abs() <= opts.xtol * (x.abs() + opts.xtol));
                p = q;
                r = rq;
                chi2 = c2;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < opts.ftol {
                    small_step = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved || small_step {
            break;
        }
        jac = jacobian(&f, &p, &r).ok_or_else(|| Error::fit(context, "non-finite Jacobian"))?;
    }

    let jac = jacobian(&f, &p, &r).ok_or_else(|| Error::fit(context, "non-finite Jacobian"))?;
    let a = jac.transpose() * &jac;
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::fit(context, "singular normal matrix"))?;
    let dof = m - n;
    let s2 = if dof > 0 { chi2 / dof as f64 } else { 0.0 };
    let covariance = inv * s2;
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::fit(context, "non-finite covariance"));
    }
    Ok(LmFit {
        params: p,
        chi2,
        dof,
        covariance,
        iterations,
    })
}

/// Runs [`fit`] from each start and keeps the lowest χ². Ties go to the
/// earlier start.
pub fn fit_multistart<F>(context: &str, f: F, starts: &[Vec<f64>], opts: &LmOptions) -> Result<LmFit>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut best: Option<LmFit> = None;
    let mut last_err = None;
    for s in starts {
        match fit(context, &f, s, opts) {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.chi2 < b.chi2) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::fit(context, "no starting points")))
}

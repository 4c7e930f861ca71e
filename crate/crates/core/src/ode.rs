//! Adaptive Dormand–Prince 5(4) integrator for complex linear systems.

use crate::error::{Error, Result};
use crate::ops::C64;

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen from the right-hand side when `None`.
    pub h0: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-8,
            h0: None,
            h_min: 1e-22,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂ for the embedded fourth-order error estimate
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy_into(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for i in 0..out.len() {
        let mut acc = C64::new(0.0, 0.0);
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        out[i] = y[i] + acc * h;
    }
}

/// Integrates y' = f(t, y) from `t0`, returning the state at each of the
/// (sorted, ≥ t0) output times. Steps are shortened to land exactly on
/// output times.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[C64],
    t_out: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<Vec<C64>>, OdeStats)>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    if t_out.iter().any(|&t| t < t0) || t_out.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter(
            "output times must be sorted and not precede the start time".into(),
        ));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(t_out.len());

    let mut k1 = vec![C64::new(0.0, 0.0); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut k5 = k1.clone();
    let mut k6 = k1.clone();
    let mut k7 = k1.clone();
    let mut tmp = k1.clone();
    let mut y_new = k1.clone();

    f(t, &y, &mut k1);
    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            let d0 = y.iter().map(|z| z.norm()).fold(0.0, f64::max).max(opts.atol);
            let d1 = k1.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if d1 > 0.0 {
                0.01 * d0 / d1
            } else {
                1e-9
            }
        }
    };

    for &target in t_out {
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::IntegrationFailure {
                    t,
                    step: h,
                    reason: format!("exceeded {} steps", opts.max_steps),
                });
            }
            let remaining = target - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };

            axpy_into(&mut tmp, &y, step, &[(A21, &k1)]);
            f(t + C2 * step, &tmp, &mut k2);
            axpy_into(&mut tmp, &y, step, &[(A31, &k1), (A32, &k2)]);
            f(t + C3 * step, &tmp, &mut k3);
            axpy_into(&mut tmp, &y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            f(t + C4 * step, &tmp, &mut k4);
            axpy_into(&mut tmp, &y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            f(t + C5 * step, &tmp, &mut k5);
            axpy_into(
                &mut tmp,
                &y,
                step,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            f(t + step, &tmp, &mut k6);
            axpy_into(
                &mut y_new,
                &y,
                step,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            f(t + step, &y_new, &mut k7);

            let mut err = 0.0f64;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                    * step;
                let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                err = err.max(e.norm() / sc);
            }
            if !err.is_finite() {
                return Err(Error::IntegrationFailure {
                    t,
                    step,
                    reason: "non-finite state".into(),
                });
            }

            if err <= 1.0 {
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7);
                stats.accepted += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a truncated final step says nothing about the natural step size
                if !last || fac < 1.0 {
                    h = step * fac;
                }
            } else {
                stats.rejected += 1;
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
            if h < opts.h_min {
                return Err(Error::IntegrationFailure {
                    t,
                    step: h,
                    reason: "step size underflow".into(),
                });
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        // y' = iωy
        let w = 3.0;
        let ts: Vec<f64> = (1..=10).map(|i| i as f64 * 0.7).collect();
        let (ys, _) = integrate(
            |_, y, dy| dy[0] = y[0] * C64::new(0.0, w),
            0.0,
            &[C64::new(1.0, 0.0)],
            &ts,
            &OdeOptions::with_tol(1e-10),
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            let exact = C64::from_polar(1.0, w * t);
            assert!((y[0] - exact).norm() < 1e-8);
        }
    }

    #[test]
    fn error_scales_with_tolerance() {
        let exact = (-2.0f64).exp() * (C64::new(0.0, 5.0 * 2.0)).exp();
        let mut prev = f64::INFINITY;
        for tol in [1e-5, 1e-7, 1e-9] {
            let (ys, _) = integrate(
                |_, y, dy| dy[0] = y[0] * C64::new(-1.0, 5.0),
                0.0,
                &[C64::new(1.0, 0.0)],
                &[2.0],
                &OdeOptions::with_tol(tol),
            )
            .unwrap();
            let e = (ys[0][0] - exact).norm();
            assert!(e < prev);
            assert!(e < 100.0 * tol);
            prev = e;
        }
    }

    #[test]
    fn rejects_unsorted_output() {
        let r = integrate(|_, _, _| {}, 0.0, &[C64::new(1.0, 0.0)], &[1.0, 0.5], &OdeOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn step_underflow_reported() {
        // finite-time blow-up forces the step size to zero
        let opts = OdeOptions {
            h_min: 1e-12,
            ..OdeOptions::with_tol(1e-10)
        };
        let r = integrate(
            |_, y, dy| dy[0] = y[0] * y[0],
            0.0,
            &[C64::new(1.0, 0.0)],
            &[2.0],
            &opts,
        );
        assert!(matches!(r, Err(Error::IntegrationFailure { .. })));
    }
}

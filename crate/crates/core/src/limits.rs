//! Steady-state limits on the reset: thermal re-excitation, a hot reset
//! resonator and off-resonant leakage of the e-f drive.

use serde::{Deserialize, Serialize};

use crate::effective::{build_h3, reset_rate, EffBasis, EffectiveH};
use crate::error::{Error, Result};
use crate::params::{DriveConfig, SystemParams};
use crate::units::Frequency;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;

fn excited_population(h: &EffectiveH, t: f64) -> f64 {
    let psi = h.propagator(t).column(EffBasis::E0 as usize).into_owned();
    psi[0].norm_sqr() + psi[1].norm_sqr()
}

fn norm_sq(h: &EffectiveH, t: f64) -> f64 {
    h.propagator(t)
        .column(EffBasis::E0 as usize)
        .iter()
        .map(|z| z.norm_sqr())
        .sum()
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson(f, a, fa, m, fm, lm, flm, left, eps / 2.0, depth - 1)
        + simpson(f, m, fm, b, fb, rm, frm, right, eps / 2.0, depth - 1)
}

/// ∫ₐᵇ f with adaptive Simpson; the interval is pre-split into `panels`
/// so that oscillations are resolved before refinement starts.
fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, eps: f64) -> f64 {
    let w = (b - a) / panels as f64;
    let mut sum = 0.0;
    for k in 0..panels {
        let x0 = a + k as f64 * w;
        let x1 = x0 + w;
        let xm = 0.5 * (x0 + x1);
        let (f0, f1, fm) = (f(x0), f(x1), f(xm));
        let whole = w / 6.0 * (f0 + 4.0 * fm + f1);
        sum += simpson(&f, x0, f0, x1, f1, xm, fm, whole, eps / panels as f64, 40);
    }
    sum
}

/// Steady excitation sustained by thermal jumps at rate `k_up`, each
/// followed by the effective-model reset from |e,0⟩:
/// k_up·∫₀^∞ (P_e + P_f) dτ.
///
/// The integral is truncated at a time T ≤ `t_max` where the remaining
/// weight, bounded by the total surviving norm over Γ, falls below `tol`;
/// that bound is added to the result.
pub fn thermal_ceiling(
    drives: &DriveConfig,
    kappa: Frequency,
    k_up: Frequency,
    t_max: f64,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) || !(t_max > 0.0) {
        return Err(Error::InvalidParameter("tolerance and t_max must be positive".into()));
    }
    let k = k_up.rad_per_s();
    if !(k >= 0.0) {
        return Err(Error::InvalidParameter("k_up must be >= 0".into()));
    }
    let h = build_h3(drives, kappa)?;
    let gamma = reset_rate(drives.g_tilde, drives.omega_ef, kappa).rad_per_s();
    if !(gamma > 0.0) {
        return Err(Error::DivergentIntegral);
    }
    if k == 0.0 {
        return Ok(0.0);
    }
    let mut t_end = (10.0 / gamma).min(t_max);
    while k * norm_sq(&h, t_end) / gamma > 0.5 * tol && t_end < t_max {
        t_end = (2.0 * t_end).min(t_max);
    }
    let tail = norm_sq(&h, t_end) / gamma;
    // fastest scale in the problem sets the initial panel width
    let w_max = h.matrix.iter().map(|z| z.norm()).fold(gamma, f64::max);
    let panels = ((t_end * w_max / 2.0).ceil() as usize).clamp(16, 100_000);
    let body = integrate_adaptive(|t| excited_population(&h, t), 0.0, t_end, panels, 0.25 * tol / k);
    Ok(k * (body + tail))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonatorLimit {
    /// Effective transmon temperature T_rr·ω_ge/ω_r (K).
    pub t_transmon: f64,
    pub population: f64,
    /// Thermal re-population of |g,1⟩ from |g,0⟩, κ·exp(−ħω_r/k_B T_rr), rad/s.
    pub reverse_rate: f64,
}

/// Transmon excitation when the reset is limited by a resonator at `t_rr` kelvin.
pub fn resonator_limit(t_rr: f64, params: &SystemParams) -> Result<ResonatorLimit> {
    if !(t_rr >= 0.0) || !t_rr.is_finite() {
        return Err(Error::InvalidParameter("resonator temperature must be >= 0".into()));
    }
    let w_ge = params.omega_ge.rad_per_s();
    let w_r = params.omega_r.rad_per_s();
    let t_q = t_rr * w_ge / w_r;
    if t_rr == 0.0 {
        return Ok(ResonatorLimit {
            t_transmon: 0.0,
            population: 0.0,
            reverse_rate: 0.0,
        });
    }
    let boltz = (-HBAR * w_ge / (K_B * t_q)).exp();
    Ok(ResonatorLimit {
        t_transmon: t_q,
        population: boltz / (1.0 + boltz),
        reverse_rate: params.kappa.rad_per_s() * (-HBAR * w_r / (K_B * t_rr)).exp(),
    })
}

/// Order-of-magnitude excitation from the e-f drive acting off-resonantly
/// on g-e: Ω²/(Ω² + α²)·Ω/Γ.
pub fn ef_leakage(omega_ef: Frequency, alpha: Frequency, gamma_reset: Frequency) -> Result<f64> {
    let g = gamma_reset.rad_per_s();
    if !(g > 0.0) {
        return Err(Error::InvalidParameter("reset rate must be positive".into()));
    }
    let w = omega_ef.rad_per_s().abs();
    let a = alpha.rad_per_s();
    if w == 0.0 {
        return Ok(0.0);
    }
    Ok(w * w / (w * w + a * a) * w / g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Thermal,
    Resonator,
    EfLeakage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub p_thermal_ceiling: f64,
    pub p_resonator_limit: f64,
    /// Estimate-grade only.
    pub p_ef_leakage: f64,
    pub dominant: Mechanism,
}

#[derive(Clone, Copy, Debug)]
pub struct LimitOptions {
    pub t_rr: f64,
    pub t_max: f64,
    pub tol: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions {
            t_rr: 0.05,
            t_max: 1e-3,
            tol: 1e-8,
        }
    }
}

pub fn limit_report(params: &SystemParams, drives: &DriveConfig, opts: &LimitOptions) -> Result<LimitReport> {
    params.validate()?;
    drives.validate()?;
    let gamma = reset_rate(drives.g_tilde, drives.omega_ef, params.kappa);
    let th = thermal_ceiling(drives, params.kappa, params.k_up, opts.t_max, opts.tol)?;
    let rr = resonator_limit(opts.t_rr, params)?.population;
    let leak = ef_leakage(drives.omega_ef, params.alpha, gamma)?;
    // ties resolve in declaration order
    let mut dominant = Mechanism::Thermal;
    let mut best = th;
    if rr > best {
        dominant = Mechanism::Resonator;
        best = rr;
    }
    if leak > best {
        dominant = Mechanism::EfLeakage;
    }
    Ok(LimitReport {
        p_thermal_ceiling: th.clamp(0.0, 1.0),
        p_resonator_limit: rr.clamp(0.0, 1.0),
        p_ef_leakage: leak.clamp(0.0, 1.0),
        dominant,
    })
}

//! Three-level non-Hermitian reset model and the lossy f0-g1 two-level model.
//!
//! The reset Hamiltonian acts on (|e,0⟩, |f,0⟩, |g,1⟩):
//!
//! ```text
//!     ⎡ 0      Ω_ef   0     ⎤
//! H = ⎢ Ω_ef*  0      g̃     ⎥
//!     ⎣ 0      g̃*    −iκ/2  ⎦
//! ```
//!
//! The loss enters with a negative imaginary part so that exp(−iHt)
//! decays; the reset rate Γ = 2·min|Im λᵢ| does not depend on that sign.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix3, Schur, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ops::{C64, I, ZERO};
use crate::params::DriveConfig;
use crate::trajectory::PopulationTrajectory;
use crate::units::Frequency;

/// Basis state of the effective model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffBasis {
    E0 = 0,
    F0 = 1,
    G1 = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveH {
    pub matrix: Matrix3<C64>,
    pub kappa: Frequency,
    pub drives: DriveConfig,
}

pub fn build_h3(drives: &DriveConfig, kappa: Frequency) -> Result<EffectiveH> {
    if !(kappa.rad_per_s() >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "kappa must be non-negative, got {kappa}"
        )));
    }
    drives.validate()?;
    let om = C64::new(drives.omega_ef.rad_per_s(), 0.0);
    let g = C64::new(drives.g_tilde.rad_per_s(), 0.0);
    let d_f = -drives.delta_f0g1.rad_per_s();
    let d_e = d_f - drives.delta_ef.rad_per_s();
    #[rustfmt::skip]
    let matrix = Matrix3::new(
        C64::new(d_e, 0.0), om,                  ZERO,
        om.conj(),          C64::new(d_f, 0.0),  g,
        ZERO,               g.conj(),            C64::new(0.0, -0.5 * kappa.rad_per_s()),
    );
    Ok(EffectiveH {
        matrix,
        kappa,
        drives: *drives,
    })
}

impl EffectiveH {
    pub fn eigenvalues(&self) -> [C64; 3] {
        eigenvalues3(&self.matrix)
    }

    /// exp(−iHt)
    pub fn propagator(&self, t: f64) -> Matrix3<C64> {
        (self.matrix * C64::new(0.0, -t)).exp()
    }
}

/// Eigenvalues of a general complex 3×3 matrix.
///
/// Reads them off a complex Schur form, resolving any 2×2 block left on the
/// diagonal with the quadratic formula. Falls back to the characteristic
/// polynomial when the QR iteration does not converge.
pub fn eigenvalues3(m: &Matrix3<C64>) -> [C64; 3] {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return [ZERO; 3];
    }
    let ms = m / C64::new(scale, 0.0);
    let vals = match Schur::try_new(ms, 1e-15, 1000) {
        Some(schur) => {
            let (_, t) = schur.unpack();
            schur_diagonal(&t)
        }
        None => polynomial_roots3(&ms),
    };
    vals.map(|z| z * scale)
}

fn schur_diagonal(t: &Matrix3<C64>) -> [C64; 3] {
    let mut out = [ZERO; 3];
    let mut i = 0;
    while i < 3 {
        if i + 1 < 3 && t[(i + 1, i)].norm() > 1e-14 * (t[(i, i)].norm() + t[(i + 1, i + 1)].norm() + 1e-300) {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let half_tr = (a + d) * 0.5;
            let disc = ((a - d) * 0.5 * ((a - d) * 0.5) + b * c).sqrt();
            out[i] = half_tr + disc;
            out[i + 1] = half_tr - disc;
            i += 2;
        } else {
            out[i] = t[(i, i)];
            i += 1;
        }
    }
    out
}

/// Roots of det(λ − M) by Durand–Kerner iteration followed by Newton polishing.
fn polynomial_roots3(m: &Matrix3<C64>) -> [C64; 3] {
    let tr = m.trace();
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
        + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
    let det = m.determinant();
    let p = |z: C64| ((z - tr) * z + minors) * z - det;
    let dp = |z: C64| (z * 3.0 - tr * 2.0) * z + minors;
    let mut r = [
        C64::new(0.4, 0.9),
        C64::new(0.4, 0.9).powu(2),
        C64::new(0.4, 0.9).powu(3),
    ];
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..3 {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..3 {
                if i != j {
                    denom *= r[i] - r[j];
                }
            }
            if denom.norm() == 0.0 {
                denom = C64::new(1e-12, 0.0);
            }
            let step = p(r[i]) / denom;
            r[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    for z in r.iter_mut() {
        for _ in 0..3 {
            let d = dp(*z);
            if d.norm() > 1e-300 {
                *z -= p(*z) / d;
            }
        }
    }
    r
}

/// Decay rates 2·|Im λᵢ| toward the dark state, ascending.
pub fn decay_rates(h: &EffectiveH) -> [Frequency; 3] {
    let mut r = h.eigenvalues().map(|l| 2.0 * l.im.abs());
    r.sort_by(|a, b| a.total_cmp(b));
    r.map(Frequency::from_rad_per_s)
}

/// Γ = 2·min|Im λᵢ| for resonant drives.
pub fn reset_rate(g_tilde: Frequency, omega_ef: Frequency, kappa: Frequency) -> Frequency {
    let drives = DriveConfig::resonant(g_tilde.abs(), omega_ef.abs());
    match build_h3(&drives, kappa) {
        Ok(h) => decay_rates(&h)[0],
        Err(_) => Frequency::ZERO,
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Ω_ef maximizing Γ at fixed g̃.
///
/// A 16-point scan over [0, 3g̃] brackets the ridge, then golden-section
/// search refines it to 10⁻⁴ relative.
pub fn optimal_ef_rate(g_tilde: Frequency, kappa: Frequency) -> Result<Frequency> {
    let g = g_tilde.rad_per_s().abs();
    if !(g > 0.0) {
        return Err(Error::InvalidParameter("optimal_ef_rate needs g̃ > 0".into()));
    }
    let gamma = |w: f64| reset_rate(g_tilde, Frequency::from_rad_per_s(w), kappa).rad_per_s();
    let n = 16;
    let hi = 3.0 * g;
    let xs: Vec<f64> = (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect();
    let best = (0..n)
        .max_by(|&a, &b| gamma(xs[a]).total_cmp(&gamma(xs[b])))
        .unwrap_or(0);
    let mut a = xs[best.saturating_sub(1)];
    let mut b = xs[(best + 1).min(n - 1)];
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (gamma(c), gamma(d));
    while (b - a) > 1e-5 * (a + b).abs().max(1e-12 * g) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = gamma(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = gamma(d);
        }
    }
    Ok(Frequency::from_rad_per_s(0.5 * (a + b)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgePoint {
    pub g_tilde: Frequency,
    /// Best Ω_ef among the grid columns.
    pub grid_omega_ef: Frequency,
    pub grid_gamma: Frequency,
    /// Refined maximizer (None at g̃ = 0).
    pub omega_ef_opt: Option<Frequency>,
    pub gamma_opt: Option<Frequency>,
}

/// Γ over a (g̃, Ω_ef) grid. `gamma[i][j]` belongs to `g_tilde_axis[i]`,
/// `omega_ef_axis[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResetRateLandscape {
    pub kappa: Frequency,
    pub g_tilde_axis: Vec<Frequency>,
    pub omega_ef_axis: Vec<Frequency>,
    pub gamma: Vec<Vec<Frequency>>,
    pub ridge: Vec<RidgePoint>,
}

impl ResetRateLandscape {
    pub fn max(&self) -> (usize, usize, Frequency) {
        let mut best = (0, 0, Frequency::ZERO);
        for (i, row) in self.gamma.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        best
    }

    /// Ridge entry for the grid row closest to `g_tilde`.
    pub fn ridge_near(&self, g_tilde: Frequency) -> Option<&RidgePoint> {
        self.ridge.iter().min_by(|a, b| {
            (a.g_tilde - g_tilde)
                .abs()
                .rad_per_s()
                .total_cmp(&(b.g_tilde - g_tilde).abs().rad_per_s())
        })
    }
}

pub fn landscape(
    g_axis: &[Frequency],
    ef_axis: &[Frequency],
    kappa: Frequency,
    exec: Exec,
) -> Result<ResetRateLandscape> {
    if g_axis.is_empty() || ef_axis.is_empty() {
        return Err(Error::InvalidParameter("landscape grids must be non-empty".into()));
    }
    if g_axis.iter().chain(ef_axis).any(|f| !(f.rad_per_s() >= 0.0) || !f.is_finite()) {
        return Err(Error::InvalidParameter(
            "landscape grid values must be non-negative".into(),
        ));
    }
    if !(kappa.rad_per_s() > 0.0) {
        return Err(Error::InvalidParameter("kappa must be positive".into()));
    }
    let n_ef = ef_axis.len();
    let flat = exec.map_range(g_axis.len() * n_ef, |k| {
        reset_rate(g_axis[k / n_ef], ef_axis[k % n_ef], kappa)
    });
    let gamma: Vec<Vec<Frequency>> = flat.chunks(n_ef).map(|c| c.to_vec()).collect();
    let ridge = exec.map_range(g_axis.len(), |i| {
        let row = &gamma[i];
        let j = (0..n_ef)
            .max_by(|&a, &b| row[a].rad_per_s().total_cmp(&row[b].rad_per_s()))
            .unwrap_or(0);
        let opt = optimal_ef_rate(g_axis[i], kappa).ok();
        RidgePoint {
            g_tilde: g_axis[i],
            grid_omega_ef: ef_axis[j],
            grid_gamma: row[j],
            omega_ef_opt: opt,
            gamma_opt: opt.map(|w| reset_rate(g_axis[i], w, kappa)),
        }
    });
    Ok(ResetRateLandscape {
        kappa,
        g_tilde_axis: g_axis.to_vec(),
        omega_ef_axis: ef_axis.to_vec(),
        gamma,
        ridge,
    })
}

/// Populations of (|e,0⟩, |f,0⟩, |g,1⟩) at each time.
pub fn propagate_h3_basis(h: &EffectiveH, initial: EffBasis, times: &[f64]) -> Result<Vec<[f64; 3]>> {
    check_times(times)?;
    let mut psi0 = Vector3::zeros();
    psi0[initial as usize] = C64::new(1.0, 0.0);
    Ok(times
        .iter()
        .map(|&t| {
            let psi = h.propagator(t) * psi0;
            [psi[0].norm_sqr(), psi[1].norm_sqr(), psi[2].norm_sqr()]
        })
        .collect())
}

/// Effective-model trajectory as transmon populations.
///
/// P_e = |⟨e,0|ψ⟩|², P_f = |⟨f,0|ψ⟩|² and P_g = 1 − P_e − P_f, which
/// includes both |g,1⟩ and the population already in the dark state
/// |g,0⟩. The photon number is |⟨g,1|ψ⟩|².
pub fn propagate_h3(h: &EffectiveH, initial: EffBasis, times: &[f64]) -> Result<PopulationTrajectory> {
    let basis = propagate_h3_basis(h, initial, times)?;
    Ok(PopulationTrajectory {
        times: times.to_vec(),
        pops: basis.iter().map(|p| [1.0 - p[0] - p[1], p[0], p[1]]).collect(),
        photon: basis.iter().map(|p| p[2]).collect(),
    })
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("times must be sorted and non-negative".into()));
    }
    Ok(())
}

/// sinh(z)/z, finite at the origin.
fn sinhc(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        C64::new(1.0, 0.0) + z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sinh() / z
    }
}

/// f-state population of the lossy f0-g1 two-level model starting in |f,0⟩:
///
/// P_f(t) = e^{−(κ+γ)t/2} |cosh(Ωt/2) + (κ−γ)/(2Ω)·sinh(Ωt/2)|²,
/// Ω = sqrt(−(2g̃)² + (κ−γ)²/4), evaluated in complex arithmetic so the
/// under- and overdamped regimes share one expression.
///
/// Arguments in consistent units (rad/s with seconds, or rad/µs with µs).
pub fn two_level_pf(t: f64, g_tilde: f64, kappa: f64, gamma: f64) -> f64 {
    let d = kappa - gamma;
    let omega = C64::new(-(2.0 * g_tilde).powi(2) + 0.25 * d * d, 0.0).sqrt();
    let x = omega * (0.5 * t);
    let amp = x.cosh() + C64::new(0.5 * d * 0.5 * t, 0.0) * sinhc(x);
    (-(kappa + gamma) * t * 0.5).exp() * amp.norm_sqr()
}

/// Same population by direct propagation of the 2×2 non-Hermitian
/// Hamiltonian [[−iγ/2, g̃], [g̃, −iκ/2]] on (|f,0⟩, |g,1⟩).
pub fn two_level_pf_propagated(t: f64, g_tilde: f64, kappa: f64, gamma: f64) -> f64 {
    let g = C64::new(g_tilde, 0.0);
    let h = Matrix2::new(-I * (0.5 * gamma), g, g, -I * (0.5 * kappa));
    let u = (h * C64::new(0.0, -t)).exp();
    let psi = u * Vector2::new(C64::new(1.0, 0.0), ZERO);
    psi[0].norm_sqr()
}

/// Γ of the configuration expressed as cyclic MHz; convenience for reports.
pub fn reset_rate_mhz(omega_ef_mhz: f64, g_tilde_mhz: f64, kappa_mhz: f64) -> f64 {
    reset_rate(
        Frequency::from_mhz(g_tilde_mhz),
        Frequency::from_mhz(omega_ef_mhz),
        Frequency::from_mhz(kappa_mhz),
    )
    .rad_per_s()
        / (TAU * 1e6)
}

//! Driven-dissipative master equation for a three-level transmon coupled to
//! a truncated resonator, in the frame where both reset drives are static.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::effective::{build_h3, propagate_h3_basis, reset_rate, EffBasis};
use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::ops::{resonator_lowering, tensor, transmon_lowering, QOperator, QState, C64, I, ONE, ZERO};
use crate::params::{DriveConfig, SystemParams};
use crate::trajectory::{linspace, PopulationTrajectory};

pub const N_TRANSMON: usize = 3;

/// Time dependence shared by both drive amplitudes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Envelope {
    #[default]
    Square,
    /// sin² ramps of length `rise` at both ends of [start, stop] (seconds).
    RaisedCosine { start: f64, rise: f64, stop: f64 },
}

impl Envelope {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Envelope::Square => 1.0,
            Envelope::RaisedCosine { start, rise, stop } => {
                if t <= start || t >= stop {
                    0.0
                } else if rise <= 0.0 {
                    1.0
                } else {
                    let edge = (t - start).min(stop - t);
                    if edge >= rise {
                        1.0
                    } else {
                        let s = (std::f64::consts::FRAC_PI_2 * edge / rise).sin();
                        s * s
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrivenModel {
    pub params: SystemParams,
    pub drives: DriveConfig,
    pub n_fock: usize,
    /// When false only the external resonator loss κ remains.
    pub decoherence: bool,
    pub envelope: Envelope,
}

impl DrivenModel {
    pub fn new(params: SystemParams, drives: DriveConfig) -> Self {
        DrivenModel {
            params,
            drives,
            n_fock: 3,
            decoherence: true,
            envelope: Envelope::Square,
        }
    }

    pub fn with_fock(mut self, n_fock: usize) -> Self {
        self.n_fock = n_fock;
        self
    }

    pub fn without_decoherence(mut self) -> Self {
        self.decoherence = false;
        self
    }

    pub fn with_drives(mut self, drives: DriveConfig) -> Self {
        self.drives = drives;
        self
    }

    pub fn dim(&self) -> usize {
        N_TRANSMON * self.n_fock
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fock < 2 {
            return Err(Error::InvalidDimension(format!(
                "resonator truncation must be at least 2, got {}",
                self.n_fock
            )));
        }
        self.params.validate()?;
        self.drives.validate()
    }

    fn b(&self) -> Result<QOperator> {
        Ok(tensor(&transmon_lowering(N_TRANSMON)?, &QOperator::identity(self.n_fock)))
    }

    fn a(&self) -> Result<QOperator> {
        Ok(tensor(&QOperator::identity(N_TRANSMON), &resonator_lowering(self.n_fock)?))
    }

    fn level_projector(&self, s: usize) -> QOperator {
        tensor(
            &QOperator::ket_bra(N_TRANSMON, s, s),
            &QOperator::identity(self.n_fock),
        )
    }

    /// Static part: transmon ladder, dispersive shift and detunings.
    fn h_static(&self) -> Result<QOperator> {
        let b = self.b()?;
        let a = self.a()?;
        let bd = b.dagger();
        let ad = a.dagger();
        let alpha = self.params.alpha.rad_per_s();
        let chi = self.params.chi_r.rad_per_s();
        let nb = &bd * &b;
        let mut h = nb.scale_re(-alpha / 2.0);
        h = &h + &(&(&bd * &bd) * &(&b * &b)).scale_re(alpha / 2.0);
        h = &h + &(&(&ad * &a) * &nb).scale_re(2.0 * chi);
        let d_f = -self.drives.delta_f0g1.rad_per_s();
        let d_e = d_f - self.drives.delta_ef.rad_per_s();
        h = &h + &self.level_projector(1).scale_re(d_e);
        h = &h + &self.level_projector(2).scale_re(d_f);
        Ok(h)
    }

    /// (g̃/√2)(b†b†a + a†bb) at unit envelope.
    fn h_f0g1(&self) -> Result<QOperator> {
        let b = self.b()?;
        let a = self.a()?;
        let bd = b.dagger();
        let up = &(&bd * &bd) * &a;
        let v = &up + &up.dagger();
        Ok(v.scale_re(self.drives.g_tilde.rad_per_s() / std::f64::consts::SQRT_2))
    }

    /// (Ω/√2)·b; the drive term is W e^{iαt/2} + W† e^{−iαt/2}.
    fn w_ef(&self) -> Result<QOperator> {
        Ok(self
            .b()?
            .scale_re(self.drives.omega_ef.rad_per_s() / std::f64::consts::SQRT_2))
    }
}

/// Full Hamiltonian (rad/s) at time `t`.
pub fn hamiltonian_at(model: &DrivenModel, t: f64) -> Result<QOperator> {
    model.validate()?;
    let e = model.envelope.at(t);
    let w = model.w_ef()?;
    let phase = C64::from_polar(1.0, model.params.alpha.rad_per_s() * t / 2.0);
    let drive = &w.scale(phase * e) + &w.dagger().scale(phase.conj() * e);
    Ok(&(&model.h_static()? + &model.h_f0g1()?.scale_re(e)) + &drive)
}

#[derive(Clone, Debug)]
pub struct Channel {
    pub name: &'static str,
    pub rate: f64,
    pub op: QOperator,
}

/// The eight collapse channels, in a fixed order. Rates are in 1/s and
/// zeroed (except κ) when decoherence is switched off.
pub fn dissipators(model: &DrivenModel) -> Result<Vec<Channel>> {
    model.validate()?;
    let p = &model.params;
    let n = p.n_th;
    let d = model.n_fock;
    let id_r = QOperator::identity(d);
    let sig = |i: usize, j: usize| tensor(&QOperator::ket_bra(N_TRANSMON, i, j), &id_r);
    let on = if model.decoherence { 1.0 } else { 0.0 };
    let z_ge = &sig(1, 1) - &sig(0, 0);
    let z_ef = &sig(2, 2) - &sig(1, 1);
    let g_ge = p.gamma1_ge();
    let g_ef = p.gamma1_ef();
    let list = vec![
        Channel { name: "kappa", rate: p.kappa.rad_per_s(), op: model.a()? },
        Channel { name: "kappa_int", rate: on * p.kappa_int.rad_per_s(), op: model.a()? },
        Channel { name: "decay_ge", rate: on * g_ge * (1.0 + n), op: sig(0, 1) },
        Channel { name: "excite_ge", rate: on * g_ge * n, op: sig(1, 0) },
        Channel { name: "decay_ef", rate: on * g_ef * (1.0 + n), op: sig(1, 2) },
        Channel { name: "excite_ef", rate: on * g_ef * n, op: sig(2, 1) },
        Channel { name: "dephase_ge", rate: on * p.gamma_phi_ge(), op: z_ge },
        Channel { name: "dephase_ef", rate: on * p.gamma_phi_ef(), op: z_ef },
    ];
    for c in &list {
        if !(c.rate >= 0.0) || !c.rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "channel {} has rate {}",
                c.name, c.rate
            )));
        }
    }
    Ok(list)
}

/// Compressed-row complex matrix acting on row-major vectorised densities.
#[derive(Clone, Debug)]
pub struct SparseSuper {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<C64>,
}

impl SparseSuper {
    fn from_entries(n: usize, entries: &BTreeMap<(usize, usize), C64>) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (&(r, c), &v) in entries {
            if v == ZERO {
                continue;
            }
            row_ptr[r + 1] += 1;
            cols.push(c as u32);
            vals.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSuper { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// y += c·(S x)
    pub fn mul_add(&self, c: C64, x: &[C64], y: &mut [C64]) {
        for r in 0..self.n {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[r] += c * acc;
        }
    }
}

/// Superoperator builder on a d-dimensional Hilbert space.
struct SuperBuilder {
    d: usize,
    entries: BTreeMap<(usize, usize), C64>,
}

impl SuperBuilder {
    fn new(d: usize) -> Self {
        SuperBuilder { d, entries: BTreeMap::new() }
    }

    fn add(&mut self, r: usize, c: usize, v: C64) {
        *self.entries.entry((r, c)).or_insert(ZERO) += v;
    }

    /// ρ ↦ c·Aρ
    fn left(&mut self, a: &DMatrix<C64>, c: C64) {
        let d = self.d;
        for i in 0..d {
            for k in 0..d {
                let v = a[(i, k)];
                if v != ZERO {
                    for j in 0..d {
                        self.add(i * d + j, k * d + j, c * v);
                    }
                }
            }
        }
    }

    /// ρ ↦ c·ρB
    fn right(&mut self, b: &DMatrix<C64>, c: C64) {
        let d = self.d;
        for k in 0..d {
            for j in 0..d {
                let v = b[(k, j)];
                if v != ZERO {
                    for i in 0..d {
                        self.add(i * d + j, i * d + k, c * v);
                    }
                }
            }
        }
    }

    /// ρ ↦ c·JρJ†
    fn sandwich(&mut self, jm: &DMatrix<C64>, c: C64) {
        let d = self.d;
        let nz: Vec<(usize, usize, C64)> = (0..d)
            .flat_map(|i| (0..d).map(move |k| (i, k)))
            .filter_map(|(i, k)| {
                let v = jm[(i, k)];
                (v != ZERO).then_some((i, k, v))
            })
            .collect();
        for &(i, k, v) in &nz {
            for &(j, l, w) in &nz {
                self.add(i * d + j, k * d + l, c * v * w.conj());
            }
        }
    }

    /// ρ ↦ −i[H, ρ]
    fn commutator(&mut self, h: &DMatrix<C64>) {
        self.left(h, -I);
        self.right(h, I);
    }

    fn build(self) -> SparseSuper {
        SparseSuper::from_entries(self.d * self.d, &self.entries)
    }
}

/// L(t) = L0 + e(t)·Lg + e(t)·(e^{iαt/2} L₊ + e^{−iαt/2} L₋)
#[derive(Clone, Debug)]
pub struct Liouvillian {
    d: usize,
    alpha: f64,
    envelope: Envelope,
    l0: SparseSuper,
    lg: SparseSuper,
    lp: SparseSuper,
    lm: SparseSuper,
}

impl Liouvillian {
    pub fn new(model: &DrivenModel) -> Result<Self> {
        model.validate()?;
        let d = model.dim();
        let h0 = model.h_static()?;
        let mut b0 = SuperBuilder::new(d);
        let mut h_eff = h0.matrix().clone();
        for ch in dissipators(model)? {
            if ch.rate == 0.0 {
                continue;
            }
            let j = ch.op.matrix();
            b0.sandwich(j, C64::new(ch.rate, 0.0));
            h_eff -= (j.adjoint() * j) * C64::new(0.0, 0.5 * ch.rate);
        }
        // −i(H_eff ρ − ρ H_eff†)
        b0.left(&h_eff, -I);
        b0.right(&h_eff.adjoint(), I);

        let mut bg = SuperBuilder::new(d);
        bg.commutator(model.h_f0g1()?.matrix());
        let w = model.w_ef()?;
        let mut bp = SuperBuilder::new(d);
        bp.commutator(w.matrix());
        let mut bm = SuperBuilder::new(d);
        bm.commutator(w.dagger().matrix());

        Ok(Liouvillian {
            d,
            alpha: model.params.alpha.rad_per_s(),
            envelope: model.envelope,
            l0: b0.build(),
            lg: bg.build(),
            lp: bp.build(),
            lm: bm.build(),
        })
    }

    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    pub fn apply(&self, t: f64, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = ZERO);
        self.l0.mul_add(ONE, x, y);
        let e = self.envelope.at(t);
        if e != 0.0 {
            let ee = C64::new(e, 0.0);
            self.lg.mul_add(ee, x, y);
            let c = C64::from_polar(e, self.alpha * t / 2.0);
            self.lp.mul_add(c, x, y);
            self.lm.mul_add(c.conj(), x, y);
        }
    }
}

fn vec_of(r: &DMatrix<C64>) -> Vec<C64> {
    let d = r.nrows();
    (0..d * d).map(|k| r[(k / d, k % d)]).collect()
}

fn mat_of(v: &[C64], d: usize) -> DMatrix<C64> {
    DMatrix::from_fn(d, d, |i, j| v[i * d + j])
}

/// Transmon populations (g, e, f) and mean photon number.
pub fn populations(rho: &DMatrix<C64>, n_fock: usize) -> ([f64; 3], f64) {
    let mut pops = [0.0; 3];
    let mut photon = 0.0;
    for s in 0..N_TRANSMON {
        for n in 0..n_fock {
            let k = s * n_fock + n;
            let p = rho[(k, k)].re;
            pops[s] += p;
            photon += n as f64 * p;
        }
    }
    (pops, photon)
}

fn check_state(model: &DrivenModel, rho0: &QState) -> Result<DMatrix<C64>> {
    if rho0.dim() != model.dim() {
        return Err(Error::InvalidDimension(format!(
            "state dimension {} does not match model dimension {}",
            rho0.dim(),
            model.dim()
        )));
    }
    rho0.validate_density(1e-9)?;
    Ok(rho0.to_density())
}

/// Density matrices at `times`, starting from `rho0` at `t_start`.
/// The drive phase is referenced to t = 0, so pulses can be chained.
pub fn evolve_states(
    model: &DrivenModel,
    rho0: &QState,
    t_start: f64,
    times: &[f64],
    tol: f64,
) -> Result<Vec<DMatrix<C64>>> {
    let r0 = check_state(model, rho0)?;
    let l = Liouvillian::new(model)?;
    let (ys, _) = integrate(
        |t, x, y| l.apply(t, x, y),
        t_start,
        &vec_of(&r0),
        times,
        &OdeOptions::with_tol(tol),
    )?;
    Ok(ys.iter().map(|v| mat_of(v, l.d)).collect())
}

/// Transmon populations and photon number at `times` (≥ 0) from `rho0` at t = 0.
pub fn evolve(
    model: &DrivenModel,
    rho0: &QState,
    times: &[f64],
    tol: f64,
) -> Result<PopulationTrajectory> {
    let states = evolve_states(model, rho0, 0.0, times, tol)?;
    let mut pops = Vec::with_capacity(states.len());
    let mut photon = Vec::with_capacity(states.len());
    for r in &states {
        let (p, n) = populations(r, model.n_fock);
        pops.push(p);
        photon.push(n);
    }
    Ok(PopulationTrajectory {
        times: times.to_vec(),
        pops,
        photon,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// Mean P_e + P_f over the last tenth of the horizon.
    pub p_exc: f64,
    /// Difference between the averages of the first and last fifth of that window.
    pub drift: f64,
    pub converged: bool,
}

pub const STEADY_DRIFT_LIMIT: f64 = 1e-5;

/// Long-time residual excitation under continuous drive, starting from |e,0⟩.
pub fn steady_state_excitation(model: &DrivenModel, horizon: f64, tol: f64) -> Result<SteadyState> {
    model.validate()?;
    let gamma = reset_rate(model.drives.g_tilde, model.drives.omega_ef, model.params.kappa).rad_per_s();
    if gamma > 0.0 && horizon * gamma < 10.0 {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon:.3e} s is shorter than 10 reset times ({:.3e} s)",
            10.0 / gamma
        )));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let times = linspace(0.9 * horizon, horizon, 41);
    let rho0 = QState::basis(N_TRANSMON, model.n_fock, 1, 0)?;
    let traj = evolve(model, &rho0, &times, tol)?;
    let exc = traj.excited();
    let mean = exc.iter().sum::<f64>() / exc.len() as f64;
    let head = exc[..8].iter().sum::<f64>() / 8.0;
    let tail = exc[exc.len() - 8..].iter().sum::<f64>() / 8.0;
    let drift = (tail - head).abs();
    Ok(SteadyState {
        p_exc: mean,
        drift,
        converged: drift < STEADY_DRIFT_LIMIT,
    })
}

/// Largest |ΔP_e|, |ΔP_f| between the master equation (only κ loss) and
/// the three-level effective model, both starting in |e,0⟩.
pub fn compare_to_effective(model: &DrivenModel, times: &[f64], tol: f64) -> Result<f64> {
    let m = model.clone().without_decoherence();
    let rho0 = QState::basis(N_TRANSMON, m.n_fock, 1, 0)?;
    let full = evolve(&m, &rho0, times, tol)?;
    let h = build_h3(&m.drives, m.params.kappa)?;
    let eff = propagate_h3_basis(&h, EffBasis::E0, times)?;
    let mut worst = 0.0f64;
    for (p, q) in full.pops.iter().zip(&eff) {
        worst = worst.max((p[1] - q[0]).abs()).max((p[2] - q[1]).abs());
    }
    Ok(worst)
}

/// Largest change in transmon populations when the resonator truncation is
/// raised by one level.
pub fn fock_convergence(model: &DrivenModel, times: &[f64], tol: f64) -> Result<f64> {
    let bigger = model.clone().with_fock(model.n_fock + 1);
    let a = evolve(model, &QState::basis(N_TRANSMON, model.n_fock, 1, 0)?, times, tol)?;
    let b = evolve(&bigger, &QState::basis(N_TRANSMON, bigger.n_fock, 1, 0)?, times, tol)?;
    let mut worst = 0.0f64;
    for (p, q) in a.pops.iter().zip(&b.pops) {
        for s in 0..3 {
            worst = worst.max((p[s] - q[s]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::min_eigenvalue;
    use crate::params::{default_params, Preset};
    use crate::units::Frequency;

    fn model_a() -> DrivenModel {
        DrivenModel::new(default_params(), Preset::A.drives())
    }

    #[test]
    fn hamiltonian_is_hermitian_and_couples_right_levels() {
        let m = model_a();
        let h = hamiltonian_at(&m, 3.7e-9).unwrap();
        assert!(h.is_hermitian(1e-6));
        let h0 = hamiltonian_at(&m, 0.0).unwrap();
        let nf = m.n_fock;
        let g = Frequency::from_mhz(4.8).rad_per_s();
        let w = Frequency::from_mhz(3.0).rad_per_s();
        // ⟨g1|H|f0⟩ = g̃, ⟨f0|H|e0⟩ = Ω at t = 0
        assert!((h0.get(1, 2 * nf).re - g).abs() < 1e-6 * g);
        assert!((h0.get(2 * nf, nf).re - w).abs() < 1e-6 * w);
    }

    #[test]
    fn eight_channels() {
        let ch = dissipators(&model_a()).unwrap();
        assert_eq!(ch.len(), 8);
        let off = dissipators(&model_a().without_decoherence()).unwrap();
        assert!(off[1..].iter().all(|c| c.rate == 0.0));
        assert!(off[0].rate > 0.0);
    }

    #[test]
    fn superoperator_matches_dense_definition() {
        let m = DrivenModel {
            envelope: Envelope::Square,
            ..model_a()
        };
        let l = Liouvillian::new(&m).unwrap();
        let d = m.dim();
        let rho = QState::basis(3, m.n_fock, 2, 0).unwrap().to_density() * C64::new(0.5, 0.0)
            + QState::basis(3, m.n_fock, 1, 1).unwrap().to_density() * C64::new(0.5, 0.0);
        let t = 1.3e-9;
        let mut y = vec![ZERO; d * d];
        l.apply(t, &vec_of(&rho), &mut y);
        let h = hamiltonian_at(&m, t).unwrap();
        let hm = h.matrix();
        let mut expect = (hm * &rho - &rho * hm) * (-I);
        for ch in dissipators(&m).unwrap() {
            let j = ch.op.matrix();
            let jd = j.adjoint();
            let jdj = &jd * j;
            expect += (j * &rho * &jd - (&jdj * &rho + &rho * &jdj) * C64::new(0.5, 0.0))
                * C64::new(ch.rate, 0.0);
        }
        let got = mat_of(&y, d);
        let scale = expect.camax();
        assert!((got - expect).camax() < 1e-12 * scale);
    }

    #[test]
    fn trace_and_positivity_preserved() {
        let m = model_a();
        let times = linspace(0.0, 300e-9, 7);
        let rho0 = QState::basis(3, 3, 1, 0).unwrap();
        for r in evolve_states(&m, &rho0, 0.0, &times, 1e-9).unwrap() {
            assert!((r.trace().re - 1.0).abs() < 1e-8);
            assert!((&r - r.adjoint()).camax() < 1e-8);
            assert!(min_eigenvalue(&r) > -1e-8);
        }
    }

    #[test]
    fn detailed_balance_without_drives() {
        let p = default_params();
        let m = DrivenModel::new(p.clone(), DriveConfig::off());
        let traj = evolve(&m, &QState::basis(3, 3, 1, 0).unwrap(), &[200e-6], 1e-10).unwrap();
        let [pg, pe, pf] = traj.pops[0];
        let r = p.n_th / (1.0 + p.n_th);
        assert!((pe / pg - r).abs() < 1e-6, "{}", pe / pg);
        assert!((pf / pe - r).abs() < 1e-6, "{}", pf / pe);
    }

    #[test]
    fn agrees_with_effective_model() {
        let times = linspace(0.0, 1e-6, 51);
        let d = compare_to_effective(&model_a(), &times, 1e-9).unwrap();
        assert!(d < 0.02, "{d}");
    }

    #[test]
    fn truncation_converged() {
        let times = linspace(0.0, 500e-9, 11);
        let d = fock_convergence(&model_a(), &times, 1e-9).unwrap();
        assert!(d < 1e-4, "{d}");
    }

    #[test]
    fn steady_state_horizon_checked() {
        assert!(steady_state_excitation(&model_a(), 100e-9, 1e-8).is_err());
    }

    #[test]
    fn envelope_shape() {
        let e = Envelope::RaisedCosine { start: 0.0, rise: 10.0, stop: 100.0 };
        assert_eq!(e.at(-1.0), 0.0);
        assert!((e.at(5.0) - 0.5).abs() < 1e-12);
        assert_eq!(e.at(50.0), 1.0);
        assert!((e.at(95.0) - 0.5).abs() < 1e-12);
        assert_eq!(e.at(100.0), 0.0);
        assert_eq!(Envelope::Square.at(-5.0), 1.0);
    }

    #[test]
    fn small_truncation_rejected() {
        let m = model_a().with_fock(1);
        assert!(Liouvillian::new(&m).is_err());
    }
}

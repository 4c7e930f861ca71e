//! Virtual laboratory: pulse schedules evolved with the master equation,
//! shot-level readout data and the four calibration experiments.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibDataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lindblad::{evolve_states, populations, DrivenModel, N_TRANSMON};
use crate::ops::{QState, C64, ZERO};
use crate::params::{default_params, DriveConfig, SystemParams};
use crate::readout::{Level, ShotSet};
use crate::rng::{stream, tag};
use crate::units::Frequency;

/// Readout ground truth. A shot of latent level s is first reassigned to
/// cluster m with probability `transition[m][s]` (modelling decay and
/// excitation during the measurement), then drawn from an isotropic
/// Gaussian around `means[m]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutTruth {
    pub means: [[f64; 2]; 3],
    pub sigma: f64,
    pub transition: [[f64; 3]; 3],
}

impl Default for ReadoutTruth {
    fn default() -> Self {
        ReadoutTruth {
            means: [[0.0, 0.0], [10.0, 0.0], [5.0, 8.660_254_037_844_386]],
            sigma: 1.0,
            transition: [
                [0.982, 0.025, 0.024],
                [0.009, 0.957, 0.046],
                [0.009, 0.018, 0.930],
            ],
        }
    }
}

impl ReadoutTruth {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("readout sigma must be positive".into()));
        }
        for s in 0..3 {
            let col: f64 = (0..3).map(|m| self.transition[m][s]).sum();
            if (col - 1.0).abs() > 1e-9 || (0..3).any(|m| !(self.transition[m][s] >= 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "readout transition column {s} is not a probability vector"
                )));
            }
        }
        Ok(())
    }
}

/// First principal component of the heralding traces; the ground cluster
/// sits at larger values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeraldTruth {
    pub mu_ground: f64,
    pub mu_excited: f64,
    pub sigma: f64,
}

impl Default for HeraldTruth {
    fn default() -> Self {
        HeraldTruth {
            mu_ground: 6.0,
            mu_excited: 0.0,
            sigma: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabTruth {
    pub params: SystemParams,
    /// Shift of the f0-g1 transition per squared f0-g1 amplitude, MHz/V².
    pub stark_f0g1: f64,
    /// Shift of the e-f transition per squared f0-g1 amplitude, MHz/V².
    pub stark_ef: f64,
    /// g̃/2π per f0-g1 amplitude, MHz/V.
    pub slope_f0g1: f64,
    /// Ω_ef/2π per e-f amplitude, MHz/V.
    pub slope_ef: f64,
    /// π-pulse error: ρ → (1−ε)·SρS† + ε·ρ.
    pub eps_pi: f64,
    pub decoherence: bool,
    pub readout: ReadoutTruth,
    pub herald: HeraldTruth,
    pub n_fock: usize,
    pub tol: f64,
}

impl Default for LabTruth {
    fn default() -> Self {
        LabTruth {
            params: default_params(),
            stark_f0g1: -50.0,
            stark_ef: -25.0,
            slope_f0g1: 10.8,
            slope_ef: 375.0,
            eps_pi: 0.005,
            decoherence: true,
            readout: ReadoutTruth::default(),
            herald: HeraldTruth::default(),
            n_fock: 3,
            tol: 1e-8,
        }
    }
}

impl LabTruth {
    /// All decoherence, thermal excitation and pulse errors removed.
    pub fn ideal() -> Self {
        LabTruth {
            eps_pi: 0.0,
            decoherence: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.readout.validate()?;
        if !(0.0..=1.0).contains(&self.eps_pi) {
            return Err(Error::InvalidParameter("eps_pi must lie in [0, 1]".into()));
        }
        if !(self.slope_f0g1 >= 0.0) || !(self.slope_ef >= 0.0) {
            return Err(Error::InvalidParameter("rate slopes must be >= 0".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(())
    }

    fn model(&self, drives: DriveConfig) -> DrivenModel {
        DrivenModel {
            params: self.params.clone(),
            drives,
            n_fock: self.n_fock,
            decoherence: self.decoherence,
            envelope: Default::default(),
        }
    }

    /// Physical drive parameters produced by instrument settings.
    pub fn realized(&self, s: &DriveSettings) -> DriveConfig {
        DriveConfig {
            g_tilde: Frequency::from_mhz(self.slope_f0g1 * s.v_f0g1),
            omega_ef: Frequency::from_mhz(self.slope_ef * s.v_ef),
            delta_f0g1: Frequency::from_mhz(s.f0g1_offset_mhz - self.stark_f0g1 * s.v_f0g1 * s.v_f0g1),
            delta_ef: Frequency::from_mhz(s.ef_offset_mhz - self.stark_ef * s.v_f0g1 * s.v_f0g1),
        }
    }
}

/// Instrument settings: amplitudes (V) and carrier offsets from the bare
/// transitions (MHz).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveSettings {
    pub v_f0g1: f64,
    pub v_ef: f64,
    pub f0g1_offset_mhz: f64,
    pub ef_offset_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    PiGe,
    PiEf,
    /// Square drive for `duration` seconds.
    Drive { duration: f64, drives: DriveConfig },
    Wait { duration: f64 },
    Readout,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub segments: Vec<Segment>,
    /// Idle time inserted before the readout marker, seconds.
    pub t_gap: f64,
}

impl PulseSchedule {
    pub fn new(segments: Vec<Segment>) -> Self {
        PulseSchedule { segments, t_gap: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let markers = self.segments.iter().filter(|s| matches!(s, Segment::Readout)).count();
        if markers != 1 {
            return Err(Error::InvalidParameter(format!(
                "schedule needs exactly one readout marker, found {markers}"
            )));
        }
        for s in &self.segments {
            match s {
                Segment::Drive { duration, drives } => {
                    if !(*duration > 0.0) {
                        return Err(Error::InvalidParameter("segment durations must be > 0".into()));
                    }
                    drives.validate()?;
                }
                Segment::Wait { duration } if !(*duration > 0.0) => {
                    return Err(Error::InvalidParameter("segment durations must be > 0".into()));
                }
                _ => {}
            }
        }
        if !(self.t_gap >= 0.0) {
            return Err(Error::InvalidParameter("t_gap must be >= 0".into()));
        }
        Ok(())
    }
}

fn swap_channel(rho: &DMatrix<C64>, i: usize, j: usize, n_fock: usize, eps: f64) -> DMatrix<C64> {
    let d = rho.nrows();
    let perm = |k: usize| {
        let (s, n) = (k / n_fock, k % n_fock);
        let s2 = if s == i {
            j
        } else if s == j {
            i
        } else {
            s
        };
        s2 * n_fock + n
    };
    let mut out = DMatrix::from_element(d, d, ZERO);
    for a in 0..d {
        for b in 0..d {
            out[(perm(a), perm(b))] = rho[(a, b)];
        }
    }
    out * C64::new(1.0 - eps, 0.0) + rho * C64::new(eps, 0.0)
}

/// Segment-by-segment state evolution from |g,0⟩; returns the density
/// matrix at the readout marker and the elapsed time.
fn run_to_readout(truth: &LabTruth, schedule: &PulseSchedule) -> Result<(DMatrix<C64>, f64)> {
    truth.validate()?;
    schedule.validate()?;
    let mut rho = QState::basis(N_TRANSMON, truth.n_fock, 0, 0)?.to_density();
    let mut t = 0.0;
    let evolve_for = |rho: &DMatrix<C64>, t: f64, dur: f64, drives: DriveConfig| -> Result<DMatrix<C64>> {
        let m = truth.model(drives);
        let mut out = evolve_states(&m, &QState::Density(rho.clone()), t, &[t + dur], truth.tol)?;
        Ok(out.pop().expect("one output time"))
    };
    for seg in &schedule.segments {
        match seg {
            Segment::PiGe => rho = swap_channel(&rho, 0, 1, truth.n_fock, truth.eps_pi),
            Segment::PiEf => rho = swap_channel(&rho, 1, 2, truth.n_fock, truth.eps_pi),
            Segment::Drive { duration, drives } => {
                rho = evolve_for(&rho, t, *duration, *drives)?;
                t += duration;
            }
            Segment::Wait { duration } => {
                rho = evolve_for(&rho, t, *duration, DriveConfig::off())?;
                t += duration;
            }
            Segment::Readout => {
                if schedule.t_gap > 0.0 {
                    rho = evolve_for(&rho, t, schedule.t_gap, DriveConfig::off())?;
                    t += schedule.t_gap;
                }
                return Ok((rho, t));
            }
        }
    }
    unreachable!("validated schedule has a readout marker")
}

/// Transmon populations (P_g, P_e, P_f) at the readout marker.
pub fn run_schedule(truth: &LabTruth, schedule: &PulseSchedule) -> Result<[f64; 3]> {
    let (rho, _) = run_to_readout(truth, schedule)?;
    Ok(populations(&rho, truth.n_fock).0)
}

const SHOT_CHUNK: usize = 4096;

fn pick(u: f64, p: &[f64; 3]) -> usize {
    if u < p[0] {
        0
    } else if u < p[0] + p[1] {
        1
    } else {
        2
    }
}

fn check_populations(p: [f64; 3]) -> Result<[f64; 3]> {
    if p.iter().any(|x| !(*x >= -1e-9)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!("populations {p:?} are not normalised")));
    }
    let c = p.map(|x| x.max(0.0));
    let s: f64 = c.iter().sum();
    Ok(c.map(|x| x / s))
}

pub fn sample_shots(populations: [f64; 3], truth: &ReadoutTruth, n_shots: usize, seed: u64) -> Result<ShotSet> {
    sample_shots_with(Exec::default(), populations, truth, n_shots, seed)
}

/// Draws `n_shots` readout points. Chunks of shots use independent
/// counter-keyed streams, so the result does not depend on `exec`.
pub fn sample_shots_with(
    exec: Exec,
    populations: [f64; 3],
    truth: &ReadoutTruth,
    n_shots: usize,
    seed: u64,
) -> Result<ShotSet> {
    truth.validate()?;
    if n_shots == 0 {
        return Err(Error::InvalidParameter("n_shots must be >= 1".into()));
    }
    let p = check_populations(populations)?;
    let cols: [[f64; 3]; 3] = std::array::from_fn(|s| std::array::from_fn(|m| truth.transition[m][s]));
    let n_chunks = n_shots.div_ceil(SHOT_CHUNK);
    let chunks = exec.map_range(n_chunks, |c| {
        let mut rng = stream(seed, &[tag::SHOTS, c as u64]);
        let len = SHOT_CHUNK.min(n_shots - c * SHOT_CHUNK);
        let mut pts = Vec::with_capacity(len);
        let mut labels = Vec::with_capacity(len);
        for _ in 0..len {
            let s = pick(rng.random::<f64>(), &p);
            let m = pick(rng.random::<f64>(), &cols[s]);
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            let mu = truth.means[m];
            pts.push([mu[0] + truth.sigma * nx, mu[1] + truth.sigma * ny]);
            labels.push(Level::ALL[s]);
        }
        (pts, labels)
    });
    let mut points = Vec::with_capacity(n_shots);
    let mut labels = Vec::with_capacity(n_shots);
    for (p, l) in chunks {
        points.extend(p);
        labels.extend(l);
    }
    Ok(ShotSet {
        points,
        labels: Some(labels),
        herald: None,
    })
}

/// Heralding samples: excited with probability n_th, ground otherwise.
pub fn generate_herald_traces(truth: &LabTruth, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let h = truth.herald;
    if !(h.sigma > 0.0) {
        return Err(Error::InvalidParameter("herald sigma must be positive".into()));
    }
    let p_exc = truth.params.n_th;
    let n_chunks = n.div_ceil(SHOT_CHUNK);
    let chunks = Exec::default().map_range(n_chunks, |c| {
        let mut rng = stream(seed, &[tag::HERALD, c as u64]);
        let len = SHOT_CHUNK.min(n - c * SHOT_CHUNK);
        (0..len)
            .map(|_| {
                let exc = rng.random::<f64>() < p_exc;
                let z: f64 = rng.sample(StandardNormal);
                (if exc { h.mu_excited } else { h.mu_ground }) + h.sigma * z
            })
            .collect::<Vec<f64>>()
    });
    Ok(chunks.concat())
}

/// Sweep grids and settings for the four calibration experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPlan {
    /// f0-g1 amplitudes for steps 1, 3 and 4 (V).
    pub amplitudes_f0g1: Vec<f64>,
    /// e-f amplitudes for step 2 (V).
    pub amplitudes_ef: Vec<f64>,
    /// Step 1 carrier offsets from the bare f0-g1 transition (MHz).
    pub step1_offsets_mhz: Vec<f64>,
    /// Step 1 keeps amplitude × duration fixed at this value (V·s).
    pub step1_area: f64,
    pub step2_times_us: Vec<f64>,
    /// Step 3 carrier offsets from the bare e-f transition (MHz).
    pub step3_offsets_mhz: Vec<f64>,
    /// Step 3 f0-g1 pulse length; the e-f π pulse sits in its middle third.
    pub step3_f0g1_ns: f64,
    pub step3_pi_ns: f64,
    pub step4_times_us: Vec<f64>,
    /// Shots per point; 0 gives exact populations.
    pub shots: usize,
}

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    crate::trajectory::linspace(a, b, n)
}

impl Default for CalibrationPlan {
    fn default() -> Self {
        CalibrationPlan {
            amplitudes_f0g1: vec![0.15, 0.25, 0.33, 0.40, 0.444],
            amplitudes_ef: vec![0.002, 0.004, 0.006, 0.008, 0.010],
            step1_offsets_mhz: grid(-30.0, 10.0, 81),
            step1_area: 0.155 * 171e-9,
            step2_times_us: grid(0.0, 1.2, 97),
            step3_offsets_mhz: grid(-20.0, 10.0, 61),
            step3_f0g1_ns: 420.0,
            step3_pi_ns: 140.0,
            step4_times_us: grid(0.0, 0.4, 81),
            shots: 2000,
        }
    }
}

impl CalibrationPlan {
    pub fn validate(&self) -> Result<()> {
        let grids: [(&str, &Vec<f64>); 6] = [
            ("amplitudes_f0g1", &self.amplitudes_f0g1),
            ("amplitudes_ef", &self.amplitudes_ef),
            ("step1_offsets_mhz", &self.step1_offsets_mhz),
            ("step2_times_us", &self.step2_times_us),
            ("step3_offsets_mhz", &self.step3_offsets_mhz),
            ("step4_times_us", &self.step4_times_us),
        ];
        for (name, g) in grids {
            if g.is_empty() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("plan grid {name} is empty or non-finite")));
            }
        }
        if self.amplitudes_f0g1.iter().chain(&self.amplitudes_ef).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("amplitudes must be positive".into()));
        }
        for g in [&self.step2_times_us, &self.step4_times_us] {
            if g.iter().any(|t| *t < 0.0) || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter("time grids must be increasing and >= 0".into()));
            }
        }
        if !(self.step1_area > 0.0) || !(self.step3_f0g1_ns > self.step3_pi_ns) || !(self.step3_pi_ns > 0.0) {
            return Err(Error::InvalidParameter("invalid pulse timing".into()));
        }
        Ok(())
    }
}

/// What the experimenter knows when a step is run: earlier calibration
/// results used to set carrier frequencies and pulse amplitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPrior {
    /// MHz/V², used to centre the f0-g1 carrier in steps 3 and 4.
    pub stark_f0g1: f64,
    /// MHz/V, used to set the step-3 π-pulse amplitude.
    pub slope_ef: f64,
}

impl StepPrior {
    pub fn from_truth(t: &LabTruth) -> Self {
        StepPrior {
            stark_f0g1: t.stark_f0g1,
            slope_ef: t.slope_ef,
        }
    }
}

fn step_tag(step: u8) -> u64 {
    match step {
        1 => tag::CALIB_STEP1,
        2 => tag::CALIB_STEP2,
        3 => tag::CALIB_STEP3,
        _ => tag::CALIB_STEP4,
    }
}

fn level_pop(rho: &DMatrix<C64>, n_fock: usize, level: usize) -> f64 {
    populations(rho, n_fock).0[level]
}

/// Exact populations for one calibration step (no shot noise).
pub fn simulate_step(
    truth: &LabTruth,
    plan: &CalibrationPlan,
    step: u8,
    prior: &StepPrior,
    exec: Exec,
) -> Result<Vec<CalibDataset>> {
    truth.validate()?;
    plan.validate()?;
    let nf = truth.n_fock;
    let g0 = QState::basis(N_TRANSMON, nf, 0, 0)?.to_density();
    let e0 = swap_channel(&g0, 0, 1, nf, truth.eps_pi);
    let f0 = swap_channel(&e0, 1, 2, nf, truth.eps_pi);
    let meta = |amplitude: f64| DatasetMeta { step, amplitude };
    let wrap = |e: Error| e.at_step(step);
    match step {
        1 => {
            let amps = &plan.amplitudes_f0g1;
            let offs = &plan.step1_offsets_mhz;
            let n = amps.len() * offs.len();
            let ys = exec
                .try_map_range(n, |k| {
                    let v = amps[k / offs.len()];
                    let x = offs[k % offs.len()];
                    let s = DriveSettings { v_f0g1: v, f0g1_offset_mhz: x, ..Default::default() };
                    let d = truth.realized(&s);
                    let dur = plan.step1_area / v;
                    let r = evolve_states(&truth.model(d), &QState::Density(f0.clone()), 0.0, &[dur], truth.tol)?;
                    Ok(level_pop(&r[0], nf, 0))
                })
                .map_err(wrap)?;
            Ok(amps
                .iter()
                .enumerate()
                .map(|(i, &v)| CalibDataset {
                    x: offs.clone(),
                    y: ys[i * offs.len()..(i + 1) * offs.len()].to_vec(),
                    y_err: None,
                    meta: meta(v),
                })
                .collect())
        }
        2 => {
            let amps = &plan.amplitudes_ef;
            let times: Vec<f64> = plan.step2_times_us.iter().map(|t| t * 1e-6).collect();
            exec.try_map_range(amps.len(), |i| {
                let v = amps[i];
                let d = truth.realized(&DriveSettings { v_ef: v, ..Default::default() });
                let d = DriveConfig { g_tilde: Frequency::ZERO, delta_f0g1: Frequency::ZERO, ..d };
                let rs = evolve_states(&truth.model(d), &QState::Density(e0.clone()), 0.0, &times, truth.tol)?;
                Ok(CalibDataset {
                    x: plan.step2_times_us.clone(),
                    y: rs.iter().map(|r| level_pop(r, nf, 2)).collect(),
                    y_err: None,
                    meta: meta(v),
                })
            })
            .map_err(wrap)
        }
        3 => {
            let amps = &plan.amplitudes_f0g1;
            let offs = &plan.step3_offsets_mhz;
            let t_side = (plan.step3_f0g1_ns - plan.step3_pi_ns) / 2.0 * 1e-9;
            let t_pi = plan.step3_pi_ns * 1e-9;
            // Ω·t_pi = π/2 moves e to f
            let omega_mhz = 1.0 / (4.0 * plan.step3_pi_ns * 1e-3);
            if !(prior.slope_ef > 0.0) {
                return Err(Error::InvalidParameter("step 3 needs a positive e-f rate slope".into()).at_step(3));
            }
            let v_ef = omega_mhz / prior.slope_ef;
            let n = amps.len() * offs.len();
            let ys = exec
                .try_map_range(n, |k| {
                    let v = amps[k / offs.len()];
                    let x = offs[k % offs.len()];
                    let s = DriveSettings {
                        v_f0g1: v,
                        v_ef,
                        f0g1_offset_mhz: prior.stark_f0g1 * v * v,
                        ef_offset_mhz: x,
                    };
                    let both = truth.realized(&s);
                    let only = DriveConfig { omega_ef: Frequency::ZERO, ..both };
                    let mut r = QState::Density(e0.clone());
                    let mut t = 0.0;
                    for (dur, d) in [(t_side, only), (t_pi, both), (t_side, only)] {
                        let out = evolve_states(&truth.model(d), &r, t, &[t + dur], truth.tol)?;
                        r = QState::Density(out.into_iter().next().expect("one output"));
                        t += dur;
                    }
                    Ok(level_pop(&r.to_density(), nf, 1))
                })
                .map_err(wrap)?;
            Ok(amps
                .iter()
                .enumerate()
                .map(|(i, &v)| CalibDataset {
                    x: offs.clone(),
                    y: ys[i * offs.len()..(i + 1) * offs.len()].to_vec(),
                    y_err: None,
                    meta: meta(v),
                })
                .collect())
        }
        4 => {
            let amps = &plan.amplitudes_f0g1;
            let times: Vec<f64> = plan.step4_times_us.iter().map(|t| t * 1e-6).collect();
            exec.try_map_range(amps.len(), |i| {
                let v = amps[i];
                let s = DriveSettings {
                    v_f0g1: v,
                    f0g1_offset_mhz: prior.stark_f0g1 * v * v,
                    ..Default::default()
                };
                let d = truth.realized(&s);
                let d = DriveConfig { omega_ef: Frequency::ZERO, delta_ef: Frequency::ZERO, ..d };
                let rs = evolve_states(&truth.model(d), &QState::Density(f0.clone()), 0.0, &times, truth.tol)?;
                Ok(CalibDataset {
                    x: plan.step4_times_us.clone(),
                    y: rs.iter().map(|r| level_pop(r, nf, 2)).collect(),
                    y_err: None,
                    meta: meta(v),
                })
            })
            .map_err(wrap)
        }
        s => Err(Error::InvalidParameter(format!("no calibration step {s}"))),
    }
}

/// Replaces exact populations by binomial estimates from `shots` shots
/// per point, with standard errors.
pub fn add_shot_noise(datasets: &[CalibDataset], shots: usize, seed: u64) -> Vec<CalibDataset> {
    if shots == 0 {
        return datasets.to_vec();
    }
    datasets
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut y = Vec::with_capacity(d.y.len());
            let mut err = Vec::with_capacity(d.y.len());
            for (j, &p) in d.y.iter().enumerate() {
                let mut rng = stream(seed, &[step_tag(d.meta.step), i as u64, j as u64]);
                let p = p.clamp(0.0, 1.0);
                let k = Binomial::new(shots as u64, p).expect("p in [0, 1]").sample(&mut rng);
                let est = k as f64 / shots as f64;
                // add-one smoothing keeps the error finite at 0 and 1
                let q = (k as f64 + 1.0) / (shots as f64 + 2.0);
                y.push(est);
                err.push((q * (1.0 - q) / shots as f64).sqrt());
            }
            CalibDataset {
                x: d.x.clone(),
                y,
                y_err: Some(err),
                meta: d.meta,
            }
        })
        .collect()
}

/// A lab instance bound to a truth and a sweep plan.
#[derive(Clone, Debug)]
pub struct VirtualLab {
    pub truth: LabTruth,
    pub plan: CalibrationPlan,
    pub exec: Exec,
}

impl VirtualLab {
    pub fn new(truth: LabTruth, plan: CalibrationPlan) -> Self {
        VirtualLab { truth, plan, exec: Exec::default() }
    }

    pub fn measure_step(&self, step: u8, prior: &StepPrior, seed: u64) -> Result<Vec<CalibDataset>> {
        let exact = simulate_step(&self.truth, &self.plan, step, prior, self.exec)?;
        Ok(add_shot_noise(&exact, self.plan.shots, seed))
    }
}

/// Data for all four steps, with carriers and pulse amplitudes set from
/// the truth (a perfectly calibrated experimenter).
pub fn generate_calibration_data(truth: &LabTruth, plan: &CalibrationPlan, seed: u64) -> Result<[Vec<CalibDataset>; 4]> {
    let lab = VirtualLab::new(truth.clone(), plan.clone());
    let prior = StepPrior::from_truth(truth);
    Ok([
        lab.measure_step(1, &prior, seed)?,
        lab.measure_step(2, &prior, seed)?,
        lab.measure_step(3, &prior, seed)?,
        lab.measure_step(4, &prior, seed)?,
    ])
}

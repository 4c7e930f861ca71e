//! Subcommand implementations. Each returns the files to write and a few
//! summary lines; nothing here touches the filesystem except reading
//! recorded calibration data.

use std::path::Path;

use serde::Serialize;

use qreset::calibration::{analyze, run_pipeline_with, AnalysisOptions, CalibDataset, CalibrationResult};
use qreset::effective::{build_h3, landscape, propagate_h3, reset_rate, EffBasis};
use qreset::io::{datasets_from_csv, datasets_to_csv, shots_to_csv, to_json_string, Cell, Format, Table};
use qreset::lab::{generate_calibration_data, generate_herald_traces, sample_shots_with, CalibrationPlan, LabTruth, ReadoutTruth, VirtualLab};
use qreset::limits::{limit_report, thermal_ceiling, LimitOptions};
use qreset::lindblad::{evolve, steady_state_excitation, DrivenModel};
use qreset::ops::QState;
use qreset::readout::{assignment_frequencies, assignment_matrix, correct_populations, fit_bimodal_herald, fit_gmm, herald_threshold, Level, ShotSet};
use qreset::rng::key;
use qreset::trajectory::linspace;
use qreset::{Error, Exec, Frequency, PopulationTrajectory, SystemParams};

use crate::scenario::*;
use crate::CliError;

pub struct Ctx {
    pub seed: u64,
    pub format: Format,
    pub params: SystemParams,
    pub exec: Exec,
}

#[derive(Default)]
pub struct Output {
    pub files: Vec<(String, String)>,
    pub summary: Vec<String>,
}

impl Output {
    fn table(&mut self, ctx: &Ctx, stem: &str, t: &Table) {
        self.files.push((format!("{stem}.{}", ctx.format.extension()), t.render(ctx.format)));
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        self.files.push((name.to_string(), to_json_string(v)?));
        Ok(())
    }
}

// sub-stream labels for seeds derived from the global seed
const SEED_REFERENCE: u64 = 101;
const SEED_TEST: u64 = 102;
const SEED_HERALD: u64 = 103;

fn sub_seed(seed: u64, counters: &[u64]) -> u64 {
    key(seed, counters)
}

pub fn landscape_cmd(ctx: &Ctx, sc: &Scenario) -> Result<Output, CliError> {
    let default_axis = Axis::Range { start: 0.0, stop: 10.0, n: 101 };
    let (g_axis, w_axis, kappa) = match &sc.landscape {
        Some(c) => (
            c.g_tilde_mhz.values("g_tilde_mhz")?,
            c.omega_ef_mhz.values("omega_ef_mhz")?,
            c.kappa_mhz.map(Frequency::from_mhz).unwrap_or(ctx.params.kappa),
        ),
        None => (default_axis.values("g_tilde_mhz")?, default_axis.values("omega_ef_mhz")?, ctx.params.kappa),
    };
    if g_axis.iter().chain(&w_axis).any(|v| *v < 0.0) || !(kappa.mhz() > 0.0) {
        return Err(CliError::config("landscape rates and kappa must be non-negative (kappa > 0)"));
    }
    let fg: Vec<Frequency> = g_axis.iter().map(|v| Frequency::from_mhz(*v)).collect();
    let fw: Vec<Frequency> = w_axis.iter().map(|v| Frequency::from_mhz(*v)).collect();
    let l = landscape(&fg, &fw, kappa, ctx.exec)?;

    let mut grid = Table::new(&["g_tilde_mhz", "omega_ef_mhz", "gamma_mhz"]);
    for (i, g) in g_axis.iter().enumerate() {
        for (j, w) in w_axis.iter().enumerate() {
            grid.push_nums(&[*g, *w, l.gamma[i][j].mhz()]);
        }
    }
    let mut ridge = Table::new(&["g_tilde_mhz", "grid_omega_ef_mhz", "grid_gamma_mhz", "omega_ef_opt_mhz", "gamma_opt_mhz"]);
    for r in &l.ridge {
        let nan = f64::NAN;
        ridge.push_nums(&[
            r.g_tilde.mhz(),
            r.grid_omega_ef.mhz(),
            r.grid_gamma.mhz(),
            r.omega_ef_opt.map_or(nan, |f| f.mhz()),
            r.gamma_opt.map_or(nan, |f| f.mhz()),
        ]);
    }
    let mut out = Output::default();
    out.table(ctx, "landscape", &grid);
    out.table(ctx, "ridge", &ridge);
    let (i, j, top) = l.max();
    out.summary.push(format!(
        "max gamma/2pi = {:.4} MHz at g_tilde = {:.3}, omega_ef = {:.3} MHz (kappa/3 = {:.4} MHz)",
        top.mhz(),
        g_axis[i],
        w_axis[j],
        kappa.mhz() / 3.0
    ));
    Ok(out)
}

fn trajectory_table(t: &PopulationTrajectory) -> Table {
    let mut tab = Table::new(&PopulationTrajectory::csv_header().split(',').collect::<Vec<_>>());
    for r in t.csv_rows() {
        tab.push_nums(&r);
    }
    tab
}

pub fn dynamics_cmd(ctx: &Ctx, sc: &Scenario) -> Result<Output, CliError> {
    let default = DynamicsCfg::default();
    let c = sc.dynamics.as_ref().unwrap_or(&default);
    let drives = resolve_drives(&c.configs)?;
    let (basis, level) = match c.initial.as_str() {
        "e" => (EffBasis::E0, 1),
        "f" => (EffBasis::F0, 2),
        other => return Err(CliError::config(format!("initial state `{other}` must be e or f"))),
    };
    if !(c.t_stop_ns > 0.0) || c.n_points < 2 || !(c.tol > 0.0) || c.n_fock < 2 {
        return Err(CliError::config("dynamics needs t_stop_ns > 0, n_points >= 2, tol > 0, n_fock >= 2"));
    }
    if c.report_times_ns.iter().any(|t| !(*t >= 0.0 && *t <= c.t_stop_ns)) {
        return Err(CliError::config("report_times_ns must lie within [0, t_stop_ns]"));
    }
    let times = linspace(0.0, c.t_stop_ns * 1e-9, c.n_points);
    let mut cols: Vec<String> = vec!["config".into(), "model".into(), "gamma_mhz".into()];
    cols.extend(c.report_times_ns.iter().map(|t| format!("p_exc_{t}ns")));
    cols.extend(["settle_ns".into(), "p_exc_sat".into(), "thermal_ceiling".into()]);
    let mut summary = Table::new(&cols);
    let mut out = Output::default();
    let models: Vec<&str> = match c.model {
        ModelChoice::Effective => vec!["effective"],
        ModelChoice::Lindblad => vec!["lindblad"],
        ModelChoice::Both => vec!["effective", "lindblad"],
    };
    for (name, d) in &drives {
        let gamma = reset_rate(d.g_tilde, d.omega_ef, ctx.params.kappa);
        let ceiling = match thermal_ceiling(d, ctx.params.kappa, ctx.params.k_up, 1e-3, 1e-9) {
            Ok(v) => v,
            Err(Error::DivergentIntegral) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        for m in &models {
            let (traj, sat) = if *m == "effective" {
                let h = build_h3(d, ctx.params.kappa)?;
                (propagate_h3(&h, basis, &times)?, f64::NAN)
            } else {
                let model = DrivenModel::new(ctx.params.clone(), *d).with_fock(c.n_fock);
                let rho0 = QState::basis(3, c.n_fock, level, 0)?;
                let traj = evolve(&model, &rho0, &times, c.tol)?;
                let sat = steady_state_excitation(&model, c.saturation_horizon_us * 1e-6, c.tol)?;
                (traj, sat.p_exc)
            };
            out.table(ctx, &format!("trajectory_{name}_{m}"), &trajectory_table(&traj));
            let mut row: Vec<Cell> = vec![name.as_str().into(), (*m).into(), gamma.mhz().into()];
            for t in &c.report_times_ns {
                row.push(traj.excited_at(t * 1e-9).unwrap_or(f64::NAN).into());
            }
            row.push(traj.settling_time(c.settle_level).map_or(f64::NAN, |t| t * 1e9).into());
            row.push(sat.into());
            row.push(ceiling.into());
            if let Some(t0) = c.report_times_ns.first() {
                out.summary.push(format!(
                    "{name} {m}: P_exc({t0} ns) = {:.4e}{}",
                    traj.excited_at(t0 * 1e-9).unwrap_or(f64::NAN),
                    if sat.is_nan() { String::new() } else { format!(", P_exc_sat = {sat:.4e}") }
                ));
            }
            summary.push(row);
        }
    }
    out.table(ctx, "dynamics_summary", &summary);
    Ok(out)
}

fn lab_truth(ctx: &Ctx, t: &TruthCfg, ideal: bool) -> Result<LabTruth, CliError> {
    let mut truth = if ideal { LabTruth::ideal() } else { LabTruth::default() };
    truth.params = ctx.params.clone();
    apply_truth(&mut truth, t);
    truth.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(truth)
}

fn read_step(dir: &Path, k: usize) -> Result<Option<Vec<CalibDataset>>, CliError> {
    let path = dir.join(format!("step{k}.csv"));
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let sets = datasets_from_csv(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if let Some(d) = sets.iter().find(|d| d.meta.step as usize != k) {
        return Err(CliError::config(format!("{}: holds data for step {}", path.display(), d.meta.step)));
    }
    Ok(Some(sets))
}

#[derive(Serialize)]
struct SynthesizedDrive {
    target: String,
    target_mhz: [f64; 4],
    settings: qreset::lab::DriveSettings,
    /// Rates and detunings the simulated lab realises, MHz; absent for recorded data.
    realized_mhz: Option<[f64; 4]>,
}

fn mhz4(d: &qreset::DriveConfig) -> [f64; 4] {
    [d.omega_ef.mhz(), d.g_tilde.mhz(), d.delta_f0g1.mhz(), d.delta_ef.mhz()]
}

pub fn calibrate_cmd(ctx: &Ctx, sc: &Scenario) -> Result<Output, CliError> {
    let default = CalibrateCfg::default();
    let c = sc.calibrate.as_ref().unwrap_or(&default);
    let truth = lab_truth(ctx, &c.truth, c.noiseless)?;
    let mut plan = CalibrationPlan::default();
    apply_plan(&mut plan, &c.plan)?;
    if c.noiseless {
        plan.shots = 0;
    }
    let (target_name, target) = c.target.resolve()?;
    let opts = AnalysisOptions {
        gamma_f: if truth.decoherence { ctx.params.gamma1_ef() * (1.0 + ctx.params.n_th) * 1e-6 } else { 0.0 },
        stark_offset: c.stark_offset.unwrap_or(c.noiseless),
        ..Default::default()
    };
    let (result, simulated): (CalibrationResult, bool) = match &c.data_dir {
        Some(dir) => {
            let steps = [read_step(dir, 1)?, read_step(dir, 2)?, read_step(dir, 3)?, read_step(dir, 4)?];
            (analyze(&steps, &opts, ctx.exec)?, false)
        }
        None => {
            let mut lab = VirtualLab::new(truth.clone(), plan);
            lab.exec = ctx.exec;
            (run_pipeline_with(&lab, ctx.seed, &opts)?, true)
        }
    };
    let settings = result.drive_settings(&target)?;
    let mut out = Output::default();
    out.json("calibration.json", &result)?;
    out.json(
        "drive_settings.json",
        &SynthesizedDrive {
            target: target_name.clone(),
            target_mhz: mhz4(&target),
            settings,
            realized_mhz: simulated.then(|| mhz4(&truth.realized(&settings))),
        },
    )?;
    let nan = f64::NAN;
    let tv = |v: f64| if simulated { v } else { nan };
    let rows: [(&str, &str, f64, f64, f64); 5] = [
        ("stark_f0g1", "MHz/V^2", result.stark_f0g1.c2, result.stark_f0g1.c2_err(), tv(truth.stark_f0g1)),
        ("stark_ef", "MHz/V^2", result.stark_ef.c2, result.stark_ef.c2_err(), tv(truth.stark_ef)),
        ("rate_slope_f0g1", "MHz/V", result.rate_slope_f0g1.slope, result.rate_slope_f0g1.slope_err, tv(truth.slope_f0g1)),
        ("rate_slope_ef", "MHz/V", result.rate_slope_ef.slope, result.rate_slope_ef.slope_err, tv(truth.slope_ef)),
        ("kappa", "MHz", result.kappa_fit.mhz(), result.kappa_err_mhz, tv(truth.params.kappa.mhz())),
    ];
    let mut t = Table::new(&["quantity", "unit", "fitted", "std_err", "truth", "rel_error"]);
    for (q, u, v, e, tr) in rows {
        t.push(vec![q.into(), u.into(), v.into(), e.into(), tr.into(), (v / tr - 1.0).into()]);
        if simulated {
            out.summary.push(format!("{q}: {v:.5} {u} (truth {tr}, {:+.3}%)", 100.0 * (v / tr - 1.0)));
        } else {
            out.summary.push(format!("{q}: {v:.5} +/- {e:.2e} {u}"));
        }
    }
    out.table(ctx, "calibration_summary", &t);
    out.summary.push(format!(
        "config {target_name}: V_f0g1 = {:.5} V, V_ef = {:.6} V, offsets {:.4} / {:.4} MHz",
        settings.v_f0g1, settings.v_ef, settings.f0g1_offset_mhz, settings.ef_offset_mhz
    ));
    Ok(out)
}

fn readout_truth(c: &ReadoutCfg) -> Result<ReadoutTruth, CliError> {
    let mut t = ReadoutTruth::default();
    if let Some(m) = c.means {
        t.means = m;
    }
    if let Some(s) = c.sigma {
        t.sigma = s;
    }
    if let Some(tr) = c.transition {
        t.transition = tr;
    }
    t.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(t)
}

/// (P_g, P_e, P_f) on a grid of step 1/(n−1) over the simplex.
pub fn simplex_grid(n: usize) -> Vec<[f64; 3]> {
    let mut v = Vec::new();
    let d = (n - 1) as f64;
    for i in 0..n {
        for j in 0..n - i {
            let (g, e) = (i as f64 / d, j as f64 / d);
            v.push([g, e, (1.0 - g - e).max(0.0)]);
        }
    }
    v
}

#[derive(Serialize)]
struct ReadoutReport {
    gmm: qreset::readout::GmmModel,
    gmm_iterations: usize,
    assignment: qreset::readout::AssignmentMatrix,
    condition_number: f64,
    max_abs_bias: f64,
    herald: HeraldReport,
}

#[derive(Serialize)]
struct HeraldReport {
    fit: qreset::readout::Bimodal,
    p_tail: f64,
    threshold: f64,
    threshold_sigmas: f64,
    kept_fraction: f64,
    ground_survival: f64,
}

pub fn readout_cmd(ctx: &Ctx, sc: &Scenario) -> Result<Output, CliError> {
    let default = ReadoutCfg::default();
    let c = sc.readout.as_ref().unwrap_or(&default);
    if c.reference_shots < 100 || c.test_shots == 0 || c.grid_n < 2 || c.repeats == 0 || c.herald_samples < 100 {
        return Err(CliError::config("readout needs reference_shots >= 100, test_shots >= 1, grid_n >= 2, repeats >= 1, herald_samples >= 100"));
    }
    let truth = readout_truth(c)?;
    let refs: [ShotSet; 3] = {
        let v: Vec<ShotSet> = (0..3)
            .map(|s| {
                let mut p = [0.0; 3];
                p[s] = 1.0;
                sample_shots_with(ctx.exec, p, &truth, c.reference_shots, sub_seed(ctx.seed, &[SEED_REFERENCE, s as u64]))
            })
            .collect::<Result<_, _>>()?;
        v.try_into().expect("three reference sets")
    };
    let gmm = fit_gmm(&refs)?;
    let r = assignment_matrix(&gmm.model, &refs, ctx.exec)?;

    let mut rt = Table::new(&["measured", "prepared_g", "prepared_e", "prepared_f"]);
    for m in 0..3 {
        rt.push(vec![Level::ALL[m].symbol().to_string().into(), r.r[m][0].into(), r.r[m][1].into(), r.r[m][2].into()]);
    }
    let mut ct = Table::new(&[
        "true_g", "true_e", "true_f", "meas_g", "meas_e", "meas_f", "corr_g", "corr_e", "corr_f", "clip_g", "clip_e", "clip_f", "max_abs_bias",
    ]);
    let mut worst: f64 = 0.0;
    for (k, p) in simplex_grid(c.grid_n).iter().enumerate() {
        let mut meas = [0.0; 3];
        let mut corr = [0.0; 3];
        let mut clip = [0.0; 3];
        for rep in 0..c.repeats {
            let shots = sample_shots_with(ctx.exec, *p, &truth, c.test_shots, sub_seed(ctx.seed, &[SEED_TEST, k as u64, rep as u64]))?;
            let m = assignment_frequencies(&gmm.model, &shots, ctx.exec)?;
            let cp = correct_populations(m, &r)?;
            for i in 0..3 {
                meas[i] += m[i] / c.repeats as f64;
                corr[i] += cp.raw[i] / c.repeats as f64;
                clip[i] += cp.clipped[i] / c.repeats as f64;
            }
        }
        let bias = (0..3).map(|i| (corr[i] - p[i]).abs()).fold(0.0, f64::max);
        worst = worst.max(bias);
        let mut row = Vec::new();
        row.extend_from_slice(p);
        row.extend_from_slice(&meas);
        row.extend_from_slice(&corr);
        row.extend_from_slice(&clip);
        row.push(bias);
        ct.push_nums(&row);
    }

    let mut lab = LabTruth::default();
    lab.params = ctx.params.clone();
    let samples = generate_herald_traces(&lab, c.herald_samples, sub_seed(ctx.seed, &[SEED_HERALD]))?;
    let hf = fit_bimodal_herald(&samples)?;
    let (_, mu_e, sd_e) = hf.model.excited();
    let thr = herald_threshold(mu_e, sd_e, c.herald_p_tail)?;
    let kept = samples.iter().filter(|x| **x > thr).count() as f64 / samples.len() as f64;
    let report = ReadoutReport {
        gmm: gmm.model.clone(),
        gmm_iterations: gmm.iterations,
        assignment: r,
        condition_number: r.condition_number(),
        max_abs_bias: worst,
        herald: HeraldReport {
            fit: hf.model,
            p_tail: c.herald_p_tail,
            threshold: thr,
            threshold_sigmas: (thr - mu_e) / sd_e,
            kept_fraction: kept,
            ground_survival: hf.model.ground_survival(thr),
        },
    };
    let mut out = Output::default();
    out.table(ctx, "assignment_matrix", &rt);
    out.table(ctx, "corrections", &ct);
    out.json("readout.json", &report)?;
    let d = r.diagonal();
    out.summary.push(format!("R diagonal: g {:.4}, e {:.4}, f {:.4}", d[0], d[1], d[2]));
    out.summary.push(format!("max |corrected - true| over the grid: {worst:.2e}"));
    out.summary.push(format!("herald threshold: mu_exc + {:.4} sigma, kept {:.4}", (thr - mu_e) / sd_e, kept));
    Ok(out)
}

#[derive(Serialize)]
struct NamedReport {
    config: String,
    gamma_mhz: f64,
    report: qreset::limits::LimitReport,
}

pub fn limits_cmd(ctx: &Ctx, sc: &Scenario) -> Result<Output, CliError> {
    let default = LimitsCfg::default();
    let c = sc.limits.as_ref().unwrap_or(&default);
    if !(c.t_rr_mk >= 0.0) || !(c.t_max_ms > 0.0) || !(c.tol > 0.0) {
        return Err(CliError::config("limits needs t_rr_mk >= 0, t_max_ms > 0, tol > 0"));
    }
    let drives = resolve_drives(&c.configs)?;
    let opts = LimitOptions { t_rr: c.t_rr_mk * 1e-3, t_max: c.t_max_ms * 1e-3, tol: c.tol };
    let mut t = Table::new(&["config", "gamma_mhz", "p_thermal_ceiling", "p_resonator_limit", "p_ef_leakage", "dominant"]);
    let mut reports = Vec::new();
    let mut out = Output::default();
    for (name, d) in drives {
        let rep = limit_report(&ctx.params, &d, &opts)?;
        let gamma = reset_rate(d.g_tilde, d.omega_ef, ctx.params.kappa).mhz();
        let dominant = serde_json::to_value(rep.dominant).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        t.push(vec![
            name.as_str().into(),
            gamma.into(),
            rep.p_thermal_ceiling.into(),
            rep.p_resonator_limit.into(),
            rep.p_ef_leakage.into(),
            dominant.as_str().into(),
        ]);
        out.summary.push(format!("{name}: thermal ceiling {:.3}%, dominant {dominant}", 100.0 * rep.p_thermal_ceiling));
        reports.push(NamedReport { config: name, gamma_mhz: gamma, report: rep });
    }
    out.table(ctx, "limits", &t);
    out.json("limit_report.json", &reports)?;
    Ok(out)
}

pub fn lab_cmd(ctx: &Ctx, sc: &Scenario) -> Result<Output, CliError> {
    let default = LabCfg::default();
    let c = sc.lab.as_ref().unwrap_or(&default);
    let truth = lab_truth(ctx, &c.truth, false)?;
    let mut plan = CalibrationPlan::default();
    apply_plan(&mut plan, &c.plan)?;
    let mut out = Output::default();
    if c.calibration {
        let data = generate_calibration_data(&truth, &plan, ctx.seed)?;
        for (k, sets) in data.iter().enumerate() {
            match ctx.format {
                Format::Csv => out.files.push((format!("step{}.csv", k + 1), datasets_to_csv(sets))),
                Format::Json => out.json(&format!("step{}.json", k + 1), sets)?,
            }
        }
        out.summary.push(format!("calibration data: {} + {} + {} + {} datasets", data[0].len(), data[1].len(), data[2].len(), data[3].len()));
    }
    if c.shots {
        if c.reference_shots == 0 {
            return Err(CliError::config("reference_shots must be >= 1"));
        }
        for (s, l) in Level::ALL.iter().enumerate() {
            let mut p = [0.0; 3];
            p[s] = 1.0;
            let shots = sample_shots_with(ctx.exec, p, &truth.readout, c.reference_shots, sub_seed(ctx.seed, &[SEED_REFERENCE, s as u64]))?;
            match ctx.format {
                Format::Csv => out.files.push((format!("shots_{}.csv", l.symbol()), shots_to_csv(&shots))),
                Format::Json => out.json(&format!("shots_{}.json", l.symbol()), &shots)?,
            }
        }
        out.summary.push(format!("reference shots: 3 x {}", c.reference_shots));
    }
    if c.herald {
        let h = generate_herald_traces(&truth, c.herald_samples.max(1), sub_seed(ctx.seed, &[SEED_HERALD]))?;
        let mut t = Table::new(&["herald"]);
        for v in &h {
            t.push_nums(&[*v]);
        }
        out.table(ctx, "herald", &t);
        out.summary.push(format!("herald samples: {}", h.len()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_grid_points() {
        let g = simplex_grid(5);
        assert_eq!(g.len(), 15);
        assert!(g.iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-12 && p.iter().all(|x| *x >= 0.0)));
    }
}

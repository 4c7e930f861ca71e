//! Acceptance run: one PASS/FAIL line per criterion, with wall time
//! against its budget. Exits nonzero when a criterion outside
//! `EXPECTED_RED` fails, or when an expected red one starts passing.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;

use qreset::calibration::run_pipeline;
use qreset::effective::{
    build_h3, decay_rates, landscape, optimal_ef_rate, propagate_h3, propagate_h3_basis, reset_rate, two_level_pf,
    two_level_pf_propagated, EffBasis,
};
use qreset::lab::{sample_shots, CalibrationPlan, LabTruth, ReadoutTruth, VirtualLab};
use qreset::limits::thermal_ceiling;
use qreset::lindblad::{compare_to_effective, evolve_states, fock_convergence, steady_state_excitation, DrivenModel, N_TRANSMON};
use qreset::ops::{min_eigenvalue, QState};
use qreset::readout::{assignment_frequencies, assignment_matrix, correct_populations, fit_gmm, herald_threshold, ShotSet};
use qreset::rng::stream;
use qreset::trajectory::linspace;
use qreset::{default_params, DriveConfig, Exec, Frequency, Preset};

/// Criteria known to fail; see the run output for the failing sub-check.
const EXPECTED_RED: &[u8] = &[8];

const RECIPES: [&str; 6] = ["fig2", "fig3", "fig4", "table3", "limits", "projection"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn mhz(x: f64) -> Frequency {
    Frequency::from_mhz(x)
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn c1_plateau() -> Outcome {
    let axis: Vec<Frequency> = (0..=100).map(|i| mhz(0.1 * i as f64)).collect();
    let l = landscape(&axis, &axis, mhz(9.0), Exec::default()).unwrap();
    let top = l.max().2.mhz();
    let ok_top = rel(top, 3.0) <= 0.01;
    let mut ok = ok_top;
    let mut parts = vec![format!("max {top:.4} MHz")];
    for (w, g) in [(3.0, 4.8), (1.5, 2.9)] {
        let r = l.ridge_near(mhz(g)).unwrap();
        let grid = r.grid_omega_ef.mhz();
        let hit = (grid - w).abs() <= 0.1 + 1e-9;
        ok &= hit;
        parts.push(format!(
            "ridge@g{g}: grid {grid:.1} opt {:.3}",
            r.omega_ef_opt.map(|f| f.mhz()).unwrap_or(f64::NAN)
        ));
    }
    Outcome { pass: ok, detail: parts.join(", ") }
}

fn c2_trace() -> Outcome {
    let mut rng = stream(2024, &[2]);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let kappa = mhz(rng.random_range(0.5..50.0));
        let d = DriveConfig {
            g_tilde: mhz(rng.random_range(0.0..20.0)),
            omega_ef: mhz(rng.random_range(0.0..20.0)),
            delta_f0g1: mhz(rng.random_range(-5.0..5.0)),
            delta_ef: mhz(rng.random_range(-5.0..5.0)),
        };
        let h = build_h3(&d, kappa).unwrap();
        let sum: f64 = decay_rates(&h).iter().map(|r| r.rad_per_s()).sum();
        worst = worst.max((sum / kappa.rad_per_s() - 1.0).abs());
    }
    Outcome { pass: worst <= 1e-9, detail: format!("max |sum/kappa - 1| = {worst:.2e}") }
}

fn c3_280ns() -> Outcome {
    let h = build_h3(&Preset::A.drives(), default_params().kappa).unwrap();
    let p = propagate_h3_basis(&h, EffBasis::E0, &[280e-9]).unwrap()[0];
    let exc = p[0] + p[1];
    Outcome { pass: exc <= 0.01, detail: format!("P_exc(280 ns) = {:.4}%", 100.0 * exc) }
}

fn c4_closed_form() -> Outcome {
    let mut rng = stream(2024, &[4]);
    let times = linspace(0.0, 2.0, 401);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let tau = 2.0 * std::f64::consts::PI;
        let g = tau * rng.random_range(0.05..10.0);
        let k = tau * rng.random_range(0.5..40.0);
        let gam = rng.random_range(0.0..2.0);
        for &t in &times {
            worst = worst.max((two_level_pf(t, g, k, gam) - two_level_pf_propagated(t, g, k, gam)).abs());
        }
    }
    Outcome { pass: worst < 1e-10, detail: format!("max abs error {worst:.2e}") }
}

fn c5_master_equation() -> Outcome {
    let model = DrivenModel::new(default_params(), Preset::A.drives());
    let sat = steady_state_excitation(&model, 2e-6, 1e-8).unwrap();
    let ok_sat = sat.converged && (sat.p_exc - 2e-3).abs() <= 5e-4;
    let times = linspace(0.0, 2e-6, 41);
    let rho0 = QState::basis(N_TRANSMON, model.n_fock, 1, 0).unwrap();
    let states = evolve_states(&model, &rho0, 0.0, &times, 1e-8).unwrap();
    let trace_err = states.iter().map(|r| (r.trace().re - 1.0).abs()).fold(0.0, f64::max);
    let min_eig = states.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
    let fock = fock_convergence(&model, &linspace(0.0, 1e-6, 21), 1e-8).unwrap();
    let pass = ok_sat && trace_err <= 1e-8 && min_eig >= -1e-9 && fock < 1e-4;
    Outcome {
        pass,
        detail: format!(
            "P_sat {:.4}%, trace err {trace_err:.1e}, min eig {min_eig:.1e}, fock 3->4 {fock:.1e}",
            100.0 * sat.p_exc
        ),
    }
}

fn c6_rwa_bridge() -> Outcome {
    let times = linspace(0.0, 1e-6, 201);
    let mut parts = Vec::new();
    let mut ok = true;
    for p in Preset::ALL {
        let d = compare_to_effective(&DrivenModel::new(default_params(), p.drives()), &times, 1e-9).unwrap();
        ok &= d <= 0.02;
        parts.push(format!("{} {d:.4}", p.name()));
    }
    Outcome { pass: ok, detail: format!("max |dP|: {}", parts.join(", ")) }
}

fn c7_ceiling() -> Outcome {
    let p = default_params();
    let want = [0.26, 0.46, 0.34];
    let mut ok = true;
    let mut parts = Vec::new();
    for (pr, w) in Preset::ALL.iter().zip(want) {
        let v = 100.0 * thermal_ceiling(&pr.drives(), p.kappa, p.k_up, 1e-3, 1e-10).unwrap();
        ok &= (v - w).abs() <= 0.05;
        parts.push(format!("{} {v:.3}% (vs {w}%)", pr.name()));
    }
    Outcome { pass: ok, detail: format!("e+f reading: {}", parts.join(", ")) }
}

fn c8_projection() -> Outcome {
    let mut params = default_params();
    params.kappa = mhz(37.5);
    let g = mhz(20.0);
    let w = optimal_ef_rate(g, params.kappa).unwrap();
    let drives = DriveConfig::resonant(g, w);
    let gamma = reset_rate(g, w, params.kappa).mhz();
    let ok_gamma = rel(gamma, 12.5) <= 0.01;

    // thermalization-free settling of the effective model
    let h = build_h3(&drives, params.kappa).unwrap();
    let tr = propagate_h3(&h, EffBasis::E0, &linspace(0.0, 300e-9, 3001)).unwrap();
    let settle = tr.settling_time(1e-3).unwrap_or(f64::INFINITY);
    let ok_settle = settle / 83e-9 <= 2.0 && 83e-9 / settle <= 2.0;

    // full model with the unchanged thermal and decoherence rates
    let sat = steady_state_excitation(&DrivenModel::new(params, drives), 1e-6, 1e-8).unwrap();
    let ratio = sat.p_exc / 1.6e-4;
    let ok_sat = (0.5..=2.0).contains(&ratio);
    Outcome {
        pass: ok_gamma && ok_settle && ok_sat,
        detail: format!(
            "Gamma {gamma:.4} MHz at g {:.1}/ef {:.3} MHz [{}]; t(P_exc=0.1%) {:.1} ns vs 83 ns [{}]; \
             P_sat {:.3e} vs 1.6e-4, x{ratio:.1} [{}]",
            g.mhz(),
            w.mhz(),
            verdict(ok_gamma),
            settle * 1e9,
            verdict(ok_settle),
            sat.p_exc,
            verdict(ok_sat)
        ),
    }
}

fn simplex_grid(n: usize) -> Vec<[f64; 3]> {
    let m = (n - 1) as f64;
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n - i {
            let k = n - 1 - i - j;
            out.push([i as f64 / m, j as f64 / m, k as f64 / m]);
        }
    }
    out
}

fn c9_readout() -> Outcome {
    let truth = ReadoutTruth::default();
    let n = 40_000;
    let repeats = 10;
    let grid = simplex_grid(5);
    let mut diag = [0.0; 3];
    let mut sums = vec![[0.0; 3]; grid.len()];
    for rep in 0..repeats {
        let refs: [ShotSet; 3] = std::array::from_fn(|s| {
            let mut p = [0.0; 3];
            p[s] = 1.0;
            sample_shots(p, &truth, n, 9_000 + 10 * rep + s as u64).unwrap()
        });
        let gmm = fit_gmm(&refs).unwrap();
        let r = assignment_matrix(&gmm.model, &refs, Exec::default()).unwrap();
        for (d, x) in diag.iter_mut().zip(r.diagonal()) {
            *d += x / repeats as f64;
        }
        for (k, p) in grid.iter().enumerate() {
            let shots = sample_shots(*p, &truth, n, 100_000 + 1_000 * rep + k as u64).unwrap();
            let m = assignment_frequencies(&gmm.model, &shots, Exec::default()).unwrap();
            let c = correct_populations(m, &r).unwrap();
            for i in 0..3 {
                sums[k][i] += c.raw[i] / repeats as f64;
            }
        }
    }
    let bias = grid
        .iter()
        .zip(&sums)
        .flat_map(|(p, s)| (0..3).map(move |i| (s[i] - p[i]).abs()))
        .fold(0.0, f64::max);
    let ok_diag = diag.iter().zip([0.982, 0.957, 0.930]).all(|(d, w)| (d - w).abs() <= 0.005);
    Outcome {
        pass: ok_diag && bias < 3e-3,
        detail: format!(
            "R diag ({:.2}, {:.2}, {:.2})%, max bias {:.3}% over {} points x {repeats} repeats",
            100.0 * diag[0],
            100.0 * diag[1],
            100.0 * diag[2],
            100.0 * bias,
            grid.len()
        ),
    }
}

fn c10_herald() -> Outcome {
    let (mu, sigma) = (1.3, 0.7);
    let t = herald_threshold(mu, sigma, 1e-5).unwrap();
    let z = (t - mu) / sigma;
    Outcome { pass: (z - 4.2649).abs() <= 1e-3, detail: format!("threshold = mu + {z:.6} sigma") }
}

fn c11_calibration() -> Outcome {
    let truth = LabTruth::default();
    let plan = CalibrationPlan::default();
    let lab = VirtualLab::new(truth.clone(), plan.clone());
    let mut worst = BTreeMap::new();
    let mut ok = true;
    for seed in 1..=5u64 {
        let r = run_pipeline(&lab, seed).unwrap();
        let errs = [
            ("slope_f0g1", rel(r.rate_slope_f0g1.slope, truth.slope_f0g1), 0.02),
            ("slope_ef", rel(r.rate_slope_ef.slope, truth.slope_ef), 0.02),
            ("stark_f0g1", rel(r.stark_f0g1.c2, truth.stark_f0g1), 0.05),
            ("stark_ef", rel(r.stark_ef.c2, truth.stark_ef), 0.05),
            ("kappa", rel(r.kappa_fit.mhz(), truth.params.kappa.mhz()), 0.05),
        ];
        for (name, e, tol) in errs {
            ok &= e <= tol;
            let w = worst.entry(name).or_insert(0.0f64);
            *w = w.max(e);
        }
    }
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {:.2}%", 100.0 * v)).collect();
    Outcome {
        pass: ok,
        detail: format!("{} shots/point, worst over 5 seeds: {}", plan.shots, parts.join(", ")),
    }
}

fn run_recipe(name: &str, out: &Path) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qreset"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("QRESET_")) {
        cmd.env_remove(k);
    }
    let st = cmd
        .args(["--recipe", name, "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if st.status.success() {
        Ok(())
    } else {
        Err(format!("{name}: {}", String::from_utf8_lossy(&st.stderr).trim()))
    }
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn c12_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut files = 0;
    let mut bad = Vec::new();
    for name in RECIPES {
        let a = tmp.path().join(format!("{name}_a"));
        let b = tmp.path().join(format!("{name}_b"));
        if let Err(e) = run_recipe(name, &a).and_then(|_| run_recipe(name, &b)) {
            bad.push(e);
            continue;
        }
        let (ta, tb) = (read_tree(&a), read_tree(&b));
        files += ta.len();
        if ta.is_empty() || ta != tb {
            bad.push(format!("{name} differs"));
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("{} recipes, {files} files byte-identical", RECIPES.len())
        } else {
            bad.join("; ")
        },
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

type Check = (u8, &'static str, f64, fn() -> Outcome);

fn main() -> ExitCode {
    let checks: [Check; 12] = [
        (1, "reset-rate plateau and ridge", 10.0, c1_plateau),
        (2, "trace identity", 1.0, c2_trace),
        (3, "effective dynamics at 280 ns", 1.0, c3_280ns),
        (4, "two-level closed form", 5.0, c4_closed_form),
        (5, "master equation", 60.0, c5_master_equation),
        (6, "rotating-frame bridge", 60.0, c6_rwa_bridge),
        (7, "thermal ceiling", 10.0, c7_ceiling),
        (8, "kappa 37.5 MHz projection", 60.0, c8_projection),
        (9, "readout closed loop", 30.0, c9_readout),
        (10, "heralding threshold", 1.0, c10_herald),
        (11, "calibration closed loop", 300.0, c11_calibration),
        (12, "recipe determinism", 60.0, c12_determinism),
    ];
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, budget, f) in checks {
        let t0 = Instant::now();
        let o = f();
        let secs = t0.elapsed().as_secs_f64();
        let pass = o.pass && secs < budget;
        let tag = match (pass, EXPECTED_RED.contains(&id)) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (was known red)",
        };
        println!("criterion {id:>2} {tag}: {name}: {} [{secs:.2} s / {budget} s]", o.detail);
        if pass {
            passed += 1;
        }
        if pass == EXPECTED_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    println!("acceptance: {passed}/12 pass, known red {EXPECTED_RED:?}");
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected outcome for {unexpected:?}");
        ExitCode::FAILURE
    }
}

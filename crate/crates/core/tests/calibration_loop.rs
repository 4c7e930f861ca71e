use qreset::calibration::*;
use qreset::io::{datasets_from_csv, datasets_to_csv};
use qreset::lab::*;
use qreset::{Error, Exec, Preset};

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn noiseless_ideal_lab_recovers_truth() {
    let truth = LabTruth::ideal();
    let lab = VirtualLab::new(truth.clone(), CalibrationPlan { shots: 0, ..Default::default() });
    // the e-f drive carries its own small shift, absorbed by the offset term
    let opts = AnalysisOptions { stark_offset: true, ..options_for(&lab) };
    let r = run_pipeline_with(&lab, 0, &opts).unwrap();
    assert!(rel(r.stark_f0g1.c2, truth.stark_f0g1) < 1e-3, "{:?}", r.stark_f0g1);
    assert!(rel(r.stark_ef.c2, truth.stark_ef) < 1e-3, "{:?}", r.stark_ef);
    assert!(rel(r.rate_slope_f0g1.slope, truth.slope_f0g1) < 1e-3);
    assert!(rel(r.rate_slope_ef.slope, truth.slope_ef) < 1e-3);
    assert!(rel(r.kappa_fit.mhz(), truth.params.kappa.mhz()) < 1e-3);
}

#[test]
fn synthesized_drives_reproduce_config_a() {
    let truth = LabTruth::default();
    let lab = VirtualLab::new(truth.clone(), CalibrationPlan::default());
    let r = run_pipeline(&lab, 21).unwrap();
    assert!(r.rate_slope_f0g1.slope > 0.0 && r.rate_slope_ef.slope > 0.0 && r.kappa_fit.mhz() > 0.0);
    let target = Preset::A.drives();
    let got = truth.realized(&r.drive_settings(&target).unwrap());
    assert!(rel(got.g_tilde.mhz(), target.g_tilde.mhz()) < 0.03, "{got:?}");
    assert!(rel(got.omega_ef.mhz(), target.omega_ef.mhz()) < 0.03, "{got:?}");
    // residual detunings small against the reset rate
    assert!(got.delta_f0g1.mhz().abs() < 0.3 && got.delta_ef.mhz().abs() < 0.3, "{got:?}");
    for p in r.f0g1_rates.iter().chain(&r.ef_rates) {
        assert!(p.ci95_mhz > 0.0 && p.ci95_mhz < 0.1 * p.value_mhz);
    }
}

#[test]
fn disabled_ef_drive_fails_at_step_2() {
    let truth = LabTruth { slope_ef: 0.0, ..Default::default() };
    let err = run_pipeline(&VirtualLab::new(truth, CalibrationPlan::default()), 1).unwrap_err();
    match err {
        Error::CalibrationStep { step: 2, source } => assert!(matches!(*source, Error::FitFailure { .. })),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_step_is_named() {
    let opts = AnalysisOptions::default();
    let none: [Option<Vec<CalibDataset>>; 4] = [None, None, None, None];
    assert!(matches!(analyze(&none, &opts, Exec::default()), Err(Error::MissingStep(1))));
    let one = CalibDataset {
        x: vec![0.0, 1.0],
        y: vec![0.0, 0.0],
        y_err: None,
        meta: DatasetMeta { step: 1, amplitude: 0.1 },
    };
    let partial = [Some(vec![one.clone()]), Some(vec![one.clone()]), None, Some(vec![one])];
    assert!(matches!(analyze(&partial, &opts, Exec::default()), Err(Error::MissingStep(3))));
}

#[test]
fn recorded_data_round_trips_through_csv() {
    let truth = LabTruth::default();
    let plan = CalibrationPlan::default();
    let data = generate_calibration_data(&truth, &plan, 5).unwrap();
    let text: String = data.iter().map(|d| datasets_to_csv(d)).collect::<Vec<_>>().join("");
    // concatenated files keep repeated headers out of the data
    let parsed: Vec<Vec<CalibDataset>> = data.iter().map(|d| datasets_from_csv(&datasets_to_csv(d)).unwrap()).collect();
    assert!(text.matches("step,amplitude").count() == 4);
    let opts = AnalysisOptions {
        gamma_f: truth.params.gamma1_ef() * (1.0 + truth.params.n_th) * 1e-6,
        ..Default::default()
    };
    let wrap = |v: &Vec<Vec<CalibDataset>>| -> [Option<Vec<CalibDataset>>; 4] { std::array::from_fn(|k| Some(v[k].clone())) };
    let a = analyze(&wrap(&data.to_vec()), &opts, Exec::default()).unwrap();
    let b = analyze(&wrap(&parsed), &opts, Exec::default()).unwrap();
    assert!(rel(a.rate_slope_f0g1.slope, b.rate_slope_f0g1.slope) < 1e-6);
    assert!(rel(a.stark_ef.c2, b.stark_ef.c2) < 1e-6);
    assert!(rel(a.stark_f0g1.c2, truth.stark_f0g1) < 0.05);
    assert!(rel(a.rate_slope_ef.slope, truth.slope_ef) < 0.02);
}

#[test]
fn shared_fit_agrees_with_independent_fits() {
    let truth = LabTruth::default();
    let plan = CalibrationPlan::default();
    let sets = simulate_step(&truth, &plan, 4, &StepPrior::from_truth(&truth), Exec::default()).unwrap();
    let sets = add_shot_noise(&sets, 2000, 17);
    let gamma = truth.params.gamma1_ef() * (1.0 + truth.params.n_th) * 1e-6;
    let k0 = AnalysisOptions::default().kappa_guess;
    let global = fit_f0g1_rabi(&sets, gamma, k0).unwrap();
    for (i, d) in sets.iter().enumerate() {
        let own = fit_f0g1_rabi(std::slice::from_ref(d), gamma, k0).unwrap();
        let (a, b) = (global.g_tilde[i], own.g_tilde[0]);
        let sigma = (a.err.powi(2) + b.err.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 3.0 * sigma, "{a:?} {b:?}");
    }
}

#[test]
fn rates_are_linear_in_amplitude() {
    let truth = LabTruth::default();
    let plan = CalibrationPlan::default();
    let sets = add_shot_noise(&simulate_step(&truth, &plan, 2, &StepPrior::from_truth(&truth), Exec::default()).unwrap(), 2000, 3);
    let s2 = analyze_step2(&sets).unwrap();
    // residual scatter comparable to the fitted uncertainties
    let mean_sd = s2.rates.iter().map(|p| p.ci95_mhz / 1.96).sum::<f64>() / s2.rates.len() as f64;
    let resid_sd = s2.slope.reduced_chi2.sqrt();
    assert!(resid_sd < 5.0 * mean_sd, "{resid_sd} vs {mean_sd}");
}

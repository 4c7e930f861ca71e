use qreset::calibration::{fit_f0g1_rabi, AnalysisOptions};
use qreset::lab::*;
use qreset::readout::{fit_bimodal_herald, Level};
use qreset::{Exec, Preset};

#[test]
fn reset_from_e_reaches_saturation() {
    let t = LabTruth::default();
    let s = PulseSchedule::new(vec![
        Segment::PiGe,
        Segment::Drive { duration: 500e-9, drives: Preset::A.drives() },
        Segment::Readout,
    ]);
    let p = run_schedule(&t, &s).unwrap();
    let exc = p[1] + p[2];
    assert!((exc - 0.002).abs() < 0.001, "{p:?}");
}

#[test]
fn idle_gap_thermalizes_linearly() {
    let t = LabTruth::default();
    let gap = 100e-9;
    let s = PulseSchedule { segments: vec![Segment::Readout], t_gap: gap };
    let p = run_schedule(&t, &s).unwrap();
    let want = t.params.k_up.rad_per_s() * gap;
    assert!((p[1] / want - 1.0).abs() < 0.05, "{} vs {}", p[1], want);
}

#[test]
fn ideal_schedule_matches_effective_model() {
    use qreset::effective::{build_h3, propagate_h3_basis, EffBasis};
    let t = LabTruth::ideal();
    let d = Preset::B.drives();
    for dur in [50e-9, 150e-9, 400e-9] {
        let p = run_schedule(&t, &PulseSchedule::new(vec![Segment::PiGe, Segment::Drive { duration: dur, drives: d }, Segment::Readout])).unwrap();
        let q = propagate_h3_basis(&build_h3(&d, t.params.kappa).unwrap(), EffBasis::E0, &[dur]).unwrap()[0];
        assert!((p[1] - q[0]).abs() < 0.02 && (p[2] - q[1]).abs() < 0.02, "{p:?} {q:?}");
    }
}

#[test]
fn shot_clusters_follow_populations() {
    let r = ReadoutTruth::default();
    let n = 40_000;
    let s = sample_shots([1.0 / 3.0; 3], &r, n, 11).unwrap();
    let labels = s.labels.unwrap();
    for l in Level::ALL {
        let k = labels.iter().filter(|x| **x == l).count() as f64;
        let sd = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        assert!((k - n as f64 / 3.0).abs() < 3.0 * sd, "{l:?} {k}");
    }
    let tight = ReadoutTruth {
        sigma: 1e-3,
        transition: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        ..r
    };
    let g = sample_shots([1.0, 0.0, 0.0], &tight, 500, 2).unwrap();
    assert!(g.points.iter().all(|p| p[0].abs() < 0.01 && p[1].abs() < 0.01));
}

#[test]
fn shots_repeat_bit_for_bit() {
    let r = ReadoutTruth::default();
    let a = sample_shots_with(Exec::Sequential, [0.2, 0.5, 0.3], &r, 10_000, 99).unwrap();
    let b = sample_shots_with(Exec::default(), [0.2, 0.5, 0.3], &r, 10_000, 99).unwrap();
    assert_eq!(a, b);
    let c = sample_shots([0.2, 0.5, 0.3], &r, 10_000, 100).unwrap();
    assert_ne!(a, c);
}

#[test]
fn shot_noise_scales_as_inverse_root_n() {
    use qreset::calibration::{CalibDataset, DatasetMeta};
    let exact = vec![CalibDataset {
        x: (0..2000).map(|i| i as f64).collect(),
        y: (0..2000).map(|i| 0.2 + 0.6 * (i as f64 / 1999.0)).collect(),
        y_err: None,
        meta: DatasetMeta { step: 2, amplitude: 0.004 },
    }];
    let rms = |n: usize| {
        let noisy = add_shot_noise(&exact, n, 5);
        let v: f64 = noisy[0].y.iter().zip(&exact[0].y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2000.0;
        v.sqrt()
    };
    let (a, b, c) = (rms(500), rms(2000), rms(8000));
    for r in [a / b, b / c] {
        assert!((r - 2.0).abs() < 0.15, "{a} {b} {c}");
    }
}

#[test]
fn herald_samples() {
    let mut t = LabTruth::default();
    let n = 40_000;
    let s = generate_herald_traces(&t, n, 4).unwrap();
    assert_eq!(s, generate_herald_traces(&t, n, 4).unwrap());
    let thr = 0.5 * (t.herald.mu_ground + t.herald.mu_excited);
    let exc = s.iter().filter(|x| **x < thr).count() as f64;
    let p = t.params.n_th;
    assert!((exc - p * n as f64).abs() < 3.0 * (n as f64 * p * (1.0 - p)).sqrt(), "{exc}");
    let fit = fit_bimodal_herald(&s).unwrap();
    assert!((fit.model.weights[1] - p).abs() < 0.01, "{:?}", fit.model);

    t.params.n_th = 0.0;
    let s = generate_herald_traces(&t, 5000, 4).unwrap();
    assert!(s.iter().all(|x| (x - t.herald.mu_ground).abs() < 6.0 * t.herald.sigma));
}

#[test]
fn step4_sweep_encodes_the_injected_rate() {
    let truth = LabTruth::default();
    let plan = CalibrationPlan { shots: 0, amplitudes_f0g1: vec![0.444], ..Default::default() };
    let prior = StepPrior::from_truth(&truth);
    let sets = simulate_step(&truth, &plan, 4, &prior, Exec::default()).unwrap();
    let opts = AnalysisOptions {
        gamma_f: truth.params.gamma1_ef() * (1.0 + truth.params.n_th) * 1e-6,
        ..Default::default()
    };
    let f = fit_f0g1_rabi(&sets, opts.gamma_f, opts.kappa_guess).unwrap();
    let g = f.g_tilde[0].value / (2.0 * std::f64::consts::PI);
    let want = truth.slope_f0g1 * 0.444;
    assert!((g / want - 1.0).abs() < 0.01, "{g} vs {want}");
}

#[test]
fn calibration_data_is_deterministic() {
    let truth = LabTruth::default();
    let plan = CalibrationPlan {
        amplitudes_f0g1: vec![0.3],
        amplitudes_ef: vec![0.006],
        step1_offsets_mhz: qreset::trajectory::linspace(-10.0, 0.0, 11),
        step3_offsets_mhz: qreset::trajectory::linspace(-5.0, 0.0, 11),
        step2_times_us: qreset::trajectory::linspace(0.0, 0.5, 11),
        step4_times_us: qreset::trajectory::linspace(0.0, 0.2, 11),
        ..Default::default()
    };
    let a = generate_calibration_data(&truth, &plan, 8).unwrap();
    let b = generate_calibration_data(&truth, &plan, 8).unwrap();
    assert_eq!(a, b);
    let c = generate_calibration_data(&truth, &plan, 9).unwrap();
    assert_ne!(a, c);
}

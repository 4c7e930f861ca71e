use proptest::prelude::*;

use qreset::calibration::{CalibDataset, DatasetMeta};
use qreset::effective::landscape;
use qreset::io::{datasets_from_csv, datasets_to_csv};
use qreset::lab::{DriveSettings, LabTruth};
use qreset::limits::thermal_ceiling;
use qreset::lindblad::{evolve_states, DrivenModel};
use qreset::ops::{min_eigenvalue, QState};
use qreset::readout::{correct_populations, AssignmentMatrix};
use qreset::{default_params, DriveConfig, Exec, Frequency};

fn stochastic_column(d: f64, a: f64) -> [f64; 3] {
    [d, (1.0 - d) * a, (1.0 - d) * (1.0 - a)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correction_inverts_assignment(
        d in proptest::array::uniform3(0.85f64..0.999),
        a in proptest::array::uniform3(0.0f64..1.0),
        p0 in 0.0f64..1.0, p1 in 0.0f64..1.0,
    ) {
        let cols = [0, 1, 2].map(|s| {
            let c = stochastic_column(d[s], a[s]);
            // rotate so the large entry sits on the diagonal
            [c[(3 - s) % 3], c[(4 - s) % 3], c[(5 - s) % 3]]
        });
        let r = AssignmentMatrix::from_columns(cols).unwrap();
        let p = [p0 * (1.0 - p1), p0 * p1, 1.0 - p0];
        let c = correct_populations(r.apply(p), &r).unwrap();
        for i in 0..3 {
            prop_assert!((c.raw[i] - p[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn settings_with_exact_stark_offsets_are_resonant(v in 0.0f64..0.5, w in 0.0f64..0.02, det in -2.0f64..2.0) {
        let t = LabTruth::default();
        let s = DriveSettings {
            v_f0g1: v,
            v_ef: w,
            f0g1_offset_mhz: t.stark_f0g1 * v * v + det,
            ef_offset_mhz: t.stark_ef * v * v,
        };
        let d = t.realized(&s);
        prop_assert!((d.delta_f0g1.mhz() - det).abs() < 1e-9);
        prop_assert!(d.delta_ef.mhz().abs() < 1e-9);
        prop_assert!((d.g_tilde.mhz() - t.slope_f0g1 * v).abs() < 1e-9);
    }

    #[test]
    fn dataset_csv_round_trip(ys in proptest::collection::vec(0.0f64..1.0, 1..40), amp in 0.001f64..1.0, step in 1u8..=4) {
        let d = CalibDataset {
            x: (0..ys.len()).map(|i| i as f64 * 0.0125).collect(),
            y: ys.clone(),
            y_err: None,
            meta: DatasetMeta { step, amplitude: amp },
        };
        let back = datasets_from_csv(&datasets_to_csv(std::slice::from_ref(&d))).unwrap();
        prop_assert_eq!(back.len(), 1);
        for (a, b) in back[0].y.iter().zip(&ys) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ceiling_linear_in_k_up(g in 1.0f64..8.0, w in 0.5f64..6.0) {
        let d = DriveConfig::from_mhz(w, g);
        let k = Frequency::from_mhz(9.0);
        let a = thermal_ceiling(&d, k, Frequency::from_khz(5.0), 1e-2, 1e-11).unwrap();
        let b = thermal_ceiling(&d, k, Frequency::from_khz(10.0), 1e-2, 1e-11).unwrap();
        prop_assert!((b / a - 2.0).abs() < 2e-6, "{} {}", a, b);
    }

    #[test]
    fn master_equation_keeps_a_valid_state(g in 0.0f64..6.0, w in 0.0f64..4.0, df in -3.0f64..3.0, de in -3.0f64..3.0) {
        let d = DriveConfig {
            delta_f0g1: Frequency::from_mhz(df),
            delta_ef: Frequency::from_mhz(de),
            ..DriveConfig::from_mhz(w, g)
        };
        let m = DrivenModel::new(default_params(), d);
        let rho0 = QState::basis(3, 3, 1, 0).unwrap();
        let out = evolve_states(&m, &rho0, 0.0, &[0.2e-6, 0.6e-6], 1e-9).unwrap();
        for r in out {
            prop_assert!((r.trace().re - 1.0).abs() < 1e-8);
            prop_assert!(min_eigenvalue(&r) > -1e-9);
        }
    }
}

#[test]
fn landscape_does_not_depend_on_executor() {
    let axis: Vec<Frequency> = (0..=24).map(|i| Frequency::from_mhz(0.5 * i as f64)).collect();
    let k = Frequency::from_mhz(9.0);
    let a = landscape(&axis, &axis, k, Exec::Sequential).unwrap();
    let b = landscape(&axis, &axis, k, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

use qreset::lab::{sample_shots, ReadoutTruth};
use qreset::readout::*;
use qreset::Exec;

fn references(truth: &ReadoutTruth, n: usize, seed: u64) -> [ShotSet; 3] {
    std::array::from_fn(|s| {
        let mut p = [0.0; 3];
        p[s] = 1.0;
        sample_shots(p, truth, n, seed + s as u64).unwrap()
    })
}

#[test]
fn assignment_matrix_matches_injected_errors() {
    let truth = ReadoutTruth::default();
    let refs = references(&truth, 40_000, 1);
    let gmm = fit_gmm(&refs).unwrap();
    let r = assignment_matrix(&gmm.model, &refs, Exec::default()).unwrap();
    let d = r.diagonal();
    for (got, want) in d.iter().zip([0.982, 0.957, 0.930]) {
        assert!((got - want).abs() < 0.005, "{d:?}");
    }
    for s in 0..3 {
        let col: f64 = (0..3).map(|m| r.r[m][s]).sum();
        assert!((col - 1.0).abs() < 1e-12);
    }
}

#[test]
fn correction_removes_assignment_bias() {
    let truth = ReadoutTruth::default();
    let refs = references(&truth, 40_000, 2);
    let gmm = fit_gmm(&refs).unwrap();
    let r = assignment_matrix(&gmm.model, &refs, Exec::default()).unwrap();
    for (k, p) in [[0.7, 0.2, 0.1], [0.1, 0.1, 0.8], [1.0 / 3.0; 3]].iter().enumerate() {
        let shots = sample_shots(*p, &truth, 40_000, 100 + k as u64).unwrap();
        let m = assignment_frequencies(&gmm.model, &shots, Exec::default()).unwrap();
        let c = correct_populations(m, &r).unwrap();
        for i in 0..3 {
            assert!((c.raw[i] - p[i]).abs() < 0.01, "{p:?} -> {:?}", c.raw);
        }
    }
}

#[test]
fn collapsed_references_fail() {
    let truth = ReadoutTruth {
        means: [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
        ..Default::default()
    };
    let refs = references(&truth, 2000, 3);
    assert!(fit_gmm(&refs).is_err());
}

use std::collections::BTreeMap;

use rsslab::bench::{emit_plots, run_r1, run_r2, run_r3, BenchConfig, Dataset, Method};
use rsslab::dataio::{Recording, Row};
use rsslab::synth::DatasetSpec;

fn small_spec(samples: usize) -> DatasetSpec {
    let mut spec = DatasetSpec::reference(3);
    for s in &mut spec.sessions {
        s.samples = samples;
    }
    spec
}

fn tiny_config() -> BenchConfig {
    BenchConfig { train_steps: Some(150), fractions: vec![0.25, 0.75], seeds: vec![0, 1], ..BenchConfig::default() }
}

#[test]
fn single_fraction_gives_single_row() {
    let data = Dataset::synthetic(small_spec(200)).unwrap();
    let cfg = BenchConfig { fractions: vec![0.5], seeds: vec![0], ..tiny_config() };
    let report = run_r1(&data, &cfg).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.curve().len(), 1);
}

#[test]
fn same_seeds_same_report() {
    let data = Dataset::synthetic(small_spec(200)).unwrap();
    let cfg = tiny_config();
    let a = run_r1(&data, &cfg).unwrap();
    let b = run_r1(&data, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let rebuilt = Dataset::synthetic(small_spec(200)).unwrap();
    assert_eq!(run_r3(&rebuilt, &cfg).unwrap().to_json(), run_r3(&data, &cfg).unwrap().to_json());
}

#[test]
fn identical_recordings_generalize() {
    let syn = small_spec(600).generate().unwrap();
    let mut twin = syn[0].recording.clone();
    twin.name = "twin".into();
    let data = Dataset::in_memory(vec![syn[0].recording.clone(), twin]);
    let cfg = BenchConfig { train_steps: Some(1500), ..tiny_config() };
    let report = run_r2(&data, &cfg).unwrap();
    for fold in report.fold_rows() {
        assert!(fold.mean_l2_m <= 2.0 * fold.train_mean_l2_m, "{fold:?}");
    }
}

#[test]
fn repeated_single_fingerprint_has_zero_error() {
    let rec = Recording {
        name: "still".into(),
        receiver_id: "A".into(),
        ap_ids: vec!["AP1".into(), "AP2".into(), "AP3".into()],
        rows: (0..120)
            .map(|i| Row { t_s: i as f64 * 0.1, x_m: 1.5, y_m: 2.5, rss_dbm: vec![Some(-45.0), Some(-52.0), Some(-60.0)] })
            .collect(),
        meta: BTreeMap::new(),
    };
    let data = Dataset::in_memory(vec![rec]);
    let cfg = BenchConfig { knn_k: 1, knn_m: 1, train_steps: Some(2000), ..tiny_config() };
    let report = run_r3(&data, &cfg).unwrap();
    for m in [Method::Knn, Method::KnnInterp] {
        assert_eq!(report.method_error("still", m), Some(0.0));
    }
    let cnn = report.method_error("still", Method::Cnn).unwrap();
    assert!(cnn < 1e-3, "cnn {cnn}");
}

#[test]
fn plot_files_are_deterministic() {
    let data = Dataset::synthetic(small_spec(200)).unwrap();
    let report = run_r2(&data, &tiny_config()).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files_a = emit_plots(&report, a.path()).unwrap();
    let files_b = emit_plots(&report, b.path()).unwrap();
    assert!(!files_a.is_empty());
    for (x, y) in files_a.iter().zip(&files_b) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

use std::collections::BTreeMap;

use rand::Rng;
use rsslab::dataio::{decode_model, encode_model, load_model, save_model, ModelArtifact, ModelKind, ModelPayload};
use rsslab::models::{fingerprint_db, CnnLocalizer, CnnModel, TrainConfig};
use rsslab::preprocess::{make_windows, WindowConfig, WindowSample};
use rsslab::seed;
use rsslab::synth::DatasetSpec;

fn windows(n_rec: usize) -> Vec<WindowSample> {
    let recs = DatasetSpec::reference(1).generate().unwrap();
    let cfg = WindowConfig { stride: 10, ..WindowConfig::default() };
    recs.iter().take(n_rec).flat_map(|r| make_windows(&r.recording, &cfg).unwrap()).collect()
}

#[test]
fn three_channel_network_has_3018_parameters() {
    let m = CnnModel::new(3, 0);
    assert_eq!(m.parameter_count(), 3018);
    assert_eq!(m.params().len(), 3018);
    assert_eq!(m.receptive_field(), 37);
}

#[test]
fn feature_map_is_translation_consistent() {
    let model = CnnModel::new(3, 9);
    let (t, shift) = (50, 7);
    let mut rng = seed::rng(2, "signal", 0);
    let long: Vec<Vec<f64>> = (0..3).map(|_| (0..t + shift).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let window = |start: usize| -> Vec<f64> { long.iter().flat_map(|c| c[start..start + t].to_vec()).collect() };
    let a = model.feature_map(&window(0)).unwrap();
    let b = model.feature_map(&window(shift)).unwrap();
    let t_out = t + 1 - model.receptive_field();
    assert_eq!(a.len(), 2 * t_out);
    for ch in 0..2 {
        for i in 0..t_out - shift {
            let (x, y) = (a[ch * t_out + i + shift], b[ch * t_out + i]);
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "ch {ch} t {i}: {x} vs {y}");
        }
    }
}

fn cnn_artifact(train: &[WindowSample], seed: u64) -> ModelArtifact {
    let cfg = TrainConfig { epochs: 2, seed, ..TrainConfig::default() };
    let (loc, _) = CnnLocalizer::fit(train, &cfg).unwrap();
    ModelArtifact {
        kind: ModelKind::Cnn,
        hyperparameters: BTreeMap::from([("epochs".to_string(), serde_json::json!(cfg.epochs))]),
        payload: ModelPayload::Cnn(loc.model),
        normalization: loc.normalizer,
        schema_version: rsslab::dataio::SCHEMA_VERSION,
    }
}

#[test]
fn training_determines_the_artifact() {
    let train = windows(1);
    let a = encode_model(&cnn_artifact(&train, 4)).unwrap();
    let b = encode_model(&cnn_artifact(&train, 4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, encode_model(&cnn_artifact(&train, 5)).unwrap());
}

#[test]
fn saved_cnn_predicts_identically() {
    let data = windows(2);
    let art = cnn_artifact(&data[..60], 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.rsm");
    save_model(&art, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, art);
    let (ModelPayload::Cnn(a), ModelPayload::Cnn(b)) = (&art.payload, &back.payload) else { panic!("kind") };
    let before = CnnLocalizer { model: a.clone(), normalizer: art.normalization.clone() }.predict(&data).unwrap();
    let after = CnnLocalizer { model: b.clone(), normalizer: back.normalization.clone() }.predict(&data).unwrap();
    assert_eq!(before, after);
}

#[test]
fn saved_fingerprint_db_predicts_identically() {
    let data = windows(2);
    let db = fingerprint_db(&data, 5, 3).unwrap();
    let art = ModelArtifact {
        kind: ModelKind::KnnInterp,
        hyperparameters: BTreeMap::new(),
        payload: ModelPayload::Fingerprint(db.clone()),
        normalization: rsslab::preprocess::Normalizer::fit(&data).unwrap(),
        schema_version: rsslab::dataio::SCHEMA_VERSION,
    };
    let back = decode_model(&encode_model(&art).unwrap()).unwrap();
    let ModelPayload::Fingerprint(db2) = back.payload else { panic!("kind") };
    for s in &data {
        assert_eq!(db.knn_interp_predict(&s.raw_rss).unwrap(), db2.knn_interp_predict(&s.raw_rss).unwrap());
        assert_eq!(db.knn_predict(&s.raw_rss).unwrap(), db2.knn_predict(&s.raw_rss).unwrap());
    }
}

//! Train the compact CNN for a few epochs, save it as a checksummed
//! artifact and check the reloaded model predicts identically.

use rsslab::dataio::{load_model, save_model, ModelArtifact, ModelKind, ModelPayload, SCHEMA_VERSION};
use rsslab::models::{evaluate, CnnLocalizer, TrainConfig};
use rsslab::preprocess::{make_windows, split, SplitSpec, WindowConfig};
use rsslab::synth::DatasetSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(10);
    let cfg = WindowConfig { stride: 2, ..Default::default() };
    let mut windows = Vec::new();
    for s in DatasetSpec::reference(0).generate()? {
        windows.extend(make_windows(&s.recording, &cfg)?);
    }
    let (train, test) = split(&windows, &SplitSpec::random(0.75, 0))?;
    let train_cfg = TrainConfig { epochs, ..Default::default() };
    let (model, outcome) = CnnLocalizer::fit(&train, &train_cfg)?;
    for (e, loss) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.5}", e + 1);
    }
    let truth: Vec<_> = test.iter().map(|s| s.label).collect();
    let predicted = model.predict(&test)?;
    let r = evaluate(&predicted, &truth)?;
    println!("test: {:.3} ± {:.3} m", r.mean_l2_m, r.std_l2_m);

    let path = std::env::temp_dir().join("rsslab_example_model.rsm");
    let artifact = ModelArtifact {
        kind: ModelKind::Cnn,
        hyperparameters: [("epochs".to_string(), serde_json::json!(epochs))].into_iter().collect(),
        payload: ModelPayload::Cnn(model.model.clone()),
        normalization: model.normalizer.clone(),
        schema_version: SCHEMA_VERSION,
    };
    save_model(&artifact, &path)?;
    let ModelPayload::Cnn(net) = load_model(&path)?.payload else { unreachable!("saved a CNN") };
    let reloaded = CnnLocalizer { model: net, normalizer: model.normalizer.clone() };
    assert_eq!(reloaded.predict(&test)?, predicted);
    println!("artifact {} reloads bit-exactly", path.display());
    Ok(())
}

//! kNN and inverse-distance kNN fingerprinting on synthetic recordings.

use rsslab::models::{evaluate, fingerprint_db};
use rsslab::preprocess::{make_windows, split, SplitSpec, WindowConfig};
use rsslab::synth::DatasetSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut windows = Vec::new();
    for s in DatasetSpec::reference(0).generate()? {
        windows.extend(make_windows(&s.recording, &WindowConfig::default())?);
    }
    let (train, test) = split(&windows, &SplitSpec::random(0.75, 0))?;
    let db = fingerprint_db(&train, 5, 3)?;
    let truth: Vec<_> = test.iter().map(|s| s.label).collect();
    let knn: Vec<_> = test.iter().map(|s| db.knn_predict(&s.raw_rss)).collect::<Result<_, _>>()?;
    let interp: Vec<_> = test.iter().map(|s| db.knn_interp_predict(&s.raw_rss)).collect::<Result<_, _>>()?;
    for (name, pred) in [("kNN", knn), ("kNN+Interp", interp)] {
        let r = evaluate(&pred, &truth)?;
        println!("{name:<11} {:.3} ± {:.3} m (MAE x {:.3}, y {:.3})", r.mean_l2_m, r.std_l2_m, r.mae_x_m, r.mae_y_m);
    }
    Ok(())
}

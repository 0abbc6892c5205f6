//! Evaluation runs: data efficiency (R1), leave-one-recording-out
//! generalization (R2) and method comparison (R3).
//!
//! Every job owns its seeds, so results do not depend on how many worker
//! threads execute them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{self, DataError, Recording};
use crate::geometry::GroundPoint;
use crate::models::{evaluate, fingerprint_db, CnnLocalizer, EvalReport, ModelError, TrainConfig};
use crate::preprocess::{make_windows, split, PreprocessError, SplitSpec, WindowConfig, WindowSample};
use crate::synth::{DatasetSpec, SynthError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invalid benchmark configuration: {0}")]
    Invalid(String),
    #[error("report has no rows")]
    EmptyReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunId {
    R1,
    R2,
    R3,
}

impl std::str::FromStr for RunId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "r1" => Ok(RunId::R1),
            "r2" => Ok(RunId::R2),
            "r3" => Ok(RunId::R3),
            other => Err(format!("unknown run {other:?}; expected r1, r2 or r3")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Knn,
    KnnInterp,
    Cnn,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Knn => "kNN",
            Method::KnnInterp => "kNN+Interp",
            Method::Cnn => "CNN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub window: WindowConfig,
    pub train: TrainConfig,
    /// When set, each CNN gets `ceil(steps * batch / n_train)` epochs so
    /// runs on different training-set sizes do similar amounts of work.
    pub train_steps: Option<usize>,
    pub fractions: Vec<f64>,
    /// One repetition per seed, used for both the split and the network.
    pub seeds: Vec<u64>,
    /// Training fraction of the common split in R3.
    pub compare_train_fraction: f64,
    pub knn_k: usize,
    pub knn_m: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            train: TrainConfig::default(),
            train_steps: None,
            fractions: vec![0.05, 0.1, 0.25, 0.5, 0.75, 0.95],
            seeds: vec![0, 1, 2],
            compare_train_fraction: 0.75,
            knn_k: crate::models::knn::DEFAULT_K,
            knn_m: crate::models::knn::DEFAULT_M,
        }
    }
}

impl BenchConfig {
    /// A budget that finishes all three runs in minutes on one core.
    pub fn quick() -> Self {
        Self { train_steps: Some(3000), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.window.validate()?;
        self.train.validate()?;
        if self.fractions.is_empty() || self.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(BenchError::Invalid("fractions must be a non-empty subset of (0, 1)".into()));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Invalid("need at least one seed".into()));
        }
        if !(self.compare_train_fraction > 0.0 && self.compare_train_fraction < 1.0) {
            return Err(BenchError::Invalid("compare_train_fraction must be in (0, 1)".into()));
        }
        if self.train_steps == Some(0) {
            return Err(BenchError::Invalid("train_steps must be >= 1".into()));
        }
        Ok(())
    }

    fn train_config(&self, n_train: usize, seed: u64) -> TrainConfig {
        let epochs = match self.train_steps {
            Some(steps) => (steps * self.train.batch_size).div_ceil(n_train.max(1)).max(1),
            None => self.train.epochs,
        };
        TrainConfig { epochs, seed, ..self.train.clone() }
    }
}

/// Where a dataset came from; enough to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DatasetSource {
    Synthetic { spec: DatasetSpec },
    Directory { path: PathBuf },
    InMemory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub source: DatasetSource,
    pub recordings: Vec<Recording>,
}

impl Dataset {
    pub fn synthetic(spec: DatasetSpec) -> Result<Self, BenchError> {
        let recordings = spec.generate()?.into_iter().map(|s| s.recording).collect();
        Ok(Self { source: DatasetSource::Synthetic { spec }, recordings })
    }

    pub fn from_dir(path: &Path) -> Result<Self, BenchError> {
        let recordings = dataio::read_recording_dir(path)?;
        Ok(Self { source: DatasetSource::Directory { path: path.to_path_buf() }, recordings })
    }

    pub fn in_memory(recordings: Vec<Recording>) -> Self {
        Self { source: DatasetSource::InMemory, recordings }
    }

    pub fn names(&self) -> Vec<String> {
        self.recordings.iter().map(|r| r.name.clone()).collect()
    }

    fn windows(&self, cfg: &WindowConfig) -> Result<Vec<WindowSample>, BenchError> {
        if self.recordings.is_empty() {
            return Err(BenchError::Invalid("dataset has no recordings".into()));
        }
        let mut all = Vec::new();
        for rec in &self.recordings {
            all.extend(make_windows(rec, cfg)?);
        }
        Ok(all)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionRow {
    pub fraction: f64,
    pub seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub epochs: usize,
    pub mean_l2_m: f64,
    pub std_l2_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub holdout: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub mean_l2_m: f64,
    pub std_l2_m: f64,
    pub mae_x_m: f64,
    pub mae_y_m: f64,
    /// Error of the same model on its own training windows.
    pub train_mean_l2_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub recording: String,
    pub method: Method,
    pub test_samples: usize,
    pub mean_l2_m: f64,
    pub std_l2_m: f64,
    pub mae_x_m: f64,
    pub mae_y_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BenchRow {
    Fraction(FractionRow),
    Fold(FoldRow),
    Method(MethodRow),
}

impl BenchRow {
    pub fn mean_l2_m(&self) -> f64 {
        match self {
            BenchRow::Fraction(r) => r.mean_l2_m,
            BenchRow::Fold(r) => r.mean_l2_m,
            BenchRow::Method(r) => r.mean_l2_m,
        }
    }

    pub fn std_l2_m(&self) -> f64 {
        match self {
            BenchRow::Fraction(r) => r.std_l2_m,
            BenchRow::Fold(r) => r.std_l2_m,
            BenchRow::Method(r) => r.std_l2_m,
        }
    }
}

/// Held-out predictions of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub label: String,
    pub truth: Vec<GroundPoint>,
    pub predicted: Vec<GroundPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub run_id: RunId,
    pub config: BenchConfig,
    pub dataset: DatasetSource,
    pub recordings: Vec<String>,
    pub rows: Vec<BenchRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predictions: Vec<PredictionSet>,
    /// Omitted from deterministic output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// One point of the data-efficiency curve, aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub train_samples: f64,
    /// Mean over seeds of the per-run mean L2 error.
    pub mean_l2_m: f64,
    /// Standard deviation over seeds of the per-run mean L2 error.
    pub seed_std_m: f64,
    /// Mean over seeds of the per-run L2 standard deviation.
    pub error_std_m: f64,
    pub per_seed: Vec<f64>,
}

impl BenchReport {
    fn new(run_id: RunId, cfg: &BenchConfig, data: &Dataset, rows: Vec<BenchRow>) -> Self {
        Self {
            run_id,
            config: cfg.clone(),
            dataset: data.source.clone(),
            recordings: data.names(),
            rows,
            predictions: Vec::new(),
            wall_time_s: None,
        }
    }

    pub fn fraction_rows(&self) -> impl Iterator<Item = &FractionRow> {
        self.rows.iter().filter_map(|r| if let BenchRow::Fraction(f) = r { Some(f) } else { None })
    }

    pub fn fold_rows(&self) -> impl Iterator<Item = &FoldRow> {
        self.rows.iter().filter_map(|r| if let BenchRow::Fold(f) = r { Some(f) } else { None })
    }

    pub fn method_rows(&self) -> impl Iterator<Item = &MethodRow> {
        self.rows.iter().filter_map(|r| if let BenchRow::Method(m) = r { Some(m) } else { None })
    }

    /// R1 rows grouped by fraction, in ascending fraction order.
    pub fn curve(&self) -> Vec<CurvePoint> {
        let mut fractions: Vec<f64> = self.fraction_rows().map(|r| r.fraction).collect();
        fractions.sort_by(f64::total_cmp);
        fractions.dedup();
        fractions
            .into_iter()
            .map(|f| {
                let rows: Vec<&FractionRow> = self.fraction_rows().filter(|r| r.fraction == f).collect();
                let n = rows.len() as f64;
                let per_seed: Vec<f64> = rows.iter().map(|r| r.mean_l2_m).collect();
                let mean = per_seed.iter().sum::<f64>() / n;
                let var = per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                CurvePoint {
                    fraction: f,
                    train_samples: rows.iter().map(|r| r.train_samples as f64).sum::<f64>() / n,
                    mean_l2_m: mean,
                    seed_std_m: var.sqrt(),
                    error_std_m: rows.iter().map(|r| r.std_l2_m).sum::<f64>() / n,
                    per_seed,
                }
            })
            .collect()
    }

    /// Mean L2 of `method` on `recording`, if present.
    pub fn method_error(&self, recording: &str, method: Method) -> Option<f64> {
        self.method_rows().find(|r| r.recording == recording && r.method == method).map(|r| r.mean_l2_m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned plain-text rendering of the rows.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        match self.run_id {
            RunId::R1 => {
                let _ = writeln!(out, "{:>8}  {:>8}  {:>18}  {:>9}  per seed", "fraction", "labels", "mean L2 ± std [m]", "seed std");
                for p in self.curve() {
                    let seeds: Vec<String> = p.per_seed.iter().map(|v| format!("{v:.3}")).collect();
                    let _ = writeln!(
                        out,
                        "{:>8.2}  {:>8.0}  {:>18}  {:>9.3}  {}",
                        p.fraction,
                        p.train_samples,
                        format!("{:.3} ± {:.3}", p.mean_l2_m, p.error_std_m),
                        p.seed_std_m,
                        seeds.join(" ")
                    );
                }
            }
            RunId::R2 => {
                let _ = writeln!(out, "{:<10}  {:>18}  {:>9}  {:>9}  {:>9}", "holdout", "mean L2 ± std [m]", "MAE x", "MAE y", "train L2");
                for r in self.fold_rows() {
                    let _ = writeln!(
                        out,
                        "{:<10}  {:>18}  {:>9.3}  {:>9.3}  {:>9.3}",
                        r.holdout,
                        format!("{:.3} ± {:.3}", r.mean_l2_m, r.std_l2_m),
                        r.mae_x_m,
                        r.mae_y_m,
                        r.train_mean_l2_m
                    );
                }
            }
            RunId::R3 => {
                let methods = [Method::Knn, Method::KnnInterp, Method::Cnn];
                let _ = write!(out, "{:<10}", "recording");
                for m in methods {
                    let _ = write!(out, "  {:>18}", m.label());
                }
                out.push('\n');
                for name in &self.recordings {
                    let _ = write!(out, "{name:<10}");
                    for m in methods {
                        let cell = self
                            .method_rows()
                            .find(|r| &r.recording == name && r.method == m)
                            .map(|r| format!("{:.3} ± {:.3} m", r.mean_l2_m, r.std_l2_m))
                            .unwrap_or_else(|| "-".into());
                        let _ = write!(out, "  {cell:>18}");
                    }
                    out.push('\n');
                }
            }
        }
        out
    }
}

fn fit_and_score(
    train: &[WindowSample],
    test: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<(CnnLocalizer, EvalReport, Vec<GroundPoint>), BenchError> {
    let (model, _) = CnnLocalizer::fit(train, cfg)?;
    let predicted = model.predict(test)?;
    let truth: Vec<GroundPoint> = test.iter().map(|s| s.label).collect();
    let report = evaluate(&predicted, &truth)?;
    Ok((model, report, predicted))
}

/// R1: CNN error as a function of the number of labeled training windows.
pub fn run_r1(data: &Dataset, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let windows = data.windows(&cfg.window)?;
    let jobs: Vec<(f64, u64)> = cfg.fractions.iter().flat_map(|&f| cfg.seeds.iter().map(move |&s| (f, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(fraction, seed)| {
            let (train, test) = split(&windows, &SplitSpec::random(fraction, seed))?;
            if train.is_empty() || test.is_empty() {
                return Err(BenchError::Invalid(format!("fraction {fraction} leaves an empty split")));
            }
            let tc = cfg.train_config(train.len(), seed);
            let (_, report, _) = fit_and_score(&train, &test, &tc)?;
            log::info!("r1 fraction {fraction} seed {seed}: {:.3} m", report.mean_l2_m);
            Ok(BenchRow::Fraction(FractionRow {
                fraction,
                seed,
                train_samples: train.len(),
                test_samples: test.len(),
                epochs: tc.epochs,
                mean_l2_m: report.mean_l2_m,
                std_l2_m: report.std_l2_m,
            }))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    Ok(BenchReport::new(RunId::R1, cfg, data, rows))
}

/// R2: one leave-one-recording-out fold per recording, using the first
/// configured seed.
pub fn run_r2(data: &Dataset, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    if data.recordings.len() < 2 {
        return Err(BenchError::Invalid("leave-one-recording-out needs at least 2 recordings".into()));
    }
    let windows = data.windows(&cfg.window)?;
    let seed = cfg.seeds[0];
    let folds = data
        .recordings
        .par_iter()
        .map(|rec| {
            let (train, test) = split(&windows, &SplitSpec::leave_out(rec.name.clone()))?;
            if train.is_empty() {
                return Err(BenchError::Invalid(format!("no training windows outside {:?}", rec.name)));
            }
            let tc = cfg.train_config(train.len(), seed);
            let (model, report, predicted) = fit_and_score(&train, &test, &tc)?;
            let train_truth: Vec<GroundPoint> = train.iter().map(|s| s.label).collect();
            let train_report = evaluate(&model.predict(&train)?, &train_truth)?;
            log::info!("r2 holdout {}: {:.3} m", rec.name, report.mean_l2_m);
            let row = BenchRow::Fold(FoldRow {
                holdout: rec.name.clone(),
                train_samples: train.len(),
                test_samples: test.len(),
                mean_l2_m: report.mean_l2_m,
                std_l2_m: report.std_l2_m,
                mae_x_m: report.mae_x_m,
                mae_y_m: report.mae_y_m,
                train_mean_l2_m: train_report.mean_l2_m,
            });
            let truth = test.iter().map(|s| s.label).collect();
            Ok((row, PredictionSet { label: rec.name.clone(), truth, predicted }))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    let (rows, predictions): (Vec<_>, Vec<_>) = folds.into_iter().unzip();
    let mut report = BenchReport::new(RunId::R2, cfg, data, rows);
    report.predictions = predictions;
    Ok(report)
}

/// R3: kNN, kNN+Interp and CNN fitted on one common random split and
/// scored per recording.
pub fn run_r3(data: &Dataset, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let windows = data.windows(&cfg.window)?;
    let seed = cfg.seeds[0];
    let (train, test) = split(&windows, &SplitSpec::random(cfg.compare_train_fraction, seed))?;
    if train.is_empty() || test.is_empty() {
        return Err(BenchError::Invalid("comparison split leaves an empty set".into()));
    }
    let db = fingerprint_db(&train, cfg.knn_k, cfg.knn_m)?;
    let (cnn, _) = CnnLocalizer::fit(&train, &cfg.train_config(train.len(), seed))?;
    let mut rows = Vec::new();
    for rec in &data.recordings {
        let subset: Vec<WindowSample> = test.iter().filter(|s| s.source_recording == rec.name).cloned().collect();
        if subset.is_empty() {
            continue;
        }
        let truth: Vec<GroundPoint> = subset.iter().map(|s| s.label).collect();
        let knn = subset.par_iter().map(|s| db.knn_predict(&s.raw_rss)).collect::<Result<Vec<_>, _>>()?;
        let interp = subset.par_iter().map(|s| db.knn_interp_predict(&s.raw_rss)).collect::<Result<Vec<_>, _>>()?;
        let deep = cnn.predict(&subset)?;
        for (method, predicted) in [(Method::Knn, knn), (Method::KnnInterp, interp), (Method::Cnn, deep)] {
            let r = evaluate(&predicted, &truth)?;
            rows.push(BenchRow::Method(MethodRow {
                recording: rec.name.clone(),
                method,
                test_samples: subset.len(),
                mean_l2_m: r.mean_l2_m,
                std_l2_m: r.std_l2_m,
                mae_x_m: r.mae_x_m,
                mae_y_m: r.mae_y_m,
            }));
        }
    }
    Ok(BenchReport::new(RunId::R3, cfg, data, rows))
}

pub fn run(run_id: RunId, data: &Dataset, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    match run_id {
        RunId::R1 => run_r1(data, cfg),
        RunId::R2 => run_r2(data, cfg),
        RunId::R3 => run_r3(data, cfg),
    }
}

/// Spearman rank correlation; ties get their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    if a.len() != b.len() {
        return None;
    }
    crate::preprocess::pearson(&ranks(a), &ranks(b))
}

fn csv_lines(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Writes plot-ready CSV series for `report` into `dir` and returns the
/// written paths.
pub fn emit_plots(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if report.rows.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut files: Vec<(String, String)> = Vec::new();
    match report.run_id {
        RunId::R1 => {
            let rows = report.curve().into_iter().map(|p| {
                vec![
                    p.fraction.to_string(),
                    p.train_samples.to_string(),
                    p.mean_l2_m.to_string(),
                    p.seed_std_m.to_string(),
                    p.error_std_m.to_string(),
                ]
            });
            files.push((
                "r1_curve.csv".into(),
                csv_lines("fraction,train_samples,mean_l2_m,seed_std_m,error_std_m", rows),
            ));
        }
        RunId::R2 => {
            let rows = report.fold_rows().map(|r| {
                vec![
                    r.holdout.clone(),
                    r.mean_l2_m.to_string(),
                    r.std_l2_m.to_string(),
                    r.mae_x_m.to_string(),
                    r.mae_y_m.to_string(),
                ]
            });
            files.push(("r2_folds.csv".into(), csv_lines("holdout,mean_l2_m,std_l2_m,mae_x_m,mae_y_m", rows)));
            let scatter = report.predictions.iter().flat_map(|p| {
                p.truth.iter().zip(&p.predicted).map(move |(t, q)| {
                    vec![p.label.clone(), t.x.to_string(), t.y.to_string(), q.x.to_string(), q.y.to_string()]
                })
            });
            files.push(("r2_scatter.csv".into(), csv_lines("holdout,truth_x,truth_y,pred_x,pred_y", scatter)));
        }
        RunId::R3 => {
            let rows = report.method_rows().map(|r| {
                let method = serde_json::to_value(r.method).expect("enum serializes");
                vec![
                    r.recording.clone(),
                    method.as_str().unwrap_or_default().to_string(),
                    r.mean_l2_m.to_string(),
                    r.std_l2_m.to_string(),
                ]
            });
            files.push(("r3_methods.csv".into(), csv_lines("recording,method,mean_l2_m,std_l2_m", rows)));
        }
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        dataio::write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

//! Command-line front end.
//!
//! Settings resolve as flags over config file over defaults. The config
//! file comes from `--config` or, failing that, `RSSLAB_CONFIG`. Every
//! command writes its outputs and a `config.json` snapshot of the resolved
//! settings into the output directory.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{self, BenchConfig, Dataset, RunId};
use crate::dataio::{self, ColumnMap, DataError, ModelArtifact, ModelKind, ModelPayload};
use crate::models::{evaluate, fingerprint_db, CnnLocalizer, EvalReport, TrainConfig};
use crate::preprocess::{make_windows, split, Normalizer, SplitMode, SplitSpec, WindowConfig, WindowSample};
use crate::synth::DatasetSpec;
use crate::uncertainty::{self, Scenario, TemporalConfig, UncertaintyBudget};

pub const CONFIG_ENV: &str = "RSSLAB_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintySection {
    pub scenarios: Vec<Scenario>,
    pub temporal: TemporalConfig,
}

impl Default for UncertaintySection {
    fn default() -> Self {
        Self { scenarios: uncertainty::reference_scenarios(10_000, 0), temporal: TemporalConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub window: WindowConfig,
    pub split: SplitSpec,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self { window: WindowConfig::default(), split: SplitSpec::random(0.75, 0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub k: usize,
    pub m_interp: usize,
    pub train: TrainConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Cnn,
            k: crate::models::knn::DEFAULT_K,
            m_interp: crate::models::knn::DEFAULT_M,
            train: TrainConfig::default(),
        }
    }
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub verbosity: u8,
    pub uncertainty: UncertaintySection,
    pub synth: DatasetSpec,
    pub preprocess: PreprocessSection,
    pub model: ModelSection,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            verbosity: 0,
            uncertainty: UncertaintySection::default(),
            synth: DatasetSpec::reference(0),
            preprocess: PreprocessSection::default(),
            model: ModelSection::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Failed(_) => 2,
        }
    }
}

macro_rules! failed_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Failed(e.to_string())
            }
        }
    )*};
}

failed_from!(
    DataError,
    crate::bench::BenchError,
    crate::preprocess::PreprocessError,
    crate::models::ModelError,
    crate::synth::SynthError,
    crate::uncertainty::UncertaintyError
);

#[derive(Debug, Parser)]
#[command(name = "rsslab", version, about = "Wi-Fi RSS localization: label uncertainty, synthetic data, models and benchmarks")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run configuration (default: $RSSLAB_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Leave wall-clock fields out of the outputs.
    #[arg(long, global = true)]
    deterministic: bool,
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo label-uncertainty table for the configured scenarios.
    SimulateUncertainty {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Generate a synthetic dataset of recordings.
    GenSynth,
    /// Convert a foreign CSV into the canonical recording format.
    Convert {
        #[arg(long)]
        input: PathBuf,
        /// JSON column map.
        #[arg(long)]
        map: PathBuf,
    },
    /// Window and split recordings into a binary cache.
    Preprocess {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Fit a model on the training split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        model: Option<ModelChoice>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a saved model on the test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run an evaluation (r1, r2 or r3).
    Bench {
        #[arg(long)]
        run: RunId,
        /// Recording directory; the configured synthetic dataset if absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Use the reduced training budget.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory of recordings, or of a preprocess cache.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    filter: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Random split with this training fraction.
    #[arg(long, conflicts_with = "holdout")]
    fraction: Option<f64>,
    /// Leave this recording out for testing.
    #[arg(long)]
    holdout: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelChoice {
    Knn,
    KnnInterp,
    Cnn,
}

impl From<ModelChoice> for ModelKind {
    fn from(m: ModelChoice) -> Self {
        match m {
            ModelChoice::Knn => ModelKind::Knn,
            ModelChoice::KnnInterp => ModelKind::KnnInterp,
            ModelChoice::Cnn => ModelKind::Cnn,
        }
    }
}

/// Runs the command line `argv` (program name first) and returns the
/// process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let path = global.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
        cfg.synth.reseed(seed);
        let n = cfg.bench.seeds.len() as u64;
        cfg.bench.seeds = (0..n).map(|i| seed.wrapping_add(i)).collect();
        for s in &mut cfg.uncertainty.scenarios {
            s.config.seed = seed;
        }
        cfg.preprocess.split.seed = seed;
        cfg.model.train.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.out_dir = out.clone();
    }
    cfg.verbosity = cfg.verbosity.max(global.verbose);
    Ok(cfg)
}

fn apply_data_args(cfg: &mut RunConfig, d: &DataArgs) {
    if let Some(n) = d.window {
        cfg.preprocess.window.window_len = n;
        cfg.bench.window.window_len = n;
    }
    if let Some(n) = d.filter {
        cfg.preprocess.window.filter_len = n;
        cfg.bench.window.filter_len = n;
    }
    if let Some(s) = d.stride {
        cfg.preprocess.window.stride = s;
    }
    if let Some(f) = d.fraction {
        cfg.preprocess.split.mode = SplitMode::RandomFraction { train_fraction: f };
    }
    if let Some(h) = &d.holdout {
        cfg.preprocess.split.mode = SplitMode::LeaveOneRecordingOut { holdout: h.clone() };
    }
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::SimulateUncertainty { trials: Some(t) } => {
            for s in &mut cfg.uncertainty.scenarios {
                s.config.trials = *t;
            }
        }
        Command::Preprocess { data } | Command::Eval { data, .. } => apply_data_args(&mut cfg, data),
        Command::Train { data, model, epochs } => {
            apply_data_args(&mut cfg, data);
            if let Some(m) = model {
                cfg.model.kind = (*m).into();
            }
            if let Some(e) = epochs {
                cfg.model.train.epochs = *e;
            }
        }
        Command::Bench { quick: true, .. } => {
            cfg.bench.train_steps = cfg.bench.train_steps.or(BenchConfig::quick().train_steps);
        }
        _ => {}
    }
    init_logging(cfg.verbosity);

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Failed(e.to_string()))?;
    let out = Output::new(&cfg.out_dir, cli.global.deterministic)?;
    out.write_json("config.json", &cfg)?;
    pool.install(|| match cli.command {
        Command::SimulateUncertainty { .. } => simulate_uncertainty(&cfg, &out),
        Command::GenSynth => gen_synth(&cfg, &out),
        Command::Convert { input, map } => convert(&input, &map, &out),
        Command::Preprocess { data } => preprocess(&cfg, &data.data, &out),
        Command::Train { data, .. } => train(&cfg, &data.data, &out),
        Command::Eval { data, model } => eval(&cfg, &data.data, &model, &out),
        Command::Bench { run, data, .. } => run_bench(&cfg, run, data.as_deref(), &out),
    })
}

/// Files written by one command, all inside its output directory.
struct Output {
    dir: PathBuf,
    deterministic: bool,
    started: Instant,
}

impl Output {
    fn new(dir: &Path, deterministic: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Failed(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), deterministic, started: Instant::now() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        Ok(dataio::write_atomic(&self.path(name), bytes)?)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn wall_time(&self) -> Option<f64> {
        (!self.deterministic).then(|| self.started.elapsed().as_secs_f64())
    }
}

fn say(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());
}

#[derive(Serialize)]
struct UncertaintyOutput {
    temporal_dt_s: f64,
    eps_temp_m: f64,
    scenarios: Vec<UncertaintyRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

#[derive(Serialize)]
struct UncertaintyRow {
    name: String,
    budget: UncertaintyBudget,
}

fn simulate_uncertainty(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let (dt, eps) = uncertainty::temporal_error(&cfg.uncertainty.temporal)?;
    let mut rows = Vec::new();
    for s in &cfg.uncertainty.scenarios {
        let budget = uncertainty::spatial_budget(&s.config)?.with_temporal(eps);
        rows.push(UncertaintyRow { name: s.name.clone(), budget });
    }
    let table = uncertainty::render_table(&rows.iter().map(|r| (r.name.clone(), r.budget)).collect::<Vec<_>>());
    out.write("uncertainty.txt", table.as_bytes())?;
    out.write_json(
        "uncertainty.json",
        &UncertaintyOutput { temporal_dt_s: dt, eps_temp_m: eps, scenarios: rows, wall_time_s: out.wall_time() },
    )?;
    say(&table);
    Ok(())
}

fn gen_synth(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    for s in cfg.synth.generate()? {
        let path = out.path(&format!("{}.csv", s.recording.name));
        dataio::write_recording(&s.recording, &path)?;
        say(&format!("{}: {} rows\n", path.display(), s.recording.len()));
    }
    out.write_json("dataset.json", &cfg.synth)
}

fn convert(input: &Path, map: &Path, out: &Output) -> Result<(), CliError> {
    let text = fs::read_to_string(map).map_err(|e| DataError::io(map, e))?;
    let map: ColumnMap = serde_json::from_str(&text).map_err(|e| CliError::Failed(format!("{}: {e}", map.display())))?;
    let rec = dataio::convert_recording(input, &map)?;
    let path = out.path(&format!("{}.csv", rec.name));
    dataio::write_recording(&rec, &path)?;
    say(&format!("{}: {} rows\n", path.display(), rec.len()));
    Ok(())
}

const CACHE_MAGIC: &[u8; 8] = b"RSSWIN01";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    window: WindowConfig,
    split: SplitSpec,
    recordings: Vec<String>,
    train_file: String,
    test_file: String,
    train_samples: usize,
    test_samples: usize,
    train_crc32: u32,
    test_crc32: u32,
    normalizer: Normalizer,
}

fn encode_windows(samples: &[WindowSample]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(CACHE_MAGIC);
    b.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        b.extend_from_slice(&(s.source_recording.len() as u64).to_le_bytes());
        b.extend_from_slice(s.source_recording.as_bytes());
        b.extend_from_slice(&(s.num_aps as u64).to_le_bytes());
        b.extend_from_slice(&(s.window_len as u64).to_le_bytes());
        for v in [s.t_center_s, s.label.x, s.label.y].iter().chain(&s.rss_window).chain(&s.raw_rss) {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at.checked_add(n)?)?;
        self.at += n;
        Some(s)
    }

    fn u64(&mut self) -> Option<usize> {
        usize::try_from(u64::from_le_bytes(self.take(8)?.try_into().ok()?)).ok()
    }
}

fn decode_windows(bytes: &[u8], path: &Path) -> Result<Vec<WindowSample>, CliError> {
    let bad = || CliError::Failed(format!("{}: malformed window cache", path.display()));
    let mut c = Cursor { bytes, at: 0 };
    if c.take(8) != Some(CACHE_MAGIC.as_slice()) {
        return Err(bad());
    }
    let count = c.u64().ok_or_else(bad)?;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let name_len = c.u64().ok_or_else(bad)?;
        let name = String::from_utf8(c.take(name_len).ok_or_else(bad)?.to_vec()).map_err(|_| bad())?;
        let num_aps = c.u64().ok_or_else(bad)?;
        let window_len = c.u64().ok_or_else(bad)?;
        let n = num_aps.checked_mul(window_len).and_then(|w| w.checked_add(3 + num_aps)).ok_or_else(bad)?;
        let vals: Vec<f64> = c
            .take(n.checked_mul(8).ok_or_else(bad)?)
            .ok_or_else(bad)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        out.push(WindowSample {
            source_recording: name,
            t_center_s: vals[0],
            num_aps,
            window_len,
            label: crate::geometry::GroundPoint::new(vals[1], vals[2]),
            rss_window: vals[3..3 + num_aps * window_len].to_vec(),
            raw_rss: vals[3 + num_aps * window_len..].to_vec(),
        });
    }
    if c.at != bytes.len() {
        return Err(bad());
    }
    Ok(out)
}

/// Train and test windows from a recording directory or a cache.
fn load_split(cfg: &RunConfig, data: &Path) -> Result<(Vec<WindowSample>, Vec<WindowSample>), CliError> {
    let manifest_path = data.join(MANIFEST);
    if manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| DataError::io(&manifest_path, e))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Failed(format!("{}: {e}", manifest_path.display())))?;
        let read = |name: &str, crc: u32| -> Result<Vec<WindowSample>, CliError> {
            let p = data.join(name);
            let bytes = fs::read(&p).map_err(|e| DataError::io(&p, e))?;
            if crc32fast::hash(&bytes) != crc {
                return Err(CliError::Failed(format!("{}: checksum mismatch", p.display())));
            }
            decode_windows(&bytes, &p)
        };
        return Ok((read(&m.train_file, m.train_crc32)?, read(&m.test_file, m.test_crc32)?));
    }
    let recordings = dataio::read_recording_dir(data)?;
    let mut windows = Vec::new();
    for r in &recordings {
        windows.extend(make_windows(r, &cfg.preprocess.window)?);
    }
    Ok(split(&windows, &cfg.preprocess.split)?)
}

fn preprocess(cfg: &RunConfig, data: &Path, out: &Output) -> Result<(), CliError> {
    let recordings = dataio::read_recording_dir(data)?;
    let mut windows = Vec::new();
    for r in &recordings {
        windows.extend(make_windows(r, &cfg.preprocess.window)?);
    }
    let (train, test) = split(&windows, &cfg.preprocess.split)?;
    let normalizer = Normalizer::fit(&train)?;
    let (train_bytes, test_bytes) = (encode_windows(&train), encode_windows(&test));
    out.write("train.bin", &train_bytes)?;
    out.write("test.bin", &test_bytes)?;
    out.write_json(
        MANIFEST,
        &Manifest {
            window: cfg.preprocess.window,
            split: cfg.preprocess.split.clone(),
            recordings: recordings.iter().map(|r| r.name.clone()).collect(),
            train_file: "train.bin".into(),
            test_file: "test.bin".into(),
            train_samples: train.len(),
            test_samples: test.len(),
            train_crc32: crc32fast::hash(&train_bytes),
            test_crc32: crc32fast::hash(&test_bytes),
            normalizer,
        },
    )?;
    say(&format!("{} train / {} test windows\n", train.len(), test.len()));
    Ok(())
}

fn train(cfg: &RunConfig, data: &Path, out: &Output) -> Result<(), CliError> {
    let (train, _) = load_split(cfg, data)?;
    let normalizer = Normalizer::fit(&train)?;
    let m = &cfg.model;
    let (payload, hyper) = match m.kind {
        ModelKind::Knn | ModelKind::KnnInterp => {
            let db = fingerprint_db(&train, m.k, m.m_interp)?;
            (ModelPayload::Fingerprint(db), serde_json::json!({ "k": m.k, "m_interp": m.m_interp }))
        }
        ModelKind::Cnn => {
            let (loc, outcome) = CnnLocalizer::fit(&train, &m.train)?;
            say(&format!(
                "loss {:.6} -> {:.6} over {} epochs\n",
                outcome.initial_loss,
                outcome.epoch_losses.last().copied().unwrap_or(outcome.initial_loss),
                outcome.epoch_losses.len()
            ));
            (ModelPayload::Cnn(loc.model), serde_json::to_value(&m.train).expect("config serializes"))
        }
    };
    let hyperparameters = match hyper {
        serde_json::Value::Object(map) => map.into_iter().collect(),
        _ => Default::default(),
    };
    let artifact = ModelArtifact {
        kind: m.kind,
        hyperparameters,
        payload,
        normalization: normalizer,
        schema_version: dataio::SCHEMA_VERSION,
    };
    dataio::save_model(&artifact, &out.path("model.rsm"))?;
    say(&format!("{}\n", out.path("model.rsm").display()));
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    model: ModelKind,
    overall: EvalSummary,
    per_recording: Vec<(String, EvalSummary)>,
}

#[derive(Serialize)]
struct EvalSummary {
    samples: usize,
    mean_l2_m: f64,
    std_l2_m: f64,
    mae_x_m: f64,
    mae_y_m: f64,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        Self { samples: r.errors.len(), mean_l2_m: r.mean_l2_m, std_l2_m: r.std_l2_m, mae_x_m: r.mae_x_m, mae_y_m: r.mae_y_m }
    }
}

fn eval(cfg: &RunConfig, data: &Path, model: &Path, out: &Output) -> Result<(), CliError> {
    let artifact = dataio::load_model(model)?;
    let (_, test) = load_split(cfg, data)?;
    if test.is_empty() {
        return Err(CliError::Failed("test split is empty".into()));
    }
    let predict = |samples: &[WindowSample]| -> Result<Vec<crate::geometry::GroundPoint>, CliError> {
        Ok(match (&artifact.payload, artifact.kind) {
            (ModelPayload::Fingerprint(db), ModelKind::Knn) => {
                samples.iter().map(|s| db.knn_predict(&s.raw_rss)).collect::<Result<_, _>>()?
            }
            (ModelPayload::Fingerprint(db), _) => {
                samples.iter().map(|s| db.knn_interp_predict(&s.raw_rss)).collect::<Result<_, _>>()?
            }
            (ModelPayload::Cnn(net), _) => {
                CnnLocalizer { model: net.clone(), normalizer: artifact.normalization.clone() }.predict(samples)?
            }
        })
    };
    let truth: Vec<_> = test.iter().map(|s| s.label).collect();
    let overall = evaluate(&predict(&test)?, &truth)?;
    let mut names: Vec<String> = test.iter().map(|s| s.source_recording.clone()).collect();
    names.sort();
    names.dedup();
    let mut per_recording = Vec::new();
    for name in names {
        let subset: Vec<WindowSample> = test.iter().filter(|s| s.source_recording == name).cloned().collect();
        let t: Vec<_> = subset.iter().map(|s| s.label).collect();
        per_recording.push((name, EvalSummary::from(&evaluate(&predict(&subset)?, &t)?)));
    }
    let report = EvalOutput { model: artifact.kind, overall: EvalSummary::from(&overall), per_recording };
    out.write_json("eval.json", &report)?;
    say(&format!(
        "mean L2 {:.3} ± {:.3} m over {} windows\n",
        overall.mean_l2_m,
        overall.std_l2_m,
        overall.errors.len()
    ));
    Ok(())
}

fn run_bench(cfg: &RunConfig, run: RunId, data: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let dataset = match data {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(CliError::Failed(format!("data directory {} does not exist", dir.display())));
            }
            Dataset::from_dir(dir)?
        }
        None => Dataset::synthetic(cfg.synth.clone())?,
    };
    let mut report = bench::run(run, &dataset, &cfg.bench)?;
    report.wall_time_s = out.wall_time();
    let stem = serde_json::to_value(run).expect("enum serializes").as_str().unwrap_or("run").to_string();
    out.write(&format!("bench_{stem}.json"), report.to_json().as_bytes())?;
    let table = report.render_table();
    out.write(&format!("bench_{stem}.txt"), table.as_bytes())?;
    bench::emit_plots(&report, &out.dir)?;
    say(&table);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bench": {"epochs": 3}}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 4}"#).unwrap();
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn split_spec_in_config() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"preprocess": {"split": {"mode": "leave_one_recording_out", "holdout": "exp8"}}}"#)
                .unwrap();
        assert_eq!(cfg.preprocess.split, SplitSpec::leave_out("exp8"));
        let typo = r#"{"preprocess": {"split": {"mode": "random_fraction", "train_fraction": 0.5, "sed": 1}}}"#;
        assert!(serde_json::from_str::<RunConfig>(typo).is_err());
    }

    #[test]
    fn no_arguments_is_usage_error() {
        assert_eq!(main(["rsslab"]), 1);
        assert_eq!(main(["rsslab", "frobnicate"]), 1);
    }

    #[test]
    fn window_cache_round_trip() {
        let s = WindowSample {
            source_recording: "exp5".into(),
            t_center_s: 2.5,
            num_aps: 2,
            window_len: 3,
            rss_window: vec![-40.0, -41.5, -42.0, -60.0, -61.0, f64::MIN_POSITIVE],
            raw_rss: vec![-40.25, -60.125],
            label: crate::geometry::GroundPoint::new(1.0, 0.1),
        };
        let bytes = encode_windows(&[s.clone(), s.clone()]);
        assert_eq!(decode_windows(&bytes, Path::new("x")).unwrap(), vec![s.clone(), s]);
        assert!(decode_windows(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
    }
}

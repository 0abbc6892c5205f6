//! Filtering, stream alignment, windowing, normalization and splitting.
//!
//! Filters are centered moving averages whose window shrinks at the series
//! ends. A window of length `n` covers `i - (n - 1) / 2 ..= i + n / 2`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{Recording, Row};
use crate::geometry::GroundPoint;
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("position and RSS streams do not overlap in time")]
    EmptyOverlap,
    #[error("constant stream {0}: correlation undefined")]
    DegenerateVariance(String),
    #[error("unknown recording {0:?}")]
    UnknownRecording(String),
    #[error("access point {ap:?} in {recording:?} has no RSS readings")]
    AllMissing { recording: String, ap: String },
    #[error("recording {name:?} has {len} rows, need at least {needed}")]
    TooShort { name: String, len: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Centered moving average over a series with gaps.
///
/// Missing entries are left out of each mean; an output is missing only
/// when its whole window is.
pub fn moving_average(series: &[Option<f64>], n: usize) -> Vec<Option<f64>> {
    let n = n.max(1);
    let back = (n - 1) / 2;
    let fwd = n / 2;
    let len = series.len();
    (0..len)
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + fwd).min(len.saturating_sub(1));
            let window = series[lo..=hi].iter().flatten();
            let anchor = *series[lo..=hi].iter().flatten().next()?;
            // Averaging offsets from the first value keeps constant runs exact.
            let (sum, count) = window.fold((0.0, 0usize), |(s, c), v| (s + (v - anchor), c + 1));
            Some(anchor + sum / count as f64)
        })
        .collect()
}

/// Forward fill, then backward fill for a leading gap. `None` if every
/// entry is missing.
pub fn impute(series: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = series.iter().flatten().next().copied()?;
    let mut last = first;
    Some(
        series
            .iter()
            .map(|v| {
                if let Some(v) = v {
                    last = *v;
                }
                last
            })
            .collect(),
    )
}

/// A recording rebuilt on the RSS time grid plus the time offset between
/// each RSS sample and the position sample it was paired with.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub recording: Recording,
    pub residuals_s: Vec<f64>,
}

impl Alignment {
    pub fn max_residual_s(&self) -> f64 {
        self.residuals_s.iter().copied().fold(0.0, f64::max)
    }
}

/// Pairs each RSS sample with the position sample nearest in time.
///
/// `positions` and `rss` must each be sorted by time. RSS samples outside
/// the position stream's time span are dropped.
pub fn align_streams(
    template: &Recording,
    positions: &[(f64, GroundPoint)],
    rss: &[(f64, Vec<Option<f64>>)],
) -> Result<Alignment, PreprocessError> {
    let (Some(first), Some(last)) = (positions.first(), positions.last()) else {
        return Err(PreprocessError::EmptyOverlap);
    };
    let mut rows = Vec::new();
    let mut residuals = Vec::new();
    for (t, values) in rss.iter().filter(|(t, _)| *t >= first.0 && *t <= last.0) {
        let idx = positions.partition_point(|(pt, _)| pt < t);
        let best = [idx.checked_sub(1), (idx < positions.len()).then_some(idx)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (positions[a].0 - t).abs().total_cmp(&(positions[b].0 - t).abs()))
            .expect("non-empty position stream");
        let (pt, pos) = positions[best];
        residuals.push((pt - t).abs());
        rows.push(Row { t_s: *t, x_m: pos.x, y_m: pos.y, rss_dbm: values.clone() });
    }
    if rows.is_empty() {
        return Err(PreprocessError::EmptyOverlap);
    }
    Ok(Alignment {
        recording: Recording { rows, ..template.clone() },
        residuals_s: residuals,
    })
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len()) as f64;
    if n < 2.0 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApCorrelation {
    pub ap_id: String,
    pub raw_x: f64,
    pub raw_y: f64,
    pub filtered_x: f64,
    pub filtered_y: f64,
}

/// Correlation between RSS and position before and after filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub window: usize,
    pub per_ap: Vec<ApCorrelation>,
    pub mean_abs_raw: f64,
    pub mean_abs_filtered: f64,
}

impl CorrelationReport {
    /// Improvement factor of the filtered mean |r| over the raw one.
    pub fn ratio(&self) -> f64 {
        self.mean_abs_filtered / self.mean_abs_raw
    }
}

fn filtered_dense(series: &[f64], n: usize) -> Vec<f64> {
    let opt: Vec<Option<f64>> = series.iter().map(|&v| Some(v)).collect();
    moving_average(&opt, n).into_iter().map(|v| v.expect("dense input")).collect()
}

fn imputed_columns(rec: &Recording) -> Result<Vec<Vec<f64>>, PreprocessError> {
    (0..rec.num_aps())
        .map(|a| {
            impute(&rec.rss_column(a)).ok_or_else(|| PreprocessError::AllMissing {
                recording: rec.name.clone(),
                ap: rec.ap_ids[a].clone(),
            })
        })
        .collect()
}

pub fn window_correlation(rec: &Recording, n: usize) -> Result<CorrelationReport, PreprocessError> {
    if rec.len() < n.max(2) {
        return Err(PreprocessError::TooShort { name: rec.name.clone(), len: rec.len(), needed: n.max(2) });
    }
    let columns = imputed_columns(rec)?;
    let xs: Vec<f64> = rec.rows.iter().map(|r| r.x_m).collect();
    let ys: Vec<f64> = rec.rows.iter().map(|r| r.y_m).collect();
    let (fx, fy) = (filtered_dense(&xs, n), filtered_dense(&ys, n));
    let corr = |a: &[f64], b: &[f64], what: &str| {
        pearson(a, b).ok_or_else(|| PreprocessError::DegenerateVariance(what.to_string()))
    };
    let mut per_ap = Vec::new();
    for (a, col) in columns.iter().enumerate() {
        let id = &rec.ap_ids[a];
        let filtered = filtered_dense(col, n);
        per_ap.push(ApCorrelation {
            ap_id: id.clone(),
            raw_x: corr(col, &xs, &format!("rss_{id} vs x"))?,
            raw_y: corr(col, &ys, &format!("rss_{id} vs y"))?,
            filtered_x: corr(&filtered, &fx, &format!("filtered rss_{id} vs x"))?,
            filtered_y: corr(&filtered, &fy, &format!("filtered rss_{id} vs y"))?,
        });
    }
    let count = (2 * per_ap.len()) as f64;
    let mean_abs_raw = per_ap.iter().map(|c| c.raw_x.abs() + c.raw_y.abs()).sum::<f64>() / count;
    let mean_abs_filtered = per_ap.iter().map(|c| c.filtered_x.abs() + c.filtered_y.abs()).sum::<f64>() / count;
    Ok(CorrelationReport { window: n, per_ap, mean_abs_raw, mean_abs_filtered })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Moving-average length applied to RSS and position streams.
    pub filter_len: usize,
    /// Samples per model input window.
    pub window_len: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { filter_len: 50, window_len: 50, stride: 1 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.filter_len == 0 || self.window_len == 0 || self.stride == 0 {
            return Err(PreprocessError::Invalid("filter_len, window_len and stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// One model input: a filtered RSS window and the filtered position at its
/// center. Values are in physical units; see [`Normalizer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub source_recording: String,
    pub t_center_s: f64,
    pub num_aps: usize,
    pub window_len: usize,
    /// `num_aps × window_len`, AP-major, dBm.
    pub rss_window: Vec<f64>,
    /// Unfiltered (imputed) RSS at the window center, dBm.
    pub raw_rss: Vec<f64>,
    pub label: GroundPoint,
}

/// Index of the row that carries a window's label.
pub fn window_center(start: usize, window_len: usize) -> usize {
    start + window_len / 2
}

pub fn make_windows(rec: &Recording, cfg: &WindowConfig) -> Result<Vec<WindowSample>, PreprocessError> {
    cfg.validate()?;
    if rec.len() < cfg.window_len {
        return Err(PreprocessError::TooShort { name: rec.name.clone(), len: rec.len(), needed: cfg.window_len });
    }
    let raw = imputed_columns(rec)?;
    let filtered: Vec<Vec<f64>> = raw.iter().map(|c| filtered_dense(c, cfg.filter_len)).collect();
    let xs = filtered_dense(&rec.rows.iter().map(|r| r.x_m).collect::<Vec<_>>(), cfg.filter_len);
    let ys = filtered_dense(&rec.rows.iter().map(|r| r.y_m).collect::<Vec<_>>(), cfg.filter_len);
    let n_ap = rec.num_aps();
    Ok((0..=rec.len() - cfg.window_len)
        .step_by(cfg.stride)
        .map(|start| {
            let c = window_center(start, cfg.window_len);
            let mut rss_window = Vec::with_capacity(n_ap * cfg.window_len);
            for col in &filtered {
                rss_window.extend_from_slice(&col[start..start + cfg.window_len]);
            }
            WindowSample {
                source_recording: rec.name.clone(),
                t_center_s: rec.rows[c].t_s,
                num_aps: n_ap,
                window_len: cfg.window_len,
                rss_window,
                raw_rss: raw.iter().map(|col| col[c]).collect(),
                label: GroundPoint::new(xs[c], ys[c]),
            }
        })
        .collect())
}

/// Per-AP RSS z-scoring and per-axis min-max position scaling, fitted on
/// training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub rss_mean: Vec<f64>,
    pub rss_std: Vec<f64>,
    pub pos_min: [f64; 2],
    pub pos_max: [f64; 2],
}

impl Normalizer {
    pub fn fit(train: &[WindowSample]) -> Result<Self, PreprocessError> {
        let first = train.first().ok_or_else(|| PreprocessError::Invalid("empty training set".into()))?;
        let n_ap = first.num_aps;
        let mut mean = vec![0.0; n_ap];
        let mut m2 = vec![0.0; n_ap];
        let mut count = 0usize;
        for s in train {
            if s.num_aps != n_ap {
                return Err(PreprocessError::Invalid("windows disagree on AP count".into()));
            }
        }
        // Welford per AP over every window entry.
        for a in 0..n_ap {
            let mut n = 0usize;
            for s in train {
                for &v in &s.rss_window[a * s.window_len..(a + 1) * s.window_len] {
                    n += 1;
                    let d = v - mean[a];
                    mean[a] += d / n as f64;
                    m2[a] += d * (v - mean[a]);
                }
            }
            count = n;
        }
        let rss_std = m2
            .iter()
            .map(|&m| {
                let sd = (m / count.max(1) as f64).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        let mut pos_min = [f64::INFINITY; 2];
        let mut pos_max = [f64::NEG_INFINITY; 2];
        for s in train {
            for (i, v) in [s.label.x, s.label.y].into_iter().enumerate() {
                pos_min[i] = pos_min[i].min(v);
                pos_max[i] = pos_max[i].max(v);
            }
        }
        for i in 0..2 {
            if pos_max[i] - pos_min[i] <= 1e-12 {
                pos_max[i] = pos_min[i] + 1.0;
            }
        }
        Ok(Self { rss_mean: mean, rss_std, pos_min, pos_max })
    }

    pub fn normalize_window(&self, s: &WindowSample) -> Vec<f64> {
        s.rss_window
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let a = i / s.window_len;
                (v - self.rss_mean[a]) / self.rss_std[a]
            })
            .collect()
    }

    pub fn normalize_label(&self, p: &GroundPoint) -> [f64; 2] {
        [
            (p.x - self.pos_min[0]) / (self.pos_max[0] - self.pos_min[0]),
            (p.y - self.pos_min[1]) / (self.pos_max[1] - self.pos_min[1]),
        ]
    }

    pub fn denormalize_label(&self, v: [f64; 2]) -> GroundPoint {
        GroundPoint::new(
            self.pos_min[0] + v[0] * (self.pos_max[0] - self.pos_min[0]),
            self.pos_min[1] + v[1] * (self.pos_max[1] - self.pos_min[1]),
        )
    }
}

/// Anything that knows which recording it came from.
pub trait Sourced {
    fn source(&self) -> &str;
}

impl Sourced for WindowSample {
    fn source(&self) -> &str {
        &self.source_recording
    }
}

impl Sourced for Recording {
    fn source(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum SplitMode {
    RandomFraction { train_fraction: f64 },
    LeaveOneRecordingOut { holdout: String },
}

/// Unknown keys are rejected by the flattened [`SplitMode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub mode: SplitMode,
    #[serde(default)]
    pub seed: u64,
}

impl SplitSpec {
    pub fn random(train_fraction: f64, seed: u64) -> Self {
        Self { mode: SplitMode::RandomFraction { train_fraction }, seed }
    }

    pub fn leave_out(holdout: impl Into<String>) -> Self {
        Self { mode: SplitMode::LeaveOneRecordingOut { holdout: holdout.into() }, seed: 0 }
    }
}

/// Partitions `items` into disjoint train and test sets.
pub fn split<T: Sourced + Clone>(items: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>), PreprocessError> {
    match &spec.mode {
        SplitMode::RandomFraction { train_fraction } => {
            let f = *train_fraction;
            if !(f > 0.0 && f < 1.0) {
                return Err(PreprocessError::Invalid(format!("train_fraction must be in (0, 1), got {f}")));
            }
            let mut order: Vec<usize> = (0..items.len()).collect();
            order.shuffle(&mut seed::rng(spec.seed, "split", 0));
            let n_train = ((items.len() as f64) * f).round() as usize;
            let train = order[..n_train].iter().map(|&i| items[i].clone()).collect();
            let test = order[n_train..].iter().map(|&i| items[i].clone()).collect();
            Ok((train, test))
        }
        SplitMode::LeaveOneRecordingOut { holdout } => {
            if !items.iter().any(|s| s.source() == holdout) {
                return Err(PreprocessError::UnknownRecording(holdout.clone()));
            }
            let (test, train): (Vec<T>, Vec<T>) = items.iter().cloned().partition(|s| s.source() == holdout);
            Ok((train, test))
        }
    }
}

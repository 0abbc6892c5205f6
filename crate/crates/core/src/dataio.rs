//! Recording CSV files, foreign-layout conversion and model artifacts.
//!
//! A recording is stored as `name.csv` with header `t,x,y,rss_<ap>...` and
//! an optional `name.json` sidecar carrying the receiver id and free-form
//! metadata. Missing RSS values are empty fields. Numbers are written in
//! shortest round-trip decimal form, so reading back is bit-exact.
//!
//! A model artifact is a single JSON header line followed by a
//! `crc32 <hex>` line covering the header bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GroundPoint;
use crate::models::cnn::{CnnModel, ConvLayer};
use crate::models::knn::FingerprintDb;
use crate::preprocess::Normalizer;

pub const SCHEMA_VERSION: u32 = 1;
const ARTIFACT_FORMAT: &str = "rsslab-model";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
    #[error("invalid recording: {0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}

/// One synchronized sample: time, labeled position and per-AP RSS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    /// Aligned with [`Recording::ap_ids`]; `None` marks a missed broadcast.
    pub rss_dbm: Vec<Option<f64>>,
}

impl Row {
    pub fn position(&self) -> GroundPoint {
        GroundPoint::new(self.x_m, self.y_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub name: String,
    pub receiver_id: String,
    pub ap_ids: Vec<String>,
    pub rows: Vec<Row>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_aps(&self) -> usize {
        self.ap_ids.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t_s).collect()
    }

    pub fn positions(&self) -> Vec<GroundPoint> {
        self.rows.iter().map(Row::position).collect()
    }

    pub fn rss_column(&self, ap: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.rss_dbm[ap]).collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let n_ap = self.ap_ids.len();
        if n_ap == 0 {
            return Err(DataError::Invalid(format!("{}: no access points", self.name)));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, row) in self.rows.iter().enumerate() {
            if !row.t_s.is_finite() || row.t_s <= prev {
                return Err(DataError::Invalid(format!(
                    "{}: row {i}: timestamp {} not strictly increasing",
                    self.name, row.t_s
                )));
            }
            prev = row.t_s;
            if !(row.x_m.is_finite() && row.y_m.is_finite()) {
                return Err(DataError::Invalid(format!("{}: row {i}: non-finite position", self.name)));
            }
            if row.rss_dbm.len() != n_ap {
                return Err(DataError::Invalid(format!(
                    "{}: row {i}: {} RSS values for {n_ap} access points",
                    self.name,
                    row.rss_dbm.len()
                )));
            }
            if row.rss_dbm.iter().flatten().any(|v| !v.is_finite()) {
                return Err(DataError::Invalid(format!("{}: row {i}: non-finite RSS", self.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    name: String,
    receiver_id: String,
    units: BTreeMap<String, String>,
    #[serde(default)]
    meta: BTreeMap<String, serde_json::Value>,
}

/// Sidecar path next to a recording CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| DataError::io(path, e))
}

fn header_for(ap_ids: &[String]) -> Vec<String> {
    let mut header = vec!["t".to_string(), "x".to_string(), "y".to_string()];
    header.extend(ap_ids.iter().map(|id| format!("rss_{id}")));
    header
}

pub fn recording_to_csv(rec: &Recording) -> String {
    let mut out = header_for(&rec.ap_ids).join(",");
    out.push('\n');
    for row in &rec.rows {
        out.push_str(&format!("{},{},{}", row.t_s, row.x_m, row.y_m));
        for v in &row.rss_dbm {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_recording(rec: &Recording, path: &Path) -> Result<(), DataError> {
    rec.validate()?;
    write_atomic(path, recording_to_csv(rec).as_bytes())?;
    let sidecar = Sidecar {
        name: rec.name.clone(),
        receiver_id: rec.receiver_id.clone(),
        units: [("t", "s"), ("x", "m"), ("y", "m"), ("rss", "dBm")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        meta: rec.meta.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write_atomic(&sidecar_path(path), json.as_bytes())
}

fn parse_number(field: &str, line: usize, column: usize) -> Result<f64, DataError> {
    let v: f64 = field.trim().parse().map_err(|_| DataError::Parse {
        line,
        column,
        message: format!("not a number: {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(DataError::Parse { line, column, message: format!("non-finite value {field:?}") });
    }
    Ok(v)
}

/// Parses canonical recording CSV text.
pub fn recording_from_csv(text: &str, name: &str, receiver_id: &str) -> Result<Recording, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| DataError::Schema(e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 4 || cols[0] != "t" || cols[1] != "x" || cols[2] != "y" {
        return Err(DataError::Schema(format!("expected header t,x,y,rss_<ap>..., got {}", cols.join(","))));
    }
    let mut ap_ids = Vec::new();
    for c in &cols[3..] {
        match c.strip_prefix("rss_") {
            Some(id) if !id.is_empty() => ap_ids.push(id.to_string()),
            _ => return Err(DataError::Schema(format!("column {c:?} is not of the form rss_<ap>"))),
        }
    }
    let mut rows = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| DataError::Parse { line, column: 0, message: e.to_string() })?;
        if record.len() != cols.len() {
            return Err(DataError::Parse {
                line,
                column: record.len().min(cols.len()) + 1,
                message: format!("expected {} fields, found {}", cols.len(), record.len()),
            });
        }
        let t = parse_number(&record[0], line, 1)?;
        if t <= prev_t {
            return Err(DataError::Parse {
                line,
                column: 1,
                message: format!("timestamp {t} is not greater than previous {prev_t}"),
            });
        }
        prev_t = t;
        let x = parse_number(&record[1], line, 2)?;
        let y = parse_number(&record[2], line, 3)?;
        let rss = (3..cols.len())
            .map(|c| {
                let f = &record[c];
                if f.is_empty() {
                    Ok(None)
                } else {
                    parse_number(f, line, c + 1).map(Some)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(Row { t_s: t, x_m: x, y_m: y, rss_dbm: rss });
    }
    Ok(Recording {
        name: name.to_string(),
        receiver_id: receiver_id.to_string(),
        ap_ids,
        rows,
        meta: BTreeMap::new(),
    })
}

pub fn read_recording(path: &Path) -> Result<Recording, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let side = sidecar_path(path);
    let sidecar: Option<Sidecar> = if side.exists() {
        let s = fs::read_to_string(&side).map_err(|e| DataError::io(&side, e))?;
        Some(serde_json::from_str(&s).map_err(|e| DataError::Schema(format!("{}: {e}", side.display())))?)
    } else {
        None
    };
    let (name, receiver) = match &sidecar {
        Some(s) => (s.name.clone(), s.receiver_id.clone()),
        None => (stem, "unknown".to_string()),
    };
    let mut rec = recording_from_csv(&text, &name, &receiver)?;
    if let Some(s) = sidecar {
        rec.meta = s.meta;
    }
    Ok(rec)
}

/// Reads every `*.csv` recording in a directory, sorted by file name.
pub fn read_recording_dir(dir: &Path) -> Result<Vec<Recording>, DataError> {
    let entries = fs::read_dir(dir).map_err(|e| DataError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DataError::Invalid(format!("{}: no recording CSV files", dir.display())));
    }
    paths.iter().map(|p| read_recording(p)).collect()
}

/// Maps the columns of a foreign CSV layout onto the canonical one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub t: String,
    pub x: String,
    pub y: String,
    /// Canonical AP id and the foreign column holding its RSS, in output order.
    pub rss: Vec<ApColumn>,
    /// Multiplier taking the foreign time unit to seconds.
    #[serde(default = "one")]
    pub time_scale: f64,
    /// Field values that mean "no RSS reading".
    #[serde(default = "default_missing")]
    pub missing_values: Vec<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub receiver_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApColumn {
    pub ap_id: String,
    pub column: String,
}

fn one() -> f64 {
    1.0
}

fn default_missing() -> Vec<String> {
    vec![String::new()]
}

/// Converts a foreign CSV into a canonical [`Recording`].
pub fn convert_recording(path: &Path, map: &ColumnMap) -> Result<Recording, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| DataError::Schema(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Schema(format!("column {name:?} not found in {}", path.display())))
    };
    let (ti, xi, yi) = (find(&map.t)?, find(&map.x)?, find(&map.y)?);
    let rss_idx = map.rss.iter().map(|a| find(&a.column)).collect::<Result<Vec<_>, _>>()?;
    if rss_idx.is_empty() {
        return Err(DataError::Schema("column map lists no RSS columns".into()));
    }
    let mut rows = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| DataError::Parse { line, column: 0, message: e.to_string() })?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let t = parse_number(field(ti), line, ti + 1)? * map.time_scale;
        if t <= prev_t {
            return Err(DataError::Parse {
                line,
                column: ti + 1,
                message: format!("timestamp {t} is not greater than previous {prev_t}"),
            });
        }
        prev_t = t;
        let x = parse_number(field(xi), line, xi + 1)?;
        let y = parse_number(field(yi), line, yi + 1)?;
        let rss = rss_idx
            .iter()
            .map(|&c| {
                let f = field(c);
                if map.missing_values.iter().any(|m| m == f) {
                    Ok(None)
                } else {
                    parse_number(f, line, c + 1).map(Some)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(Row { t_s: t, x_m: x, y_m: y, rss_dbm: rss });
    }
    let rec = Recording {
        name: map.name.clone().unwrap_or(stem),
        receiver_id: map.receiver_id.clone().unwrap_or_else(|| "unknown".into()),
        ap_ids: map.rss.iter().map(|a| a.ap_id.clone()).collect(),
        rows,
        meta: BTreeMap::new(),
    };
    rec.validate()?;
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    KnnInterp,
    Cnn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelPayload {
    Fingerprint(FingerprintDb),
    Cnn(CnnModel),
}

/// A trained localizer ready for deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub kind: ModelKind,
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
    pub payload: ModelPayload,
    pub normalization: Normalizer,
    pub schema_version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtifactHeader {
    format: String,
    schema_version: u32,
    kind: ModelKind,
    hyperparameters: BTreeMap<String, serde_json::Value>,
    normalization: Normalizer,
    layout: PayloadLayout,
    /// Little-endian f64 values, base64.
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum PayloadLayout {
    Fingerprint { dims: usize, entries: usize, k: usize, m_interp: usize, eps_d: f64 },
    Cnn { input_channels: usize, kernel_sizes: Vec<usize>, channel_sizes: Vec<usize> },
}

fn encode_f64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    BASE64.encode(bytes)
}

fn decode_f64(data: &str) -> Result<Vec<f64>, DataError> {
    let bytes = BASE64.decode(data).map_err(|e| DataError::CorruptArtifact(format!("payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(DataError::CorruptArtifact("payload length is not a multiple of 8".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Serializes an artifact to its on-disk text form.
pub fn encode_model(m: &ModelArtifact) -> Result<String, DataError> {
    let (layout, values) = match &m.payload {
        ModelPayload::Fingerprint(db) => {
            let mut values = Vec::with_capacity(db.len() * (db.dims() + 2));
            for (rss, pos) in db.entries() {
                values.extend_from_slice(rss);
                values.push(pos.x);
                values.push(pos.y);
            }
            (
                PayloadLayout::Fingerprint {
                    dims: db.dims(),
                    entries: db.len(),
                    k: db.k,
                    m_interp: db.m_interp,
                    eps_d: db.eps_d,
                },
                values,
            )
        }
        ModelPayload::Cnn(model) => (
            PayloadLayout::Cnn {
                input_channels: model.input_channels(),
                kernel_sizes: model.layers().iter().map(|l| l.kernel).collect(),
                channel_sizes: model.layers().iter().map(|l| l.out_channels).collect(),
            },
            model.params(),
        ),
    };
    let header = ArtifactHeader {
        format: ARTIFACT_FORMAT.into(),
        schema_version: m.schema_version,
        kind: m.kind,
        hyperparameters: m.hyperparameters.clone(),
        normalization: m.normalization.clone(),
        layout,
        data: encode_f64(&values),
    };
    let line = serde_json::to_string(&header).map_err(|e| DataError::Schema(e.to_string()))?;
    let crc = crc32fast::hash(line.as_bytes());
    Ok(format!("{line}\ncrc32 {crc:08x}\n"))
}

/// Parses the on-disk text form, verifying the checksum before anything else.
pub fn decode_model(text: &str) -> Result<ModelArtifact, DataError> {
    let mut lines = text.split('\n');
    let header_line = lines.next().unwrap_or("");
    let crc_line = lines
        .next()
        .ok_or_else(|| DataError::CorruptArtifact("missing checksum line (truncated file?)".into()))?;
    let stored = crc_line
        .strip_prefix("crc32 ")
        .and_then(|h| u32::from_str_radix(h.trim(), 16).ok())
        .ok_or_else(|| DataError::CorruptArtifact("malformed checksum line".into()))?;
    let actual = crc32fast::hash(header_line.as_bytes());
    if stored != actual {
        return Err(DataError::CorruptArtifact(format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(DataError::CorruptArtifact("trailing data after checksum".into()));
    }
    let value: serde_json::Value =
        serde_json::from_str(header_line).map_err(|e| DataError::CorruptArtifact(format!("header: {e}")))?;
    if value.get("format").and_then(|f| f.as_str()) != Some(ARTIFACT_FORMAT) {
        return Err(DataError::Schema("not an rsslab model artifact".into()));
    }
    let version = value.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(SCHEMA_VERSION)) {
        return Err(DataError::Schema(format!(
            "unsupported schema_version {}, expected {SCHEMA_VERSION}",
            version.map_or("<missing>".to_string(), |v| v.to_string())
        )));
    }
    let header: ArtifactHeader = serde_json::from_value(value).map_err(|e| DataError::Schema(e.to_string()))?;
    let values = decode_f64(&header.data)?;
    let payload = match header.layout {
        PayloadLayout::Fingerprint { dims, entries, k, m_interp, eps_d } => {
            if values.len() != entries * (dims + 2) {
                return Err(DataError::CorruptArtifact("fingerprint payload size mismatch".into()));
            }
            let rows = values
                .chunks_exact(dims + 2)
                .map(|c| (c[..dims].to_vec(), GroundPoint::new(c[dims], c[dims + 1])))
                .collect();
            let mut db = FingerprintDb::new(rows, k, m_interp).map_err(|e| DataError::Schema(e.to_string()))?;
            db.eps_d = eps_d;
            ModelPayload::Fingerprint(db)
        }
        PayloadLayout::Cnn { input_channels, kernel_sizes, channel_sizes } => {
            if kernel_sizes.len() != channel_sizes.len() || kernel_sizes.is_empty() {
                return Err(DataError::Schema("CNN layout has mismatched layer lists".into()));
            }
            let mut layers = Vec::new();
            let mut in_ch = input_channels;
            for (&k, &out) in kernel_sizes.iter().zip(&channel_sizes) {
                layers.push(ConvLayer::zeros(in_ch, out, k));
                in_ch = out;
            }
            let mut model = CnnModel::from_layers(input_channels, layers).map_err(|e| DataError::Schema(e.to_string()))?;
            if values.len() != model.parameter_count() {
                return Err(DataError::CorruptArtifact("CNN payload size mismatch".into()));
            }
            model.set_params(&values);
            ModelPayload::Cnn(model)
        }
    };
    let kind_matches = matches!(
        (header.kind, &payload),
        (ModelKind::Cnn, ModelPayload::Cnn(_)) | (ModelKind::Knn | ModelKind::KnnInterp, ModelPayload::Fingerprint(_))
    );
    if !kind_matches {
        return Err(DataError::Schema(format!("payload does not match model kind {:?}", header.kind)));
    }
    Ok(ModelArtifact {
        kind: header.kind,
        hyperparameters: header.hyperparameters,
        payload,
        normalization: header.normalization,
        schema_version: header.schema_version,
    })
}

pub fn save_model(m: &ModelArtifact, path: &Path) -> Result<(), DataError> {
    write_atomic(path, encode_model(m)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelArtifact, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| DataError::CorruptArtifact("artifact is not UTF-8".into()))?;
    decode_model(&text)
}

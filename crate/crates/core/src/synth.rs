//! Synthetic RSS environments and calibration walks.
//!
//! Received power follows a log-distance law plus a frozen, spatially
//! correlated random field per access point (shadowing and multipath),
//! per-receiver offsets and fresh per-sample Gaussian noise.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{Recording, Row};
use crate::geometry::GroundPoint;
use crate::seed;
use crate::uncertainty::{corrupt_labels, UncertaintyBudget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessPoint {
    pub id: String,
    pub position: GroundPoint,
    /// Received power at the reference distance, dBm.
    pub tx_power_dbm: f64,
    pub multipath_seed: u64,
}

impl AccessPoint {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !self.position.is_finite() {
            return Err(SynthError::Invalid(format!("AP {}: non-finite position", self.id)));
        }
        if !(-30.0..=30.0).contains(&self.tx_power_dbm) {
            return Err(SynthError::Invalid(format!("AP {}: tx_power_dbm {} outside [-30, 30]", self.id, self.tx_power_dbm)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalModel {
    pub path_loss_exponent: f64,
    pub ref_distance_m: f64,
    pub shadowing_sigma_db: f64,
    pub shadowing_corr_length_m: f64,
    pub multipath_field_scale_db: f64,
    pub multipath_corr_length_m: f64,
    pub noise_sigma_db: f64,
}

impl Default for SignalModel {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.0,
            ref_distance_m: 1.0,
            shadowing_sigma_db: 2.0,
            shadowing_corr_length_m: 2.0,
            multipath_field_scale_db: 6.0,
            multipath_corr_length_m: 0.5,
            noise_sigma_db: 2.0,
        }
    }
}

impl SignalModel {
    /// Pure log-distance law: no field, no noise.
    pub fn noiseless(path_loss_exponent: f64) -> Self {
        Self {
            path_loss_exponent,
            shadowing_sigma_db: 0.0,
            multipath_field_scale_db: 0.0,
            noise_sigma_db: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.path_loss_exponent > 0.0 && self.ref_distance_m > 0.0) {
            return Err(SynthError::Invalid("path_loss_exponent and ref_distance_m must be > 0".into()));
        }
        if [self.shadowing_sigma_db, self.multipath_field_scale_db, self.noise_sigma_db].iter().any(|s| !(*s >= 0.0)) {
            return Err(SynthError::Invalid("noise scales must be >= 0".into()));
        }
        if !(self.shadowing_corr_length_m > 0.0 && self.multipath_corr_length_m > 0.0) {
            return Err(SynthError::Invalid("correlation lengths must be > 0".into()));
        }
        Ok(())
    }
}

/// Average variance of smoothstep-bilinear interpolation between unit
/// normal lattice values: `(2 * ∫ s(f)^2 df)^2` with `∫ s^2 = 13/35`.
const VALUE_NOISE_VARIANCE: f64 = (26.0 / 35.0) * (26.0 / 35.0);

fn lattice_normal(seed: u64, ix: i64, iy: i64) -> f64 {
    let u1 = seed::lattice_uniform(seed, ix, iy, 0);
    let u2 = seed::lattice_uniform(seed, ix, iy, 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Smooth zero-mean field with unit average variance and the given
/// correlation length. A pure function of `(seed, p)`.
pub fn value_noise(seed: u64, p: &GroundPoint, corr_length_m: f64) -> f64 {
    let gx = p.x / corr_length_m;
    let gy = p.y / corr_length_m;
    let (ix, iy) = (gx.floor(), gy.floor());
    let smooth = |f: f64| f * f * (3.0 - 2.0 * f);
    let (sx, sy) = (smooth(gx - ix), smooth(gy - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = lattice_normal(seed, ix, iy);
    let v10 = lattice_normal(seed, ix + 1, iy);
    let v01 = lattice_normal(seed, ix, iy + 1);
    let v11 = lattice_normal(seed, ix + 1, iy + 1);
    let v = (1.0 - sy) * ((1.0 - sx) * v00 + sx * v10) + sy * ((1.0 - sx) * v01 + sx * v11);
    v / VALUE_NOISE_VARIANCE.sqrt()
}

/// Frozen shadowing plus multipath deviation for `ap` at `pos`, dB.
pub fn spatial_field_db(ap: &AccessPoint, model: &SignalModel, pos: &GroundPoint) -> f64 {
    let mut v = 0.0;
    if model.multipath_field_scale_db > 0.0 {
        v += model.multipath_field_scale_db * value_noise(ap.multipath_seed, pos, model.multipath_corr_length_m);
    }
    if model.shadowing_sigma_db > 0.0 {
        let s = seed::derive(ap.multipath_seed, "shadowing", 0);
        v += model.shadowing_sigma_db * value_noise(s, pos, model.shadowing_corr_length_m);
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReceiverProfile {
    pub id: String,
    pub gain_offset_db: f64,
    #[serde(default)]
    pub per_ap_offset_db: BTreeMap<String, f64>,
    #[serde(default)]
    pub dropout_prob: f64,
}

impl ReceiverProfile {
    pub fn ideal(id: &str) -> Self {
        Self { id: id.into(), ..Default::default() }
    }

    /// The reference receiver.
    pub fn receiver_a() -> Self {
        Self { id: "A".into(), gain_offset_db: 0.0, per_ap_offset_db: BTreeMap::new(), dropout_prob: 0.02 }
    }

    /// A second chipset with a lower gain and one AP-specific bias.
    pub fn receiver_b() -> Self {
        Self {
            id: "B".into(),
            gain_offset_db: -2.0,
            per_ap_offset_db: [("AP2".to_string(), 1.0)].into_iter().collect(),
            dropout_prob: 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(SynthError::Invalid(format!("dropout_prob must be in [0, 1), got {}", self.dropout_prob)));
        }
        Ok(())
    }

    fn offset_for(&self, ap: &AccessPoint) -> f64 {
        self.gain_offset_db + self.per_ap_offset_db.get(&ap.id).copied().unwrap_or(0.0)
    }
}

/// Mean received power (no per-sample noise), dBm.
pub fn mean_rss(ap: &AccessPoint, model: &SignalModel, pos: &GroundPoint, rx: &ReceiverProfile) -> f64 {
    let r = ap.position.distance(pos).max(model.ref_distance_m);
    ap.tx_power_dbm - 10.0 * model.path_loss_exponent * (r / model.ref_distance_m).log10()
        + spatial_field_db(ap, model, pos)
        + rx.offset_for(ap)
}

/// One RSS reading, dBm.
pub fn rss_at<R: Rng + ?Sized>(
    ap: &AccessPoint,
    model: &SignalModel,
    pos: &GroundPoint,
    rx: &ReceiverProfile,
    rng: &mut R,
) -> f64 {
    let mut v = mean_rss(ap, model, pos, rx);
    if model.noise_sigma_db > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        v += model.noise_sigma_db * z;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: &GroundPoint) -> bool {
        let tol = 1e-9;
        p.x >= self.x_min - tol && p.x <= self.x_max + tol && p.y >= self.y_min - tol && p.y <= self.y_max + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Full sweeps along y, stepping across x between sweeps.
    LawnmowerYMajor,
    LawnmowerXMajor,
    RandomWaypoint,
}

fn default_speed() -> f64 {
    0.5
}

fn default_rate() -> f64 {
    10.0
}

fn default_lane() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub region: Rect,
    pub pattern: Pattern,
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    /// Distance between adjacent lawnmower sweeps.
    #[serde(default = "default_lane")]
    pub lane_spacing_m: f64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let r = &self.region;
        if !(r.width() >= 0.0 && r.height() >= 0.0) {
            return Err(SynthError::Invalid("region has negative extent".into()));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(SynthError::Invalid("sample_rate_hz must be > 0".into()));
        }
        if !(self.speed_mps >= 0.0 && self.duration_s >= 0.0 && self.lane_spacing_m > 0.0) {
            return Err(SynthError::Invalid("speed, duration must be >= 0 and lane spacing > 0".into()));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }
}

/// Sweep positions across `[lo, hi]`, the first one `phase` past `lo`.
fn lane_positions(lo: f64, hi: f64, spacing: f64, phase: f64) -> Vec<f64> {
    let mut lanes = Vec::new();
    let mut v = lo + phase;
    while v <= hi + 1e-9 {
        lanes.push(v.min(hi));
        v += spacing;
    }
    if lanes.is_empty() {
        lanes.push(lo);
    }
    lanes
}

fn lawnmower(region: &Rect, spacing: f64, phase: f64, y_major: bool) -> Vec<GroundPoint> {
    let (across_lo, across_hi, along_lo, along_hi) = if y_major {
        (region.x_min, region.x_max, region.y_min, region.y_max)
    } else {
        (region.y_min, region.y_max, region.x_min, region.x_max)
    };
    let mut pts = Vec::new();
    for (i, c) in lane_positions(across_lo, across_hi, spacing, phase).into_iter().enumerate() {
        let (a, b) = if i % 2 == 0 { (along_lo, along_hi) } else { (along_hi, along_lo) };
        for along in [a, b] {
            pts.push(if y_major { GroundPoint::new(c, along) } else { GroundPoint::new(along, c) });
        }
    }
    pts
}

/// Position at arc length `s` along a polyline (clamped to its ends).
fn point_at(path: &[GroundPoint], cumulative: &[f64], s: f64) -> GroundPoint {
    let idx = cumulative.partition_point(|&c| c <= s);
    if idx == 0 {
        return path[0];
    }
    if idx >= path.len() {
        return *path.last().expect("non-empty path");
    }
    let (a, b) = (path[idx - 1], path[idx]);
    let seg = cumulative[idx] - cumulative[idx - 1];
    let f = if seg > 0.0 { (s - cumulative[idx - 1]) / seg } else { 0.0 };
    GroundPoint::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
}

fn cumulative_lengths(path: &[GroundPoint]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for w in path.windows(2) {
        acc += w[0].distance(&w[1]);
        out.push(acc);
    }
    out
}

/// Timestamped positions of a collector walking at constant speed.
///
/// Lawnmower walks use seeded sweep offsets, start at a seeded point along
/// the sweep path and bounce back and forth along it; random-waypoint walks head for uniformly drawn
/// targets in turn.
pub fn generate_trajectory(spec: &TrajectorySpec, seed: u64) -> Result<Vec<(f64, GroundPoint)>, SynthError> {
    spec.validate()?;
    let n = spec.sample_count();
    let dt = 1.0 / spec.sample_rate_hz;
    let mut rng = seed::rng(seed, "trajectory", 0);
    let region = spec.region;
    let travel = spec.speed_mps * dt * n.saturating_sub(1) as f64;
    let (path, start, bounce) = match spec.pattern {
        Pattern::LawnmowerYMajor | Pattern::LawnmowerXMajor => {
            let y_major = spec.pattern == Pattern::LawnmowerYMajor;
            let across = if y_major { region.width() } else { region.height() };
            let phase = rng.random_range(0.0..spec.lane_spacing_m.min(across).max(f64::MIN_POSITIVE));
            let path = lawnmower(&region, spec.lane_spacing_m, phase, y_major);
            let total = *cumulative_lengths(&path).last().expect("non-empty");
            let start = if total > 0.0 { rng.random_range(0.0..total) } else { 0.0 };
            (path, start, true)
        }
        Pattern::RandomWaypoint => {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                GroundPoint::new(
                    region.x_min + rng.random::<f64>() * region.width(),
                    region.y_min + rng.random::<f64>() * region.height(),
                )
            };
            let mut path = vec![draw(&mut rng)];
            let mut length = 0.0;
            let mut attempts = 0;
            while length <= travel && attempts < 1_000_000 {
                let next = draw(&mut rng);
                length += path.last().expect("non-empty").distance(&next);
                path.push(next);
                attempts += 1;
            }
            (path, 0.0, false)
        }
    };
    let cumulative = cumulative_lengths(&path);
    let total = *cumulative.last().expect("non-empty");
    Ok((0..n)
        .map(|i| {
            let mut s = start + spec.speed_mps * dt * i as f64;
            if bounce && total > 0.0 {
                s %= 2.0 * total;
                if s > total {
                    s = 2.0 * total - s;
                }
            }
            (i as f64 * dt, point_at(&path, &cumulative, s))
        })
        .collect())
}

/// A generated recording together with its noise-free positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecording {
    pub recording: Recording,
    pub truth: Vec<GroundPoint>,
}

/// Simulates one calibration session.
///
/// Labels are the true positions corrupted by `budget.sigma_label_m`;
/// missed broadcasts (dropouts) are recorded as absent RSS values.
pub fn generate_recording(
    name: &str,
    aps: &[AccessPoint],
    model: &SignalModel,
    spec: &TrajectorySpec,
    rx: &ReceiverProfile,
    budget: &UncertaintyBudget,
    seed: u64,
) -> Result<SyntheticRecording, SynthError> {
    if aps.is_empty() {
        return Err(SynthError::Invalid("need at least one access point".into()));
    }
    for ap in aps {
        ap.validate()?;
    }
    model.validate()?;
    rx.validate()?;
    let trajectory = generate_trajectory(spec, seed::derive(seed, "trajectory", 0))?;
    let truth: Vec<GroundPoint> = trajectory.iter().map(|(_, p)| *p).collect();
    let labels = corrupt_labels(&truth, budget, seed::derive(seed, "labels", 0));
    let mut rng = seed::rng(seed, "rss", 0);
    let rows = trajectory
        .iter()
        .zip(&labels)
        .map(|((t, pos), label)| Row {
            t_s: *t,
            x_m: label.x,
            y_m: label.y,
            rss_dbm: aps
                .iter()
                .map(|ap| {
                    let dropped = rx.dropout_prob > 0.0 && rng.random::<f64>() < rx.dropout_prob;
                    let v = rss_at(ap, model, pos, rx, &mut rng);
                    (!dropped).then_some(v)
                })
                .collect(),
        })
        .collect();
    let meta = [
        ("seed".to_string(), serde_json::json!(seed)),
        ("sigma_label_m".to_string(), serde_json::json!(budget.sigma_label_m)),
        ("pattern".to_string(), serde_json::to_value(spec.pattern).expect("enum serializes")),
    ]
    .into_iter()
    .collect();
    Ok(SyntheticRecording {
        recording: Recording {
            name: name.to_string(),
            receiver_id: rx.id.clone(),
            ap_ids: aps.iter().map(|a| a.id.clone()).collect(),
            rows,
            meta,
        },
        truth,
    })
}

/// Access points, propagation model and label noise shared by a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub aps: Vec<AccessPoint>,
    pub model: SignalModel,
    /// The area the access points surround.
    pub area: Rect,
    pub label_budget: UncertaintyBudget,
}

impl Default for Scene {
    /// Three access points on three corners of a 4 m × 6 m area, with the
    /// baseline camera's label uncertainty.
    fn default() -> Self {
        let ap = |id: &str, x, y, tx, seed| AccessPoint {
            id: id.into(),
            position: GroundPoint::new(x, y),
            tx_power_dbm: tx,
            multipath_seed: seed,
        };
        Self {
            aps: vec![ap("AP1", 0.0, 0.0, -30.0, 101), ap("AP2", 4.0, 0.0, -28.0, 202), ap("AP3", 0.0, 6.0, -29.0, 303)],
            model: SignalModel::default(),
            area: Rect::new(0.0, 4.0, 0.0, 6.0),
            label_budget: UncertaintyBudget::from_components(0.0023, 0.050, 0.014, 0.082, 0.05),
        }
    }
}

/// An 883-sample walk over the whole default area with
/// receiver A.
pub fn base_recording(seed: u64) -> Result<SyntheticRecording, SynthError> {
    let scene = Scene::default();
    let spec = TrajectorySpec {
        region: scene.area,
        pattern: Pattern::LawnmowerYMajor,
        speed_mps: default_speed(),
        duration_s: 88.3,
        sample_rate_hz: default_rate(),
        lane_spacing_m: default_lane(),
    };
    generate_recording("base", &scene.aps, &scene.model, &spec, &ReceiverProfile::receiver_a(), &scene.label_budget, seed)
}

/// One recording session in a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionPlan {
    pub name: String,
    pub samples: usize,
    pub receiver: ReceiverProfile,
    pub pattern: Pattern,
    pub region: Rect,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub scene: Scene,
    pub sessions: Vec<SessionPlan>,
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_lane")]
    pub lane_spacing_m: f64,
}

impl DatasetSpec {
    /// Four sessions sized like the reference experiments: three with
    /// receiver A, the last with receiver B. Walks sweep the full y extent
    /// of the area but only its central x band.
    pub fn reference(seed: u64) -> Self {
        let scene = Scene::default();
        let region = Rect::new(1.0, 3.0, 0.0, 6.0);
        let session = |name: &str, samples, receiver: ReceiverProfile| SessionPlan {
            name: name.into(),
            samples,
            receiver,
            pattern: Pattern::LawnmowerYMajor,
            region,
            seed: 0,
        };
        let mut spec = Self {
            scene,
            sessions: vec![
                session("exp5", 883, ReceiverProfile::receiver_a()),
                session("exp6", 1865, ReceiverProfile::receiver_a()),
                session("exp7", 2317, ReceiverProfile::receiver_a()),
                session("exp8", 1092, ReceiverProfile::receiver_b()),
            ],
            speed_mps: 0.5,
            sample_rate_hz: 10.0,
            lane_spacing_m: 0.5,
        };
        spec.reseed(seed);
        spec
    }

    /// Derives every session seed from `seed` and the session's position.
    pub fn reseed(&mut self, seed: u64) {
        for (i, s) in self.sessions.iter_mut().enumerate() {
            s.seed = seed::derive(seed, "session", i as u64);
        }
    }

    pub fn trajectory_for(&self, s: &SessionPlan) -> TrajectorySpec {
        TrajectorySpec {
            region: s.region,
            pattern: s.pattern,
            speed_mps: self.speed_mps,
            duration_s: s.samples as f64 / self.sample_rate_hz,
            sample_rate_hz: self.sample_rate_hz,
            lane_spacing_m: self.lane_spacing_m,
        }
    }

    pub fn generate(&self) -> Result<Vec<SyntheticRecording>, SynthError> {
        self.sessions
            .iter()
            .map(|s| {
                generate_recording(
                    &s.name,
                    &self.scene.aps,
                    &self.scene.model,
                    &self.trajectory_for(s),
                    &s.receiver,
                    &self.scene.label_budget,
                    s.seed,
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ap0() -> AccessPoint {
        AccessPoint { id: "AP1".into(), position: GroundPoint::new(0.0, 0.0), tx_power_dbm: 0.0, multipath_seed: 7 }
    }

    #[test]
    fn log_distance_law() {
        let model = SignalModel::noiseless(2.0);
        let rx = ReceiverProfile::ideal("r");
        let mut rng = seed::rng(0, "t", 0);
        assert_eq!(rss_at(&ap0(), &model, &GroundPoint::new(1.0, 0.0), &rx, &mut rng), 0.0);
        let v = rss_at(&ap0(), &model, &GroundPoint::new(0.0, 10.0), &rx, &mut rng);
        assert!((v + 20.0).abs() < 1e-12);
        // Inside the reference distance the loss is clamped.
        assert_eq!(rss_at(&ap0(), &model, &GroundPoint::new(0.1, 0.0), &rx, &mut rng), 0.0);
    }

    #[test]
    fn field_is_frozen() {
        let model = SignalModel { noise_sigma_db: 0.0, ..SignalModel::default() };
        let rx = ReceiverProfile::ideal("r");
        let p = GroundPoint::new(1.3, 2.7);
        let mut rng = seed::rng(0, "t", 0);
        let a = rss_at(&ap0(), &model, &p, &rx, &mut rng);
        let _ = rss_at(&ap0(), &model, &GroundPoint::new(3.0, 1.0), &rx, &mut rng);
        assert_eq!(a, rss_at(&ap0(), &model, &p, &rx, &mut rng));
    }

    #[test]
    fn value_noise_unit_variance() {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let n = 200_000;
        let mut rng = seed::rng(1, "vn", 0);
        for _ in 0..n {
            let p = GroundPoint::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
            let v = value_noise(42, &p, 1.0);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn receiver_offsets_apply() {
        let model = SignalModel::noiseless(2.0);
        let mut rng = seed::rng(0, "t", 0);
        let rx = ReceiverProfile {
            id: "B".into(),
            gain_offset_db: -3.0,
            per_ap_offset_db: [("AP1".to_string(), 1.0)].into_iter().collect(),
            dropout_prob: 0.0,
        };
        let v = rss_at(&ap0(), &model, &GroundPoint::new(1.0, 0.0), &rx, &mut rng);
        assert_eq!(v, -2.0);
    }

    fn spec(pattern: Pattern, speed: f64, duration: f64) -> TrajectorySpec {
        TrajectorySpec {
            region: Rect::new(0.0, 4.0, 0.0, 6.0),
            pattern,
            speed_mps: speed,
            duration_s: duration,
            sample_rate_hz: 10.0,
            lane_spacing_m: 0.5,
        }
    }

    #[test]
    fn trajectory_sample_count() {
        assert_eq!(generate_trajectory(&spec(Pattern::LawnmowerYMajor, 0.5, 10.0), 1).unwrap().len(), 100);
    }

    #[test]
    fn zero_speed_is_stationary() {
        for pattern in [Pattern::LawnmowerYMajor, Pattern::RandomWaypoint] {
            let t = generate_trajectory(&spec(pattern, 0.0, 5.0), 3).unwrap();
            assert!(t.iter().all(|(_, p)| *p == t[0].1));
        }
    }

    #[test]
    fn lawnmower_y_covers_height_within_speed() {
        let s = spec(Pattern::LawnmowerYMajor, 0.5, 120.0);
        let t = generate_trajectory(&s, 11).unwrap();
        let (ymin, ymax) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, p)| (a.min(p.y), b.max(p.y)));
        assert!(ymax - ymin >= 0.95 * 6.0);
        for w in t.windows(2) {
            let v = w[0].1.distance(&w[1].1) / (w[1].0 - w[0].0);
            assert!(v <= 0.5 + 1e-9);
        }
        assert!(t.iter().all(|(_, p)| s.region.contains(p)));
    }

    #[test]
    fn random_waypoint_within_speed_and_region() {
        let s = spec(Pattern::RandomWaypoint, 0.4, 60.0);
        let t = generate_trajectory(&s, 2).unwrap();
        for w in t.windows(2) {
            assert!(w[0].1.distance(&w[1].1) <= 0.4 * 0.1 + 1e-9);
        }
        assert!(t.iter().all(|(_, p)| s.region.contains(p)));
    }

    #[test]
    fn recording_shape_and_determinism() {
        let scene = Scene::default();
        let mut s = spec(Pattern::LawnmowerYMajor, 0.5, 88.3);
        s.region = Rect::new(1.0, 3.0, 0.0, 6.0);
        let rx = ReceiverProfile::receiver_a();
        let a = generate_recording("exp5", &scene.aps, &scene.model, &s, &rx, &scene.label_budget, 9).unwrap();
        assert_eq!(a.recording.len(), 883);
        assert_eq!(a.recording.num_aps(), 3);
        a.recording.validate().unwrap();
        let b = generate_recording("exp5", &scene.aps, &scene.model, &s, &rx, &scene.label_budget, 9).unwrap();
        assert_eq!(a, b);
        let clean =
            generate_recording("exp5", &scene.aps, &scene.model, &s, &rx, &UncertaintyBudget::zero(), 9).unwrap();
        assert_eq!(clean.recording.positions(), clean.truth);
    }

    #[test]
    fn invalid_inputs() {
        let scene = Scene::default();
        let s = spec(Pattern::LawnmowerYMajor, 0.5, 1.0);
        let rx = ReceiverProfile::ideal("r");
        assert!(generate_recording("x", &[], &scene.model, &s, &rx, &UncertaintyBudget::zero(), 0).is_err());
        let bad_rx = ReceiverProfile { dropout_prob: 1.0, ..rx };
        assert!(generate_recording("x", &scene.aps, &scene.model, &s, &bad_rx, &UncertaintyBudget::zero(), 0).is_err());
        let loud = AccessPoint { tx_power_dbm: 40.0, ..ap0() };
        assert!(loud.validate().is_err());
    }
}

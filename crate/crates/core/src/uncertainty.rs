//! Label-uncertainty budget for vision-assisted calibration.
//!
//! Four independent spatial terms (pixel quantization, marker placement,
//! detector jitter, foot-point heuristic) combine in quadrature into the
//! spatial error, and the timing error from stream misalignment adds in
//! quadrature on top of that. The marker-placement term is the only one
//! that needs simulation: misplaced markers bias the calibration fit, and
//! that bias is measured by Monte-Carlo refits.
//!
//! All spatial terms are per-axis standard deviations in meters.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    fit_homography, ideal_homography, pixel_pitch, pixel_to_world, CameraSetup, GeometryError, GroundPoint,
    PixelPoint,
};
use crate::seed;

/// Largest tolerated fraction of discarded (degenerate) Monte-Carlo trials.
pub const MAX_DISCARD_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{discarded} of {trials} Monte-Carlo trials were degenerate (limit 1%)")]
    TooManyDiscards { discarded: usize, trials: usize },
}

/// Where the marker-placement error is probed on the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProbeLayout {
    /// The image center only.
    #[default]
    ImageCenter,
    /// A uniform `n × n` grid spanning the full image, edges included.
    Grid { n: usize },
}

impl ProbeLayout {
    pub fn pixels(&self, resolution_px: u32) -> Vec<PixelPoint> {
        let r = f64::from(resolution_px);
        match *self {
            ProbeLayout::ImageCenter => vec![PixelPoint::new(r / 2.0, r / 2.0)],
            ProbeLayout::Grid { n } => {
                let n = n.max(1);
                let step = if n > 1 { r / (n - 1) as f64 } else { 0.0 };
                let offset = if n > 1 { 0.0 } else { r / 2.0 };
                (0..n)
                    .flat_map(|i| (0..n).map(move |j| PixelPoint::new(offset + i as f64 * step, offset + j as f64 * step)))
                    .collect()
            }
        }
    }
}

fn default_trials() -> usize {
    10_000
}

fn default_reference_fov() -> Option<f64> {
    Some(5.0)
}

/// Inputs to the spatial part of the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialErrorConfig {
    pub setup: CameraSetup,
    /// 2-D standard deviation of marker misplacement.
    pub tag_sigma_m: f64,
    pub det_jitter_px: f64,
    pub foot_sigma_m: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub probe: ProbeLayout,
    /// Footprint at which `tag_sigma_m` is specified. Placement error grows in
    /// proportion to the footprint, since markers are laid out by measuring
    /// across it. `None` applies `tag_sigma_m` unscaled at every footprint.
    #[serde(default = "default_reference_fov")]
    pub tag_reference_fov_m: Option<f64>,
}

impl SpatialErrorConfig {
    /// Baseline installation: 3 m height, 5 m footprint, 10 cm tags, 3 px jitter.
    pub fn base() -> Self {
        Self {
            setup: CameraSetup::base(),
            tag_sigma_m: 0.10,
            det_jitter_px: 3.0,
            foot_sigma_m: 0.082,
            trials: default_trials(),
            seed: 0,
            probe: ProbeLayout::default(),
            tag_reference_fov_m: default_reference_fov(),
        }
    }

    pub fn with_fov(mut self, fov_ground_m: f64) -> Self {
        let setup = &self.setup;
        self.setup = CameraSetup::with_corner_markers(setup.height_m, fov_ground_m, setup.resolution_px)
            .expect("scaled corner layout stays valid");
        self
    }

    pub fn validate(&self) -> Result<(), UncertaintyError> {
        self.setup.validate()?;
        for (name, v) in [
            ("tag_sigma_m", self.tag_sigma_m),
            ("det_jitter_px", self.det_jitter_px),
            ("foot_sigma_m", self.foot_sigma_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(UncertaintyError::Invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.trials == 0 {
            return Err(UncertaintyError::Invalid("trials must be >= 1".into()));
        }
        if let ProbeLayout::Grid { n: 0 } = self.probe {
            return Err(UncertaintyError::Invalid("probe grid must be at least 1x1".into()));
        }
        if let Some(r) = self.tag_reference_fov_m {
            if !(r > 0.0 && r.is_finite()) {
                return Err(UncertaintyError::Invalid(format!("tag_reference_fov_m must be > 0, got {r}")));
            }
        }
        Ok(())
    }

    /// Marker misplacement actually applied at this footprint.
    pub fn effective_tag_sigma_m(&self) -> f64 {
        match self.tag_reference_fov_m {
            Some(reference) => self.tag_sigma_m * self.setup.fov_ground_m / reference,
            None => self.tag_sigma_m,
        }
    }
}

/// Inputs to the timing error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    pub f_cam_hz: f64,
    pub f_rss_hz: f64,
    pub dt_align_s: f64,
    pub speed_mps: f64,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self { f_cam_hz: 30.0, f_rss_hz: 10.0, dt_align_s: 0.01, speed_mps: 0.5 }
    }
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<(), UncertaintyError> {
        if !(self.f_cam_hz > 0.0 && self.f_rss_hz > 0.0) {
            return Err(UncertaintyError::Invalid("sampling rates must be > 0".into()));
        }
        if !(self.dt_align_s >= 0.0) {
            return Err(UncertaintyError::Invalid("dt_align_s must be >= 0".into()));
        }
        // Zero speed is allowed: a static collector has no timing error.
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return Err(UncertaintyError::Invalid("speed_mps must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-term label uncertainty, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UncertaintyBudget {
    pub sigma_px_m: f64,
    pub sigma_tag_m: f64,
    pub sigma_det_m: f64,
    pub sigma_foot_m: f64,
    pub sigma_t_m: f64,
    pub eps_temp_m: f64,
    pub sigma_label_m: f64,
}

impl UncertaintyBudget {
    /// Builds a budget from its independent terms.
    pub fn from_components(px: f64, tag: f64, det: f64, foot: f64, eps_temp: f64) -> Self {
        let sigma_t = root_sum_square(&[px, tag, det, foot]);
        Self {
            sigma_px_m: px,
            sigma_tag_m: tag,
            sigma_det_m: det,
            sigma_foot_m: foot,
            sigma_t_m: sigma_t,
            eps_temp_m: eps_temp,
            sigma_label_m: root_sum_square(&[sigma_t, eps_temp]),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn with_temporal(self, eps_temp_m: f64) -> Self {
        Self { eps_temp_m, sigma_label_m: label_uncertainty(&self, eps_temp_m), ..self }
    }
}

fn root_sum_square(terms: &[f64]) -> f64 {
    terms.iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// Pixel quantization: half the pixel pitch.
pub fn sigma_px(setup: &CameraSetup) -> f64 {
    pixel_pitch(setup) / 2.0
}

/// Detector/tracker jitter converted to ground meters.
pub fn sigma_det(cfg: &SpatialErrorConfig) -> f64 {
    cfg.det_jitter_px * pixel_pitch(&cfg.setup)
}

/// Monte-Carlo estimate of the marker-placement term.
///
/// Each trial displaces every marker by an isotropic Gaussian, refits the
/// calibration against the unperturbed pixel observations, and maps the
/// probe pixels back to the floor. The result is the per-axis RMS of the
/// displacement from ground truth. Trial `i` draws from the stream
/// `(seed, "sigma_tag", i)`, so the result does not depend on thread count.
pub fn sigma_tag_mc(cfg: &SpatialErrorConfig) -> Result<f64, UncertaintyError> {
    cfg.validate()?;
    let sigma = cfg.effective_tag_sigma_m();
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let axis_sigma = sigma / std::f64::consts::SQRT_2;
    let setup = &cfg.setup;
    let ideal = ideal_homography(setup);
    let pixels = setup.marker_pixels();
    let probes = cfg.probe.pixels(setup.resolution_px);
    let truth: Vec<GroundPoint> = probes
        .iter()
        .map(|p| pixel_to_world(&ideal, p))
        .collect::<Result<_, _>>()?;

    let per_trial: Vec<Option<f64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = seed::rng(cfg.seed, "sigma_tag", trial as u64);
            let moved: Vec<GroundPoint> = setup
                .marker_world_positions
                .iter()
                .map(|g| {
                    let dx: f64 = rng.sample(StandardNormal);
                    let dy: f64 = rng.sample(StandardNormal);
                    GroundPoint::new(g.x + axis_sigma * dx, g.y + axis_sigma * dy)
                })
                .collect();
            let h = fit_homography(&moved, &pixels).ok()?;
            probes
                .iter()
                .zip(&truth)
                .map(|(p, t)| pixel_to_world(&h, p).ok().map(|g| (g.x - t.x).powi(2) + (g.y - t.y).powi(2)))
                .sum::<Option<f64>>()
        })
        .collect();

    let discarded = per_trial.iter().filter(|t| t.is_none()).count();
    if discarded > 0 {
        log::warn!("sigma_tag: discarded {discarded} degenerate trials of {}", cfg.trials);
    }
    if discarded as f64 > MAX_DISCARD_FRACTION * cfg.trials as f64 || discarded == cfg.trials {
        return Err(UncertaintyError::TooManyDiscards { discarded, trials: cfg.trials });
    }
    let kept = cfg.trials - discarded;
    let total: f64 = per_trial.iter().flatten().sum();
    Ok((total / (2.0 * (kept * probes.len()) as f64)).sqrt())
}

/// The four spatial terms and their quadrature sum; temporal fields are zero.
pub fn spatial_budget(cfg: &SpatialErrorConfig) -> Result<UncertaintyBudget, UncertaintyError> {
    cfg.validate()?;
    Ok(UncertaintyBudget::from_components(
        sigma_px(&cfg.setup),
        sigma_tag_mc(cfg)?,
        sigma_det(cfg),
        cfg.foot_sigma_m,
        0.0,
    ))
}

/// Worst-case stream misalignment and the position error it induces.
pub fn temporal_error(cfg: &TemporalConfig) -> Result<(f64, f64), UncertaintyError> {
    cfg.validate()?;
    let dt = (1.0 / cfg.f_cam_hz).max(1.0 / cfg.f_rss_hz).max(cfg.dt_align_s);
    Ok((dt, cfg.speed_mps * dt))
}

/// Combined 1-sigma label uncertainty.
pub fn label_uncertainty(spatial: &UncertaintyBudget, eps_temp_m: f64) -> f64 {
    root_sum_square(&[spatial.sigma_t_m, eps_temp_m])
}

/// Adds isotropic Gaussian label noise whose 2-D standard deviation is
/// `budget.sigma_label_m`.
pub fn corrupt_labels(truth: &[GroundPoint], budget: &UncertaintyBudget, seed: u64) -> Vec<GroundPoint> {
    let sigma = budget.sigma_label_m;
    if sigma == 0.0 {
        return truth.to_vec();
    }
    let axis_sigma = sigma / std::f64::consts::SQRT_2;
    let mut rng = seed::rng(seed, "label_noise", 0);
    truth
        .iter()
        .map(|g| {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            GroundPoint::new(g.x + axis_sigma * dx, g.y + axis_sigma * dy)
        })
        .collect()
}

/// Named configuration for one row of the spatial-error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub config: SpatialErrorConfig,
}

/// Baseline plus the two enlarged-footprint installations.
pub fn reference_scenarios(trials: usize, seed: u64) -> Vec<Scenario> {
    let base = SpatialErrorConfig { trials, seed, ..SpatialErrorConfig::base() };
    vec![
        Scenario { name: "Base (5 m FoV, 10 cm tags)".into(), config: base.clone() },
        Scenario { name: "Large FoV (25 m, 10 cm tags)".into(), config: base.clone().with_fov(25.0) },
        Scenario {
            name: "Large FoV (25 m, 30 cm tags)".into(),
            config: SpatialErrorConfig { tag_sigma_m: 0.30, ..base.with_fov(25.0) },
        },
    ]
}

/// Aligned text table, one row per scenario.
pub fn render_table(rows: &[(String, UncertaintyBudget)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Scenario".len());
    let mut out = format!(
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}\n",
        "Scenario", "px [m]", "tag [m]", "det [m]", "foot [m]", "t [m]", "temp [m]", "label [m]"
    );
    for (name, b) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}\n",
            name, b.sigma_px_m, b.sigma_tag_m, b.sigma_det_m, b.sigma_foot_m, b.sigma_t_m, b.eps_temp_m, b.sigma_label_m
        ));
    }
    out
}

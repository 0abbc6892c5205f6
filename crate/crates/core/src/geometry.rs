//! Planar overhead-camera model.
//!
//! The camera looks straight down at the floor and images a square ground
//! footprint onto a square sensor. A [`Homography`] maps homogeneous floor
//! coordinates (meters) to homogeneous pixel coordinates; the calibration
//! fit recovers it from marker correspondences with the normalized direct
//! linear transform.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest-to-largest singular value ratio below which a DLT design matrix
/// is treated as rank deficient.
pub const DEGENERACY_RATIO: f64 = 1e-10;

/// Floor on `|det(H)| / ||H||_F^3`.
pub const DETERMINANT_FLOOR: f64 = 1e-12;

/// Floor on the homogeneous `w` component when applying a homography.
pub const W_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid camera setup: {0}")]
    InvalidSetup(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("numerical instability: homogeneous w = {w:e}")]
    NumericalInstability { w: f64 },
    #[error("need at least 4 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("correspondence count mismatch: {world} world points vs {pixel} pixel points")]
    LengthMismatch { world: usize, pixel: usize },
}

/// A point on the floor plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A point on the image plane, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Overhead camera geometry and calibration marker layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSetup {
    pub height_m: f64,
    /// Side of the square floor region imaged by the sensor.
    pub fov_ground_m: f64,
    /// Pixels along each image axis.
    pub resolution_px: u32,
    pub marker_world_positions: Vec<GroundPoint>,
}

impl CameraSetup {
    pub fn new(
        height_m: f64,
        fov_ground_m: f64,
        resolution_px: u32,
        marker_world_positions: Vec<GroundPoint>,
    ) -> Result<Self, GeometryError> {
        let setup = Self { height_m, fov_ground_m, resolution_px, marker_world_positions };
        setup.validate()?;
        Ok(setup)
    }

    /// Camera with one marker at each corner of the ground footprint.
    pub fn with_corner_markers(
        height_m: f64,
        fov_ground_m: f64,
        resolution_px: u32,
    ) -> Result<Self, GeometryError> {
        let f = fov_ground_m;
        Self::new(
            height_m,
            fov_ground_m,
            resolution_px,
            vec![
                GroundPoint::new(0.0, 0.0),
                GroundPoint::new(f, 0.0),
                GroundPoint::new(f, f),
                GroundPoint::new(0.0, f),
            ],
        )
    }

    /// The baseline installation: 3 m mounting height, 5 m footprint, 1080 px.
    pub fn base() -> Self {
        Self::with_corner_markers(3.0, 5.0, 1080).expect("base setup is valid")
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.height_m > 0.0 && self.height_m.is_finite()) {
            return Err(GeometryError::InvalidSetup(format!("height_m must be > 0, got {}", self.height_m)));
        }
        if !(self.fov_ground_m > 0.0 && self.fov_ground_m.is_finite()) {
            return Err(GeometryError::InvalidSetup(format!(
                "fov_ground_m must be > 0, got {}",
                self.fov_ground_m
            )));
        }
        if self.resolution_px < 16 {
            return Err(GeometryError::InvalidSetup(format!(
                "resolution_px must be >= 16, got {}",
                self.resolution_px
            )));
        }
        let markers = &self.marker_world_positions;
        if markers.len() < 4 {
            return Err(GeometryError::InvalidSetup(format!("need >= 4 markers, got {}", markers.len())));
        }
        if let Some(p) = markers.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::InvalidSetup(format!("non-finite marker position {p:?}")));
        }
        let scale = self.fov_ground_m * self.fov_ground_m;
        for i in 0..markers.len() {
            for j in i + 1..markers.len() {
                for k in j + 1..markers.len() {
                    let (a, b, c) = (markers[i], markers[j], markers[k]);
                    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                    if cross.abs() <= 1e-9 * scale {
                        return Err(GeometryError::InvalidSetup(format!(
                            "markers {i}, {j}, {k} are collinear"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Ideal pixel observations of the nominal marker positions.
    pub fn marker_pixels(&self) -> Vec<PixelPoint> {
        let h = ideal_homography(self);
        self.marker_world_positions
            .iter()
            .map(|g| world_to_pixel(&h, g).expect("ideal homography is affine"))
            .collect()
    }
}

/// Projective map from floor coordinates to pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    forward: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl Homography {
    /// Wraps a world-to-pixel matrix, normalizing the bottom-right entry to 1
    /// when it is nonzero.
    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self, GeometryError> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::DegenerateConfiguration("non-finite homography".into()));
        }
        let norm = matrix.norm();
        if norm == 0.0 {
            return Err(GeometryError::DegenerateConfiguration("zero homography".into()));
        }
        let mut m = matrix;
        if m[(2, 2)].abs() > f64::EPSILON * norm {
            m /= m[(2, 2)];
        }
        let n = m.norm();
        if (m.determinant() / (n * n * n)).abs() <= DETERMINANT_FLOOR {
            return Err(GeometryError::DegenerateConfiguration("singular homography".into()));
        }
        let inverse = m
            .try_inverse()
            .ok_or_else(|| GeometryError::DegenerateConfiguration("singular homography".into()))?;
        Ok(Self { forward: m, inverse })
    }

    pub fn identity() -> Self {
        Self { forward: Matrix3::identity(), inverse: Matrix3::identity() }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.forward
    }

    pub fn inverse_matrix(&self) -> &Matrix3<f64> {
        &self.inverse
    }
}

fn apply(m: &Matrix3<f64>, a: f64, b: f64) -> Result<(f64, f64), GeometryError> {
    let p = m * Vector3::new(a, b, 1.0);
    if p.z.abs() < W_EPSILON || !p.z.is_finite() {
        return Err(GeometryError::NumericalInstability { w: p.z });
    }
    Ok((p.x / p.z, p.y / p.z))
}

pub fn world_to_pixel(h: &Homography, g: &GroundPoint) -> Result<PixelPoint, GeometryError> {
    let (u, v) = apply(&h.forward, g.x, g.y)?;
    Ok(PixelPoint::new(u, v))
}

pub fn pixel_to_world(h: &Homography, p: &PixelPoint) -> Result<GroundPoint, GeometryError> {
    let (x, y) = apply(&h.inverse, p.u, p.v)?;
    Ok(GroundPoint::new(x, y))
}

/// Ground distance subtended by one pixel.
pub fn pixel_pitch(setup: &CameraSetup) -> f64 {
    setup.fov_ground_m / f64::from(setup.resolution_px)
}

/// Error-free mapping of the footprint square onto the image square.
pub fn ideal_homography(setup: &CameraSetup) -> Homography {
    let s = 1.0 / pixel_pitch(setup);
    let m = Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0);
    Homography { forward: m, inverse: Matrix3::new(1.0 / s, 0.0, 0.0, 0.0, 1.0 / s, 0.0, 0.0, 0.0, 1.0) }
}

/// Similarity that moves the centroid to the origin and sets the mean
/// distance from it to sqrt(2).
fn normalizing_transform(points: &[(f64, f64)]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let (cx, cy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.0, sy + p.1));
    let (cx, cy) = (cx / n, cy / n);
    let mean_dist = points.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Least-squares world-to-pixel homography from point correspondences.
pub fn fit_homography(
    world_pts: &[GroundPoint],
    pixel_pts: &[PixelPoint],
) -> Result<Homography, GeometryError> {
    if world_pts.len() != pixel_pts.len() {
        return Err(GeometryError::LengthMismatch { world: world_pts.len(), pixel: pixel_pts.len() });
    }
    let n = world_pts.len();
    if n < 4 {
        return Err(GeometryError::TooFewCorrespondences(n));
    }
    let world: Vec<(f64, f64)> = world_pts.iter().map(|g| (g.x, g.y)).collect();
    let pixel: Vec<(f64, f64)> = pixel_pts.iter().map(|p| (p.u, p.v)).collect();
    if world.iter().chain(pixel.iter()).any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(GeometryError::DegenerateConfiguration("non-finite correspondence".into()));
    }
    let tw = normalizing_transform(&world);
    let tp = normalizing_transform(&pixel);

    // Zero rows pad the system to at least 9 rows so the thin SVD exposes
    // the full right nullspace.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (w, p)) in world.iter().zip(&pixel).enumerate() {
        let wn = tw * Vector3::new(w.0, w.1, 1.0);
        let pn = tp * Vector3::new(p.0, p.1, 1.0);
        let (x, y) = (wn.x, wn.y);
        let (u, v) = (pn.x, pn.y);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * i, c)] = r0[c];
            a[(2 * i + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[7]];
    if largest <= 0.0 || second_smallest / largest < DEGENERACY_RATIO {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "design matrix rank deficient (singular value ratio {:e})",
            if largest > 0.0 { second_smallest / largest } else { 0.0 }
        )));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tp_inv = tp
        .try_inverse()
        .ok_or_else(|| GeometryError::DegenerateConfiguration("pixel points coincide".into()))?;
    Homography::from_matrix(tp_inv * hn * tw)
}

/// Largest pixel distance between `h(world_i)` and `pixel_i`.
pub fn max_reprojection_error(h: &Homography, world_pts: &[GroundPoint], pixel_pts: &[PixelPoint]) -> f64 {
    world_pts
        .iter()
        .zip(pixel_pts)
        .map(|(g, p)| match world_to_pixel(h, g) {
            Ok(q) => (q.u - p.u).hypot(q.v - p.v),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

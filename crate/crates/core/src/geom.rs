//! Projection of a circular marker into the image and range from its
//! apparent diameter.
//!
//! Two projection routes are provided. [`project_circle_orthogonal`] is the
//! cheap approximation used throughout the pipeline: the ellipse keeps the
//! semi-major axis of the circle seen head-on at the same distance, so `a`
//! depends only on range. [`project_circle_perspective`] samples the 3D
//! circle, projects every sample through the pinhole model and fits a conic;
//! it is the reference the approximation is checked against.

use nalgebra::{Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::coords::CartesianCoord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("circle is not in front of the camera (z = {0})")]
    PoseBehindCamera(f64),
    #[error("fitted conic is not an ellipse")]
    DegenerateConic,
    #[error("observed diameter must be positive, got {0}")]
    NonPositiveDiameter(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Image ellipse: centroid `(u, v)`, semi-axes `a >= b >= 0` in pixels and
/// the orientation `phi` of the major axis, measured from the `+u` axis
/// towards `+v`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EllipseParams {
    pub u: f64,
    pub v: f64,
    pub a: f64,
    pub b: f64,
    pub phi: f64,
}

impl EllipseParams {
    /// Builds an ellipse, swapping the axes if needed so that `a >= b`.
    pub fn new(u: f64, v: f64, a: f64, b: f64, phi: f64) -> Self {
        let (a, b, phi) = if b > a {
            (b, a, phi + std::f64::consts::FRAC_PI_2)
        } else {
            (a, b, phi)
        };
        Self {
            u,
            v,
            a,
            b,
            phi: wrap_pi(phi),
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.a
    }

    pub fn is_valid(&self) -> bool {
        [self.u, self.v, self.a, self.b, self.phi]
            .iter()
            .all(|x| x.is_finite())
            && self.a >= self.b
            && self.b >= 0.0
            && self.phi.abs() <= std::f64::consts::PI
    }

    /// Point on the ellipse at parametric angle `t`.
    pub fn point_at(&self, t: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        let (x, y) = (self.a * t.cos(), self.b * t.sin());
        (self.u + x * c - y * s, self.v + x * s + y * c)
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        let ex = ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt();
        let ey = ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt();
        (ex, ey)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_pi(angle: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if angle > -PI && angle <= PI {
        return angle;
    }
    let r = (angle + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Orientation of an undirected axis, folded into `(-pi/2, pi/2]`.
pub fn fold_axis_angle(angle: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut a = wrap_pi(angle);
    if a > FRAC_PI_2 {
        a -= PI;
    } else if a <= -FRAC_PI_2 {
        a += PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerSpec {
    pub diameter_m: f64,
}

impl MarkerSpec {
    pub const DEFAULT_DIAMETER_M: f64 = 0.30;

    pub fn new(diameter_m: f64) -> Result<Self, GeomError> {
        if !(diameter_m > 0.0 && diameter_m.is_finite()) {
            return Err(GeomError::InvalidArgument(format!(
                "marker diameter must be positive, got {diameter_m}"
            )));
        }
        Ok(Self { diameter_m })
    }

    pub fn radius_m(&self) -> f64 {
        0.5 * self.diameter_m
    }
}

impl Default for MarkerSpec {
    fn default() -> Self {
        Self {
            diameter_m: Self::DEFAULT_DIAMETER_M,
        }
    }
}

/// Ground-truth pose of the marker circle in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirclePose3D {
    pub center: CartesianCoord,
    pub normal: Vector3<f64>,
    pub radius_m: f64,
}

impl CirclePose3D {
    /// Normalises `normal`; fails on a zero normal or a non-positive radius.
    pub fn new(center: CartesianCoord, normal: Vector3<f64>, radius_m: f64) -> Result<Self, GeomError> {
        let n = normal.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(GeomError::InvalidArgument("circle normal must be non-zero".into()));
        }
        if !(radius_m > 0.0) {
            return Err(GeomError::InvalidArgument(format!(
                "circle radius must be positive, got {radius_m}"
            )));
        }
        Ok(Self {
            center,
            normal: normal / n,
            radius_m,
        })
    }
}

/// Orthogonal approximation of the projected circle.
///
/// The centroid is the pinhole projection of the centre, `a` is the radius
/// seen head-on at the centre's distance, `b = a |cos|` of the angle between
/// the normal and the line of sight, and `phi` is the image direction of the
/// diameter perpendicular to both.
pub fn project_circle_orthogonal(
    pose: &CirclePose3D,
    camera: &CameraIntrinsics,
) -> Result<EllipseParams, GeomError> {
    let c = pose.center.to_vector();
    if c.z <= 0.0 {
        return Err(GeomError::PoseBehindCamera(c.z));
    }
    let rho = c.norm();
    let (u, v) = camera
        .project(&c)
        .ok_or(GeomError::PoseBehindCamera(c.z))?;
    let a = pose.radius_m * camera.focal_x() / rho;
    let los = c / rho;
    let cos = pose.normal.dot(&los).abs().min(1.0);
    let major = pose.normal.cross(&los);
    let phi = if major.norm() < 1e-12 {
        0.0
    } else {
        let du = camera.focal_x() * (major.y * c.z - c.y * major.z);
        let dv = camera.focal_y() * (major.x * c.z - c.x * major.z);
        fold_axis_angle(dv.atan2(du))
    };
    Ok(EllipseParams {
        u,
        v,
        a,
        b: a * cos,
        phi,
    })
}

/// Number of circle samples used by the perspective projection.
pub const PERSPECTIVE_SAMPLES: usize = 128;

/// Exact perspective image of the circle, recovered by a conic fit to
/// projected samples of the 3D circle.
pub fn project_circle_perspective(
    pose: &CirclePose3D,
    camera: &CameraIntrinsics,
) -> Result<EllipseParams, GeomError> {
    let c = pose.center.to_vector();
    if c.z <= 0.0 {
        return Err(GeomError::PoseBehindCamera(c.z));
    }
    let n = pose.normal;
    let helper = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    let mut pts = Vec::with_capacity(PERSPECTIVE_SAMPLES);
    for k in 0..PERSPECTIVE_SAMPLES {
        let t = std::f64::consts::TAU * k as f64 / PERSPECTIVE_SAMPLES as f64;
        let p = c + pose.radius_m * (t.cos() * e1 + t.sin() * e2);
        let uv = camera.project(&p).ok_or(GeomError::PoseBehindCamera(p.z))?;
        pts.push(uv);
    }
    fit_ellipse(&pts)
}

/// General conic `A x^2 + B xy + C y^2 + D x + E y + F = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conic {
    pub coeffs: [f64; 6],
}

impl Conic {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let [a, b, c, d, e, f] = self.coeffs;
        a * x * x + b * x * y + c * y * y + d * x + e * y + f
    }

    pub fn to_ellipse(&self) -> Result<EllipseParams, GeomError> {
        let [mut a, mut b, mut c, mut d, mut e, mut f] = self.coeffs;
        let det = 4.0 * a * c - b * b;
        if !(det > 0.0) {
            return Err(GeomError::DegenerateConic);
        }
        if a + c < 0.0 {
            (a, b, c, d, e, f) = (-a, -b, -c, -d, -e, -f);
        }
        let x0 = (b * e - 2.0 * c * d) / det;
        let y0 = (b * d - 2.0 * a * e) / det;
        let f0 = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e * y0 + f;
        if !(f0 < 0.0) {
            // imaginary or point ellipse
            return Err(GeomError::DegenerateConic);
        }
        let mean = 0.5 * (a + c);
        let root = (0.25 * (a - c).powi(2) + 0.25 * b * b).sqrt();
        let (l_small, l_large) = (mean - root, mean + root);
        if !(l_small > 0.0) {
            return Err(GeomError::DegenerateConic);
        }
        let semi_major = (-f0 / l_small).sqrt();
        let semi_minor = (-f0 / l_large).sqrt();
        let phi = fold_axis_angle(0.5 * b.atan2(a - c) + std::f64::consts::FRAC_PI_2);
        Ok(EllipseParams {
            u: x0,
            v: y0,
            a: semi_major,
            b: semi_minor,
            phi,
        })
    }
}

/// Algebraic least-squares conic through `points` (at least five).
///
/// Points are centred and scaled before the fit; the conic returned is in
/// the original pixel coordinates.
pub fn fit_conic(points: &[(f64, f64)]) -> Result<Conic, GeomError> {
    if points.len() < 5 {
        return Err(GeomError::InvalidArgument(format!(
            "need at least 5 points for a conic fit, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let rms = (points
        .iter()
        .map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(rms > 0.0) {
        return Err(GeomError::DegenerateConic);
    }
    let s = std::f64::consts::SQRT_2 / rms;
    let mut scatter = Matrix6::<f64>::zeros();
    for &(px, py) in points {
        let (x, y) = ((px - mx) * s, (py - my) * s);
        let row = Vector6::new(x * x, x * y, y * y, x, y, 1.0);
        scatter += row * row.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("six eigenvalues");
    let q = eig.eigenvectors.column(imin);
    // substitute x' = s (x - mx), y' = s (y - my)
    let (a, b, c, d, e, f) = (q[0], q[1], q[2], q[3], q[4], q[5]);
    let (s2, mx2, my2) = (s * s, mx * mx, my * my);
    let coeffs = [
        a * s2,
        b * s2,
        c * s2,
        -2.0 * a * s2 * mx - b * s2 * my + d * s,
        -2.0 * c * s2 * my - b * s2 * mx + e * s,
        a * s2 * mx2 + b * s2 * mx * my + c * s2 * my2 - d * s * mx - e * s * my + f,
    ];
    Ok(Conic { coeffs })
}

pub fn fit_ellipse(points: &[(f64, f64)]) -> Result<EllipseParams, GeomError> {
    fit_conic(points)?.to_ellipse()
}

/// Range to the marker from its observed diameter:
/// `rho = D h / (2 d_o) * cot(HFOV / 2)`.
pub fn estimate_range(
    marker: &MarkerSpec,
    d_obs_px: f64,
    h_px: u32,
    hfov_rad: f64,
) -> Result<f64, GeomError> {
    if !(d_obs_px > 0.0) {
        return Err(GeomError::NonPositiveDiameter(d_obs_px));
    }
    if !(hfov_rad > 0.0 && hfov_rad < std::f64::consts::PI) {
        return Err(GeomError::InvalidArgument(format!(
            "HFOV must be in (0, pi), got {hfov_rad}"
        )));
    }
    if h_px == 0 {
        return Err(GeomError::InvalidArgument("horizontal resolution is zero".into()));
    }
    Ok(marker.diameter_m * h_px as f64 / (2.0 * d_obs_px) / (0.5 * hfov_rad).tan())
}

/// Whether an ellipse satisfies the small-and-central assumption under which
/// the orthogonal approximation holds: `a` below 5% of the frame width and the
/// centroid inside the central 10% of the frame.
pub fn is_small_and_central(e: &EllipseParams, camera: &CameraIntrinsics) -> bool {
    let (w, h) = (camera.h_px as f64, camera.v_px as f64);
    let (cx, cy) = camera.principal_point();
    e.a < 0.05 * w && (e.u - cx).abs() <= 0.05 * w && (e.v - cy).abs() <= 0.05 * h
}

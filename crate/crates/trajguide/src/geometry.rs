//! Coordinate frames, pinhole projection into normalized image space, and
//! distance normalization.
//!
//! Conventions used throughout the crate:
//! - World frame is z-up; yaw is measured counter-clockwise from +x and kept
//!   in `(-PI, PI]`.
//! - Camera frame is (forward, right, down): `forward` along the heading,
//!   `right` is the heading rotated -90 degrees about the vertical axis,
//!   `down` points from the camera toward the ground.
//! - Image coordinates `(u, v)` are normalized to `[-1, 1]`, `u` rightward
//!   positive and `v` downward positive, origin at the image center.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Points closer than this to the camera along the forward axis are treated
/// as out-of-frustum. Also the floor for distance-normalization constants.
pub const EPS_NEAR: f64 = 0.05;

/// Slack on the frustum boundary test. Points mathematically on the border
/// (|u| = 1) must count as inside, but the division by tan(fov/2) can land
/// one ulp above 1; accepted coordinates are clamped back into [-1, 1].
pub const FRUSTUM_BOUNDARY_EPS: f64 = 1e-9;

/// Wraps an angle into `(-PI, PI]`.
///
/// The interval is open at `-PI`: `wrap_angle(-PI)` returns `PI`.
/// Panics on non-finite input.
pub fn wrap_angle(theta: f64) -> f64 {
    assert!(theta.is_finite(), "wrap_angle: non-finite angle {theta}");
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Planar position, height above ground, and heading in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Height above ground, meters. Never negative.
    pub z: f64,
    /// Heading, radians in `(-PI, PI]`.
    pub yaw: f64,
}

impl Pose {
    /// Creates a pose, wrapping `yaw` into `(-PI, PI]`.
    ///
    /// Panics if `z < 0` or any field is non-finite.
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        assert!(x.is_finite() && y.is_finite() && z.is_finite(), "Pose: non-finite field");
        assert!(z >= 0.0, "Pose: negative height {z}");
        Self { x, y, z, yaw: wrap_angle(yaw) }
    }

    /// Position as a 3D world point.
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Planar position.
    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Unit heading vector in the ground plane.
    pub fn heading(&self) -> [f64; 2] {
        [self.yaw.cos(), self.yaw.sin()]
    }

    /// Planar Euclidean distance to a point.
    pub fn distance_xy(&self, p: [f64; 2]) -> f64 {
        ((self.x - p[0]).powi(2) + (self.y - p[1]).powi(2)).sqrt()
    }

    /// Full 3D Euclidean distance to a point.
    pub fn distance_to(&self, p: [f64; 3]) -> f64 {
        ((self.x - p[0]).powi(2) + (self.y - p[1]).powi(2) + (self.z - p[2]).powi(2)).sqrt()
    }
}

/// Pinhole camera intrinsics plus the mounting height used when the camera
/// is attached to a ground agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Horizontal field of view, radians, in `(0, PI)`.
    pub fov_h: f64,
    /// Width/height ratio. The vertical half-angle satisfies
    /// `tan(fov_v/2) = tan(fov_h/2) / aspect`.
    pub aspect: f64,
    /// Camera height above ground when mounted on a ground agent, meters.
    pub mount_height: f64,
}

impl CameraModel {
    /// Creates a camera model, panicking on invalid parameters.
    pub fn new(fov_h: f64, aspect: f64, mount_height: f64) -> Self {
        assert!(fov_h > 0.0 && fov_h < PI, "CameraModel: fov_h {fov_h} outside (0, PI)");
        assert!(aspect > 0.0, "CameraModel: aspect {aspect} must be positive");
        assert!(mount_height >= 0.0, "CameraModel: negative mount height");
        Self { fov_h, aspect, mount_height }
    }

    /// Tangent of the horizontal half-angle.
    pub fn tan_half_h(&self) -> f64 {
        (self.fov_h / 2.0).tan()
    }

    /// Tangent of the vertical half-angle.
    pub fn tan_half_v(&self) -> f64 {
        self.tan_half_h() / self.aspect
    }
}

impl Default for CameraModel {
    /// 90 degree horizontal FOV, 4:3 aspect, 1 m mount height.
    fn default() -> Self {
        Self::new(PI / 2.0, 4.0 / 3.0, 1.0)
    }
}

/// A point expressed in a camera frame as (forward, right, down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrameVec {
    pub forward: f64,
    pub right: f64,
    pub down: f64,
}

/// A successfully projected point in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    /// Rightward positive, in `[-1, 1]`.
    pub u: f64,
    /// Downward positive, in `[-1, 1]`.
    pub v: f64,
    /// Forward distance along the camera axis, meters. Positive.
    pub depth: f64,
}

/// Result of projecting a world point: either inside the frustum or a marker
/// carrying the camera-frame vector for border clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Inside(ImagePoint),
    OutOfFrustum(CameraFrameVec),
}

impl Projection {
    pub fn image_point(&self) -> Option<ImagePoint> {
        match self {
            Projection::Inside(p) => Some(*p),
            Projection::OutOfFrustum(_) => None,
        }
    }

    pub fn is_inside(&self) -> bool {
        matches!(self, Projection::Inside(_))
    }
}

/// Expresses a world point in the observer's camera frame.
pub fn to_camera_frame(observer: &Pose, point: [f64; 3]) -> CameraFrameVec {
    let dx = point[0] - observer.x;
    let dy = point[1] - observer.y;
    let (sin_yaw, cos_yaw) = observer.yaw.sin_cos();
    CameraFrameVec {
        forward: dx * cos_yaw + dy * sin_yaw,
        right: dx * sin_yaw - dy * cos_yaw,
        down: observer.z - point[2],
    }
}

/// Reconstructs the world point from camera-frame coordinates.
pub fn from_camera_frame(observer: &Pose, v: &CameraFrameVec) -> [f64; 3] {
    let (sin_yaw, cos_yaw) = observer.yaw.sin_cos();
    [
        observer.x + v.forward * cos_yaw + v.right * sin_yaw,
        observer.y + v.forward * sin_yaw - v.right * cos_yaw,
        observer.z - v.down,
    ]
}

/// Projects a world point into the observer's image.
///
/// Returns [`Projection::OutOfFrustum`] when the point is closer than
/// [`EPS_NEAR`] along the forward axis or lands outside `[-1, 1]^2`.
/// Boundary points (`|u| = 1` or `|v| = 1`) count as inside.
pub fn project(camera: &CameraModel, observer: &Pose, point: [f64; 3]) -> Projection {
    let cf = to_camera_frame(observer, point);
    if cf.forward <= EPS_NEAR {
        return Projection::OutOfFrustum(cf);
    }
    let u = (cf.right / cf.forward) / camera.tan_half_h();
    let v = (cf.down / cf.forward) / camera.tan_half_v();
    if u.abs() <= 1.0 + FRUSTUM_BOUNDARY_EPS && v.abs() <= 1.0 + FRUSTUM_BOUNDARY_EPS {
        Projection::Inside(ImagePoint {
            u: u.clamp(-1.0, 1.0),
            v: v.clamp(-1.0, 1.0),
            depth: cf.forward,
        })
    } else {
        Projection::OutOfFrustum(cf)
    }
}

/// Reconstructs the world point corresponding to an image point at the given
/// forward depth.
pub fn back_project(camera: &CameraModel, observer: &Pose, p: &ImagePoint) -> [f64; 3] {
    let cf = CameraFrameVec {
        forward: p.depth,
        right: p.u * camera.tan_half_h() * p.depth,
        down: p.v * camera.tan_half_v() * p.depth,
    };
    from_camera_frame(observer, &cf)
}

/// Normalizes distances by the maximum over visible entries.
///
/// Every entry (visible or not) is divided by that maximum and clamped to
/// `[0, 1]`. When no entry is visible or the maximum is at most [`EPS_NEAR`],
/// all outputs are 0.
pub fn normalize_distances(distances: &[f64], visible: &[bool]) -> Vec<f64> {
    assert_eq!(distances.len(), visible.len(), "normalize_distances: length mismatch");
    let max_visible = distances
        .iter()
        .zip(visible)
        .filter(|(_, &vis)| vis)
        .map(|(&d, _)| d)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_visible.is_finite() || max_visible <= EPS_NEAR {
        return vec![0.0; distances.len()];
    }
    distances.iter().map(|&d| (d / max_visible).clamp(0.0, 1.0)).collect()
}

//! Image-space guidance: where each reference pose sits in the agent's
//! current view, whether it is visible, and how far away it is.
//!
//! The oracle computes these triplets from ground-truth geometry, which is
//! exactly what a learned perception model would be trained to predict. A
//! configurable noise model corrupts the oracle output to emulate imperfect
//! predictions.

use crate::geometry::{
    normalize_distances, project, CameraModel, Pose, Projection, EPS_NEAR,
};
use crate::world::{raycast, ReferenceTrajectory, World};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Saturated visibility logit emitted by the oracle. Downstream code only
/// consumes the sign (sigma(v) > 0.5), so any large magnitude works.
pub const ORACLE_LOGIT: f64 = 10.0;

/// Localization of one reference pose in the query image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceTriplet {
    /// Normalized image point (u, v), each in [-1, 1]. For out-of-view
    /// poses this is the frustum-border point nearest the out-of-view
    /// direction.
    pub p: [f64; 2],
    /// Visibility logit; the pose counts as visible iff sigma(v_logit) >
    /// 0.5, i.e. v_logit > 0 strictly.
    pub v_logit: f64,
    /// Distance to the pose, normalized so the farthest visible pose of the
    /// same query is at 1. In [0, 1].
    pub d: f64,
}

impl GuidanceTriplet {
    pub fn visible(&self) -> bool {
        self.v_logit > 0.0
    }
}

/// Gaussian/flip corruption emulating learned-perception error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Std of the noise added to each image coordinate.
    pub sigma_p: f64,
    /// Probability of inverting a visibility decision.
    pub flip_prob: f64,
    /// Std of the noise added to normalized distance (renormalized after).
    pub sigma_d: f64,
    /// Multiplier >= 1 applied to all three magnitudes when the query
    /// heading opposes the local trajectory tangent by more than 90
    /// degrees. Views facing backward along the route overlap the recorded
    /// frames less, so predictions there degrade more.
    pub backward_degradation: f64,
}

impl NoiseModel {
    /// Exact passthrough: [`perturb_guidance`] returns its input unchanged.
    pub const ZERO: NoiseModel =
        NoiseModel { sigma_p: 0.0, flip_prob: 0.0, sigma_d: 0.0, backward_degradation: 1.0 };

    pub fn validate(&self) {
        assert!(self.sigma_p >= 0.0 && self.sigma_d >= 0.0, "NoiseModel: negative std");
        assert!(
            (0.0..=0.5).contains(&self.flip_prob),
            "NoiseModel: flip_prob {} outside [0, 0.5]",
            self.flip_prob
        );
        assert!(self.backward_degradation >= 1.0, "NoiseModel: degradation below 1");
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::ZERO
    }
}

/// Border point for an out-of-view camera-frame direction.
///
/// In front of the camera this is the true projection clamped to the image
/// square; behind it is the direction (right, down) mapped through the
/// frustum tangents and scaled onto the square's border, so the point sits
/// on the frame edge facing the out-of-view pose.
fn border_point(camera: &CameraModel, forward: f64, right: f64, down: f64) -> [f64; 2] {
    if forward > EPS_NEAR {
        let u = (right / forward) / camera.tan_half_h();
        let v = (down / forward) / camera.tan_half_v();
        return [u.clamp(-1.0, 1.0), v.clamp(-1.0, 1.0)];
    }
    let u_dir = right / camera.tan_half_h();
    let v_dir = down / camera.tan_half_v();
    let scale = u_dir.abs().max(v_dir.abs());
    if scale == 0.0 {
        // Directly behind (or coincident with) the camera: no lateral
        // direction to point at.
        return [0.0, 0.0];
    }
    [u_dir / scale, v_dir / scale]
}

/// Ground-truth guidance triplets for every reference pose, plus the
/// distance-normalization constant (the farthest visible distance, meters).
///
/// A pose is visible iff it projects inside the frustum and the line of
/// sight is clear. Poses within [`EPS_NEAR`] of the query camera are never
/// visible and carry d = 0.
pub fn oracle_guidance_with_norm(
    world: &World,
    camera: &CameraModel,
    query: &Pose,
    traj: &ReferenceTrajectory,
) -> (Vec<GuidanceTriplet>, f64) {
    let origin = query.position();
    let n = traj.len();
    let mut points = Vec::with_capacity(n);
    let mut visible = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for pose in &traj.poses {
        let target = pose.position();
        let dist = query.distance_to(target);
        let (p, vis) = match project(camera, query, target) {
            Projection::Inside(ip) => {
                let clear = raycast(world, origin, target).unwrap_or(false);
                ([ip.u, ip.v], clear)
            }
            Projection::OutOfFrustum(cf) => {
                (border_point(camera, cf.forward, cf.right, cf.down), false)
            }
        };
        // A pose coincident with the camera has no meaningful projection.
        let vis = vis && dist > EPS_NEAR;
        points.push(p);
        visible.push(vis);
        distances.push(if dist > EPS_NEAR { dist } else { 0.0 });
    }
    let norm = distances
        .iter()
        .zip(&visible)
        .filter(|(_, &v)| v)
        .map(|(&d, _)| d)
        .fold(f64::NEG_INFINITY, f64::max);
    let d = normalize_distances(&distances, &visible);
    let triplets = (0..n)
        .map(|i| GuidanceTriplet {
            p: points[i],
            v_logit: if visible[i] { ORACLE_LOGIT } else { -ORACLE_LOGIT },
            d: d[i],
        })
        .collect();
    (triplets, if norm.is_finite() { norm } else { 0.0 })
}

/// [`oracle_guidance_with_norm`] without the normalization constant.
pub fn oracle_guidance(
    world: &World,
    camera: &CameraModel,
    query: &Pose,
    traj: &ReferenceTrajectory,
) -> Vec<GuidanceTriplet> {
    oracle_guidance_with_norm(world, camera, query, traj).0
}

/// Corrupts guidance triplets with the noise model.
///
/// Image points and distances get Gaussian noise (p clamped to the image
/// square, d renormalized so the visible maximum is exactly 1 again);
/// visibility decisions flip with `flip_prob`. When `opposing` is set, all
/// magnitudes are scaled by `backward_degradation` (the flip probability
/// capped at 0.5 so it stays a degradation). A zero model is an exact
/// identity. Deterministic in the rng state.
pub fn perturb_guidance(
    triplets: &[GuidanceTriplet],
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
    opposing: bool,
) -> Vec<GuidanceTriplet> {
    noise.validate();
    let scale = if opposing { noise.backward_degradation } else { 1.0 };
    let sigma_p = noise.sigma_p * scale;
    let sigma_d = noise.sigma_d * scale;
    let flip_prob = (noise.flip_prob * scale).min(0.5);

    let mut out = triplets.to_vec();
    if sigma_p > 0.0 {
        let n = Normal::new(0.0, sigma_p).expect("sigma_p is finite and positive");
        for t in &mut out {
            t.p[0] = (t.p[0] + n.sample(rng)).clamp(-1.0, 1.0);
            t.p[1] = (t.p[1] + n.sample(rng)).clamp(-1.0, 1.0);
        }
    }
    if flip_prob > 0.0 {
        for t in &mut out {
            if rng.random_bool(flip_prob) {
                t.v_logit = -t.v_logit;
            }
        }
    }
    if sigma_d > 0.0 {
        let n = Normal::new(0.0, sigma_d).expect("sigma_d is finite and positive");
        let noised: Vec<f64> = out.iter().map(|t| (t.d + n.sample(rng)).max(0.0)).collect();
        let visible: Vec<bool> = out.iter().map(|t| t.visible()).collect();
        if visible.iter().any(|&v| v) {
            let renorm = normalize_distances(&noised, &visible);
            for (t, d) in out.iter_mut().zip(renorm) {
                t.d = d;
            }
        } else {
            for (t, d) in out.iter_mut().zip(noised) {
                t.d = d.min(1.0);
            }
        }
    }
    out
}

/// Ascending indices of triplets whose visibility logit is strictly
/// positive (sigma > 0.5). A logit of exactly 0 is not visible.
pub fn visible_set(triplets: &[GuidanceTriplet]) -> Vec<usize> {
    triplets.iter().enumerate().filter(|(_, t)| t.visible()).map(|(i, _)| i).collect()
}

/// True when the query heading opposes the local route tangent by more than
/// 90 degrees (their dot product is negative). The local tangent is taken
/// at the dense-path point nearest the query.
pub fn heading_opposes_tangent(query: &Pose, traj: &ReferenceTrajectory) -> bool {
    let mut best_d2 = f64::INFINITY;
    let mut tangent = [1.0, 0.0];
    for seg in traj.dense_path.windows(2) {
        let (ax, ay) = (seg[0][0], seg[0][1]);
        let (dx, dy) = (seg[1][0] - ax, seg[1][1] - ay);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            continue;
        }
        let t = (((query.x - ax) * dx + (query.y - ay) * dy) / len2).clamp(0.0, 1.0);
        let (px, py) = (ax + t * dx, ay + t * dy);
        let d2 = (query.x - px).powi(2) + (query.y - py).powi(2);
        if d2 < best_d2 {
            best_d2 = d2;
            tangent = [dx, dy];
        }
    }
    let [hx, hy] = query.heading();
    hx * tangent[0] + hy * tangent[1] < 0.0
}

//! Reference-trajectory recording and query-pose initialization.
//!
//! A recorder plans a route between random free cells, walks it, and drops
//! camera frames at stochastic intervals. Query poses start an episode
//! either exactly on a trajectory frame or displaced off it with partial
//! visual overlap.

use super::{plan_path, point_visible, DistanceField, World, WorldError};
use crate::geometry::{wrap_angle, CameraModel, Pose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Triangular};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Upper bound on the gap between consecutive reference poses, meters.
/// Raw spacing is at most 1.5 m; capping a 60 m route (at most 121 raw
/// frames) to 40 frames subsamples with stride at most 4, so 6 m.
pub const MAX_FRAME_SPACING: f64 = 6.0;

/// Recorded trajectory: ordered camera poses plus the dense route they were
/// sampled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    /// 2 to 40 poses, ordered from route start to route end.
    pub poses: Vec<Pose>,
    /// The recorder's camera.
    pub camera: CameraModel,
    /// Smoothed route polyline the frames were placed along, meters.
    pub dense_path: Vec<[f64; 2]>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Knobs for [`sample_reference_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryParams {
    /// Geodesic start/goal separation bounds, meters.
    pub min_separation: f64,
    pub max_separation: f64,
    /// Frame spacing bounds along the route, meters.
    pub min_spacing: f64,
    pub max_spacing: f64,
    /// Hard cap on the number of frames; longer routes are subsampled.
    pub max_frames: usize,
    /// Std of the yaw perturbation added to the route tangent, radians.
    pub sigma_rot: f64,
    /// Required distance-field margin at sampled cells and along the
    /// smoothed route, meters.
    pub clearance: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            min_separation: 8.0,
            max_separation: 60.0,
            min_spacing: 0.5,
            max_spacing: 1.5,
            max_frames: 40,
            sigma_rot: 5.0 * PI / 180.0,
            clearance: 0.2,
        }
    }
}

/// Point and tangent heading at arc length `s` along a polyline.
pub(crate) fn point_along(poly: &[[f64; 2]], s: f64) -> ([f64; 2], f64) {
    debug_assert!(poly.len() >= 2);
    let mut remaining = s.max(0.0);
    let mut last_yaw = 0.0;
    let mut found_segment = false;
    for seg in poly.windows(2) {
        let (dx, dy) = (seg[1][0] - seg[0][0], seg[1][1] - seg[0][1]);
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            continue;
        }
        last_yaw = dy.atan2(dx);
        found_segment = true;
        if remaining <= len {
            let t = remaining / len;
            return ([seg[0][0] + t * dx, seg[0][1] + t * dy], last_yaw);
        }
        remaining -= len;
    }
    debug_assert!(found_segment, "point_along: degenerate polyline");
    (*poly.last().unwrap(), last_yaw)
}

/// Frame stations along a route of length `total`: 0, then spacings drawn
/// uniformly from [min_spacing, max_spacing], with the final station pinned
/// to `total`. Every consecutive gap, including the last, stays within the
/// spacing bounds as long as `total >= 2 * min_spacing`.
fn sample_stations(rng: &mut ChaCha8Rng, total: f64, min_spacing: f64, max_spacing: f64) -> Vec<f64> {
    debug_assert!(total >= 2.0 * min_spacing);
    // Any residual length above max_spacing must admit a draw that leaves at
    // least min_spacing for the final gap; this needs a 2:1 spacing range.
    assert!(
        max_spacing >= 2.0 * min_spacing,
        "spacing range too narrow: need max_spacing >= 2 * min_spacing"
    );
    let mut stations = vec![0.0];
    let mut s = 0.0;
    while total - s > max_spacing {
        // Capping the draw at (total - s - min_spacing) keeps the final gap
        // from collapsing below min_spacing.
        let hi = (total - s - min_spacing).min(max_spacing);
        s += rng.random_range(min_spacing..=hi);
        stations.push(s);
    }
    stations.push(total);
    stations
}

/// Evenly spread `n` indices over `0..m`, first and last pinned.
fn subsample_indices(m: usize, n: usize) -> Vec<usize> {
    debug_assert!(n >= 2 && m >= n);
    (0..n).map(|i| (i as f64 * (m - 1) as f64 / (n - 1) as f64).round() as usize).collect()
}

fn free_cells_with_clearance(world: &World, df: &DistanceField, clearance: f64) -> Vec<(usize, usize)> {
    (0..world.height())
        .flat_map(|iy| (0..world.width()).map(move |ix| (ix, iy)))
        .filter(|&(ix, iy)| world.is_free(ix, iy) && df.at_cell(ix, iy) >= clearance)
        .collect()
}

/// Records a reference trajectory between random free cells.
///
/// Start/goal pairs are rejection-sampled until their geodesic separation
/// lands in `[min_separation, max_separation]`; frames are placed along the
/// smoothed route at stochastic intervals, capped at `max_frames` by even
/// subsampling. Frame yaw is the route tangent plus Normal(0, sigma_rot)
/// noise; frame height is the recorder camera's mount height. Deterministic
/// in `seed`.
pub fn sample_reference_trajectory(
    world: &World,
    df: &DistanceField,
    seed: u64,
    recorder_camera: &CameraModel,
    params: &TrajectoryParams,
) -> Result<ReferenceTrajectory, WorldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = free_cells_with_clearance(world, df, params.clearance);
    if candidates.len() < 2 {
        return Err(WorldError::NoTrajectory {
            min_sep: params.min_separation,
            max_sep: params.max_separation,
            attempts: 0,
        });
    }
    const MAX_ATTEMPTS: usize = 200;
    for _ in 0..MAX_ATTEMPTS {
        let s = candidates[rng.random_range(0..candidates.len())];
        let g = candidates[rng.random_range(0..candidates.len())];
        let start = world.cell_center(s.0, s.1);
        let goal = world.cell_center(g.0, g.1);
        let path = match plan_path(world, df, start, goal, params.clearance) {
            Ok(p) => p,
            Err(WorldError::NoPath) => continue,
            Err(e) => return Err(e),
        };
        if path.geodesic_length < params.min_separation
            || path.geodesic_length > params.max_separation
        {
            continue;
        }
        let total = path.polyline_length();
        if total < 2.0 * params.min_spacing {
            continue;
        }
        let stations = sample_stations(&mut rng, total, params.min_spacing, params.max_spacing);
        let kept: Vec<f64> = if stations.len() > params.max_frames {
            subsample_indices(stations.len(), params.max_frames)
                .into_iter()
                .map(|i| stations[i])
                .collect()
        } else {
            stations
        };
        let yaw_noise = Normal::new(0.0, params.sigma_rot).expect("sigma_rot must be >= 0");
        let poses: Vec<Pose> = kept
            .iter()
            .map(|&station| {
                let (p, tangent) = point_along(&path.polyline, station);
                let yaw = if params.sigma_rot > 0.0 {
                    wrap_angle(tangent + yaw_noise.sample(&mut rng))
                } else {
                    tangent
                };
                Pose::new(p[0], p[1], recorder_camera.mount_height, yaw)
            })
            .collect();
        debug_assert!(poses.len() >= 2 && poses.len() <= params.max_frames);
        return Ok(ReferenceTrajectory {
            poses,
            camera: *recorder_camera,
            dense_path: path.polyline,
        });
    }
    Err(WorldError::NoTrajectory {
        min_sep: params.min_separation,
        max_sep: params.max_separation,
        attempts: MAX_ATTEMPTS,
    })
}

/// How an episode's starting pose relates to the reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// Exactly the first reference pose (forward tasks).
    OnFirst,
    /// Exactly the last reference pose (backward tasks).
    OnLast,
    /// Displaced off the route with partial visual overlap.
    Off,
}

/// Knobs for [`sample_query_pose`] in off-trajectory mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryPoseParams {
    /// Triangular offset-radius distribution from a random route anchor,
    /// meters: most starts near the mode, tail out to the max.
    pub radius_min: f64,
    pub radius_mode: f64,
    pub radius_max: f64,
    /// Minimum number of reference poses that must be visible from an
    /// accepted pose.
    pub min_visible: usize,
    /// Required distance-field margin at the pose, meters.
    pub clearance: f64,
}

impl Default for QueryPoseParams {
    fn default() -> Self {
        Self {
            radius_min: 1.5,
            radius_mode: 2.0,
            radius_max: 10.0,
            min_visible: 3,
            clearance: 0.2,
        }
    }
}

/// Number of reference poses visible (frustum + line of sight) from a pose.
pub fn count_visible_poses(
    world: &World,
    camera: &CameraModel,
    observer: &Pose,
    traj: &ReferenceTrajectory,
) -> usize {
    traj.poses
        .iter()
        .filter(|p| point_visible(world, camera, observer, p.position()))
        .count()
}

/// Samples an episode starting pose.
///
/// On-trajectory modes return the first or last reference pose with the
/// height swapped to the agent camera's mount height. Off-trajectory mode
/// rejection-samples around a random route anchor: offset radius from a
/// triangular distribution, uniform direction and yaw, accepted only in
/// free space with clearance and at least `min_visible` reference poses in
/// view. Deterministic in `seed`.
pub fn sample_query_pose(
    world: &World,
    df: &DistanceField,
    traj: &ReferenceTrajectory,
    mode: InitMode,
    seed: u64,
    agent_camera: &CameraModel,
    params: &QueryPoseParams,
) -> Result<Pose, WorldError> {
    let anchor_pose = |p: &Pose| Pose::new(p.x, p.y, agent_camera.mount_height, p.yaw);
    match mode {
        InitMode::OnFirst => return Ok(anchor_pose(&traj.poses[0])),
        InitMode::OnLast => return Ok(anchor_pose(traj.poses.last().unwrap())),
        InitMode::Off => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = super::planner::polyline_length(&traj.dense_path);
    let radius = Triangular::new(params.radius_min, params.radius_max, params.radius_mode)
        .expect("radius bounds must be ordered");
    const MAX_ATTEMPTS: usize = 2000;
    for _ in 0..MAX_ATTEMPTS {
        let (anchor, _) = point_along(&traj.dense_path, rng.random_range(0.0..=total));
        let r = radius.sample(&mut rng);
        let phi = rng.random_range(0.0..2.0 * PI);
        let x = anchor[0] + r * phi.cos();
        let y = anchor[1] + r * phi.sin();
        if !world.point_is_free(x, y) || df.at_point(x, y) < params.clearance {
            continue;
        }
        let yaw = rng.random_range(-PI..PI);
        let pose = Pose::new(x, y, agent_camera.mount_height, yaw);
        if count_visible_poses(world, agent_camera, &pose, traj) >= params.min_visible {
            return Ok(pose);
        }
    }
    Err(WorldError::NoValidStart { attempts: MAX_ATTEMPTS })
}

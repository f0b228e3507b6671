//! Reactive trajectory following: visible-sequence target selection, the
//! proportional yaw law, a depth-scan obstacle-avoidance wrapper, and the
//! agent step dynamics with collision clamping.

use crate::geometry::{wrap_angle, Pose};
use crate::guidance::{visible_set, GuidanceTriplet};
use crate::world::{DepthScan, DistanceField};
use serde::{Deserialize, Serialize};

/// Gains and limits of the yaw controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YawControllerConfig {
    /// Proportional gain on the horizontal image error, per second.
    pub k_p: f64,
    /// Constant forward speed, meters/second.
    pub v_forward: f64,
    /// Steps to look ahead within the visible-index sequence.
    pub lookahead: usize,
    /// Yaw-rate clamp, radians/second.
    pub omega_max: f64,
    /// Simulation step the commands are issued at, seconds.
    pub dt: f64,
}

impl Default for YawControllerConfig {
    fn default() -> Self {
        Self { k_p: 2.0, v_forward: 0.5, lookahead: 2, omega_max: 1.5, dt: 0.25 }
    }
}

impl YawControllerConfig {
    pub fn validate(&self) {
        assert!(self.k_p > 0.0, "YawControllerConfig: k_p must be positive");
        assert!(self.v_forward > 0.0, "YawControllerConfig: v_forward must be positive");
        assert!(self.omega_max > 0.0, "YawControllerConfig: omega_max must be positive");
        assert!(self.dt > 0.0, "YawControllerConfig: dt must be positive");
    }
}

/// Velocity command for one simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Forward speed along the (post-turn) heading, meters/second.
    pub v_forward: f64,
    /// Yaw rate, radians/second. Positive turns left (counter-clockwise).
    pub omega: f64,
    /// Vertical speed, meters/second. Zero for ground agents.
    pub v_z: f64,
}

impl ControlCommand {
    pub const HOLD: ControlCommand = ControlCommand { v_forward: 0.0, omega: 0.0, v_z: 0.0 };
}

/// Steering target chosen from the guidance triplets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    /// Image point to steer toward.
    pub p: [f64; 2],
    /// Traversal direction along the trajectory: +1 toward higher indices.
    pub s: i8,
    /// Index of the targeted triplet.
    pub index: usize,
    /// False when no triplet was visible and a border point of a
    /// non-visible triplet was used instead.
    pub visible: bool,
}

/// Chooses the steering target for goal index `g` (0-based).
///
/// Within the visible set, the anchor k is the visible triplet nearest the
/// agent (smallest d, ties to the smaller index); the traversal direction
/// s is the sign of (g - k), +1 when g = k; the target sits `lookahead`
/// positions further along the visible sequence, clipped to its ends. With
/// nothing visible, the border point of the non-visible triplet with the
/// smallest d serves as target (ties to the index nearest the goal); with
/// no triplets at all there is no target.
pub fn select_target(
    triplets: &[GuidanceTriplet],
    g: usize,
    cfg: &YawControllerConfig,
) -> Option<Target> {
    if triplets.is_empty() {
        return None;
    }
    debug_assert!(g < triplets.len(), "goal index out of range");
    let argmin_d = |indices: &[usize]| -> usize {
        let mut best = indices[0];
        for &i in &indices[1..] {
            if triplets[i].d < triplets[best].d {
                best = i;
            }
        }
        best
    };
    let i_vis = visible_set(triplets);
    if i_vis.is_empty() {
        // With nothing visible the normalized distances are typically all
        // zero, so min-d alone cannot pick a direction; ties resolve to the
        // index nearest the goal, keeping the fallback pulling along the
        // task direction instead of latching onto frame 0 and driving the
        // agent backward.
        let mut k = 0usize;
        for i in 1..triplets.len() {
            if triplets[i].d < triplets[k].d
                || (triplets[i].d == triplets[k].d && i.abs_diff(g) < k.abs_diff(g))
            {
                k = i;
            }
        }
        let s = if g >= k { 1 } else { -1 };
        return Some(Target { p: triplets[k].p, s, index: k, visible: false });
    }
    let k = argmin_d(&i_vis);
    let s: i8 = if g >= k { 1 } else { -1 };
    let j = i_vis.iter().position(|&i| i == k).expect("k comes from i_vis") as i64;
    let m = (j + s as i64 * cfg.lookahead as i64).clamp(0, i_vis.len() as i64 - 1);
    let index = i_vis[m as usize];
    Some(Target { p: triplets[index].p, s, index, visible: true })
}

/// Proportional yaw law: turn to center the target horizontally while
/// driving at constant forward speed. A target to the right (positive u)
/// commands a rightward (negative) turn. No target means hold in place.
pub fn yaw_command(target: Option<&Target>, cfg: &YawControllerConfig) -> ControlCommand {
    match target {
        Some(t) => ControlCommand {
            v_forward: cfg.v_forward,
            omega: (-cfg.k_p * t.p[0]).clamp(-cfg.omega_max, cfg.omega_max),
            v_z: 0.0,
        },
        None => ControlCommand::HOLD,
    }
}

/// Half-width of the forward cone checked for impending collision, as a
/// normalized image coordinate.
pub const AVOID_CONE_HALF_U: f64 = 0.25;
/// Steering candidates are restricted to rays within this angle of the
/// current heading, radians.
pub const AVOID_STEER_WINDOW: f64 = 60.0 * std::f64::consts::PI / 180.0;
/// Lower bound on the avoidance speed scale. The motion clamp can park the
/// agent exactly on a blocked cell's face plane, where side rays of the
/// forward cone read zero depth even though the pose itself satisfies the
/// clearance field; a purely proportional scale then commands zero speed
/// forever. The floor keeps a wedged agent creeping along the steer
/// direction, and the motion clamp keeps that creep collision-safe.
pub const AVOID_CREEP_SCALE: f64 = 0.2;

/// Reactive avoidance wrapper around a command.
///
/// When the forward cone (|u| < 0.25) contains depth below the stop
/// distance (3 * v_forward * dt + agent_radius), the yaw rate is replaced
/// by a steer that turns onto the deepest ray within 60 degrees of the
/// heading, at up to the full rate, and the forward speed is scaled by
/// min_depth / stop_distance, floored at [`AVOID_CREEP_SCALE`]. Ties on
/// depth resolve toward the leftmost ray, i.e. the positive-omega side.
/// Otherwise the command passes through unchanged.
pub fn avoid_obstacles(
    cmd: ControlCommand,
    scan: &DepthScan,
    agent_radius: f64,
    dt: f64,
    omega_max: f64,
) -> ControlCommand {
    assert!(!scan.depths.is_empty(), "avoid_obstacles: empty scan");
    let stop_distance = 3.0 * cmd.v_forward * dt + agent_radius;
    let min_forward = scan
        .depths
        .iter()
        .zip(&scan.u)
        .filter(|(_, &u)| u.abs() < AVOID_CONE_HALF_U)
        .map(|(&d, _)| d)
        .fold(f64::INFINITY, f64::min);
    if min_forward >= stop_distance {
        return cmd;
    }
    // Deepest ray within the steer window; the scan is ordered left to
    // right, so a strict-greater scan keeps the leftmost of any tie.
    let mut best: Option<(f64, f64)> = None; // (depth, ray angle)
    for (&d, &a) in scan.depths.iter().zip(&scan.angles) {
        if a.abs() <= AVOID_STEER_WINDOW && best.is_none_or(|(bd, _)| d > bd) {
            best = Some((d, a));
        }
    }
    let steer = match best {
        // Turn onto the deepest ray, saturating at the rate limit. A
        // fixed-magnitude turn would overshoot a nearly centered escape
        // direction every step and chatter between its two sides forever.
        Some((_, a)) => (a / dt).clamp(-omega_max, omega_max),
        // Window empty (extreme camera): keep turning the commanded way.
        None => omega_max * cmd.omega.signum(),
    };
    ControlCommand {
        v_forward: cmd.v_forward * (min_forward / stop_distance).max(AVOID_CREEP_SCALE),
        omega: steer,
        v_z: cmd.v_z,
    }
}

/// Pulls `to` back along the segment from `from` until the distance-field
/// clearance holds, by bisection onto the clearance boundary. Returns the
/// clamped point and whether clamping occurred.
fn clamp_motion(
    df: &DistanceField,
    from: [f64; 2],
    to: [f64; 2],
    agent_radius: f64,
) -> ([f64; 2], bool) {
    let ok = |p: [f64; 2]| df.at_point(p[0], p[1]) >= agent_radius;
    if ok(to) {
        // The step length is far below a cell, so a clear endpoint cannot
        // have tunneled across a blocked cell unseen; still, sample the
        // midpoint to be safe for coarse callers.
        let mid = [0.5 * (from[0] + to[0]), 0.5 * (from[1] + to[1])];
        if ok(mid) {
            return (to, false);
        }
    }
    if !ok(from) {
        // Already in violation; refuse to move rather than escape through
        // an obstacle.
        return (from, true);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let at = |t: f64| [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])];
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if ok(at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (at(lo), true)
}

/// Advances a ground agent by one step: yaw integrates first, then the
/// position moves along the new heading; motion into the clearance boundary
/// is clamped at the boundary and flagged as a collision. Height stays.
pub fn step_ground_agent(
    pose: &Pose,
    cmd: &ControlCommand,
    df: &DistanceField,
    dt: f64,
    agent_radius: f64,
) -> (Pose, bool) {
    assert!(dt > 0.0, "step_ground_agent: dt must be positive");
    let yaw = wrap_angle(pose.yaw + cmd.omega * dt);
    let from = [pose.x, pose.y];
    let to = [pose.x + cmd.v_forward * dt * yaw.cos(), pose.y + cmd.v_forward * dt * yaw.sin()];
    let (clamped, collided) = clamp_motion(df, from, to, agent_radius);
    (Pose::new(clamped[0], clamped[1], pose.z, yaw), collided)
}

/// Advances a holonomic agent by one step with world-frame planar velocity
/// plus yaw rate and vertical speed. Planar motion is collision-clamped
/// like [`step_ground_agent`]; height integrates freely within `z_range`.
pub fn step_holonomic_agent(
    pose: &Pose,
    v_xy: [f64; 2],
    omega: f64,
    v_z: f64,
    df: &DistanceField,
    dt: f64,
    agent_radius: f64,
    z_range: [f64; 2],
) -> (Pose, bool) {
    assert!(dt > 0.0, "step_holonomic_agent: dt must be positive");
    let yaw = wrap_angle(pose.yaw + omega * dt);
    let from = [pose.x, pose.y];
    let to = [pose.x + v_xy[0] * dt, pose.y + v_xy[1] * dt];
    let (clamped, collided) = clamp_motion(df, from, to, agent_radius);
    let z = (pose.z + v_z * dt).clamp(z_range[0], z_range[1]);
    (Pose::new(clamped[0], clamped[1], z, yaw), collided)
}

//! Sampling-based path-integral controller over a planar single-integrator
//! model: guidance triplets are grounded into world-frame waypoints through
//! the depth scan, sampled control sequences are scored by a goal /
//! visibility / collision cost, and the command is their importance-weighted
//! average. Height is regulated separately from the goal point's vertical
//! image position.

use crate::geometry::{wrap_angle, CameraModel, Pose};
use crate::guidance::GuidanceTriplet;
use crate::world::{DepthScan, DistanceField};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Number of candidate scales tried when fitting grounded predictions into
/// free space.
const GROUNDING_SCALE_CANDIDATES: usize = 64;

/// Sampling, horizon, and cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MppiConfig {
    /// Number of sampled control sequences per step.
    pub samples: usize,
    /// Horizon length in steps.
    pub horizon: usize,
    /// Integration step, seconds.
    pub dt: f64,
    /// Per-axis sampling std for (v_x, v_y, omega), around the nominal.
    pub sigma: [f64; 3],
    /// Temperature of the importance weights, in cost units.
    pub beta: f64,
    pub w_goal: f64,
    pub w_coll: f64,
    pub w_vis: f64,
    /// Clearance radius for both the collision cost band and the grounding
    /// scale search, meters.
    pub collision_radius: f64,
    /// Which grounded point (1-based) serves as the goal, clamped to the
    /// number of grounded points.
    pub goal_point_rank: usize,
    /// Vertical gain, per second.
    pub k_z: f64,
    /// Command limit on sampled planar speed, meters/second. The
    /// single-integrator model admits unbounded velocities; without a
    /// limit the warm-started nominal grows until crashes are the only
    /// way to stop.
    pub v_max: f64,
    /// Command limit on the sampled yaw rate, radians/second.
    pub omega_max: f64,
    /// Replaces the in-band penetration cost DF with the hinge
    /// (radius - DF)+. Off by default: the indicator form is kept even
    /// though it scores deeper penetration lower, because the band weight
    /// alone suffices to repel rollouts.
    pub hinge_collision_cost: bool,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            samples: 256,
            horizon: 20,
            dt: 0.1,
            sigma: [0.3, 0.3, 0.5],
            beta: 1.0,
            w_goal: 10.0,
            w_coll: 100.0,
            w_vis: 10.0,
            collision_radius: 0.5,
            goal_point_rank: 3,
            k_z: 0.5,
            v_max: 1.5,
            omega_max: 1.5,
            hinge_collision_cost: false,
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) {
        assert!(self.samples >= 2, "MppiConfig: need at least 2 samples");
        assert!(self.horizon >= 1, "MppiConfig: need at least 1 horizon step");
        assert!(self.dt > 0.0, "MppiConfig: dt must be positive");
        assert!(self.beta > 0.0, "MppiConfig: beta must be positive");
        assert!(
            self.w_goal >= 0.0 && self.w_coll >= 0.0 && self.w_vis >= 0.0,
            "MppiConfig: weights must be non-negative"
        );
        assert!(self.sigma.iter().all(|s| *s >= 0.0), "MppiConfig: sigma must be non-negative");
        assert!(self.goal_point_rank >= 1, "MppiConfig: goal_point_rank is 1-based");
        assert!(self.collision_radius >= 0.0, "MppiConfig: collision radius must be non-negative");
        assert!(self.v_max > 0.0, "MppiConfig: v_max must be positive");
        assert!(self.omega_max > 0.0, "MppiConfig: omega_max must be positive");
    }
}

/// Planar state [p_x, p_y, yaw] plus the warm-started nominal sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MppiState {
    pub x: [f64; 3],
    /// Nominal control sequence, `horizon` entries of (v_x, v_y, omega).
    pub nominal: Vec<[f64; 3]>,
}

impl MppiState {
    pub fn new(pose: &Pose, horizon: usize) -> Self {
        Self { x: [pose.x, pose.y, pose.yaw], nominal: vec![[0.0; 3]; horizon] }
    }
}

/// Projects visible triplets into world-frame waypoints.
///
/// Each visible triplet contributes a point along its ray's ground-plane
/// direction at its normalized range; one global scale stretches the set as
/// far as free space allows. The scale upper bound is the scan depth along
/// the farthest visible triplet's ray (nearest-ray lookup); 64 descending
/// candidate scales are tried and the first whose points all keep
/// distance-field clearance `r` wins. Returns the empty list when nothing
/// is visible or no candidate scale is collision-free.
pub fn ground_predictions(
    triplets: &[GuidanceTriplet],
    scan: &DepthScan,
    camera: &CameraModel,
    observer: &Pose,
    df: &DistanceField,
    r: f64,
) -> Vec<[f64; 2]> {
    let visible: Vec<&GuidanceTriplet> = triplets.iter().filter(|t| t.visible()).collect();
    if visible.is_empty() {
        return Vec::new();
    }
    let tan_h = camera.tan_half_h();
    let (sin_yaw, cos_yaw) = observer.yaw.sin_cos();
    // Ground-plane unit direction of the ray through image column u.
    let ray_dir = |u: f64| -> [f64; 2] {
        let dx = cos_yaw + u * tan_h * sin_yaw;
        let dy = sin_yaw - u * tan_h * cos_yaw;
        let n = (dx * dx + dy * dy).sqrt();
        [dx / n, dy / n]
    };
    let farthest = visible
        .iter()
        .max_by(|a, b| a.d.total_cmp(&b.d))
        .expect("visible is non-empty");
    let nearest_ray = scan
        .u
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (*a - farthest.p[0]).abs().total_cmp(&(*b - farthest.p[0]).abs())
        })
        .map(|(i, _)| i)
        .expect("scan is non-empty");
    let alpha_max = scan.depths[nearest_ray];
    if !(alpha_max > 0.0) {
        return Vec::new();
    }
    let dirs: Vec<[f64; 2]> = visible.iter().map(|t| ray_dir(t.p[0])).collect();
    for k in (1..=GROUNDING_SCALE_CANDIDATES).rev() {
        let alpha = alpha_max * k as f64 / GROUNDING_SCALE_CANDIDATES as f64;
        let points: Vec<[f64; 2]> = visible
            .iter()
            .zip(&dirs)
            .map(|(t, dir)| {
                [observer.x + alpha * t.d * dir[0], observer.y + alpha * t.d * dir[1]]
            })
            .collect();
        if points.iter().all(|p| df.at_point(p[0], p[1]) >= r) {
            return points;
        }
    }
    Vec::new()
}

/// Integrates the single-integrator model, returning `controls.len() + 1`
/// states with the yaw wrapped each step.
pub fn rollout(x0: [f64; 3], controls: &[[f64; 3]], dt: f64) -> Vec<[f64; 3]> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0);
    let mut x = x0;
    for u in controls {
        x = [x[0] + dt * u[0], x[1] + dt * u[1], wrap_angle(x[2] + dt * u[2])];
        states.push(x);
    }
    states
}

/// Sums the per-step cost over states 1..K: weighted distance to the goal,
/// squared wrapped bearing error toward the visibility point, and the
/// collision band term (penetration depth inside the clearance radius, or
/// the hinge form when configured).
pub fn trajectory_cost(
    states: &[[f64; 3]],
    goal: [f64; 2],
    df: &DistanceField,
    g_pt: [f64; 2],
    cfg: &MppiConfig,
) -> f64 {
    assert!(!states.is_empty(), "trajectory_cost: empty state sequence");
    let mut j = 0.0;
    for x in &states[1..] {
        let c_goal = ((x[0] - goal[0]).powi(2) + (x[1] - goal[1]).powi(2)).sqrt();
        let bearing = (g_pt[1] - x[1]).atan2(g_pt[0] - x[0]);
        let c_vis = wrap_angle(bearing - x[2]).powi(2);
        let clearance = df.at_point(x[0], x[1]);
        let c_coll = if cfg.hinge_collision_cost {
            (cfg.collision_radius - clearance).max(0.0)
        } else if clearance <= cfg.collision_radius {
            clearance
        } else {
            0.0
        };
        j += cfg.w_goal * c_goal + cfg.w_vis * c_vis + cfg.w_coll * c_coll;
    }
    j
}

/// Softmin importance weights: w_m proportional to exp(-(J_m - min J) / beta),
/// normalized to sum to one. Subtracting the minimum keeps the exponents in
/// range and makes the weights invariant to a constant cost offset.
pub fn importance_weights(costs: &[f64], beta: f64) -> Vec<f64> {
    assert!(!costs.is_empty(), "importance_weights: empty costs");
    assert!(beta > 0.0, "importance_weights: beta must be positive");
    let rho = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = costs.iter().map(|j| (-(j - rho) / beta).exp()).collect();
    let eta: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= eta);
    w
}

/// Scales the planar part down to `v_max` and clips the yaw rate to
/// `omega_max`, preserving the planar direction.
fn clip_control(u: [f64; 3], cfg: &MppiConfig) -> [f64; 3] {
    let speed = (u[0] * u[0] + u[1] * u[1]).sqrt();
    let s = if speed > cfg.v_max { cfg.v_max / speed } else { 1.0 };
    [u[0] * s, u[1] * s, u[2].clamp(-cfg.omega_max, cfg.omega_max)]
}

/// Draws `cfg.samples` control sequences, Gaussian per step and axis around
/// the nominal, clipped to the command limits. The draw order (sample,
/// step, axis) is part of the determinism contract.
pub(crate) fn sample_control_sequences(
    nominal: &[[f64; 3]],
    cfg: &MppiConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<[f64; 3]>> {
    (0..cfg.samples)
        .map(|_| {
            nominal
                .iter()
                .map(|u| {
                    let mut out = [0.0; 3];
                    for (axis, o) in out.iter_mut().enumerate() {
                        let z: f64 = StandardNormal.sample(rng);
                        *o = u[axis] + cfg.sigma[axis] * z;
                    }
                    clip_control(out, cfg)
                })
                .collect()
        })
        .collect()
}

/// One receding-horizon update.
///
/// Samples around the nominal sequence, scores each sample by rollout cost
/// against the rank-selected grounded point, and averages the samples under
/// softmin weights. Returns the first control of the averaged sequence and
/// the sequence shifted left by one (last entry repeated) to warm-start the
/// next step.
pub fn mppi_step(
    state: &MppiState,
    grounded: &[[f64; 2]],
    df: &DistanceField,
    cfg: &MppiConfig,
    rng: &mut ChaCha8Rng,
) -> ([f64; 3], Vec<[f64; 3]>) {
    assert!(!grounded.is_empty(), "mppi_step: caller must handle empty grounded points");
    assert_eq!(state.nominal.len(), cfg.horizon, "nominal length must match horizon");
    let goal = grounded[cfg.goal_point_rank.min(grounded.len()) - 1];
    let sequences = sample_control_sequences(&state.nominal, cfg, rng);
    let costs: Vec<f64> = sequences
        .iter()
        .map(|seq| trajectory_cost(&rollout(state.x, seq, cfg.dt), goal, df, goal, cfg))
        .collect();
    let weights = importance_weights(&costs, cfg.beta);
    let mut averaged = vec![[0.0f64; 3]; cfg.horizon];
    for (seq, w) in sequences.iter().zip(&weights) {
        for (avg, u) in averaged.iter_mut().zip(seq) {
            for axis in 0..3 {
                avg[axis] += w * u[axis];
            }
        }
    }
    let command = averaged[0];
    let mut shifted: Vec<[f64; 3]> = averaged[1..].to_vec();
    shifted.push(averaged[cfg.horizon - 1]);
    (command, shifted)
}

/// Fallback when nothing is grounded: execute the warm-started plan's first
/// control and keep shifting it, so brief visibility gaps are coasted
/// through on the previous solution.
pub fn hold_previous_plan(nominal: &[[f64; 3]]) -> ([f64; 3], Vec<[f64; 3]>) {
    assert!(!nominal.is_empty(), "hold_previous_plan: empty nominal");
    let mut shifted: Vec<[f64; 3]> = nominal[1..].to_vec();
    shifted.push(*nominal.last().expect("nominal is non-empty"));
    (nominal[0], shifted)
}

/// Vertical speed that recenters the goal triplet's image row: positive v
/// means the point sits low in the image, so the agent descends. Zero when
/// the goal triplet is not visible.
pub fn height_command(triplets: &[GuidanceTriplet], goal_index: usize, cfg: &MppiConfig) -> f64 {
    match triplets.get(goal_index) {
        Some(t) if t.visible() => -cfg.k_z * t.p[1],
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::{oracle_guidance, visible_set};
    use crate::world::{
        ascii_world, build_distance_field, empty_world, render_depth, DepthScan,
    };
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn flat_scan(n: usize, depth: f64) -> DepthScan {
        let u: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let angles = u.iter().map(|&x| (-x).atan()).collect();
        DepthScan { depths: vec![depth; n], hits: vec![true; n], u, angles }
    }

    fn vis(u: f64, v: f64, d: f64) -> GuidanceTriplet {
        GuidanceTriplet { p: [u, v], v_logit: 10.0, d }
    }

    #[test]
    fn rollout_zero_controls_keeps_state() {
        let states = rollout([3.0, -2.0, 0.7], &[[0.0; 3]; 4], 0.1);
        assert_eq!(states.len(), 5);
        for s in &states {
            assert_eq!(*s, [3.0, -2.0, 0.7]);
        }
    }

    #[test]
    fn rollout_integrates_linear_velocity() {
        let states = rollout([0.0; 3], &[[1.0, 0.0, 0.0]; 5], 0.1);
        let last = states.last().unwrap();
        assert!((last[0] - 0.5).abs() < 1e-12);
        assert_eq!(last[1], 0.0);
        assert_eq!(last[2], 0.0);
    }

    #[test]
    fn rollout_wraps_yaw() {
        let states = rollout([0.0; 3], &[[0.0, 0.0, PI]; 2], 1.0);
        assert!((states[1][2] - PI).abs() < 1e-12);
        assert!(states[2][2].abs() < 1e-12, "two half turns return to zero");
    }

    #[test]
    fn cost_is_zero_at_goal_aligned_and_clear() {
        let w = empty_world(40, 0.5);
        let df = build_distance_field(&w);
        let cfg = MppiConfig::default();
        // Sitting on the goal and facing it (bearing atan2(0,0) = 0 = yaw),
        // far from every wall.
        let states = vec![[10.0, 10.0, 0.0], [10.0, 10.0, 0.0]];
        assert_eq!(trajectory_cost(&states, [10.0, 10.0], &df, [10.0, 10.0], &cfg), 0.0);
    }

    #[test]
    fn cost_two_meters_out_is_twenty() {
        let w = empty_world(40, 0.5);
        let df = build_distance_field(&w);
        let cfg = MppiConfig::default();
        let states = vec![[8.0, 10.0, 0.0], [8.0, 10.0, 0.0]];
        let j = trajectory_cost(&states, [10.0, 10.0], &df, [10.0, 10.0], &cfg);
        assert!((j - 20.0).abs() < 1e-12, "goal weight 10 at 2 m, got {j}");
    }

    #[test]
    fn collision_band_uses_penetration_depth() {
        let w = ascii_world(
            &[
                "########",
                "#......#",
                "#......#",
                "#...#..#",
                "#......#",
                "#......#",
                "########",
            ],
            0.5,
            2.5,
        );
        let df = build_distance_field(&w);
        let cfg = MppiConfig { w_goal: 0.0, w_vis: 0.0, ..MppiConfig::default() };
        let cost_at = |x: f64, y: f64| {
            trajectory_cost(&vec![[0.0, 0.0, 0.0], [x, y, 0.0]], [x, y], &df, [x, y], &cfg)
        };
        // On the obstacle cell center the field is zero, so the indicator
        // form charges nothing.
        assert_eq!(cost_at(2.25, 1.75), 0.0);
        // One cell out the field equals the cell size, inside the 0.6 m band.
        assert!((cost_at(2.75, 1.75) - 100.0 * 0.5).abs() < 1e-12);
        // Two cells from every wall and the pillar: outside the band.
        assert_eq!(cost_at(1.25, 1.25), 0.0);
    }

    #[test]
    fn hinge_flag_charges_contact_hardest() {
        let w = ascii_world(
            &[
                "########",
                "#......#",
                "#......#",
                "#...#..#",
                "#......#",
                "#......#",
                "########",
            ],
            0.5,
            2.5,
        );
        let df = build_distance_field(&w);
        let cfg = MppiConfig {
            w_goal: 0.0,
            w_vis: 0.0,
            collision_radius: 0.6,
            hinge_collision_cost: true,
            ..MppiConfig::default()
        };
        let cost_at = |x: f64, y: f64| {
            trajectory_cost(&vec![[0.0, 0.0, 0.0], [x, y, 0.0]], [x, y], &df, [x, y], &cfg)
        };
        assert!((cost_at(2.25, 1.75) - 100.0 * 0.6).abs() < 1e-12);
        assert!((cost_at(2.75, 1.75) - 100.0 * 0.1).abs() < 1e-9);
        assert_eq!(cost_at(1.25, 1.25), 0.0);
    }

    #[test]
    fn visibility_cost_wraps_bearing_error() {
        let w = empty_world(40, 0.5);
        let df = build_distance_field(&w);
        let cfg = MppiConfig { w_goal: 0.0, w_coll: 0.0, ..MppiConfig::default() };
        // Goal due east, yaw 4 rad: the raw error -4 wraps to 2 pi - 4.
        let states = vec![[0.0; 3], [10.0, 10.0, 4.0]];
        let j = trajectory_cost(&states, [15.0, 10.0], &df, [15.0, 10.0], &cfg);
        let expected = 10.0 * (2.0 * PI - 4.0).powi(2);
        assert!((j - expected).abs() < 1e-9, "got {j}, want {expected}");
    }

    #[test]
    fn equal_costs_give_uniform_weights() {
        let w = importance_weights(&[7.0, 7.0, 7.0, 7.0], 1.0);
        for x in &w {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_ratio_matches_closed_form() {
        for beta in [1.0, 2.0, 0.25] {
            let w = importance_weights(&[0.0, beta * 3.0f64.ln()], beta);
            assert!((w[0] - 0.75).abs() < 1e-12);
            assert!((w[1] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one_and_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        for _ in 0..200 {
            let n = rng.random_range(2..64);
            let scale = 10.0f64.powi(rng.random_range(-3..8));
            let costs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..scale)).collect();
            let beta = rng.random_range(0.01..10.0);
            let w = importance_weights(&costs, beta);
            assert!(w.iter().all(|x| *x >= 0.0));
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum} at scale {scale}");
        }
    }

    #[test]
    fn weights_are_exactly_shift_invariant_on_representable_costs() {
        // Dyadic costs and shift keep every subtraction exact, so the
        // minimum-subtracted exponents are bitwise identical.
        let base = [0.0, 0.5, 2.75, 1.25];
        let shifted: Vec<f64> = base.iter().map(|c| c + 4.0).collect();
        for beta in [0.5, 1.0, 3.0] {
            assert_eq!(importance_weights(&base, beta), importance_weights(&shifted, beta));
        }
    }

    #[test]
    fn vanishing_beta_returns_argmin_sample_and_shifts_nominal() {
        let w = empty_world(40, 0.5);
        let df = build_distance_field(&w);
        let cfg = MppiConfig { samples: 32, beta: 1e-9, ..MppiConfig::default() };
        let state = MppiState::new(&Pose::new(10.0, 10.0, 1.0, 0.3), cfg.horizon);
        let grounded = vec![[14.0, 11.0], [15.0, 11.5], [16.0, 12.0]];

        // Replicate the exact draw stream to recover the sampled sequences.
        let mut replica = ChaCha8Rng::seed_from_u64(99);
        let sequences = sample_control_sequences(&state.nominal, &cfg, &mut replica);
        let goal = grounded[2];
        let argmin = sequences
            .iter()
            .min_by(|a, b| {
                trajectory_cost(&rollout(state.x, a, cfg.dt), goal, &df, goal, &cfg)
                    .total_cmp(&trajectory_cost(&rollout(state.x, b, cfg.dt), goal, &df, goal, &cfg))
            })
            .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (command, shifted) = mppi_step(&state, &grounded, &df, &cfg, &mut rng);
        for axis in 0..3 {
            assert!((command[axis] - argmin[0][axis]).abs() < 1e-6);
        }
        assert_eq!(shifted.len(), cfg.horizon);
        for k in 0..cfg.horizon - 1 {
            for axis in 0..3 {
                assert!((shifted[k][axis] - argmin[k + 1][axis]).abs() < 1e-6);
            }
        }
        assert_eq!(shifted[cfg.horizon - 1], shifted[cfg.horizon - 2], "last entry repeats");
    }

    #[test]
    fn mppi_step_is_deterministic_in_seed() {
        let w = empty_world(32, 0.5);
        let df = build_distance_field(&w);
        let cfg = MppiConfig::default();
        let state = MppiState::new(&Pose::new(8.0, 8.0, 1.0, -0.5), cfg.horizon);
        let grounded = vec![[10.0, 8.0], [11.0, 8.5]];
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let out_a = mppi_step(&state, &grounded, &df, &cfg, &mut a);
        let out_b = mppi_step(&state, &grounded, &df, &cfg, &mut b);
        assert_eq!(out_a, out_b);
    }

    #[test]
    fn uniform_average_of_two_sequences_is_their_mean() {
        // With two samples of equal cost the weights are uniform and the
        // output is the elementwise mean; realized here through the weight
        // helper the step function uses.
        let w = importance_weights(&[3.0, 3.0], 1.0);
        let seq_a = [[1.0, 0.0, 0.5], [0.0, 2.0, 0.0]];
        let seq_b = [[3.0, 4.0, -0.5], [1.0, 0.0, 1.0]];
        let mut avg = [[0.0f64; 3]; 2];
        for (seq, wm) in [seq_a, seq_b].iter().zip(&w) {
            for (o, u) in avg.iter_mut().zip(seq) {
                for axis in 0..3 {
                    o[axis] += wm * u[axis];
                }
            }
        }
        assert_eq!(avg, [[2.0, 2.0, 0.0], [0.5, 1.0, 0.5]]);
    }

    #[test]
    fn grounding_places_frontal_point_at_scan_depth() {
        let w = empty_world(40, 0.5);
        let df = build_distance_field(&w);
        let obs = Pose::new(10.0, 10.0, 1.0, 0.0);
        let triplets = vec![vis(0.0, 0.0, 1.0), vis(0.0, 0.1, 0.5)];
        let scan = flat_scan(9, 5.0);
        let pts = ground_predictions(&triplets, &scan, &CameraModel::default(), &obs, &df, 0.6);
        assert_eq!(pts.len(), 2);
        // Clear field: the full scale survives, placing the far point at
        // exactly the scan depth and the half-range point halfway.
        assert!((pts[0][0] - 15.0).abs() < 1e-12 && (pts[0][1] - 10.0).abs() < 1e-12, "{pts:?}");
        assert!((pts[1][0] - 12.5).abs() < 1e-12 && (pts[1][1] - 10.0).abs() < 1e-12, "{pts:?}");
    }

    #[test]
    fn grounding_scale_stops_at_clearance_loss() {
        // Corridor that pinches two meters ahead of the observer: beyond
        // the pinch every cell is within 0.6 m of a wall.
        let w = ascii_world(
            &[
                "################",
                "#..............#",
                "#..............#",
                "#..............#",
                "#......#########",
                "#..............#",
                "#......#########",
                "#..............#",
                "################",
            ],
            0.5,
            2.5,
        );
        let df = build_distance_field(&w);
        let obs = Pose::new(1.0, 2.75, 1.0, 0.0);
        let triplets = vec![vis(0.0, 0.0, 1.0)];
        let scan = render_depth(&w, &CameraModel::default(), &obs, 65);
        let r = 0.6;
        let pts = ground_predictions(&triplets, &scan, &CameraModel::default(), &obs, &df, r);
        assert_eq!(pts.len(), 1);
        let alpha = pts[0][0] - obs.x;
        assert!(df.at_point(pts[0][0], pts[0][1]) >= r);
        // Maximality: the next candidate scale up violates the clearance.
        let center = scan.u.len() / 2;
        let alpha_max = scan.depths[center];
        let step = alpha_max / 64.0;
        let next = alpha + step;
        assert!(
            next > alpha_max || df.at_point(obs.x + next, obs.y) < r,
            "a larger candidate scale should not have been clear"
        );
        assert!(alpha > 1.0 && alpha < 3.0, "pinch limits the scale near 2 m, got {alpha}");
    }

    #[test]
    fn grounding_empty_without_visible_triplets() {
        let w = empty_world(16, 0.5);
        let df = build_distance_field(&w);
        let obs = Pose::new(4.0, 4.0, 1.0, 0.0);
        let triplets = vec![GuidanceTriplet { p: [0.4, 0.0], v_logit: -10.0, d: 0.7 }];
        let scan = flat_scan(9, 3.0);
        let pts = ground_predictions(&triplets, &scan, &CameraModel::default(), &obs, &df, 0.6);
        assert!(pts.is_empty());
        assert!(ground_predictions(&[], &scan, &CameraModel::default(), &obs, &df, 0.6)
            .is_empty());
    }

    #[test]
    fn grounding_follows_each_visible_ray() {
        // Against live oracle output: one point per visible triplet, each
        // lying along its own ray's ground direction.
        let w = empty_world(40, 0.5);
        let df = build_distance_field(&w);
        let cam = CameraModel::default();
        let mut poses = Vec::new();
        for i in 0..8 {
            poses.push(Pose::new(12.0 + i as f64, 10.0 + 0.3 * i as f64, 1.0, 0.2));
        }
        let traj = crate::world::ReferenceTrajectory {
            poses,
            camera: cam,
            dense_path: vec![[12.0, 10.0], [19.0, 12.1]],
        };
        let obs = Pose::new(10.0, 10.0, 1.0, 0.2);
        let triplets = oracle_guidance(&w, &cam, &obs, &traj);
        let scan = render_depth(&w, &cam, &obs, 65);
        let pts = ground_predictions(&triplets, &scan, &cam, &obs, &df, 0.6);
        let visible = visible_set(&triplets);
        assert!(!visible.is_empty());
        assert_eq!(pts.len(), visible.len());
        let tan_h = cam.tan_half_h();
        for (p, &i) in pts.iter().zip(&visible) {
            let u = triplets[i].p[0];
            let dir = [
                obs.yaw.cos() + u * tan_h * obs.yaw.sin(),
                obs.yaw.sin() - u * tan_h * obs.yaw.cos(),
            ];
            let n = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            let to_p = [p[0] - obs.x, p[1] - obs.y];
            let len = (to_p[0] * to_p[0] + to_p[1] * to_p[1]).sqrt();
            if len > 1e-9 {
                let dot = (to_p[0] * dir[0] / n + to_p[1] * dir[1] / n) / len;
                assert!(dot > 0.9999, "grounded point off its ray: dot {dot}");
            }
        }
    }

    #[test]
    fn height_command_recenters_goal_row() {
        let cfg = MppiConfig::default();
        let low = vec![vis(0.0, 0.4, 1.0)];
        assert!((height_command(&low, 0, &cfg) - (-0.2)).abs() < 1e-15);
        let centered = vec![vis(0.0, 0.0, 1.0)];
        assert_eq!(height_command(&centered, 0, &cfg), 0.0);
        let hidden = vec![GuidanceTriplet { p: [0.0, 0.4], v_logit: -10.0, d: 1.0 }];
        assert_eq!(height_command(&hidden, 0, &cfg), 0.0);
        assert_eq!(height_command(&[], 0, &cfg), 0.0);
    }

    #[test]
    fn closed_loop_reaches_ten_meter_goal() {
        use crate::control::step_holonomic_agent;
        let w = empty_world(60, 0.5);
        let df = build_distance_field(&w);
        let cam = CameraModel::default();
        let n_frames = 11;
        let poses: Vec<Pose> =
            (0..n_frames).map(|i| Pose::new(8.0 + i as f64, 15.0, 1.0, 0.0)).collect();
        let goal = poses[n_frames - 1].xy();
        let traj = crate::world::ReferenceTrajectory {
            poses: poses.clone(),
            camera: cam,
            dense_path: vec![[8.0, 15.0], [8.0 + (n_frames - 1) as f64, 15.0]],
        };
        let cfg = MppiConfig::default();
        let mut successes = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pose = poses[0];
            let mut state = MppiState::new(&pose, cfg.horizon);
            let mut ok = false;
            for _ in 0..1000 {
                let triplets = oracle_guidance(&w, &cam, &pose, &traj);
                let scan = render_depth(&w, &cam, &pose, 65);
                let grounded =
                    ground_predictions(&triplets, &scan, &cam, &pose, &df, cfg.collision_radius);
                let (cmd, nominal) = if grounded.is_empty() {
                    hold_previous_plan(&state.nominal)
                } else {
                    mppi_step(&state, &grounded, &df, &cfg, &mut rng)
                };
                let (next, _) = step_holonomic_agent(
                    &pose,
                    [cmd[0], cmd[1]],
                    cmd[2],
                    0.0,
                    &df,
                    cfg.dt,
                    0.2,
                    [0.1, 2.4],
                );
                pose = next;
                state = MppiState { x: [pose.x, pose.y, pose.yaw], nominal };
                if pose.distance_xy(goal) <= 0.5 {
                    ok = true;
                    break;
                }
            }
            successes += ok as usize;
        }
        assert!(successes >= 99, "only {successes}/100 trials reached the goal");
    }
}

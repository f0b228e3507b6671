//! Episode construction and execution: navigation tasks against a recorded
//! reference trajectory, on/off-trajectory starts, matched and mismatched
//! agent cameras, deterministic suite enumeration, parallel execution, and
//! SR/SPL aggregation.

use crate::control::{
    avoid_obstacles, select_target, step_ground_agent, step_holonomic_agent, yaw_command,
    YawControllerConfig,
};
use crate::geometry::{CameraModel, Pose};
use crate::guidance::{
    heading_opposes_tangent, oracle_guidance, perturb_guidance, visible_set, GuidanceTriplet,
    NoiseModel,
};
use crate::mppi::{
    ground_predictions, height_command, hold_previous_plan, mppi_step, MppiConfig, MppiState,
};
use crate::seeding::{derive_rng, derive_seed};
use crate::world::{
    build_distance_field, generate_world, plan_path, render_depth, sample_query_pose,
    sample_reference_trajectory, InitMode, QueryPoseParams, TrajectoryParams, WorldParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which reference frame is the goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Goal is the last frame.
    ToEnd,
    /// Goal is the first frame, so the route is retraced in reverse.
    ToStart,
    /// Goal is the given frame, 1-based.
    AnyPoint { goal_index: usize },
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::ToEnd => TaskKind::ToEnd,
            Task::ToStart => TaskKind::ToStart,
            Task::AnyPoint { .. } => TaskKind::AnyPoint,
        }
    }
}

/// Task family without the per-episode goal index; used for suite
/// enumeration and report grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ToEnd,
    ToStart,
    AnyPoint,
}

impl TaskKind {
    pub fn label(&self) -> &'static str {
        match self {
            TaskKind::ToEnd => "to_end",
            TaskKind::ToStart => "to_start",
            TaskKind::AnyPoint => "any_point",
        }
    }
}

/// Whether the episode starts on a reference frame or displaced off the
/// route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    On,
    Off,
}

impl Init {
    pub fn label(&self) -> &'static str {
        match self {
            Init::On => "on",
            Init::Off => "off",
        }
    }
}

/// Camera parameter varied by a mismatch sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Fov,
    Aspect,
    Height,
}

impl SweepParameter {
    pub fn label(&self) -> &'static str {
        match self {
            SweepParameter::Fov => "fov",
            SweepParameter::Aspect => "aspect",
            SweepParameter::Height => "height",
        }
    }

    /// Largest offset magnitude the protocol uses, in native units
    /// (radians for fov, ratio for aspect, meters for height).
    pub fn max_magnitude(&self) -> f64 {
        match self {
            SweepParameter::Fov => CROSS_FOV_MAX,
            SweepParameter::Aspect => CROSS_ASPECT_MAX,
            SweepParameter::Height => CROSS_HEIGHT_MAX,
        }
    }

    /// Converts a native-unit magnitude into the unit used at the config
    /// boundary and in reports: degrees for fov, native units otherwise.
    pub fn display_magnitude(&self, native: f64) -> f64 {
        match self {
            SweepParameter::Fov => native.to_degrees(),
            _ => native,
        }
    }
}

/// How the agent camera relates to the recorder camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraMode {
    /// Agent camera equals the recorder camera.
    Matched,
    /// All three parameters perturbed, deterministic in the seed.
    Cross { seed: u64 },
    /// Exactly one parameter offset by a signed magnitude.
    Sweep { parameter: SweepParameter, magnitude: f64 },
}

impl CameraMode {
    /// Stable grouping label: "matched", "cross", or
    /// "sweep_<param>_<magnitude>" with the absolute magnitude printed to
    /// three decimals (degrees for fov, native units otherwise).
    pub fn label(&self) -> String {
        match self {
            CameraMode::Matched => "matched".to_string(),
            CameraMode::Cross { .. } => "cross".to_string(),
            CameraMode::Sweep { parameter, magnitude } => {
                let shown = match parameter {
                    SweepParameter::Fov => magnitude.abs().to_degrees(),
                    _ => magnitude.abs(),
                };
                format!("sweep_{}_{:.3}", parameter.label(), shown)
            }
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            CameraMode::Matched => "matched",
            CameraMode::Cross { .. } => "cross",
            CameraMode::Sweep { .. } => "sweep",
        }
    }
}

/// Camera-mode family for suite enumeration; per-episode seeds and signs
/// are drawn during [`build_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraModeKind {
    Matched,
    Cross,
    /// Magnitude is unsigned here; the sign is randomized per episode.
    Sweep { parameter: SweepParameter, magnitude: f64 },
}

/// Which controller closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Proportional yaw law alone.
    Yaw,
    /// Yaw law wrapped by depth-scan obstacle avoidance.
    YawAvoid,
    /// Sampling-based path-integral controller.
    Mppi,
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::Yaw => "yaw",
            ControllerKind::YawAvoid => "yaw_avoid",
            ControllerKind::Mppi => "mppi",
        }
    }
}

/// Everything needed to run one episode reproducibly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Position in the suite; also the stream index for derived seeds.
    pub episode_id: u64,
    pub task: Task,
    pub init: Init,
    pub camera_mode: CameraMode,
    pub controller: ControllerKind,
    pub world_seed: u64,
    pub trajectory_seed: u64,
    /// Seed for the off-trajectory start sample (unused by pure on-modes).
    pub query_seed: u64,
    /// Seed for the guidance perturbation stream.
    pub noise_seed: u64,
    /// Seed for the controller's sampling stream (MPPI).
    pub control_seed: u64,
    pub noise: NoiseModel,
    pub step_cap: usize,
    /// Goal ball radius, meters; position-only, yaw-free.
    pub success_radius: f64,
    pub agent_radius: f64,
    /// Rays per depth scan (avoidance and grounding).
    pub depth_rays: usize,
    pub recorder_camera: CameraModel,
    pub world: WorldParams,
    pub trajectory: TrajectoryParams,
    pub query: QueryPoseParams,
    pub yaw: YawControllerConfig,
    pub mppi: MppiConfig,
}

impl EpisodeConfig {
    pub fn validate(&self) {
        assert!(self.step_cap >= 1, "EpisodeConfig: step_cap must be at least 1");
        assert!(self.success_radius > 0.0, "EpisodeConfig: success_radius must be positive");
        assert!(self.agent_radius > 0.0, "EpisodeConfig: agent_radius must be positive");
        assert!(self.depth_rays >= 8, "EpisodeConfig: need at least 8 depth rays");
        if let Task::AnyPoint { goal_index } = self.task {
            assert!(goal_index >= 1, "EpisodeConfig: goal index is 1-based");
        }
        self.noise.validate();
        self.yaw.validate();
        self.mppi.validate();
    }
}

/// Outcome of a completed episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Latched the first instant the agent position entered the goal ball.
    pub success: bool,
    pub steps: usize,
    /// Planar arc length actually traveled (post-clamp motion), meters.
    pub path_length: f64,
    /// Grid-geodesic start-to-goal distance, meters.
    pub geodesic: f64,
    /// Steps whose motion was clamped by the clearance boundary.
    pub collisions: usize,
    pub final_distance_to_goal: f64,
    pub min_distance_to_goal: f64,
    /// Distance from the start to the reference route polyline, meters.
    pub init_distance: f64,
}

/// One suite entry: either a result or the reason the episode could not
/// run (sampling failure, unreachable goal index). Invalid episodes are
/// excluded from aggregates and counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub result: Option<EpisodeResult>,
    pub invalid: Option<String>,
    pub config: EpisodeConfig,
}

/// One controller step of the optional guidance trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub episode_id: u64,
    pub step: usize,
    pub pose: Pose,
    pub triplets: Vec<GuidanceTriplet>,
    /// Executed command: world-frame planar velocity, yaw rate, vertical
    /// speed.
    pub command: [f64; 4],
}

/// Offset distributions of the mismatched camera, as (mean, max) of the
/// absolute offset: 20/60 degrees of horizontal FOV, 0.5/1.5 of aspect
/// ratio, 0.5/1.2 m of mounting height.
const CROSS_FOV_MEAN: f64 = 20.0 * PI / 180.0;
const CROSS_FOV_MAX: f64 = 60.0 * PI / 180.0;
const CROSS_ASPECT_MEAN: f64 = 0.5;
const CROSS_ASPECT_MAX: f64 = 1.5;
const CROSS_HEIGHT_MEAN: f64 = 0.5;
const CROSS_HEIGHT_MAX: f64 = 1.2;

/// Validity ranges the perturbed camera is clamped into.
const FOV_RANGE: [f64; 2] = [10.0 * PI / 180.0, 170.0 * PI / 180.0];
const ASPECT_RANGE: [f64; 2] = [0.2, 5.0];
const HEIGHT_RANGE: [f64; 2] = [0.1, 2.4];

/// Signed offset with |offset| half-normal at the given mean, capped at
/// max. The half-normal scale is mean * sqrt(pi/2) so the pre-cap mean of
/// the magnitude equals `mean`; the cap at 3x (fov, aspect) or 2.4x
/// (height) the mean shifts it by under 3 percent.
fn signed_offset(rng: &mut ChaCha8Rng, mean: f64, max: f64) -> f64 {
    let sigma = mean * (PI / 2.0).sqrt();
    let z: f64 = StandardNormal.sample(rng);
    let magnitude = (sigma * z.abs()).min(max);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Draws a mismatched agent camera around the recorder camera. All three
/// parameters are perturbed independently (fov, then aspect, then height;
/// the order is part of the determinism contract) and clamped to validity
/// ranges. Deterministic in `seed`.
pub fn sample_cross_camera(base: &CameraModel, seed: u64) -> CameraModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fov = (base.fov_h + signed_offset(&mut rng, CROSS_FOV_MEAN, CROSS_FOV_MAX))
        .clamp(FOV_RANGE[0], FOV_RANGE[1]);
    let aspect = (base.aspect + signed_offset(&mut rng, CROSS_ASPECT_MEAN, CROSS_ASPECT_MAX))
        .clamp(ASPECT_RANGE[0], ASPECT_RANGE[1]);
    let height = (base.mount_height + signed_offset(&mut rng, CROSS_HEIGHT_MEAN, CROSS_HEIGHT_MAX))
        .clamp(HEIGHT_RANGE[0], HEIGHT_RANGE[1]);
    CameraModel::new(fov, aspect, height)
}

/// Offsets exactly one camera parameter by the signed magnitude, clamped
/// to the validity range; the other parameters stay bit-identical.
pub fn apply_sweep(base: &CameraModel, parameter: SweepParameter, magnitude: f64) -> CameraModel {
    let mut cam = *base;
    match parameter {
        SweepParameter::Fov => {
            cam.fov_h = (cam.fov_h + magnitude).clamp(FOV_RANGE[0], FOV_RANGE[1]);
        }
        SweepParameter::Aspect => {
            cam.aspect = (cam.aspect + magnitude).clamp(ASPECT_RANGE[0], ASPECT_RANGE[1]);
        }
        SweepParameter::Height => {
            cam.mount_height = (cam.mount_height + magnitude).clamp(HEIGHT_RANGE[0], HEIGHT_RANGE[1]);
        }
    }
    cam
}

/// Resolves the agent camera for a camera mode.
pub fn agent_camera(recorder: &CameraModel, mode: &CameraMode) -> CameraModel {
    match mode {
        CameraMode::Matched => *recorder,
        CameraMode::Cross { seed } => sample_cross_camera(recorder, *seed),
        CameraMode::Sweep { parameter, magnitude } => apply_sweep(recorder, *parameter, *magnitude),
    }
}

/// Distance from a point to a polyline (minimum over its segments).
pub fn point_to_polyline(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    assert!(!poly.is_empty(), "point_to_polyline: empty polyline");
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    if poly.len() == 1 {
        return dist(p, poly[0]);
    }
    let mut best = f64::INFINITY;
    for seg in poly.windows(2) {
        let (ax, ay) = (seg[0][0], seg[0][1]);
        let (dx, dy) = (seg[1][0] - ax, seg[1][1] - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p[0] - ax) * dx + (p[1] - ay) * dy) / len2).clamp(0.0, 1.0)
        };
        best = best.min(dist(p, [ax + t * dx, ay + t * dy]));
    }
    best
}

/// Runs one episode to success or the step cap.
pub fn run_episode(cfg: &EpisodeConfig) -> EpisodeRecord {
    run_episode_impl(cfg, None)
}

/// Like [`run_episode`], appending one [`TraceStep`] per controller step.
pub fn run_episode_traced(cfg: &EpisodeConfig, trace: &mut Vec<TraceStep>) -> EpisodeRecord {
    run_episode_impl(cfg, Some(trace))
}

fn run_episode_impl(cfg: &EpisodeConfig, mut trace: Option<&mut Vec<TraceStep>>) -> EpisodeRecord {
    cfg.validate();
    let invalid = |reason: String| EpisodeRecord {
        result: None,
        invalid: Some(reason),
        config: cfg.clone(),
    };

    let world = match generate_world(cfg.world_seed, &cfg.world) {
        Ok(w) => w,
        Err(e) => return invalid(format!("world generation: {e}")),
    };
    let df = build_distance_field(&world);
    let traj = match sample_reference_trajectory(
        &world,
        &df,
        cfg.trajectory_seed,
        &cfg.recorder_camera,
        &cfg.trajectory,
    ) {
        Ok(t) => t,
        Err(e) => return invalid(format!("trajectory sampling: {e}")),
    };
    let n = traj.len();
    // 0-based goal frame.
    let goal_index = match cfg.task {
        Task::ToEnd => n - 1,
        Task::ToStart => 0,
        Task::AnyPoint { goal_index } => {
            if goal_index < 1 || goal_index > n {
                return invalid(format!("goal index {goal_index} outside 1..={n}"));
            }
            goal_index - 1
        }
    };
    let camera = agent_camera(&cfg.recorder_camera, &cfg.camera_mode);

    // On-trajectory starts sit on frame 1 (forward) or frame N (backward);
    // the any-point task has no natural end to start from, so its on-mode
    // snaps an off-trajectory sample to the nearest frame.
    let init_mode = match (cfg.init, cfg.task) {
        (Init::Off, _) | (Init::On, Task::AnyPoint { .. }) => InitMode::Off,
        (Init::On, Task::ToEnd) => InitMode::OnFirst,
        (Init::On, Task::ToStart) => InitMode::OnLast,
    };
    let sampled =
        match sample_query_pose(&world, &df, &traj, init_mode, cfg.query_seed, &camera, &cfg.query)
        {
            Ok(p) => p,
            Err(e) => return invalid(format!("start sampling: {e}")),
        };
    let start = if cfg.init == Init::On && matches!(cfg.task, Task::AnyPoint { .. }) {
        let nearest = traj
            .poses
            .iter()
            .min_by(|a, b| sampled.distance_xy(a.xy()).total_cmp(&sampled.distance_xy(b.xy())))
            .expect("trajectory has at least 2 poses");
        Pose::new(nearest.x, nearest.y, camera.mount_height, nearest.yaw)
    } else {
        sampled
    };

    let goal_xy = traj.poses[goal_index].xy();
    let geodesic = match plan_path(&world, &df, start.xy(), goal_xy, cfg.agent_radius) {
        Ok(path) => path.geodesic_length,
        Err(e) => return invalid(format!("goal planning: {e}")),
    };
    let init_distance = point_to_polyline(start.xy(), &traj.dense_path);

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed);
    let mut control_rng = ChaCha8Rng::seed_from_u64(cfg.control_seed);
    let mut mppi_state = MppiState::new(&start, cfg.mppi.horizon);
    let z_range = [0.1, (world.obstacle_height() - 0.1).max(0.1)];

    let mut pose = start;
    let mut steps = 0usize;
    let mut path_length = 0.0f64;
    let mut collisions = 0usize;
    let mut min_distance = f64::INFINITY;
    let success = loop {
        let d = pose.distance_xy(goal_xy);
        min_distance = min_distance.min(d);
        // Success is latched before the cap is checked, so raising the cap
        // can never turn a success into a failure.
        if d <= cfg.success_radius {
            break true;
        }
        if steps >= cfg.step_cap {
            break false;
        }

        let clean = oracle_guidance(&world, &camera, &pose, &traj);
        let opposing = heading_opposes_tangent(&pose, &traj);
        let triplets = perturb_guidance(&clean, &cfg.noise, &mut noise_rng, opposing);

        let (next, collided, command) = match cfg.controller {
            ControllerKind::Yaw | ControllerKind::YawAvoid => {
                let target = select_target(&triplets, goal_index, &cfg.yaw);
                let mut cmd = yaw_command(target.as_ref(), &cfg.yaw);
                if cfg.controller == ControllerKind::YawAvoid {
                    let scan = render_depth(&world, &camera, &pose, cfg.depth_rays);
                    cmd = avoid_obstacles(cmd, &scan, cfg.agent_radius, cfg.yaw.dt, cfg.yaw.omega_max);
                }
                let (next, collided) =
                    step_ground_agent(&pose, &cmd, &df, cfg.yaw.dt, cfg.agent_radius);
                let world_cmd = [
                    cmd.v_forward * next.yaw.cos(),
                    cmd.v_forward * next.yaw.sin(),
                    cmd.omega,
                    cmd.v_z,
                ];
                (next, collided, world_cmd)
            }
            ControllerKind::Mppi => {
                let scan = render_depth(&world, &camera, &pose, cfg.depth_rays);
                let grounded = ground_predictions(
                    &triplets,
                    &scan,
                    &camera,
                    &pose,
                    &df,
                    cfg.mppi.collision_radius,
                );
                mppi_state.x = [pose.x, pose.y, pose.yaw];
                let (u, nominal) = if grounded.is_empty() {
                    hold_previous_plan(&mppi_state.nominal)
                } else {
                    mppi_step(&mppi_state, &grounded, &df, &cfg.mppi, &mut control_rng)
                };
                mppi_state.nominal = nominal;
                // Height regulation tracks the same grounded point the
                // planner steers toward; with nothing grounded it falls
                // back to the goal frame's triplet.
                let i_vis = visible_set(&triplets);
                let height_index = if grounded.is_empty() {
                    goal_index
                } else {
                    i_vis[cfg.mppi.goal_point_rank.min(i_vis.len()) - 1]
                };
                let v_z = height_command(&triplets, height_index, &cfg.mppi);
                let (next, collided) = step_holonomic_agent(
                    &pose,
                    [u[0], u[1]],
                    u[2],
                    v_z,
                    &df,
                    cfg.mppi.dt,
                    cfg.agent_radius,
                    z_range,
                );
                (next, collided, [u[0], u[1], u[2], v_z])
            }
        };

        if let Some(out) = trace.as_deref_mut() {
            out.push(TraceStep {
                episode_id: cfg.episode_id,
                step: steps,
                pose,
                triplets: triplets.clone(),
                command,
            });
        }
        path_length += pose.distance_xy(next.xy());
        if collided {
            collisions += 1;
        }
        pose = next;
        steps += 1;
    };

    EpisodeRecord {
        result: Some(EpisodeResult {
            success,
            steps,
            path_length,
            geodesic,
            collisions,
            final_distance_to_goal: pose.distance_xy(goal_xy),
            min_distance_to_goal: min_distance,
            init_distance,
        }),
        invalid: None,
        config: cfg.clone(),
    }
}

/// Fraction of successful episodes.
pub fn success_rate(results: &[EpisodeResult]) -> f64 {
    assert!(!results.is_empty(), "success_rate: empty result set");
    results.iter().filter(|r| r.success).count() as f64 / results.len() as f64
}

/// Success weighted by path length: mean over episodes of
/// success * l / max(p, l), where l is the geodesic start-goal distance and
/// p the traveled path length. A degenerate start (l = 0) contributes the
/// bare success indicator.
pub fn spl(results: &[EpisodeResult]) -> f64 {
    assert!(!results.is_empty(), "spl: empty result set");
    let total: f64 = results
        .iter()
        .map(|r| {
            if !r.success {
                0.0
            } else if r.geodesic == 0.0 {
                1.0
            } else {
                r.geodesic / r.path_length.max(r.geodesic)
            }
        })
        .sum();
    total / results.len() as f64
}

/// Results of the valid episodes, in input order.
pub fn valid_results(records: &[EpisodeRecord]) -> Vec<EpisodeResult> {
    records.iter().filter_map(|r| r.result).collect()
}

/// Declarative description of an evaluation suite. The episode grid crosses
/// {tasks} x {inits}, appends the any-point setting when enabled, and runs
/// every setting under every camera mode with `trajectories` reference
/// routes and `initial_poses` start slots each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub master_seed: u64,
    pub trajectories: usize,
    /// Start slots per (setting, trajectory).
    pub initial_poses: usize,
    /// Directional tasks crossed with `inits`. Must not contain the
    /// any-point family; that is enabled by `any_point`.
    pub tasks: Vec<TaskKind>,
    pub inits: Vec<Init>,
    /// Appends one any-point setting (per-episode uniform goal frame,
    /// started on the frame nearest an off-trajectory sample).
    pub any_point: bool,
    pub camera_modes: Vec<CameraModeKind>,
    pub controller: ControllerKind,
    pub noise: NoiseModel,
    pub step_cap: usize,
    pub success_radius: f64,
    pub agent_radius: f64,
    pub depth_rays: usize,
    pub recorder_camera: CameraModel,
    pub world: WorldParams,
    pub trajectory: TrajectoryParams,
    pub query: QueryPoseParams,
    pub yaw: YawControllerConfig,
    pub mppi: MppiConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            trajectories: 50,
            initial_poses: 2,
            tasks: vec![TaskKind::ToEnd, TaskKind::ToStart],
            inits: vec![Init::On, Init::Off],
            any_point: true,
            camera_modes: vec![CameraModeKind::Matched, CameraModeKind::Cross],
            controller: ControllerKind::YawAvoid,
            noise: NoiseModel::ZERO,
            step_cap: 1000,
            success_radius: 0.5,
            agent_radius: 0.2,
            depth_rays: 64,
            recorder_camera: CameraModel::default(),
            world: WorldParams::default(),
            trajectory: TrajectoryParams::default(),
            query: QueryPoseParams::default(),
            yaw: YawControllerConfig::default(),
            mppi: MppiConfig::default(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) {
        assert!(self.trajectories >= 1, "SuiteConfig: need at least 1 trajectory");
        assert!(self.initial_poses >= 1, "SuiteConfig: need at least 1 initial pose");
        assert!(
            self.tasks.iter().all(|t| *t != TaskKind::AnyPoint),
            "SuiteConfig: any-point episodes are enabled by the any_point flag, not the task list"
        );
        assert!(!self.camera_modes.is_empty(), "SuiteConfig: need at least 1 camera mode");
        assert!(
            !self.tasks.is_empty() && !self.inits.is_empty() || self.any_point,
            "SuiteConfig: the episode grid is empty"
        );
    }

    /// Task/init settings in enumeration order.
    fn settings(&self) -> Vec<(TaskKind, Init)> {
        let mut settings: Vec<(TaskKind, Init)> = Vec::new();
        for &task in &self.tasks {
            for &init in &self.inits {
                settings.push((task, init));
            }
        }
        if self.any_point {
            settings.push((TaskKind::AnyPoint, Init::On));
        }
        settings
    }
}

/// How many seed pairs are tried per trajectory slot before giving up and
/// letting the episodes surface as invalid.
const SUITE_SAMPLING_ATTEMPTS: usize = 5;

/// World/trajectory seed pairs for each trajectory slot, plus the frame
/// count needed to draw any-point goals. Seeds are retried a few times so
/// occasional sampling failures do not hollow out the grid; a slot that
/// fails every attempt keeps its last seeds and reports 0 frames.
fn suite_trajectory_seeds(suite: &SuiteConfig) -> Vec<(u64, u64, usize)> {
    (0..suite.trajectories)
        .map(|traj_idx| {
            let mut last = (0, 0, 0);
            for attempt in 0..SUITE_SAMPLING_ATTEMPTS {
                let ws =
                    derive_seed(suite.master_seed, traj_idx as u64, &format!("world-{attempt}"));
                let ts = derive_seed(
                    suite.master_seed,
                    traj_idx as u64,
                    &format!("trajectory-{attempt}"),
                );
                last = (ws, ts, 0);
                let Ok(world) = generate_world(ws, &suite.world) else { continue };
                let df = build_distance_field(&world);
                match sample_reference_trajectory(
                    &world,
                    &df,
                    ts,
                    &suite.recorder_camera,
                    &suite.trajectory,
                ) {
                    Ok(t) => return (ws, ts, t.len()),
                    Err(_) => continue,
                }
            }
            last
        })
        .collect()
}

/// Enumerates the full episode grid deterministically: camera modes, then
/// task/init settings, then trajectories, then start slots, with episode
/// ids assigned sequentially in that order. All per-episode seeds derive
/// from (master seed, episode id, stream label), so the grid is identical
/// across runs and worker counts.
pub fn build_suite(suite: &SuiteConfig) -> Vec<EpisodeConfig> {
    suite.validate();
    let traj_seeds = suite_trajectory_seeds(suite);
    let settings = suite.settings();
    let mut configs = Vec::new();
    let mut episode_id: u64 = 0;
    for camera_kind in &suite.camera_modes {
        for &(task_kind, init) in &settings {
            for &(world_seed, trajectory_seed, n_frames) in &traj_seeds {
                for _slot in 0..suite.initial_poses {
                    let task = match task_kind {
                        TaskKind::ToEnd => Task::ToEnd,
                        TaskKind::ToStart => Task::ToStart,
                        TaskKind::AnyPoint => {
                            let mut rng =
                                derive_rng(suite.master_seed, episode_id, "anypoint-goal");
                            // A slot whose sampling failed has no frames;
                            // index 1 keeps the config well-formed and the
                            // episode reports invalid anyway.
                            Task::AnyPoint {
                                goal_index: rng.random_range(1..=n_frames.max(1)),
                            }
                        }
                    };
                    let camera_mode = match camera_kind {
                        CameraModeKind::Matched => CameraMode::Matched,
                        CameraModeKind::Cross => CameraMode::Cross {
                            seed: derive_seed(suite.master_seed, episode_id, "camera"),
                        },
                        CameraModeKind::Sweep { parameter, magnitude } => {
                            let mut rng = derive_rng(suite.master_seed, episode_id, "sweep-sign");
                            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                            CameraMode::Sweep { parameter: *parameter, magnitude: sign * magnitude }
                        }
                    };
                    configs.push(EpisodeConfig {
                        episode_id,
                        task,
                        init,
                        camera_mode,
                        controller: suite.controller,
                        world_seed,
                        trajectory_seed,
                        query_seed: derive_seed(suite.master_seed, episode_id, "query"),
                        noise_seed: derive_seed(suite.master_seed, episode_id, "noise"),
                        control_seed: derive_seed(suite.master_seed, episode_id, "control"),
                        noise: suite.noise,
                        step_cap: suite.step_cap,
                        success_radius: suite.success_radius,
                        agent_radius: suite.agent_radius,
                        depth_rays: suite.depth_rays,
                        recorder_camera: suite.recorder_camera,
                        world: suite.world,
                        trajectory: suite.trajectory,
                        query: suite.query,
                        yaw: suite.yaw,
                        mppi: suite.mppi,
                    });
                    episode_id += 1;
                }
            }
        }
    }
    configs
}

/// Runs episodes on a bounded worker pool and returns the records sorted
/// by episode id. Every episode is self-contained (all seeds live in its
/// config), so the output is independent of the worker count.
pub fn run_suite(configs: &[EpisodeConfig], workers: usize) -> Vec<EpisodeRecord> {
    assert!(workers >= 1, "run_suite: need at least 1 worker");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool construction");
    let mut records: Vec<EpisodeRecord> =
        pool.install(|| configs.par_iter().map(run_episode).collect());
    records.sort_by_key(|r| r.config.episode_id);
    records
}

/// [`run_suite`] with per-episode guidance traces. The trace stream is
/// sorted by (episode id, step), so it too is independent of the worker
/// count.
pub fn run_suite_traced(
    configs: &[EpisodeConfig],
    workers: usize,
) -> (Vec<EpisodeRecord>, Vec<TraceStep>) {
    assert!(workers >= 1, "run_suite_traced: need at least 1 worker");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool construction");
    let mut paired: Vec<(EpisodeRecord, Vec<TraceStep>)> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let mut steps = Vec::new();
                let record = run_episode_traced(cfg, &mut steps);
                (record, steps)
            })
            .collect()
    });
    paired.sort_by_key(|(record, _)| record.config.episode_id);
    let mut records = Vec::with_capacity(paired.len());
    let mut trace = Vec::new();
    for (record, steps) in paired {
        records.push(record);
        trace.extend(steps);
    }
    (records, trace)
}

/// Records for one sweep magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBucket {
    /// Unsigned offset magnitude in the parameter's native units.
    pub magnitude: f64,
    pub records: Vec<EpisodeRecord>,
}

/// Re-runs the base suite with exactly one camera parameter offset per
/// magnitude (sign randomized per episode, other parameters matched). The
/// suite's own camera modes are replaced, so buckets share episode ids,
/// seeds, and worlds with each other and with a matched-camera run.
pub fn sweep_mismatch(
    parameter: SweepParameter,
    magnitudes: &[f64],
    base: &SuiteConfig,
    workers: usize,
) -> Vec<SweepBucket> {
    magnitudes
        .iter()
        .map(|&magnitude| {
            assert!(
                (0.0..=parameter.max_magnitude()).contains(&magnitude),
                "sweep magnitude {magnitude} outside [0, {}] for {}",
                parameter.max_magnitude(),
                parameter.label()
            );
            let mut suite = base.clone();
            suite.camera_modes = vec![CameraModeKind::Sweep { parameter, magnitude }];
            let configs = build_suite(&suite);
            SweepBucket { magnitude, records: run_suite(&configs, workers) }
        })
        .collect()
}

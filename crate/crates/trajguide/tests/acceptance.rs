//! Protocol-level checks run end to end against the public API: ceiling
//! performance of the oracle-guided controller, degradation shapes under
//! noise and camera mismatch, numerical contracts of the planner stack, and
//! bitwise determinism of the parallel runner.
//!
//! Each criterion prints one verdict line (visible with `--nocapture`); the
//! test fails if any criterion fails, with all verdicts in the panic message.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::time::Instant;
use trajguide::config::RunConfig;
use trajguide::eval::{
    build_suite, run_suite, success_rate, spl, sweep_mismatch, valid_results, CameraModeKind,
    Init, SuiteConfig, SweepParameter, TaskKind,
};
use trajguide::geometry::{back_project, project, CameraModel, Pose, Projection};
use trajguide::guidance::{GuidanceTriplet, NoiseModel};
use trajguide::mppi::{importance_weights, mppi_step, trajectory_cost, MppiConfig, MppiState};
use trajguide::report::{
    init_distance_buckets, records_to_jsonl, smooth_buckets, CurveBucket, SMOOTHING_WINDOW,
};
use trajguide::world::{
    build_distance_field, generate_world, plan_path, DistanceField, World, WorldError,
    WorldParams, SATURATION_RADIUS,
};

/// Fails the enclosing criterion with a formatted message.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

type Verdict = Result<String, String>;

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4)
}

/// The forward oracle-ceiling suite: 50 routes x 2 start slots, end-goal
/// task, on-trajectory starts, matched camera, exact guidance, reactive
/// controller with avoidance.
fn ceiling_suite() -> SuiteConfig {
    SuiteConfig {
        tasks: vec![TaskKind::ToEnd],
        inits: vec![Init::On],
        any_point: false,
        camera_modes: vec![CameraModeKind::Matched],
        ..SuiteConfig::default()
    }
}

fn suite_sr_spl(suite: &SuiteConfig) -> (f64, f64, usize, usize) {
    let records = run_suite(&build_suite(suite), workers());
    let results = valid_results(&records);
    let invalid = records.len() - results.len();
    (success_rate(&results), spl(&results), results.len(), invalid)
}

/// Criterion 1: the reactive controller with exact guidance solves the
/// forward protocol nearly perfectly, within a wall-clock budget.
fn forward_ceiling() -> Result<(f64, String), String> {
    let start = Instant::now();
    let (sr, spl, n, invalid) = suite_sr_spl(&ceiling_suite());
    let elapsed = start.elapsed().as_secs_f64();
    ensure!(invalid == 0, "{invalid} episodes failed sampling");
    ensure!(n == 100, "expected 100 episodes, got {n}");
    ensure!(sr >= 0.95, "SR {sr:.3} below 0.95");
    ensure!(spl >= 0.85, "SPL {spl:.3} below 0.85");
    ensure!(elapsed < 300.0, "suite took {elapsed:.0} s, budget 300 s");
    Ok((sr, format!("SR={sr:.3} SPL={spl:.3} n={n} in {elapsed:.1}s")))
}

/// Criterion 2: retracing the same routes in reverse scores within 5 points
/// of forward.
fn backward_parity(forward_sr: f64) -> Verdict {
    let suite = SuiteConfig { tasks: vec![TaskKind::ToStart], ..ceiling_suite() };
    let (sr, spl, n, invalid) = suite_sr_spl(&suite);
    ensure!(invalid == 0, "{invalid} episodes failed sampling");
    let gap = (forward_sr - sr).abs();
    ensure!(gap <= 0.05, "backward SR {sr:.3} vs forward {forward_sr:.3}: gap {gap:.3} > 0.05");
    Ok(format!("backward SR={sr:.3} SPL={spl:.3} n={n}, gap {gap:.3}"))
}

/// Off-trajectory suite under a fixed nonzero noise model, sized to put at
/// least 400 episodes on the init-distance axis.
fn off_trajectory_suite() -> SuiteConfig {
    SuiteConfig {
        initial_poses: 9,
        tasks: vec![TaskKind::ToEnd],
        inits: vec![Init::Off],
        any_point: false,
        camera_modes: vec![CameraModeKind::Matched],
        noise: NoiseModel {
            sigma_p: 0.15,
            flip_prob: 0.2,
            sigma_d: 0.1,
            backward_degradation: 1.5,
        },
        ..SuiteConfig::default()
    }
}

fn bucket_at(buckets: &[CurveBucket], distance: f64) -> Option<&CurveBucket> {
    buckets.iter().find(|b| b.lo <= distance && distance < b.lo + 0.5 && b.n > 0)
}

/// Criterion 3: success degrades with init distance; the smoothed bucket
/// curve is non-increasing and drops at least 10 points from 2 m to 8 m.
fn off_trajectory_degradation() -> Verdict {
    let records = run_suite(&build_suite(&off_trajectory_suite()), workers());
    let n_valid = valid_results(&records).len();
    ensure!(n_valid >= 400, "only {n_valid} valid off-trajectory episodes, need 400");

    let raw = init_distance_buckets(&records);
    let smoothed = smooth_buckets(&raw, SMOOTHING_WINDOW);
    let curve: Vec<&CurveBucket> = smoothed.iter().filter(|b| b.n > 0).collect();
    ensure!(curve.len() >= 2, "curve has {} populated buckets", curve.len());
    for pair in curve.windows(2) {
        ensure!(
            pair[1].sr() <= pair[0].sr(),
            "smoothed SR rises from {:.3} at {:.1} m to {:.3} at {:.1} m",
            pair[0].sr(),
            pair[0].lo,
            pair[1].sr(),
            pair[1].lo
        );
    }
    let near = bucket_at(&smoothed, 2.0).ok_or_else(|| "no data in the 2 m bucket".to_string())?;
    let far = bucket_at(&smoothed, 8.0).ok_or_else(|| "no data in the 8 m bucket".to_string())?;
    ensure!(
        near.sr() >= far.sr() + 0.10,
        "SR(2m)={:.3} (n={}) vs SR(8m)={:.3} (n={}): drop below 10 points",
        near.sr(),
        near.n,
        far.sr(),
        far.n
    );
    Ok(format!(
        "n={n_valid}, {} buckets non-increasing, SR(2m)={:.3} SR(8m)={:.3}",
        curve.len(),
        near.sr(),
        far.sr()
    ))
}

fn sweep_sr(parameter: SweepParameter, magnitudes: &[f64]) -> Vec<f64> {
    sweep_mismatch(parameter, magnitudes, &ceiling_suite(), workers())
        .iter()
        .map(|bucket| success_rate(&valid_results(&bucket.records)))
        .collect()
}

/// Criterion 4: mounting-height mismatch of 1.2 m hurts (poses exit the
/// vertical frustum and occlusion changes), while a 20 degree FOV mismatch
/// barely matters.
fn mismatch_sensitivity() -> Verdict {
    let height = sweep_sr(SweepParameter::Height, &[0.0, 1.2]);
    ensure!(
        height[1] < height[0],
        "height offset 1.2 m: SR {:.3} not strictly below baseline {:.3}",
        height[1],
        height[0]
    );
    let fov = sweep_sr(SweepParameter::Fov, &[0.0, 20f64.to_radians()]);
    let gap = (fov[1] - fov[0]).abs();
    ensure!(
        gap <= 0.05,
        "fov offset 20 deg: SR {:.3} vs baseline {:.3}, gap {gap:.3} > 0.05",
        fov[1],
        fov[0]
    );
    Ok(format!(
        "height SR {:.3} -> {:.3}, fov SR {:.3} -> {:.3}",
        height[0], height[1], fov[0], fov[1]
    ))
}

/// A pose with at least 1 m of clearance in the given world.
fn clear_pose(world: &World, df: &DistanceField) -> Pose {
    for iy in 0..world.height() {
        for ix in 0..world.width() {
            if df.at_cell(ix, iy) >= 1.0 {
                let c = world.cell_center(ix, iy);
                return Pose::new(c[0], c[1], 1.0, 0.3);
            }
        }
    }
    panic!("no clear cell in world");
}

/// Criterion 5: importance-weight identities and sampling throughput.
fn planner_numerics() -> Verdict {
    // Weights sum to one for arbitrary costs.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let costs: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..500.0)).collect();
        let sum: f64 = importance_weights(&costs, 1.0).iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-12, "weights sum {sum} off by more than 1e-12");
    }

    // Adding a constant to every cost leaves the weights bitwise unchanged
    // (costs and shift chosen representable so the additions are exact).
    let base = [3.0, 1.0, 2.0, 9.0, 4.5];
    let shifted: Vec<f64> = base.iter().map(|j| j + 1024.0).collect();
    ensure!(
        importance_weights(&base, 0.7) == importance_weights(&shifted, 0.7),
        "uniform cost shift changed the weights"
    );

    // As beta shrinks the weights collapse onto the argmin.
    let w = importance_weights(&[3.0, 1.0, 2.0], 1e-3);
    ensure!(w[1] >= 1.0 - 1e-6, "argmin weight {} below 1 - 1e-6", w[1]);
    ensure!(w[0] <= 1e-6 && w[2] <= 1e-6, "non-argmin weights {} {} above 1e-6", w[0], w[2]);

    // Exact two-point weight example: costs (0, beta ln 3) split 3:1.
    let w = importance_weights(&[0.0, 3f64.ln()], 1.0);
    ensure!(
        (w[0] - 0.75).abs() <= 1e-12 && (w[1] - 0.25).abs() <= 1e-12,
        "weights ({}, {}) not (0.75, 0.25)",
        w[0],
        w[1]
    );

    // A state sitting on the goal, facing the guidance point, in clear
    // space, costs exactly zero.
    let world = generate_world(3, &WorldParams::default()).expect("world");
    let df = build_distance_field(&world);
    let pose = clear_pose(&world, &df);
    let cfg = MppiConfig::default();
    let at_goal = [pose.x, pose.y, 0.0];
    let cost = trajectory_cost(
        &[[0.0, 0.0, 0.0], at_goal],
        [pose.x, pose.y],
        &df,
        [pose.x + 2.0, pose.y],
        &cfg,
    );
    ensure!(cost == 0.0, "zero-error state cost {cost} nonzero");

    // Throughput at the default sampling budget on one core.
    let mut state = MppiState::new(&pose, cfg.horizon);
    let grounded =
        vec![[pose.x + 1.0, pose.y], [pose.x + 2.0, pose.y], [pose.x + 3.0, pose.y]];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let calls = 50;
    let start = Instant::now();
    for _ in 0..calls {
        let (_, nominal) = mppi_step(&state, &grounded, &df, &cfg, &mut rng);
        state.nominal = nominal;
    }
    let rate = calls as f64 / start.elapsed().as_secs_f64();
    ensure!(
        rate >= 10.0,
        "{rate:.1} steps/s below 10 at {} samples x {} horizon",
        cfg.samples,
        cfg.horizon
    );
    Ok(format!("identities hold, {rate:.0} mppi steps/s"))
}

/// O(n^2) nearest-obstacle scan in cell space.
fn brute_force_df(world: &World) -> Vec<f64> {
    let (w, h) = (world.width(), world.height());
    let obstacles: Vec<(i64, i64)> = (0..h)
        .flat_map(|iy| (0..w).map(move |ix| (ix, iy)))
        .filter(|&(ix, iy)| world.is_obstacle(ix, iy))
        .map(|(ix, iy)| (ix as i64, iy as i64))
        .collect();
    (0..h)
        .flat_map(|iy| (0..w).map(move |ix| (ix, iy)))
        .map(|(ix, iy)| {
            let best = obstacles
                .iter()
                .map(|&(ox, oy)| {
                    let (dx, dy) = (ox - ix as i64, oy - iy as i64);
                    (dx * dx + dy * dy) as f64
                })
                .fold(f64::INFINITY, f64::min);
            (best.sqrt() * world.cell_size()).min(SATURATION_RADIUS)
        })
        .collect()
}

/// Textbook Dijkstra with O(V) extraction over the 8-connected grid, no
/// corner cutting, diagonal cost sqrt(2) * cell.
fn dijkstra_cost(world: &World, s: (usize, usize), g: (usize, usize)) -> Option<f64> {
    let (w, h) = (world.width(), world.height());
    let mut dist = vec![f64::INFINITY; w * h];
    let mut done = vec![false; w * h];
    dist[s.1 * w + s.0] = 0.0;
    loop {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for (i, &d) in dist.iter().enumerate() {
            if !done[i] && d < best {
                best = d;
                u = i;
            }
        }
        if u == usize::MAX {
            return None;
        }
        done[u] = true;
        let (ux, uy) = (u % w, u / w);
        if (ux, uy) == g {
            return Some(dist[u]);
        }
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (ux as i64 + dx, uy as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                if world.is_obstacle(nx as usize, ny as usize) {
                    continue;
                }
                if dx != 0
                    && dy != 0
                    && (world.is_obstacle(nx as usize, uy)
                        || world.is_obstacle(ux, ny as usize))
                {
                    continue;
                }
                let step = if dx != 0 && dy != 0 {
                    std::f64::consts::SQRT_2 * world.cell_size()
                } else {
                    world.cell_size()
                };
                let i = ny as usize * w + nx as usize;
                if dist[u] + step < dist[i] {
                    dist[i] = dist[u] + step;
                }
            }
        }
    }
}

/// Criterion 6: projection round-trips, the distance field matches a brute
/// force scan, and planned geodesic lengths match an independent Dijkstra.
fn geometry_world_oracles() -> Verdict {
    // Projection round trip over random cameras, poses, and points.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut inside = 0usize;
    for _ in 0..2000 {
        let camera = CameraModel::new(
            rng.random_range(0.6..2.6),
            rng.random_range(0.5..3.0),
            rng.random_range(0.2..2.2),
        );
        let pose = Pose::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(0.2..2.5),
            rng.random_range(-3.1..3.1),
        );
        let point = [
            pose.x + rng.random_range(-8.0..8.0),
            pose.y + rng.random_range(-8.0..8.0),
            rng.random_range(0.0..3.0),
        ];
        if let Projection::Inside(ip) = project(&camera, &pose, point) {
            inside += 1;
            let back = back_project(&camera, &pose, &ip);
            for axis in 0..3 {
                let err = (back[axis] - point[axis]).abs();
                ensure!(err <= 1e-9, "round-trip error {err:.2e} on axis {axis}");
            }
        }
    }
    ensure!(inside >= 200, "only {inside} in-frustum samples, coverage too thin");

    // Distance transform vs the quadratic scan on assorted small worlds.
    for seed in 0..20u64 {
        let side = 10 + (seed as usize * 7) % 41;
        let params = WorldParams {
            width: side,
            height: side.min(50),
            density: 0.05 + 0.01 * (seed % 20) as f64,
            ..WorldParams::default()
        };
        let world = generate_world(seed, &params).expect("world");
        let df = build_distance_field(&world);
        let oracle = brute_force_df(&world);
        for iy in 0..world.height() {
            for ix in 0..world.width() {
                let got = df.at_cell(ix, iy);
                let want = oracle[iy * world.width() + ix];
                ensure!(
                    got == want,
                    "df[{ix},{iy}] = {got} vs brute force {want} in world {seed}"
                );
            }
        }
    }

    // Planner geodesic lengths vs Dijkstra on 100 seeded worlds.
    let params = WorldParams { width: 32, height: 32, density: 0.12, ..WorldParams::default() };
    let mut compared = 0usize;
    for seed in 0..100u64 {
        let world = generate_world(seed, &params).expect("world");
        let df = build_distance_field(&world);
        let free: Vec<(usize, usize)> = (0..world.height())
            .flat_map(|iy| (0..world.width()).map(move |ix| (ix, iy)))
            .filter(|&(ix, iy)| world.is_free(ix, iy))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x600d);
        for _ in 0..2 {
            let s = free[rng.random_range(0..free.len())];
            let g = free[rng.random_range(0..free.len())];
            let sp = world.cell_center(s.0, s.1);
            let gp = world.cell_center(g.0, g.1);
            match (plan_path(&world, &df, sp, gp, 0.2), dijkstra_cost(&world, s, g)) {
                (Ok(path), Some(cost)) => {
                    let err = (path.geodesic_length - cost).abs();
                    ensure!(
                        err <= 1e-9,
                        "geodesic {} vs Dijkstra {cost} in world {seed}",
                        path.geodesic_length
                    );
                    compared += 1;
                }
                (Err(WorldError::NoPath), None) => {}
                (got, want) => {
                    return Err(format!(
                        "reachability disagreement in world {seed}: planner {:?} vs oracle {:?}",
                        got.map(|p| p.geodesic_length),
                        want
                    ))
                }
            }
        }
    }
    ensure!(compared >= 150, "only {compared} reachable pairs compared");
    Ok(format!("{inside} round trips, 20 distance fields, {compared} geodesics"))
}

/// Criterion 7: protocol constants come out of the materialized default
/// config bit-exact, and the visibility decision is strict at logit zero.
fn protocol_constants() -> Verdict {
    let config = RunConfig::from_toml_str("").map_err(|e| e.to_string())?;
    let suite = config.to_suite();
    ensure!(
        suite.success_radius.to_bits() == 0.5f64.to_bits(),
        "success radius {} != 0.5",
        suite.success_radius
    );
    ensure!(suite.step_cap == 1000, "step cap {} != 1000", suite.step_cap);
    ensure!(
        suite.mppi.w_goal.to_bits() == 10.0f64.to_bits()
            && suite.mppi.w_coll.to_bits() == 100.0f64.to_bits()
            && suite.mppi.w_vis.to_bits() == 10.0f64.to_bits(),
        "cost weights ({}, {}, {}) != (10, 100, 10)",
        suite.mppi.w_goal,
        suite.mppi.w_coll,
        suite.mppi.w_vis
    );
    ensure!(suite.mppi.goal_point_rank == 3, "goal rank {} != 3", suite.mppi.goal_point_rank);
    ensure!(
        suite.trajectory.max_frames <= 40,
        "frame cap {} exceeds 40",
        suite.trajectory.max_frames
    );

    // sigma(v) > 0.5 strictly, i.e. the logit must be strictly positive.
    let triplet = |v_logit: f64| GuidanceTriplet { p: [0.0, 0.0], v_logit, d: 0.5 };
    ensure!(!triplet(0.0).visible(), "logit 0 counted visible (threshold not strict)");
    ensure!(!triplet(-1e-300).visible(), "negative logit counted visible");
    ensure!(triplet(1e-300).visible(), "positive logit counted invisible");
    Ok("radius 0.5, cap 1000, weights (10, 100, 10), rank 3, frames <= 40, strict \
        visibility"
        .to_string())
}

/// Criterion 8: the suite JSONL is identical for any worker count and on
/// repeat runs, verified by content hash.
fn determinism() -> Verdict {
    let suite = SuiteConfig {
        trajectories: 6,
        noise: NoiseModel {
            sigma_p: 0.05,
            flip_prob: 0.05,
            sigma_d: 0.02,
            backward_degradation: 1.5,
        },
        ..SuiteConfig::default()
    };
    let configs = build_suite(&suite);
    let hash = |workers: usize| -> [u8; 32] {
        let jsonl = records_to_jsonl(&run_suite(&configs, workers));
        Sha256::digest(jsonl.as_bytes()).into()
    };
    let reference = hash(1);
    for workers in [2, 4] {
        let other = hash(workers);
        ensure!(
            other == reference,
            "workers {workers} produced different JSONL than workers 1"
        );
    }
    ensure!(hash(4) == reference, "repeat run at workers 4 diverged");
    Ok(format!("{} episodes, sha256 {:02x}{:02x}{:02x}{:02x}.. stable over workers 1/2/4", configs.len(), reference[0], reference[1], reference[2], reference[3]))
}

#[test]
fn protocol_acceptance() {
    let mut lines: Vec<String> = Vec::new();
    let mut failures = 0usize;
    let mut record = |id: usize, name: &str, verdict: Verdict, lines: &mut Vec<String>| {
        let line = match verdict {
            Ok(detail) => format!("criterion {id} {name}: PASS ({detail})"),
            Err(detail) => {
                failures += 1;
                format!("criterion {id} {name}: FAIL ({detail})")
            }
        };
        println!("{line}");
        lines.push(line);
    };
    let catch = |f: &mut dyn FnMut() -> Verdict| -> Verdict {
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "opaque panic".to_string());
            Err(format!("panicked: {msg}"))
        })
    };

    let mut forward_sr = None;
    let verdict = catch(&mut || {
        forward_ceiling().map(|(sr, detail)| {
            forward_sr = Some(sr);
            detail
        })
    });
    record(1, "oracle-ceiling-forward", verdict, &mut lines);

    let verdict = catch(&mut || match forward_sr {
        Some(sr) => backward_parity(sr),
        None => Err("forward SR unavailable (criterion 1 failed)".to_string()),
    });
    record(2, "backward-parity", verdict, &mut lines);

    let verdict = catch(&mut off_trajectory_degradation);
    record(3, "off-trajectory-degradation", verdict, &mut lines);

    let verdict = catch(&mut mismatch_sensitivity);
    record(4, "camera-mismatch-sensitivity", verdict, &mut lines);

    let verdict = catch(&mut planner_numerics);
    record(5, "sampling-planner-numerics", verdict, &mut lines);

    let verdict = catch(&mut geometry_world_oracles);
    record(6, "geometry-world-oracles", verdict, &mut lines);

    let verdict = catch(&mut protocol_constants);
    record(7, "protocol-constants", verdict, &mut lines);

    let verdict = catch(&mut determinism);
    record(8, "worker-determinism", verdict, &mut lines);

    assert!(failures == 0, "{failures} criteria failed:\n{}", lines.join("\n"));
}

//! Procedural 2.5D environments: an occupancy grid of extruded obstacles
//! inside a closed arena, with raycasting, depth scans, distance fields,
//! grid planning, and trajectory/pose samplers built on top.
//!
//! Grid cell (ix, iy) covers the square [ix*cell_size, (ix+1)*cell_size) x
//! [iy*cell_size, (iy+1)*cell_size) in meters; its center is at
//! ((ix+0.5)*cell_size, (iy+0.5)*cell_size). Obstacles occupy the full cell
//! footprint extruded from the ground to `obstacle_height`.

mod distance_field;
mod planner;
mod sampling;

pub use distance_field::{build_distance_field, DistanceField, SATURATION_RADIUS};
pub use planner::{plan_path, PlannedPath};
pub use sampling::{
    sample_query_pose, sample_reference_trajectory, InitMode, QueryPoseParams, ReferenceTrajectory,
    TrajectoryParams, MAX_FRAME_SPACING,
};

use crate::geometry::{CameraModel, Pose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::{Read as _, Write as _};
use std::path::Path;

/// Errors from world construction, queries, and samplers.
#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("obstacle density {density} unreachable after {attempts} placement attempts")]
    UnsatisfiableParams { density: f64, attempts: usize },
    #[error("point ({x:.3}, {y:.3}) outside world bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("point ({x:.3}, {y:.3}) is not in free space")]
    NotFree { x: f64, y: f64 },
    #[error("no path between start and goal")]
    NoPath,
    #[error("no start/goal pair with geodesic separation in [{min_sep:.1}, {max_sep:.1}] m after {attempts} attempts")]
    NoTrajectory { min_sep: f64, max_sep: f64, attempts: usize },
    #[error("no valid query pose after {attempts} attempts")]
    NoValidStart { attempts: usize },
    #[error("world file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters for [`generate_world`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    /// Grid width in cells. At least 10.
    pub width: usize,
    /// Grid height in cells. At least 10.
    pub height: usize,
    /// Cell edge length, meters.
    pub cell_size: f64,
    /// Uniform obstacle extrusion height, meters.
    pub obstacle_height: f64,
    /// Target fraction of interior cells covered by obstacles, in [0, 0.35].
    pub density: f64,
}

impl Default for WorldParams {
    /// 64x64 cells of 0.5 m (a 32 m arena), 2.5 m obstacles, density 0.10.
    fn default() -> Self {
        Self { width: 64, height: 64, cell_size: 0.5, obstacle_height: 2.5, density: 0.10 }
    }
}

/// Occupancy-grid world with a closed boundary and extruded obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    width: usize,
    height: usize,
    cell_size: f64,
    obstacle_height: f64,
    /// Row-major, `true` = obstacle.
    occupancy: Vec<bool>,
}

impl World {
    /// Builds a world from an explicit occupancy grid, enforcing the closed
    /// arena and non-degeneracy invariants. Panics on violation.
    pub fn from_grid(
        width: usize,
        height: usize,
        cell_size: f64,
        obstacle_height: f64,
        occupancy: Vec<bool>,
    ) -> Self {
        assert!(cell_size > 0.0, "World: cell_size must be positive");
        assert!(obstacle_height > 0.0, "World: obstacle_height must be positive");
        assert_eq!(occupancy.len(), width * height, "World: occupancy length mismatch");
        let w = Self { width, height, cell_size, obstacle_height, occupancy };
        for ix in 0..width {
            assert!(w.is_obstacle(ix, 0) && w.is_obstacle(ix, height - 1), "World: open arena");
        }
        for iy in 0..height {
            assert!(w.is_obstacle(0, iy) && w.is_obstacle(width - 1, iy), "World: open arena");
        }
        assert!(w.occupancy.iter().any(|&o| !o), "World: no free cells");
        w
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn obstacle_height(&self) -> f64 {
        self.obstacle_height
    }

    /// Arena extent in meters: `[width, height] * cell_size`.
    pub fn bounds(&self) -> [f64; 2] {
        [self.width as f64 * self.cell_size, self.height as f64 * self.cell_size]
    }

    pub fn is_obstacle(&self, ix: usize, iy: usize) -> bool {
        debug_assert!(ix < self.width && iy < self.height);
        self.occupancy[iy * self.width + ix]
    }

    pub fn is_free(&self, ix: usize, iy: usize) -> bool {
        !self.is_obstacle(ix, iy)
    }

    /// Cell indices containing a point, or None outside the arena.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let [bx, by] = self.bounds();
        if x < 0.0 || y < 0.0 || x >= bx || y >= by {
            return None;
        }
        Some(((x / self.cell_size) as usize, (y / self.cell_size) as usize))
    }

    /// True when the point lies inside the arena in a free cell.
    pub fn point_is_free(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some_and(|(ix, iy)| self.is_free(ix, iy))
    }

    /// Center of a cell in meters.
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [(ix as f64 + 0.5) * self.cell_size, (iy as f64 + 0.5) * self.cell_size]
    }

    fn in_bounds_3d(&self, p: [f64; 3]) -> bool {
        let [bx, by] = self.bounds();
        p[0] >= 0.0 && p[0] <= bx && p[1] >= 0.0 && p[1] <= by && p[2] >= 0.0
    }

    /// Serializes to the versioned text format: a header line
    /// `trajguide-world v1 <width> <height> <cell_size> <obstacle_height>`
    /// followed by one `.`/`#` row per grid row, row 0 first.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "trajguide-world v1 {} {} {} {}\n",
            self.width, self.height, self.cell_size, self.obstacle_height
        );
        for iy in 0..self.height {
            for ix in 0..self.width {
                out.push(if self.is_obstacle(ix, iy) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text format produced by [`World::to_text`].
    pub fn from_text(text: &str) -> Result<Self, WorldError> {
        let parse_err = |line: usize, msg: &str| WorldError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "trajguide-world" || fields[1] != "v1" {
            return Err(parse_err(1, "expected `trajguide-world v1 <w> <h> <cell> <height>`"));
        }
        let width: usize = fields[2].parse().map_err(|_| parse_err(1, "bad width"))?;
        let height: usize = fields[3].parse().map_err(|_| parse_err(1, "bad height"))?;
        let cell_size: f64 = fields[4].parse().map_err(|_| parse_err(1, "bad cell size"))?;
        let obstacle_height: f64 =
            fields[5].parse().map_err(|_| parse_err(1, "bad obstacle height"))?;
        if cell_size <= 0.0 || obstacle_height <= 0.0 || width == 0 || height == 0 {
            return Err(parse_err(1, "non-positive dimension"));
        }
        let mut occupancy = Vec::with_capacity(width * height);
        for iy in 0..height {
            let row = lines.next().ok_or_else(|| parse_err(iy + 2, "missing grid row"))?;
            if row.chars().count() != width {
                return Err(parse_err(iy + 2, "row width mismatch"));
            }
            for c in row.chars() {
                match c {
                    '.' => occupancy.push(false),
                    '#' => occupancy.push(true),
                    _ => return Err(parse_err(iy + 2, "expected only `.` or `#`")),
                }
            }
        }
        // Re-validate arena invariants without panicking on malformed input.
        let closed = (0..width).all(|ix| occupancy[ix] && occupancy[(height - 1) * width + ix])
            && (0..height).all(|iy| occupancy[iy * width] && occupancy[iy * width + width - 1]);
        if !closed {
            return Err(parse_err(1, "arena boundary is not fully walled"));
        }
        if occupancy.iter().all(|&o| o) {
            return Err(parse_err(1, "no free cells"));
        }
        Ok(Self { width, height, cell_size, obstacle_height, occupancy })
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        Self::from_text(&text)
    }
}

/// Size of the largest 4-connected free component, and the total free count.
fn largest_free_component(occ: &[bool], width: usize, height: usize) -> (usize, usize) {
    let free_total = occ.iter().filter(|&&o| !o).count();
    let mut seen = vec![false; occ.len()];
    let mut best = 0;
    for start in 0..occ.len() {
        if occ[start] || seen[start] {
            continue;
        }
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (ix, iy) = (idx % width, idx / width);
            let mut push = |jx: usize, jy: usize| {
                let j = jy * width + jx;
                if !occ[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if ix > 0 {
                push(ix - 1, iy);
            }
            if ix + 1 < width {
                push(ix + 1, iy);
            }
            if iy > 0 {
                push(ix, iy - 1);
            }
            if iy + 1 < height {
                push(ix, iy + 1);
            }
        }
        best = best.max(size);
    }
    (best, free_total)
}

/// Generates a closed arena with random axis-aligned rectangular obstacles.
///
/// Rectangles are placed until the interior obstacle fraction reaches
/// `params.density`; a placement is rejected when it would shrink the
/// largest free component below 90% of the free cells. Deterministic in
/// `seed`.
pub fn generate_world(seed: u64, params: &WorldParams) -> Result<World, WorldError> {
    assert!(params.width >= 10 && params.height >= 10, "generate_world: arena below 10x10 cells");
    assert!(
        (0.0..=0.35).contains(&params.density),
        "generate_world: density {} outside [0, 0.35]",
        params.density
    );
    let (w, h) = (params.width, params.height);
    let mut occ = vec![false; w * h];
    for ix in 0..w {
        occ[ix] = true;
        occ[(h - 1) * w + ix] = true;
    }
    for iy in 0..h {
        occ[iy * w] = true;
        occ[iy * w + w - 1] = true;
    }

    let interior_total = (w - 2) * (h - 2);
    let target = (params.density * interior_total as f64).round() as usize;
    let mut placed = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const MAX_ATTEMPTS: usize = 20_000;
    let max_rect = 6.min(w - 2).min(h - 2);
    let mut attempts = 0;
    while placed < target {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(WorldError::UnsatisfiableParams {
                density: params.density,
                attempts: MAX_ATTEMPTS,
            });
        }
        let rw = rng.random_range(1..=max_rect);
        let rh = rng.random_range(1..=max_rect);
        let x0 = rng.random_range(1..w - rw);
        let y0 = rng.random_range(1..h - rh);
        let cells: Vec<usize> = (y0..y0 + rh)
            .flat_map(|iy| (x0..x0 + rw).map(move |ix| iy * w + ix))
            .filter(|&i| !occ[i])
            .collect();
        if cells.is_empty() {
            continue;
        }
        for &i in &cells {
            occ[i] = true;
        }
        let (largest, free_total) = largest_free_component(&occ, w, h);
        if free_total == 0 || (largest as f64) < 0.9 * free_total as f64 {
            for &i in &cells {
                occ[i] = false;
            }
            continue;
        }
        placed += cells.len();
    }
    Ok(World::from_grid(w, h, params.cell_size, params.obstacle_height, occ))
}

/// One grid-line crossing of a parameterized segment.
#[derive(Debug, Clone, Copy)]
struct Crossing {
    t: f64,
    /// Grid line index: `x = k * cell_size` (vertical) or `y = k * cell_size`.
    k: i64,
    vertical: bool,
}

/// Candidate cell indices along one axis for a coordinate that may lie
/// exactly on a grid line. `known_line` carries the line index when the
/// caller knows the point sits on that line by construction.
fn axis_candidates(coord: f64, cell_size: f64, known_line: Option<i64>) -> [Option<i64>; 2] {
    if let Some(k) = known_line {
        return [Some(k - 1), Some(k)];
    }
    let f = coord / cell_size;
    let fl = f.floor();
    if f == fl {
        // Exactly on a line: the point belongs to the closure of both cells.
        [Some(fl as i64 - 1), Some(fl as i64)]
    } else {
        [Some(fl as i64), None]
    }
}

impl World {
    fn obstacle_at_index(&self, ix: i64, iy: i64) -> bool {
        if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
            // Outside the grid counts as blocked; the boundary ring normally
            // prevents segments from getting here.
            return true;
        }
        self.is_obstacle(ix as usize, iy as usize)
    }

    /// True when any cell whose closure contains (x, y) is an obstacle.
    /// Obstacle wins ties on shared edges and corners.
    fn point_blocked_2d(&self, x: f64, y: f64, on_vline: Option<i64>, on_hline: Option<i64>) -> bool {
        let xs = axis_candidates(x, self.cell_size, on_vline);
        let ys = axis_candidates(y, self.cell_size, on_hline);
        for ix in xs.iter().flatten() {
            for iy in ys.iter().flatten() {
                if self.obstacle_at_index(*ix, *iy) {
                    return true;
                }
            }
        }
        false
    }

    /// Earliest parameter t in [0, 1] at which the 3D segment a -> b touches
    /// an extruded obstacle, or None when the segment is clear. Uses exact
    /// grid-line enumeration; obstacle wins ties on shared edges/corners.
    fn segment_first_block(&self, a: [f64; 3], b: [f64; 3]) -> Option<f64> {
        let cs = self.cell_size;
        let (dx, dy, dz) = (b[0] - a[0], b[1] - a[1], b[2] - a[2]);

        // z range of the segment over [t0, t1]; blocked only while z is at
        // or below the extrusion height.
        let z_at = |t: f64| a[2] + t * dz;
        let h = self.obstacle_height;
        // Earliest t in [t0, t1] with z(t) <= h, if any.
        let z_entry = |t0: f64, t1: f64| -> Option<f64> {
            let (z0, z1) = (z_at(t0), z_at(t1));
            if z0 <= h {
                Some(t0)
            } else if z1 <= h {
                // z decreasing across h inside the interval.
                Some(t0 + (z0 - h) / (z0 - z1) * (t1 - t0))
            } else {
                None
            }
        };

        let mut crossings: Vec<Crossing> = Vec::new();
        let mut add_axis = |a0: f64, d: f64, vertical: bool| {
            if d == 0.0 {
                return;
            }
            let (lo, hi) = if d > 0.0 { (a0, a0 + d) } else { (a0 + d, a0) };
            let k_min = (lo / cs).ceil() as i64;
            let k_max = (hi / cs).floor() as i64;
            for k in k_min..=k_max {
                let t = (k as f64 * cs - a0) / d;
                if (0.0..=1.0).contains(&t) {
                    crossings.push(Crossing { t, k, vertical });
                }
            }
        };
        add_axis(a[0], dx, true);
        add_axis(a[1], dy, false);
        crossings.sort_by(|p, q| p.t.total_cmp(&q.t));

        let point_at = |t: f64| [a[0] + t * dx, a[1] + t * dy];

        // Check an exact crossing time: the point lies on every grid line
        // crossed at this t, so the candidate set spans both sides of each.
        let check_event = |t: f64, group: &[Crossing]| -> bool {
            let p = point_at(t);
            let vline = group.iter().find(|c| c.vertical).map(|c| c.k);
            let hline = group.iter().find(|c| !c.vertical).map(|c| c.k);
            self.point_blocked_2d(p[0], p[1], vline, hline) && z_at(t) <= h
        };
        // Check the open interval (t0, t1) via its midpoint cell.
        let check_interval = |t0: f64, t1: f64| -> Option<f64> {
            let tm = 0.5 * (t0 + t1);
            let p = point_at(tm);
            if self.point_blocked_2d(p[0], p[1], None, None) {
                z_entry(t0, t1)
            } else {
                None
            }
        };

        // Endpoints may themselves sit on grid lines shared with obstacles.
        if check_event(0.0, &[]) {
            return Some(0.0);
        }
        let mut prev_t = 0.0;
        let mut i = 0;
        while i < crossings.len() {
            let t = crossings[i].t;
            let mut j = i;
            while j < crossings.len() && crossings[j].t == t {
                j += 1;
            }
            if t > prev_t {
                if let Some(hit) = check_interval(prev_t, t) {
                    return Some(hit);
                }
            }
            if check_event(t, &crossings[i..j]) {
                return Some(t);
            }
            prev_t = t;
            i = j;
        }
        if prev_t < 1.0 {
            if let Some(hit) = check_interval(prev_t, 1.0) {
                return Some(hit);
            }
        }
        if check_event(1.0, &[]) {
            return Some(1.0);
        }
        None
    }
}

/// True when the segment origin -> target crosses no extruded obstacle.
///
/// Both endpoints must lie inside the arena bounds (z above ground). Ties on
/// cell edges and corners resolve in favor of the obstacle.
pub fn raycast(world: &World, origin: [f64; 3], target: [f64; 3]) -> Result<bool, WorldError> {
    for p in [origin, target] {
        if !world.in_bounds_3d(p) {
            return Err(WorldError::OutOfBounds { x: p[0], y: p[1] });
        }
    }
    Ok(world.segment_first_block(origin, target).is_none())
}

/// Visibility of a world point from an observer: inside the camera frustum
/// and with a clear line of sight. This single definition is shared by the
/// guidance oracle and the pose samplers so their notions of "visible"
/// cannot drift apart.
pub fn point_visible(
    world: &World,
    camera: &CameraModel,
    observer: &Pose,
    point: [f64; 3],
) -> bool {
    if !crate::geometry::project(camera, observer, point).is_inside() {
        return false;
    }
    raycast(world, [observer.x, observer.y, observer.z], point).unwrap_or(false)
}

/// Horizontal depth scan: per-ray distance and whether the ray hit an
/// obstacle (as opposed to escaping to the arena boundary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    /// Euclidean distance to the first obstacle contact, or to the arena
    /// boundary when `hits` is false. One entry per ray, leftmost first.
    pub depths: Vec<f64>,
    pub hits: Vec<bool>,
    /// Normalized image u coordinate of each ray.
    pub u: Vec<f64>,
    /// Physical ray angle relative to the heading, radians. Positive is
    /// left (counter-clockwise), so it has the opposite sign of `u`.
    pub angles: Vec<f64>,
}

/// Casts `n_rays` horizontal rays (image row v = 0) at evenly spaced
/// u in [-1, 1] and returns the distance to the first obstacle along each.
///
/// Rays travel at the observer's height; a ray above the obstacle extrusion
/// reaches the arena boundary and reports `hits = false`.
pub fn render_depth(
    world: &World,
    camera: &CameraModel,
    observer: &Pose,
    n_rays: usize,
) -> DepthScan {
    assert!(n_rays >= 8, "render_depth: need at least 8 rays");
    let [bx, by] = world.bounds();
    let tan_h = camera.tan_half_h();
    let (sin_yaw, cos_yaw) = observer.yaw.sin_cos();
    let mut depths = Vec::with_capacity(n_rays);
    let mut hits = Vec::with_capacity(n_rays);
    let mut us = Vec::with_capacity(n_rays);
    let mut angles = Vec::with_capacity(n_rays);
    for i in 0..n_rays {
        let u = -1.0 + 2.0 * i as f64 / (n_rays - 1) as f64;
        // Camera-frame direction (forward 1, right u*tan_h), rotated to world.
        let fx = cos_yaw + u * tan_h * sin_yaw;
        let fy = sin_yaw - u * tan_h * cos_yaw;
        let norm = (fx * fx + fy * fy).sqrt();
        let (dx, dy) = (fx / norm, fy / norm);
        // Clip the ray to the arena rectangle from the inside.
        let mut t_exit = f64::INFINITY;
        if dx > 0.0 {
            t_exit = t_exit.min((bx - observer.x) / dx);
        } else if dx < 0.0 {
            t_exit = t_exit.min(-observer.x / dx);
        }
        if dy > 0.0 {
            t_exit = t_exit.min((by - observer.y) / dy);
        } else if dy < 0.0 {
            t_exit = t_exit.min(-observer.y / dy);
        }
        debug_assert!(t_exit.is_finite());
        let a = [observer.x, observer.y, observer.z];
        let b = [observer.x + dx * t_exit, observer.y + dy * t_exit, observer.z];
        match world.segment_first_block(a, b) {
            Some(t) => {
                depths.push(t * t_exit);
                hits.push(true);
            }
            None => {
                depths.push(t_exit);
                hits.push(false);
            }
        }
        us.push(u);
        angles.push((-u * tan_h).atan());
    }
    DepthScan { depths, hits, u: us, angles }
}

/// Builds a world from ASCII art rows (row 0 first).
#[cfg(test)]
pub(crate) fn ascii_world(rows: &[&str], cell_size: f64, obstacle_height: f64) -> World {
    let height = rows.len();
    let width = rows[0].len();
    let mut occ = Vec::with_capacity(width * height);
    for row in rows {
        assert_eq!(row.len(), width);
        for c in row.chars() {
            occ.push(c == '#');
        }
    }
    World::from_grid(width, height, cell_size, obstacle_height, occ)
}

/// Open arena with only boundary walls.
#[cfg(test)]
pub(crate) fn empty_world(cells: usize, cell_size: f64) -> World {
    generate_world(
        0,
        &WorldParams { width: cells, height: cells, cell_size, obstacle_height: 2.5, density: 0.0 },
    )
    .unwrap()
}

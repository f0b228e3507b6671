//! Grid path planning: 8-connected A* with no corner cutting, followed by
//! string-pulling smoothing that respects a clearance margin.

use super::{DistanceField, World, WorldError};
use std::cmp::Reverse;
use std::collections::BinaryHeap;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Planned route between two free points.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    /// Smoothed polyline from start to goal, meters. At least two vertices
    /// (start and goal), which coincide for a zero-length path.
    pub polyline: Vec<[f64; 2]>,
    /// Grid-optimal cost between the start and goal cells before smoothing,
    /// meters. This is the geodesic length used for path-efficiency metrics.
    pub geodesic_length: f64,
}

impl PlannedPath {
    /// Arc length of the smoothed polyline.
    pub fn polyline_length(&self) -> f64 {
        polyline_length(&self.polyline)
    }
}

pub(crate) fn polyline_length(points: &[[f64; 2]]) -> f64 {
    points.windows(2).map(|s| ((s[1][0] - s[0][0]).powi(2) + (s[1][1] - s[0][1]).powi(2)).sqrt()).sum()
}

/// f64 priority-queue key ordered by total order; ties broken by insertion
/// sequence to keep expansion deterministic.
#[derive(PartialEq)]
struct QueueKey(f64, usize);

impl Eq for QueueKey {}

impl PartialOrd for QueueKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Octile-distance heuristic, admissible for unit/diagonal step costs.
fn octile(a: (usize, usize), b: (usize, usize), cell_size: f64) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    cell_size * (dx.max(dy) + (SQRT_2 - 1.0) * dx.min(dy))
}

/// Shortest 8-connected path between the cells containing `start` and
/// `goal`. Diagonal steps cost sqrt(2) * cell_size and are disallowed when
/// either adjacent orthogonal cell is an obstacle (no corner cutting).
///
/// The returned polyline is smoothed by string pulling constrained to keep
/// `clearance` meters of distance-field margin; `geodesic_length` is the
/// unsmoothed grid-optimal cost.
pub fn plan_path(
    world: &World,
    df: &DistanceField,
    start: [f64; 2],
    goal: [f64; 2],
    clearance: f64,
) -> Result<PlannedPath, WorldError> {
    let cell_of = |p: [f64; 2]| -> Result<(usize, usize), WorldError> {
        let (ix, iy) =
            world.cell_at(p[0], p[1]).ok_or(WorldError::OutOfBounds { x: p[0], y: p[1] })?;
        if world.is_obstacle(ix, iy) {
            return Err(WorldError::NotFree { x: p[0], y: p[1] });
        }
        Ok((ix, iy))
    };
    let s = cell_of(start)?;
    let g = cell_of(goal)?;
    let (w, h) = (world.width(), world.height());
    let idx = |c: (usize, usize)| c.1 * w + c.0;

    let mut dist = vec![f64::INFINITY; w * h];
    let mut prev = vec![usize::MAX; w * h];
    let mut heap: BinaryHeap<Reverse<(QueueKey, usize)>> = BinaryHeap::new();
    let mut counter = 0usize;
    dist[idx(s)] = 0.0;
    heap.push(Reverse((QueueKey(octile(s, g, world.cell_size()), counter), idx(s))));

    while let Some(Reverse((QueueKey(f, _), u))) = heap.pop() {
        let (ux, uy) = (u % w, u / w);
        if (ux, uy) == g {
            break;
        }
        if f > dist[u] + octile((ux, uy), g, world.cell_size()) + 1e-12 {
            continue; // stale entry
        }
        for dyx in [-1i64, 0, 1] {
            for dxx in [-1i64, 0, 1] {
                if dxx == 0 && dyx == 0 {
                    continue;
                }
                let nx = ux as i64 + dxx;
                let ny = uy as i64 + dyx;
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if world.is_obstacle(nx, ny) {
                    continue;
                }
                if dxx != 0 && dyx != 0 {
                    // No corner cutting: both orthogonal neighbors must be free.
                    let side_a = world.is_obstacle((ux as i64 + dxx) as usize, uy);
                    let side_b = world.is_obstacle(ux, (uy as i64 + dyx) as usize);
                    if side_a || side_b {
                        continue;
                    }
                }
                let step =
                    if dxx != 0 && dyx != 0 { SQRT_2 * world.cell_size() } else { world.cell_size() };
                let nd = dist[u] + step;
                let ni = ny * w + nx;
                if nd < dist[ni] {
                    dist[ni] = nd;
                    prev[ni] = u;
                    counter += 1;
                    heap.push(Reverse((
                        QueueKey(nd + octile((nx, ny), g, world.cell_size()), counter),
                        ni,
                    )));
                }
            }
        }
    }

    let geodesic_length = dist[idx(g)];
    if !geodesic_length.is_finite() {
        return Err(WorldError::NoPath);
    }

    // Cell-center chain goal -> start, then reversed.
    let mut chain = vec![g];
    let mut cur = idx(g);
    while cur != idx(s) {
        cur = prev[cur];
        debug_assert_ne!(cur, usize::MAX);
        chain.push((cur % w, cur / w));
    }
    chain.reverse();

    let mut points: Vec<[f64; 2]> = Vec::with_capacity(chain.len() + 2);
    points.push(start);
    if chain.len() > 1 {
        // Within a single cell the direct segment is always valid; the
        // center detour is only needed between distinct cells.
        for c in &chain {
            points.push(world.cell_center(c.0, c.1));
        }
    }
    points.push(goal);
    points.dedup_by(|a, b| a == b);
    if points.len() == 1 {
        points.push(points[0]);
    }

    let polyline = string_pull(&points, df, clearance);
    Ok(PlannedPath { polyline, geodesic_length })
}

/// True when every sample along the segment keeps at least `clearance`
/// distance-field margin. Samples at half-cell spacing, endpoint inclusive.
fn segment_has_clearance(df: &DistanceField, a: [f64; 2], b: [f64; 2], clearance: f64) -> bool {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let steps = (len / (df.cell_size() * 0.5)).ceil().max(1.0) as usize;
    (0..=steps).all(|i| {
        let t = i as f64 / steps as f64;
        df.at_point(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])) >= clearance
    })
}

/// Greedy shortcutting: from each vertex, jump to the farthest later vertex
/// reachable with the required clearance.
fn string_pull(points: &[[f64; 2]], df: &DistanceField, clearance: f64) -> Vec<[f64; 2]> {
    let mut out = vec![points[0]];
    let mut i = 0;
    while i + 1 < points.len() {
        let mut j = points.len() - 1;
        while j > i + 1 && !segment_has_clearance(df, points[i], points[j], clearance) {
            j -= 1;
        }
        out.push(points[j]);
        i = j;
    }
    out
}

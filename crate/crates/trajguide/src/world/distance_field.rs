//! Exact Euclidean distance transform over cell centers, used for collision
//! costs and clearance checks.

use super::World;

/// Distances are clamped here; beyond this radius obstacles exert no
/// influence on costs.
pub const SATURATION_RADIUS: f64 = 5.0;

/// Per-cell Euclidean distance to the nearest obstacle cell center, meters,
/// clamped at [`SATURATION_RADIUS`]. Zero at obstacle cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    cell_size: f64,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn at_cell(&self, ix: usize, iy: usize) -> f64 {
        debug_assert!(ix < self.width && iy < self.height);
        self.values[iy * self.width + ix]
    }

    /// Value of the cell containing the point. Points outside the grid clamp
    /// to the nearest cell (the boundary ring, which is always 0).
    pub fn at_point(&self, x: f64, y: f64) -> f64 {
        let ix = ((x / self.cell_size) as i64).clamp(0, self.width as i64 - 1) as usize;
        let iy = ((y / self.cell_size) as i64).clamp(0, self.height as i64 - 1) as usize;
        self.at_cell(ix, iy)
    }
}

/// Squared-distance lower envelope along one row/column (Felzenszwalb and
/// Huttenlocher). `f` holds squared distances in cell units; writes the 1D
/// transform into `out`. All finite values are exact small integers in f64,
/// so the arithmetic here never rounds.
fn transform_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    // Rightmost parabola index in the envelope; -1 while empty. Parabolas
    // with f = +inf never contribute and are skipped outright.
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / ((2 * (q - p)) as f64);
            if s <= z[k as usize] {
                k -= 1;
            } else {
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                z[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if k < 0 {
        out[..n].fill(f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, slot) in out.iter_mut().enumerate().take(n) {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let d = q as i64 - v[j] as i64;
        *slot = (d * d) as f64 + f[v[j]];
    }
}

/// Builds the exact Euclidean distance transform of the obstacle set.
///
/// Matches a brute-force nearest-obstacle scan bit for bit: squared cell
/// distances are computed exactly in integer-valued f64, then mapped through
/// the same `sqrt * cell_size` and clamp as the oracle would use.
pub fn build_distance_field(world: &World) -> DistanceField {
    let (w, h) = (world.width(), world.height());
    let mut sq = vec![0.0f64; w * h];
    for iy in 0..h {
        for ix in 0..w {
            sq[iy * w + ix] = if world.is_obstacle(ix, iy) { 0.0 } else { f64::INFINITY };
        }
    }
    let n = w.max(h);
    let mut f = vec![0.0f64; n];
    let mut out = vec![0.0f64; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];

    // Pass along rows, then along columns of the row result.
    for iy in 0..h {
        f[..w].copy_from_slice(&sq[iy * w..(iy + 1) * w]);
        transform_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        sq[iy * w..(iy + 1) * w].copy_from_slice(&out[..w]);
    }
    for ix in 0..w {
        for iy in 0..h {
            f[iy] = sq[iy * w + ix];
        }
        transform_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for iy in 0..h {
            sq[iy * w + ix] = out[iy];
        }
    }

    let values = sq
        .iter()
        .map(|&s| {
            debug_assert!(s.is_finite(), "world must contain at least one obstacle");
            (s.sqrt() * world.cell_size()).min(SATURATION_RADIUS)
        })
        .collect();
    DistanceField { width: w, height: h, cell_size: world.cell_size(), values }
}

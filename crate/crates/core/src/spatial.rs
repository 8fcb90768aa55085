//! Exact nearest-neighbor queries over a fixed point cloud.
//!
//! Small clouds are scanned directly. Larger clouds are bucketed into a
//! uniform grid whose cell size is twice the median nearest-neighbor spacing;
//! queries visit cells in rings of growing Chebyshev radius and stop once no
//! unvisited cell can hold a closer point. Both paths return the same answer,
//! including the lowest-index tie-break.

use crate::geometry::Vec3;

/// Clouds smaller than this are searched by brute force.
pub const BRUTE_FORCE_LIMIT: usize = 2000;
const MAX_CELLS: usize = 1 << 22;
const SPACING_SAMPLES: usize = 256;

#[derive(Clone, Debug)]
pub struct PointIndex {
    points: Vec<Vec3>,
    grid: Option<Grid>,
}

#[derive(Clone, Debug)]
struct Grid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    entries: Vec<u32>,
}

impl PointIndex {
    pub fn new(points: Vec<Vec3>) -> Self {
        let grid = if points.len() >= BRUTE_FORCE_LIMIT {
            Some(Grid::build(&points))
        } else {
            None
        };
        PointIndex { points, grid }
    }

    /// Always builds the grid, whatever the cloud size.
    pub fn with_grid(points: Vec<Vec3>) -> Self {
        let grid = (!points.is_empty()).then(|| Grid::build(&points));
        PointIndex { points, grid }
    }

    /// Always scans every point. Used as the reference in tests.
    pub fn brute_force(points: Vec<Vec3>) -> Self {
        PointIndex { points, grid: None }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn uses_grid(&self) -> bool {
        self.grid.is_some()
    }

    /// Index and Euclidean distance of the closest point, `None` if empty.
    pub fn nearest(&self, p: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let (idx, d2) = match &self.grid {
            Some(grid) => grid.nearest(&self.points, p),
            None => brute_nearest(&self.points, p),
        };
        Some((idx, d2.sqrt()))
    }

    /// Closest point no farther than `radius`, if any. Ties and results
    /// agree with [`PointIndex::nearest`] whenever that point is in range.
    pub fn nearest_within(&self, p: &Vec3, radius: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() || !(radius >= 0.0) {
            return None;
        }
        let (idx, d2) = match &self.grid {
            Some(grid) => grid.nearest_bounded(&self.points, p, radius)?,
            None => brute_nearest(&self.points, p),
        };
        let d = d2.sqrt();
        (d <= radius).then_some((idx, d))
    }
}

fn brute_nearest(points: &[Vec3], p: &Vec3) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, q) in points.iter().enumerate() {
        let d2 = (q - p).norm_squared();
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    best
}

fn median_spacing(points: &[Vec3]) -> f64 {
    let stride = (points.len() / SPACING_SAMPLES).max(1);
    let mut spacings: Vec<f64> = points
        .iter()
        .enumerate()
        .step_by(stride)
        .filter_map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (q - p).norm())
                .filter(|d| *d > 0.0)
                .min_by(f64::total_cmp)
        })
        .collect();
    if spacings.is_empty() {
        return 0.0;
    }
    spacings.sort_by(f64::total_cmp);
    spacings[spacings.len() / 2]
}

impl Grid {
    fn build(points: &[Vec3]) -> Grid {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        let mut cell = 2.0 * median_spacing(points);
        if !(cell > 0.0) {
            cell = extent.max().max(1e-9);
        }
        let dims_for = |cell: f64| -> [usize; 3] {
            [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize) + 1)
        };
        let mut dims = dims_for(cell);
        while dims.iter().product::<usize>() > MAX_CELLS {
            cell *= 1.5;
            dims = dims_for(cell);
        }
        let n_cells: usize = dims.iter().product();
        let mut counts = vec![0u32; n_cells + 1];
        let cell_of: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = [0, 1, 2].map(|a| (((p[a] - lo[a]) / cell) as usize).min(dims[a] - 1));
                (c[2] * dims[1] + c[1]) * dims[0] + c[0]
            })
            .collect();
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![0u32; points.len()];
        // Ascending point order within each cell keeps tie-breaks stable.
        for (i, &c) in cell_of.iter().enumerate() {
            entries[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Grid {
            origin: lo,
            cell,
            dims,
            starts: counts,
            entries,
        }
    }

    fn nearest(&self, points: &[Vec3], p: &Vec3) -> (usize, f64) {
        self.search(points, p, f64::INFINITY)
    }

    /// Like `nearest`, but gives up once no point within `radius` can remain.
    fn nearest_bounded(&self, points: &[Vec3], p: &Vec3, radius: f64) -> Option<(usize, f64)> {
        let hi = self.origin + Vec3::from_iterator(self.dims.iter().map(|&d| d as f64 * self.cell));
        let outside = (self.origin - p).sup(&(p - hi)).sup(&Vec3::zeros());
        if outside.norm_squared() > radius * radius {
            return None;
        }
        let best = self.search(points, p, radius);
        (best.0 != usize::MAX).then_some(best)
    }

    fn search(&self, points: &[Vec3], p: &Vec3, radius: f64) -> (usize, f64) {
        let center: [i64; 3] = [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor();
            (c.max(0.0) as i64).min(self.dims[a] as i64 - 1)
        });
        let max_ring = (0..3)
            .map(|a| (center[a]).max(self.dims[a] as i64 - 1 - center[a]))
            .max()
            .unwrap_or(0);
        let mut best = (usize::MAX, f64::INFINITY);
        for ring in 0..=max_ring {
            let lo = center.map(|c| c - ring);
            let hi = center.map(|c| c + ring);
            for z in lo[2].max(0)..=hi[2].min(self.dims[2] as i64 - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as i64 - 1) {
                    let on_shell_zy = (z - center[2]).abs() == ring || (y - center[1]).abs() == ring;
                    let xs: Vec<i64> = if on_shell_zy {
                        (lo[0].max(0)..=hi[0].min(self.dims[0] as i64 - 1)).collect()
                    } else {
                        [lo[0], hi[0]]
                            .into_iter()
                            .filter(|x| *x >= 0 && *x < self.dims[0] as i64)
                            .collect()
                    };
                    for x in xs {
                        let c = ((z as usize) * self.dims[1] + y as usize) * self.dims[0] + x as usize;
                        let range = self.starts[c] as usize..self.starts[c + 1] as usize;
                        for &i in &self.entries[range] {
                            let i = i as usize;
                            let d2 = (points[i] - p).norm_squared();
                            if d2 < best.1 || (d2 == best.1 && i < best.0) {
                                best = (i, d2);
                            }
                        }
                    }
                }
            }
            // Every unvisited cell is at least `ring * cell` away from the
            // query's projection onto the grid box, hence from the query.
            let bound = ring as f64 * self.cell;
            if best.1 < bound * bound || bound > radius {
                break;
            }
        }
        best
    }
}

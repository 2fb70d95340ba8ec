//! Uniform-grid spatial index with exact radius and k-nearest queries.
//!
//! A hash grid is simple, deterministic and fast enough for the cluster sizes
//! this pipeline deals with (up to 25e4 points). Queries return index sets
//! identical to a brute-force scan; ties in k-NN are broken by point index so
//! results never depend on traversal order.

use std::collections::HashMap;

use super::{CloudError, ColorPointCloud};
use crate::geom::Point3;

type CellKey = (i64, i64, i64);

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    cell_size: f64,
    cells: HashMap<CellKey, Vec<u32>>,
    key_min: CellKey,
    key_max: CellKey,
}

impl SpatialIndex {
    /// Index the points of `cloud`. Errors on an empty cloud.
    pub fn build(cloud: &ColorPointCloud) -> Result<SpatialIndex, CloudError> {
        Self::build_with_cell(cloud, None)
    }

    /// Index with an explicit cell size hint. Callers that know their typical
    /// query radius get the best performance by passing it here.
    pub fn build_with_cell(
        cloud: &ColorPointCloud,
        cell_size: Option<f64>,
    ) -> Result<SpatialIndex, CloudError> {
        if cloud.is_empty() {
            return Err(CloudError::EmptyCloud);
        }
        let points = cloud.points.clone();
        let cell = cell_size
            .unwrap_or_else(|| default_cell_size(&points))
            .max(1e-9);
        let mut cells: HashMap<CellKey, Vec<u32>> = HashMap::new();
        let mut key_min = (i64::MAX, i64::MAX, i64::MAX);
        let mut key_max = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let k = cell_of(*p, cell);
            key_min = (key_min.0.min(k.0), key_min.1.min(k.1), key_min.2.min(k.2));
            key_max = (key_max.0.max(k.0), key_max.1.max(k.1), key_max.2.max(k.2));
            cells.entry(k).or_default().push(i as u32);
        }
        Ok(SpatialIndex {
            points,
            cell_size: cell,
            cells,
            key_min,
            key_max,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    /// Indices of all points with `dist(p, query) <= radius`, ascending.
    pub fn radius(&self, query: Point3, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let lo = cell_of(
            Point3::new(query.x - radius, query.y - radius, query.z - radius),
            self.cell_size,
        );
        let hi = cell_of(
            Point3::new(query.x + radius, query.y + radius, query.z + radius),
            self.cell_size,
        );
        let mut out = Vec::new();
        for cx in lo.0.max(self.key_min.0)..=hi.0.min(self.key_max.0) {
            for cy in lo.1.max(self.key_min.1)..=hi.1.min(self.key_max.1) {
                for cz in lo.2.max(self.key_min.2)..=hi.2.min(self.key_max.2) {
                    if let Some(ids) = self.cells.get(&(cx, cy, cz)) {
                        for &i in ids {
                            if self.points[i as usize].dist_sq(query) <= r2 {
                                out.push(i as usize);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Indices of the `k` nearest points to `query`, ordered by distance and
    /// then by index for equal distances. Returns fewer when the cloud is
    /// smaller than `k`.
    pub fn k_nearest(&self, query: Point3, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let center = cell_of(query, self.cell_size);
        let max_ring = self.max_ring(center);
        let mut candidates: Vec<(f64, u32)> = Vec::new();
        for ring in 0..=max_ring {
            self.collect_ring(center, ring, query, &mut candidates);
            if candidates.len() >= k {
                // Any point in a ring beyond `ring` is at least
                // `ring * cell_size` from the query, so once the kth best
                // candidate beats that bound no farther ring can matter.
                let bound = ring as f64 * self.cell_size;
                let kth = select_kth_dist_sq(&mut candidates, k);
                if kth <= bound * bound {
                    break;
                }
            }
        }
        candidates.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
        });
        candidates.truncate(k);
        candidates.into_iter().map(|(_, i)| i as usize).collect()
    }

    fn max_ring(&self, center: CellKey) -> i64 {
        let dx = (center.0 - self.key_min.0)
            .abs()
            .max((self.key_max.0 - center.0).abs());
        let dy = (center.1 - self.key_min.1)
            .abs()
            .max((self.key_max.1 - center.1).abs());
        let dz = (center.2 - self.key_min.2)
            .abs()
            .max((self.key_max.2 - center.2).abs());
        dx.max(dy).max(dz)
    }

    /// Append `(dist_sq, index)` for all points in cells at Chebyshev
    /// distance exactly `ring` from `center`. Enumeration walks the six
    /// shell faces clamped to the occupied grid bounds, so sparse or
    /// elongated clouds stay cheap.
    fn collect_ring(
        &self,
        center: CellKey,
        ring: i64,
        query: Point3,
        out: &mut Vec<(f64, u32)>,
    ) {
        let mut visit = |key: CellKey| {
            if let Some(ids) = self.cells.get(&key) {
                for &i in ids {
                    out.push((self.points[i as usize].dist_sq(query), i));
                }
            }
        };
        if ring == 0 {
            visit(center);
            return;
        }
        let clamp = |lo: i64, hi: i64, bound_lo: i64, bound_hi: i64| {
            (lo.max(bound_lo), hi.min(bound_hi))
        };
        let (y_lo, y_hi) = clamp(center.1 - ring, center.1 + ring, self.key_min.1, self.key_max.1);
        let (z_lo, z_hi) = clamp(center.2 - ring, center.2 + ring, self.key_min.2, self.key_max.2);
        // x = +-ring faces.
        for &x in &[center.0 - ring, center.0 + ring] {
            if x < self.key_min.0 || x > self.key_max.0 {
                continue;
            }
            for y in y_lo..=y_hi {
                for z in z_lo..=z_hi {
                    visit((x, y, z));
                }
            }
        }
        // y = +-ring faces (excluding the x faces already visited).
        let (x_lo, x_hi) = clamp(
            center.0 - ring + 1,
            center.0 + ring - 1,
            self.key_min.0,
            self.key_max.0,
        );
        for &y in &[center.1 - ring, center.1 + ring] {
            if y < self.key_min.1 || y > self.key_max.1 {
                continue;
            }
            for x in x_lo..=x_hi {
                for z in z_lo..=z_hi {
                    visit((x, y, z));
                }
            }
        }
        // z = +-ring faces (excluding x and y faces).
        let (y_in_lo, y_in_hi) = clamp(
            center.1 - ring + 1,
            center.1 + ring - 1,
            self.key_min.1,
            self.key_max.1,
        );
        for &z in &[center.2 - ring, center.2 + ring] {
            if z < self.key_min.2 || z > self.key_max.2 {
                continue;
            }
            for x in x_lo..=x_hi {
                for y in y_in_lo..=y_in_hi {
                    visit((x, y, z));
                }
            }
        }
    }
}

/// kth smallest distance among candidates (1-based k), without a full sort.
fn select_kth_dist_sq(candidates: &mut [(f64, u32)], k: usize) -> f64 {
    let idx = k - 1;
    let (_, kth, _) = candidates.select_nth_unstable_by(idx, |a, b| {
        a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
    });
    kth.0
}

fn default_cell_size(points: &[Point3]) -> f64 {
    let mut min = points[0];
    let mut max = points[0];
    for p in points {
        min = Point3::new(min.x.min(p.x), min.y.min(p.y), min.z.min(p.z));
        max = Point3::new(max.x.max(p.x), max.y.max(p.y), max.z.max(p.z));
    }
    let diag = (max - min).norm();
    if diag <= 0.0 {
        return 1e-3;
    }
    // Scale with the cloud's spread; degenerate (flat or collinear) extents
    // must not collapse the cell size.
    diag / (points.len() as f64).cbrt().max(1.0)
}

fn cell_of(p: Point3, cell: f64) -> CellKey {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

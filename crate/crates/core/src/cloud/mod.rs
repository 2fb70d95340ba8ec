//! Point cloud containers and the geometry kernels shared by all perception
//! stages: spatial indexing, downsampling, outlier removal, Euclidean
//! clustering, normal/curvature estimation, boundary detection and bounding
//! boxes.
//!
//! Everything here is a pure function of its inputs; none of these operations
//! draw random numbers, so identical inputs always give identical outputs.

mod index;
mod normals;
mod ops;

pub use index::SpatialIndex;
pub use normals::{detect_boundary, estimate_normals, sym_eigen_3x3, SurfaceSample};
pub use ops::{aabb, euclidean_cluster, statistical_outlier_removal, voxel_downsample};

use crate::geom::Point3;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("operation requires a non-empty cloud")]
    EmptyCloud,
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("cloud has {size} points but the operation needs more than {k}")]
    TooFewPoints { size: usize, k: usize },
}

/// An unorganized set of 3D points with parallel per-point colors and,
/// optionally, the image coordinate each point was projected from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColorPointCloud {
    pub points: Vec<Point3>,
    /// RGB triple per point.
    pub colors: Vec<[u8; 3]>,
    /// `(row, col)` image coordinate per point, when the cloud came from an
    /// RGB-D frame. Parallel to `points` when present.
    pub pixel_origin: Option<Vec<(u32, u32)>>,
}

impl ColorPointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from positions only; colors default to white.
    pub fn from_points(points: Vec<Point3>) -> Self {
        let colors = vec![[255, 255, 255]; points.len()];
        Self {
            points,
            colors,
            pixel_origin: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Point3, color: [u8; 3]) {
        self.points.push(p);
        self.colors.push(color);
    }

    pub fn push_with_origin(&mut self, p: Point3, color: [u8; 3], origin: (u32, u32)) {
        self.points.push(p);
        self.colors.push(color);
        self.pixel_origin
            .get_or_insert_with(Vec::new)
            .push(origin);
    }

    /// Cloud containing the points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> ColorPointCloud {
        ColorPointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: indices.iter().map(|&i| self.colors[i]).collect(),
            pixel_origin: self
                .pixel_origin
                .as_ref()
                .map(|po| indices.iter().map(|&i| po[i]).collect()),
        }
    }

    /// Mean of all point positions. `None` when empty.
    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let n = self.points.len() as f64;
        let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
        for p in &self.points {
            sx += p.x;
            sy += p.y;
            sz += p.z;
        }
        Some(Point3::new(sx / n, sy / n, sz / n))
    }

    /// Parallel-list length invariant check, used by debug assertions and IO.
    pub fn is_consistent(&self) -> bool {
        self.colors.len() == self.points.len()
            && self
                .pixel_origin
                .as_ref()
                .is_none_or(|po| po.len() == self.points.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_keeps_parallel_lists() {
        let mut c = ColorPointCloud::new();
        c.push_with_origin(Point3::new(0.0, 0.0, 0.0), [1, 2, 3], (0, 0));
        c.push_with_origin(Point3::new(1.0, 0.0, 0.0), [4, 5, 6], (0, 1));
        c.push_with_origin(Point3::new(2.0, 0.0, 0.0), [7, 8, 9], (0, 2));
        let s = c.select(&[2, 0]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.colors, vec![[7, 8, 9], [1, 2, 3]]);
        assert_eq!(s.pixel_origin, Some(vec![(0, 2), (0, 0)]));
        assert!(s.is_consistent());
    }

    #[test]
    fn centroid_of_two() {
        let c = ColorPointCloud::from_points(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(2.0, 4.0, 6.0),
        ]);
        let m = c.centroid().unwrap();
        assert_eq!(m, Point3::new(1.0, 2.0, 3.0));
    }
}

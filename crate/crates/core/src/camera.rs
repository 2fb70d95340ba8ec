//! Pinhole camera intrinsics and projection helpers.

use serde::{Deserialize, Serialize};

use crate::geom::{Point3, Pose};

/// Pinhole intrinsics in pixels. Pixel `(row, col)` sees the ray through
/// `((col - cx) / fx, (row - cy) / fy, 1)` in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        assert!(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
        Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        }
    }

    /// Camera-frame point for pixel `(row, col)` at depth `d` (camera z).
    pub fn unproject(&self, row: f64, col: f64, d: f64) -> Point3 {
        Point3::new(
            (col - self.cx) * d / self.fx,
            (row - self.cy) * d / self.fy,
            d,
        )
    }

    /// Continuous pixel coordinates `(row, col)` of a camera-frame point;
    /// `None` behind the camera.
    pub fn project(&self, p: Point3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((
            self.fy * p.y / p.z + self.cy,
            self.fx * p.x / p.z + self.cx,
        ))
    }

    pub fn contains(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }
}

/// JSON sidecar describing a frame's intrinsics and camera-to-world pose
/// (4x4 row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntrinsicsSidecar {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub pose: [[f64; 4]; 4],
}

impl IntrinsicsSidecar {
    pub fn from_parts(intr: &Intrinsics, pose: &Pose) -> Self {
        Self {
            fx: intr.fx,
            fy: intr.fy,
            cx: intr.cx,
            cy: intr.cy,
            pose: pose.to_matrix4(),
        }
    }

    pub fn intrinsics(&self, width: usize, height: usize) -> Intrinsics {
        Intrinsics::new(width, height, self.fx, self.fy, self.cx, self.cy)
    }

    pub fn pose(&self) -> Pose {
        Pose::from_matrix4(&self.pose)
    }
}

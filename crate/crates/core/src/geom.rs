//! Small fixed-size linear algebra used throughout the pipeline.
//!
//! World frame convention: `x` runs along the crop row, `z` is up, and `y`
//! points from the robot side of the row into the foliage. All lengths are
//! in meters.

use serde::{Deserialize, Serialize};

/// A 3D direction or displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the same direction; `None` for near-zero input.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-12 {
            None
        } else {
            Some(self * (1.0 / n))
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A position in the world frame (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);

    pub fn to_vec(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn from_vec(v: Vec3) -> Point3 {
        Point3::new(v.x, v.y, v.z)
    }

    pub fn dist(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    pub fn dist_sq(self, o: Point3) -> f64 {
        (self - o).norm_sq()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Sub for Point3 {
    type Output = Vec3;
    fn sub(self, o: Point3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Add<Vec3> for Point3 {
    type Output = Point3;
    fn add(self, v: Vec3) -> Point3 {
        Point3::new(self.x + v.x, self.y + v.y, self.z + v.z)
    }
}

impl std::ops::Sub<Vec3> for Point3 {
    type Output = Point3;
    fn sub(self, v: Vec3) -> Point3 {
        Point3::new(self.x - v.x, self.y - v.y, self.z - v.z)
    }
}

/// Row-major 3x3 matrix, used for rotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Matrix whose columns are the images of the basis vectors.
    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3 {
            m: [
                [c0.x, c1.x, c2.x],
                [c0.y, c1.y, c2.y],
                [c0.z, c1.z, c2.z],
            ],
        }
    }

    pub fn col(&self, i: usize) -> Vec3 {
        Vec3::new(self.m[0][i], self.m[1][i], self.m[2][i])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    /// Multiply by the transpose (inverse for rotations).
    pub fn tr_mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[1][0] * v.y + self.m[2][0] * v.z,
            self.m[0][1] * v.x + self.m[1][1] * v.y + self.m[2][1] * v.z,
            self.m[0][2] * v.x + self.m[1][2] * v.y + self.m[2][2] * v.z,
        )
    }
}

/// Rigid transform mapping camera-frame coordinates into the world frame:
/// `p_world = rotation * p_cam + translation`.
///
/// Camera frame convention: `+z` is the optical axis (forward), `+x` is image
/// right (increasing column), `+y` is image down (increasing row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    /// Camera pose at `position` with the optical axis along `forward` and
    /// image-up opposed to `up` (i.e. `up` appears upward in the image).
    ///
    /// `forward` must not be parallel to `up`.
    pub fn looking(position: Point3, forward: Vec3, up: Vec3) -> Pose {
        let z_cam = forward.normalized().expect("forward must be non-zero");
        let x_cam = z_cam
            .cross(up)
            .normalized()
            .expect("forward parallel to up");
        let y_cam = z_cam.cross(x_cam);
        Pose {
            rotation: Mat3::from_cols(x_cam, y_cam, z_cam),
            translation: position.to_vec(),
        }
    }

    pub fn cam_to_world(&self, p: Point3) -> Point3 {
        Point3::from_vec(self.rotation.mul_vec(p.to_vec()) + self.translation)
    }

    pub fn world_to_cam(&self, p: Point3) -> Point3 {
        Point3::from_vec(self.rotation.tr_mul_vec(p.to_vec() - self.translation))
    }

    pub fn position(&self) -> Point3 {
        Point3::from_vec(self.translation)
    }

    /// 4x4 row-major homogeneous matrix (camera -> world).
    pub fn to_matrix4(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation.m;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_matrix4(m: &[[f64; 4]; 4]) -> Pose {
        Pose {
            rotation: Mat3 {
                m: [
                    [m[0][0], m[0][1], m[0][2]],
                    [m[1][0], m[1][1], m[1][2]],
                    [m[2][0], m[2][1], m[2][2]],
                ],
            },
            translation: Vec3::new(m[0][3], m[1][3], m[2][3]),
        }
    }
}

/// Axis-aligned box, `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb3 {
    /// Panics if `min > max` on any axis.
    pub fn new(min: Point3, max: Point3) -> Aabb3 {
        assert!(
            min.x <= max.x && min.y <= max.y && min.z <= max.z,
            "Aabb3 requires min <= max componentwise"
        );
        Aabb3 { min, max }
    }

    pub fn contains(&self, p: Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Point3 {
        Point3::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
            0.5 * (self.min.z + self.max.z),
        )
    }

    pub fn translated(&self, v: Vec3) -> Aabb3 {
        Aabb3 {
            min: self.min + v,
            max: self.max + v,
        }
    }
}

/// Orthonormal tool/grasp frame with the x axis along `approach`.
///
/// The z axis is the world-up direction projected out of `approach`; this is
/// well defined as long as `approach` is not vertical.
pub fn frame_from_approach(approach: Vec3) -> Mat3 {
    let x = approach.normalized().expect("approach must be non-zero");
    let z_raw = Vec3::Z - x * Vec3::Z.dot(x);
    let z = z_raw.normalized().unwrap_or_else(|| {
        // Approach is vertical; fall back to world y as the blade-plane normal.
        (Vec3::Y - x * Vec3::Y.dot(x)).normalized().unwrap()
    });
    let y = z.cross(x);
    Mat3::from_cols(x, y, z)
}

//! Crop detection: color segmentation of an RGB-D frame, projection to a
//! world-frame point cloud, clustering into candidate targets, target
//! selection, and the close-range re-capture viewpoint.

use thiserror::Error;

use crate::camera::Intrinsics;
use crate::cloud::{
    aabb, euclidean_cluster, statistical_outlier_removal, voxel_downsample, ColorPointCloud,
};
use crate::color::{segment_image, GaussianColorModel};
use crate::geom::{Aabb3, Point3, Pose, Vec3};
use crate::image::{BitMask, DepthImage, RgbImage};

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("no targets to select from")]
    NoTargets,
}

/// A registered color + depth capture with its camera calibration and pose.
#[derive(Debug, Clone)]
pub struct RgbdFrame {
    pub rgb: RgbImage,
    /// Per-pixel camera-frame z in meters; 0 marks invalid depth.
    pub depth: DepthImage,
    pub intrinsics: Intrinsics,
    /// Camera-to-world transform.
    pub camera_pose: Pose,
}

impl RgbdFrame {
    pub fn width(&self) -> usize {
        self.rgb.width
    }

    pub fn height(&self) -> usize {
        self.rgb.height
    }
}

/// Image-space bounding box of a target: center and size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Box2 {
    pub center_col: f64,
    pub center_row: f64,
    pub width: f64,
    pub height: f64,
}

/// A segmented, clustered, denoised candidate crop.
#[derive(Debug, Clone)]
pub struct PepperTarget {
    /// Denoised world-frame cloud of this target.
    pub cloud: ColorPointCloud,
    pub centroid: Point3,
    pub bb3: Aabb3,
    pub bb2: Box2,
    pub cluster_size: usize,
}

/// Parameters of the detection pipeline.
#[derive(Debug, Clone)]
pub struct DetectParams {
    /// Log-likelihood threshold for the color segmentation.
    pub threshold: f64,
    pub downsample_radius: f64,
    pub cluster_tolerance: f64,
    pub cluster_min: usize,
    pub cluster_max: usize,
    pub outlier_k: usize,
    pub outlier_stddev_mult: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            threshold: -12.0,
            downsample_radius: 0.002,
            cluster_tolerance: 0.01,
            cluster_min: 1000,
            cluster_max: 250_000,
            outlier_k: 16,
            outlier_stddev_mult: 1.0,
        }
    }
}

/// Project masked pixels with valid depth into a world-frame cloud, keeping
/// each point's color and `(row, col)` origin. Invalid-depth pixels are
/// skipped, never inpainted.
pub fn project_to_cloud(frame: &RgbdFrame, mask: &BitMask) -> ColorPointCloud {
    assert_eq!(mask.width, frame.width(), "mask/frame width mismatch");
    assert_eq!(mask.height, frame.height(), "mask/frame height mismatch");
    let mut cloud = ColorPointCloud::new();
    cloud.pixel_origin = Some(Vec::new());
    for row in 0..frame.height() {
        for col in 0..frame.width() {
            if !mask.get(row, col) {
                continue;
            }
            let d = frame.depth.get(row, col);
            if d <= 0.0 {
                continue;
            }
            let cam = frame.intrinsics.unproject(row as f64, col as f64, d);
            let world = frame.camera_pose.cam_to_world(cam);
            cloud.push_with_origin(world, frame.rgb.get(row, col), (row as u32, col as u32));
        }
    }
    cloud
}

/// Full detection pipeline: segment by color, project to 3D, downsample,
/// cluster, denoise each cluster, and wrap the survivors as targets ordered
/// by descending cluster size.
pub fn detect_peppers(
    frame: &RgbdFrame,
    model: &GaussianColorModel,
    params: &DetectParams,
) -> Vec<PepperTarget> {
    let (mask, _scores) = segment_image(model, &frame.rgb, params.threshold);
    let cloud = project_to_cloud(frame, &mask);
    if cloud.is_empty() {
        return Vec::new();
    }
    let down = voxel_downsample(&cloud, params.downsample_radius).expect("radius validated");
    let clusters = euclidean_cluster(
        &down,
        params.cluster_tolerance,
        params.cluster_min,
        params.cluster_max,
    );
    let mut targets = Vec::new();
    for cluster in clusters {
        // Outlier removal needs more than k points; clusters here always
        // exceed the pepper minimum which is far larger than k.
        let denoised = if cluster.len() > params.outlier_k {
            statistical_outlier_removal(&cluster, params.outlier_k, params.outlier_stddev_mult)
                .expect("size checked")
        } else {
            cluster
        };
        if denoised.len() < params.cluster_min {
            continue;
        }
        let centroid = denoised.centroid().expect("non-empty");
        let bb3 = aabb(&denoised).expect("non-empty");
        let bb2 = image_box(&denoised);
        targets.push(PepperTarget {
            cluster_size: denoised.len(),
            centroid,
            bb3,
            bb2,
            cloud: denoised,
        });
    }
    // Largest first; break ties on centroid for a reproducible order.
    targets.sort_by(|a, b| {
        b.cluster_size
            .cmp(&a.cluster_size)
            .then(a.centroid.x.partial_cmp(&b.centroid.x).unwrap())
            .then(a.centroid.z.partial_cmp(&b.centroid.z).unwrap())
    });
    targets
}

/// Bounding box of the cloud's pixel origins.
fn image_box(cloud: &ColorPointCloud) -> Box2 {
    let origins = cloud
        .pixel_origin
        .as_ref()
        .expect("detection clouds carry pixel origins");
    let mut min_r = u32::MAX;
    let mut max_r = 0u32;
    let mut min_c = u32::MAX;
    let mut max_c = 0u32;
    for &(r, c) in origins {
        min_r = min_r.min(r);
        max_r = max_r.max(r);
        min_c = min_c.min(c);
        max_c = max_c.max(c);
    }
    Box2 {
        center_col: (min_c + max_c) as f64 / 2.0,
        center_row: (min_r + max_r) as f64 / 2.0,
        width: (max_c - min_c + 1) as f64,
        height: (max_r - min_r + 1) as f64,
    }
}

/// Pick the harvest target: the largest cluster, with targets within 5%
/// relative size of the largest treated as tied and resolved by distance to
/// `reference`. Invariant under permutation of the input list.
pub fn select_target(
    targets: &[PepperTarget],
    reference: Point3,
) -> Result<&PepperTarget, DetectError> {
    let largest = targets
        .iter()
        .map(|t| t.cluster_size)
        .max()
        .ok_or(DetectError::NoTargets)?;
    let band = largest as f64 * 0.95;
    targets
        .iter()
        .filter(|t| t.cluster_size as f64 >= band)
        .min_by(|a, b| {
            let da = a.centroid.dist(reference);
            let db = b.centroid.dist(reference);
            da.partial_cmp(&db)
                .unwrap()
                .then(b.cluster_size.cmp(&a.cluster_size))
                .then(a.centroid.x.partial_cmp(&b.centroid.x).unwrap())
                .then(a.centroid.y.partial_cmp(&b.centroid.y).unwrap())
                .then(a.centroid.z.partial_cmp(&b.centroid.z).unwrap())
        })
        .ok_or(DetectError::NoTargets)
}

/// Camera pose for the close-range re-capture: `standoff` back from the
/// target centroid along `row_normal`, raised by `vertical_offset`, with a
/// horizontal optical axis along `row_normal`. Raising the camera shifts the
/// crop down in the image so the stalk region above it is centered.
pub fn close_range_viewpoint(
    target: &PepperTarget,
    standoff: f64,
    vertical_offset: f64,
    row_normal: Vec3,
) -> Pose {
    assert!(standoff > 0.0, "standoff must be positive");
    let dir = row_normal.normalized().expect("row normal must be non-zero");
    let position = target.centroid - dir * standoff + Vec3::Z * vertical_offset;
    Pose::looking(position, dir, Vec3::Z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_target(size: usize, centroid: Point3) -> PepperTarget {
        PepperTarget {
            cloud: ColorPointCloud::new(),
            centroid,
            bb3: Aabb3::new(centroid, centroid),
            bb2: Box2 {
                center_col: 0.0,
                center_row: 0.0,
                width: 1.0,
                height: 1.0,
            },
            cluster_size: size,
        }
    }

    #[test]
    fn project_principal_point() {
        let intr = Intrinsics::new(4, 4, 100.0, 100.0, 2.0, 2.0);
        let mut depth = DepthImage::new(4, 4);
        depth.set(2, 2, 0.5);
        let frame = RgbdFrame {
            rgb: RgbImage::new(4, 4),
            depth,
            intrinsics: intr,
            camera_pose: Pose::IDENTITY,
        };
        let mask = BitMask::filled(4, 4, true);
        let cloud = project_to_cloud(&frame, &mask);
        assert_eq!(cloud.len(), 1); // only one valid-depth pixel
        assert!(cloud.points[0].dist(Point3::new(0.0, 0.0, 0.5)) < 1e-12);
        assert_eq!(cloud.pixel_origin.as_ref().unwrap()[0], (2, 2));
    }

    #[test]
    fn invalid_depth_is_skipped() {
        let intr = Intrinsics::new(2, 2, 100.0, 100.0, 1.0, 1.0);
        let frame = RgbdFrame {
            rgb: RgbImage::new(2, 2),
            depth: DepthImage::new(2, 2), // all zero
            intrinsics: intr,
            camera_pose: Pose::IDENTITY,
        };
        let cloud = project_to_cloud(&frame, &BitMask::filled(2, 2, true));
        assert!(cloud.is_empty());
    }

    #[test]
    fn select_prefers_larger() {
        let targets = vec![
            dummy_target(8000, Point3::new(0.0, 0.0, 0.9)),
            dummy_target(5000, Point3::new(0.0, 0.0, 0.4)),
        ];
        let best = select_target(&targets, Point3::ORIGIN).unwrap();
        assert_eq!(best.cluster_size, 8000);
    }

    #[test]
    fn select_breaks_size_tie_by_distance() {
        let targets = vec![
            dummy_target(8000, Point3::new(0.0, 0.0, 0.9)),
            dummy_target(8000, Point3::new(0.0, 0.0, 0.4)),
        ];
        let best = select_target(&targets, Point3::ORIGIN).unwrap();
        assert!((best.centroid.z - 0.4).abs() < 1e-12);
    }

    #[test]
    fn select_within_five_percent_band() {
        // 7700 is within 5% of 8000, so the nearer one wins.
        let targets = vec![
            dummy_target(8000, Point3::new(0.0, 0.0, 0.9)),
            dummy_target(7700, Point3::new(0.0, 0.0, 0.4)),
        ];
        let best = select_target(&targets, Point3::ORIGIN).unwrap();
        assert_eq!(best.cluster_size, 7700);
    }

    #[test]
    fn select_single_target_identity() {
        let targets = vec![dummy_target(100, Point3::new(0.0, 0.0, 1.0))];
        assert_eq!(
            select_target(&targets, Point3::ORIGIN).unwrap().cluster_size,
            100
        );
    }

    #[test]
    fn select_empty_errors() {
        assert_eq!(
            select_target(&[], Point3::ORIGIN).unwrap_err(),
            DetectError::NoTargets
        );
    }

    #[test]
    fn select_invariant_under_permutation() {
        let a = dummy_target(8000, Point3::new(0.1, 0.0, 0.9));
        let b = dummy_target(7800, Point3::new(0.0, 0.0, 0.4));
        let c = dummy_target(4000, Point3::new(0.0, 0.0, 0.2));
        let one = vec![a.clone(), b.clone(), c.clone()];
        let two = vec![c, a, b];
        let r1 = select_target(&one, Point3::ORIGIN).unwrap();
        let r2 = select_target(&two, Point3::ORIGIN).unwrap();
        assert_eq!(r1.cluster_size, r2.cluster_size);
        assert_eq!(r1.centroid, r2.centroid);
    }

    #[test]
    fn close_range_pose_construction() {
        let target = dummy_target(1000, Point3::new(0.0, 1.0, 1.0));
        let pose = close_range_viewpoint(&target, 0.4, 0.1, Vec3::Y);
        assert!(pose.position().dist(Point3::new(0.0, 0.6, 1.1)) < 1e-12);
        // Optical axis along +y.
        assert!((pose.rotation.col(2) - Vec3::Y).norm() < 1e-12);
    }

    #[test]
    fn zero_offset_axis_through_centroid() {
        let centroid = Point3::new(0.3, 1.0, 1.2);
        let target = dummy_target(1000, centroid);
        let pose = close_range_viewpoint(&target, 0.5, 0.0, Vec3::Y);
        // The centroid projects onto the optical axis.
        let cam = pose.world_to_cam(centroid);
        assert!(cam.x.abs() < 1e-12 && cam.y.abs() < 1e-12);
        assert!((cam.z - 0.5).abs() < 1e-12);
    }
}

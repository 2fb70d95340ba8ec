//! Peduncle localization: 2D region of interest above the detected crop,
//! pluggable per-pixel scoring, a five-step 3D post-filter, and cutting-pose
//! estimation at the filtered centroid.
//!
//! The post-filter applies, in order: (1) threshold the scores, (2) project
//! surviving pixels to 3D through the depth image, (3) delete crop-colored
//! points, (4) delete points outside the peduncle bounding box, (5) cluster
//! and keep the largest cluster. Surviving counts per step are reported so
//! callers can observe the monotone shrink through steps 1-4.

use thiserror::Error;

use crate::cloud::{euclidean_cluster, ColorPointCloud};
use crate::color::{rgb_to_rotated_hsv, GaussianColorModel};
use crate::detect::{project_to_cloud, Box2, RgbdFrame};
use crate::geom::{Aabb3, Mat3, Point3, Vec3};
use crate::image::{BitMask, RgbImage, ScoreMap};

#[derive(Debug, Error)]
pub enum PeduncleError {
    #[error("region of interest is empty after clipping")]
    DegenerateRoi,
    #[error("pixel scorer failed: {0}")]
    ScorerFailure(String),
    #[error("no positive-annotated pixels in the training set")]
    NoPositives,
    #[error("no negative-annotated pixels in the training set")]
    NoNegatives,
    #[error("no peduncle cluster (got {got} points, need {need})")]
    NoPeduncle { got: usize, need: usize },
}

/// Rectangular region of interest in pixels, half-open on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi2 {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Roi2 {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row_start && row < self.row_end && col >= self.col_start && col < self.col_end
    }

    pub fn width(&self) -> usize {
        self.col_end - self.col_start
    }

    pub fn height(&self) -> usize {
        self.row_end - self.row_start
    }
}

/// Region of interest for the peduncle: same width and height as the crop's
/// image box, shifted up (toward lower row indices) by half the box height,
/// then clipped to the image.
pub fn compute_roi(
    bb2: &Box2,
    image_width: usize,
    image_height: usize,
) -> Result<Roi2, PeduncleError> {
    let center_row = bb2.center_row - bb2.height / 2.0;
    let center_col = bb2.center_col;
    let row_start = (center_row - bb2.height / 2.0).round();
    let row_end = (center_row + bb2.height / 2.0).round();
    let col_start = (center_col - bb2.width / 2.0).round();
    let col_end = (center_col + bb2.width / 2.0).round();

    let row_start = row_start.max(0.0) as usize;
    let row_end = row_end.clamp(0.0, image_height as f64) as usize;
    let col_start = col_start.max(0.0) as usize;
    let col_end = col_end.clamp(0.0, image_width as f64) as usize;
    if row_start >= row_end || col_start >= col_end {
        return Err(PeduncleError::DegenerateRoi);
    }
    Ok(Roi2 {
        row_start,
        row_end,
        col_start,
        col_end,
    })
}

/// Per-pixel confidence scorer. Implementations must return values in
/// `[0, 1]` and zero outside the region of interest, and must be safe for
/// concurrent read-only use once constructed.
pub trait PixelScorer {
    fn score(&self, image: &RgbImage, roi: &Roi2) -> Result<ScoreMap, PeduncleError>;
}

/// Score pixels through `scorer`, then enforce the interface contract:
/// values clamped to `[0, 1]` and zeroed outside the ROI.
pub fn score_pixels(
    scorer: &dyn PixelScorer,
    image: &RgbImage,
    roi: &Roi2,
) -> Result<ScoreMap, PeduncleError> {
    let mut scores = scorer.score(image, roi)?;
    if scores.width != image.width || scores.height != image.height {
        return Err(PeduncleError::ScorerFailure(format!(
            "scorer returned {}x{} for a {}x{} image",
            scores.width, scores.height, image.width, image.height
        )));
    }
    for row in 0..scores.height {
        for col in 0..scores.width {
            let v = scores.get(row, col);
            let v = if roi.contains(row, col) {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            };
            scores.set(row, col, v);
        }
    }
    Ok(scores)
}

/// Scores pixels by color proximity to a Gaussian model of peduncle color:
/// `exp(-mahalanobis^2 / 2)`, which is 1 at the model mean and decays
/// monotonically with color distance.
#[derive(Debug, Clone)]
pub struct GaussianPeduncleScorer {
    pub model: GaussianColorModel,
}

impl PixelScorer for GaussianPeduncleScorer {
    fn score(&self, image: &RgbImage, roi: &Roi2) -> Result<ScoreMap, PeduncleError> {
        let mut out = ScoreMap::new(image.width, image.height);
        for row in roi.row_start..roi.row_end {
            for col in roi.col_start..roi.col_end {
                let px = rgb_to_rotated_hsv(image.get(row, col));
                out.set(row, col, (-0.5 * self.model.mahalanobis_sq(px)).exp());
            }
        }
        Ok(out)
    }
}

/// Serves confidences from a precomputed score map (for example the output
/// of an external segmentation network, loaded from a 16-bit PGM).
#[derive(Debug, Clone)]
pub struct ScoreMapScorer {
    pub map: ScoreMap,
}

impl PixelScorer for ScoreMapScorer {
    fn score(&self, image: &RgbImage, roi: &Roi2) -> Result<ScoreMap, PeduncleError> {
        if self.map.width != image.width || self.map.height != image.height {
            return Err(PeduncleError::ScorerFailure(format!(
                "score map is {}x{} but the image is {}x{}",
                self.map.width, self.map.height, image.width, image.height
            )));
        }
        let mut out = ScoreMap::new(image.width, image.height);
        for row in roi.row_start..roi.row_end {
            for col in roi.col_start..roi.col_end {
                out.set(row, col, self.map.get(row, col));
            }
        }
        Ok(out)
    }
}

/// Number of features used by the logistic patch classifier.
pub const PATCH_FEATURES: usize = 5;

/// Logistic regression over per-pixel features: rotated-HSV triple (hue
/// scaled to [0,1]), local luminance gradient magnitude, and normalized image
/// row. A small trainable stand-in for a segmentation network.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PatchClassifier {
    pub weights: [f64; PATCH_FEATURES],
    pub bias: f64,
}

impl PatchClassifier {
    fn raw_score(&self, f: &[f64; PATCH_FEATURES]) -> f64 {
        let z: f64 = self
            .weights
            .iter()
            .zip(f)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }
}

impl PixelScorer for PatchClassifier {
    fn score(&self, image: &RgbImage, roi: &Roi2) -> Result<ScoreMap, PeduncleError> {
        let features = pixel_features(image);
        let mut out = ScoreMap::new(image.width, image.height);
        for row in roi.row_start..roi.row_end {
            for col in roi.col_start..roi.col_end {
                out.set(row, col, self.raw_score(&features[row * image.width + col]));
            }
        }
        Ok(out)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-pixel feature vector for the patch classifier.
fn pixel_features(image: &RgbImage) -> Vec<[f64; PATCH_FEATURES]> {
    let w = image.width;
    let h = image.height;
    // Luminance in [0, 1] for the gradient feature.
    let luma: Vec<f64> = image
        .pixels
        .iter()
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
        .collect();
    let mut out = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let px = rgb_to_rotated_hsv(image.get(row, col));
            let gx = if col > 0 && col + 1 < w {
                (luma[row * w + col + 1] - luma[row * w + col - 1]) / 2.0
            } else {
                0.0
            };
            let gy = if row > 0 && row + 1 < h {
                (luma[(row + 1) * w + col] - luma[(row - 1) * w + col]) / 2.0
            } else {
                0.0
            };
            let grad = (gx * gx + gy * gy).sqrt() * std::f64::consts::SQRT_2;
            let row_norm = if h > 1 { row as f64 / (h - 1) as f64 } else { 0.0 };
            out.push([px.h / 360.0, px.s, px.v, grad.min(1.0), row_norm]);
        }
    }
    out
}

/// One training image with its three-way annotation: positive pixels,
/// negative pixels, everything else ignored.
pub struct AnnotatedImage<'a> {
    pub image: &'a RgbImage,
    pub positive: &'a BitMask,
    pub negative: &'a BitMask,
}

/// Train the logistic patch classifier by batch gradient descent on the
/// annotated pixels. Runs until the mean loss decreases by less than `1e-6`
/// between epochs, capped at 500 epochs.
pub fn train_patch_classifier(
    images: &[AnnotatedImage<'_>],
) -> Result<PatchClassifier, PeduncleError> {
    let mut features: Vec<[f64; PATCH_FEATURES]> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    for ann in images {
        let per_pixel = pixel_features(ann.image);
        for (i, f) in per_pixel.iter().enumerate() {
            if ann.positive.bits[i] {
                features.push(*f);
                labels.push(1.0);
            } else if ann.negative.bits[i] {
                features.push(*f);
                labels.push(0.0);
            }
        }
    }
    if !labels.contains(&1.0) {
        return Err(PeduncleError::NoPositives);
    }
    if !labels.contains(&0.0) {
        return Err(PeduncleError::NoNegatives);
    }

    let n = features.len() as f64;
    let mut model = PatchClassifier {
        weights: [0.0; PATCH_FEATURES],
        bias: 0.0,
    };
    let learning_rate = 4.0;
    let mut prev_loss = f64::INFINITY;
    for _epoch in 0..500 {
        let mut grad_w = [0.0f64; PATCH_FEATURES];
        let mut grad_b = 0.0f64;
        let mut loss = 0.0f64;
        for (f, &y) in features.iter().zip(&labels) {
            let p = model.raw_score(f);
            let err = p - y;
            for (g, x) in grad_w.iter_mut().zip(f) {
                *g += err * x;
            }
            grad_b += err;
            // Clamped log loss keeps the sum finite for confident mistakes.
            let p_for_y = if y > 0.5 { p } else { 1.0 - p };
            loss -= p_for_y.max(1e-12).ln();
        }
        loss /= n;
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= learning_rate * g / n;
        }
        model.bias -= learning_rate * grad_b / n;
        if (prev_loss - loss).abs() < 1e-6 {
            break;
        }
        prev_loss = loss;
    }
    Ok(model)
}

/// Constraint box for peduncle points, derived from the crop's bounding box:
/// a square horizontal footprint of side `max(width, length)` centered on the
/// crop box's horizontal center, spanning `[top - h_offset, top + h_offset]`
/// vertically. The overlap below the crop top tolerates depth noise there.
pub fn peduncle_bbox3(pepper_bb3: &Aabb3, h_offset: f64) -> Aabb3 {
    assert!(h_offset > 0.0, "height offset must be positive");
    let ext = pepper_bb3.extent();
    let side = ext.x.max(ext.y);
    let center = pepper_bb3.center();
    let top = pepper_bb3.max.z;
    Aabb3 {
        min: Point3::new(center.x - side / 2.0, center.y - side / 2.0, top - h_offset),
        max: Point3::new(center.x + side / 2.0, center.y + side / 2.0, top + h_offset),
    }
}

/// Point counts surviving each stage of the five-step filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct FilterTrace {
    /// Pixels at or above the score threshold (step 1).
    pub after_threshold: usize,
    /// Points with valid depth after projection (step 2).
    pub after_projection: usize,
    /// Points left after deleting crop-colored points (step 3).
    pub after_color_rejection: usize,
    /// Points inside the constraint box (step 4).
    pub after_bbox: usize,
    /// Clusters found in step 5.
    pub clusters: usize,
    /// Size of the selected largest cluster (0 when none).
    pub selected: usize,
}

impl FilterTrace {
    /// Steps 1-4 can only shrink the surviving set.
    pub fn is_monotone(&self) -> bool {
        self.after_threshold >= self.after_projection
            && self.after_projection >= self.after_color_rejection
            && self.after_color_rejection >= self.after_bbox
            && self.after_bbox >= self.selected
    }
}

/// Clustering parameters for the final filter step.
#[derive(Debug, Clone, Copy)]
pub struct ClusterParams {
    pub tolerance: f64,
    pub min_size: usize,
    pub max_size: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            tolerance: 0.01,
            min_size: 50,
            max_size: 250_000,
        }
    }
}

/// The five-step 3D post-filter. Returns the largest surviving cluster
/// (possibly empty) plus the per-step trace.
pub fn filter_peduncle_points(
    score_map: &ScoreMap,
    frame: &RgbdFrame,
    pepper_model: &GaussianColorModel,
    pepper_threshold: f64,
    bb3: &Aabb3,
    score_threshold: f64,
    cluster: &ClusterParams,
) -> (ColorPointCloud, FilterTrace) {
    assert_eq!(score_map.width, frame.width(), "score map width mismatch");
    assert_eq!(score_map.height, frame.height(), "score map height mismatch");
    let mut trace = FilterTrace::default();

    // Step 1: threshold the classification scores.
    let mut mask = BitMask::new(score_map.width, score_map.height);
    for (i, &v) in score_map.values.iter().enumerate() {
        mask.bits[i] = v >= score_threshold;
    }
    trace.after_threshold = mask.count_true();

    // Step 2: project surviving pixels through the depth image.
    let projected = project_to_cloud(frame, &mask);
    trace.after_projection = projected.len();

    // Step 3: detect and delete crop-colored points.
    let keep: Vec<usize> = (0..projected.len())
        .filter(|&i| {
            let px = rgb_to_rotated_hsv(projected.colors[i]);
            pepper_model.log_likelihood(px) < pepper_threshold
        })
        .collect();
    let colored = projected.select(&keep);
    trace.after_color_rejection = colored.len();

    // Step 4: delete points outside the constraint box.
    let keep: Vec<usize> = (0..colored.len())
        .filter(|&i| bb3.contains(colored.points[i]))
        .collect();
    let boxed = colored.select(&keep);
    trace.after_bbox = boxed.len();

    // Step 5: Euclidean clustering; keep the cluster with the most points.
    let clusters = euclidean_cluster(&boxed, cluster.tolerance, cluster.min_size, cluster.max_size);
    trace.clusters = clusters.len();
    let selected = clusters.into_iter().next().unwrap_or_default();
    trace.selected = selected.len();
    (selected, trace)
}

/// 6-DoF cutting pose at the centroid of the filtered peduncle points.
/// The approach axis is the world x axis and the blade plane stays level;
/// the orientation is therefore constant by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutPoseEstimate {
    pub position: Point3,
    /// Blade approach direction; always the world x axis.
    pub approach: Vec3,
    /// Tool frame: x = approach, z = blade-plane normal (world up).
    pub orientation: Mat3,
    pub support_count: usize,
}

/// Estimate the cutting pose from filtered peduncle points. Errors when the
/// support is below `min_support` (undersized or empty cluster).
pub fn estimate_cutting_pose(
    points: &ColorPointCloud,
    min_support: usize,
) -> Result<CutPoseEstimate, PeduncleError> {
    if points.len() < min_support {
        return Err(PeduncleError::NoPeduncle {
            got: points.len(),
            need: min_support,
        });
    }
    let position = points.centroid().expect("non-empty by min_support");
    Ok(CutPoseEstimate {
        position,
        approach: Vec3::X,
        orientation: Mat3::IDENTITY,
        support_count: points.len(),
    })
}

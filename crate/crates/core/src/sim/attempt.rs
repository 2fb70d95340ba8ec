//! Harvest attempt outcome models and the per-attempt record.
//!
//! Attachment and detachment are threshold + Bernoulli surrogates over the
//! scene's ground truth: a suction grasp succeeds when the approach agrees
//! with the true surface normal, the local surface is flat enough and no
//! leaf sits inside the suction footprint; a cut succeeds when the estimated
//! cutting position lands within the blade's half width of the true peduncle
//! centroid and the peduncle is not fully hidden at cut height. Random
//! failure rates model everything the thresholds cannot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rng::Rng;
use super::scene::{Leaf, Pepper, Scene};
use super::trajectory::Trajectory;
use crate::cloud::sym_eigen_3x3;
use crate::geom::{Aabb3, Point3, Vec3};
use crate::grasp::GraspCandidate;
use crate::peduncle::CutPoseEstimate;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("unknown pepper id {0}")]
    UnknownPepper(usize),
}

/// Harvest stages with simulated durations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Detection,
    GraspSelection,
    PeduncleDetection,
    Attach,
    Detach,
    Place,
}

pub const STAGES: [Stage; 6] = [
    Stage::Detection,
    Stage::GraspSelection,
    Stage::PeduncleDetection,
    Stage::Attach,
    Stage::Detach,
    Stage::Place,
];

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Detection => "Pepper Detection",
            Stage::GraspSelection => "Grasp Selection",
            Stage::PeduncleDetection => "Peduncle Detection",
            Stage::Attach => "Attachment",
            Stage::Detach => "Detachment",
            Stage::Place => "Placement",
        }
    }
}

/// Simulated wall time per stage; `None` when a stage never ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDurations {
    pub detection: Option<f64>,
    pub grasp_selection: Option<f64>,
    pub peduncle_detection: Option<f64>,
    pub attach: Option<f64>,
    pub detach: Option<f64>,
    pub place: Option<f64>,
}

impl StageDurations {
    pub fn get(&self, stage: Stage) -> Option<f64> {
        match stage {
            Stage::Detection => self.detection,
            Stage::GraspSelection => self.grasp_selection,
            Stage::PeduncleDetection => self.peduncle_detection,
            Stage::Attach => self.attach,
            Stage::Detach => self.detach,
            Stage::Place => self.place,
        }
    }
}

/// The nine failure categories of the harvest taxonomy, keyed a-i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureCategory {
    /// a: peduncle not detected.
    #[serde(rename = "a")]
    PeduncleNotDetected,
    /// b: peduncle only partially cut (small cut-position error).
    #[serde(rename = "b")]
    PedunclePartiallyCut,
    /// c: peduncle moved / missed (large cut-position error).
    #[serde(rename = "c")]
    PeduncleMoved,
    /// d: peduncle abnormal in size or shape.
    #[serde(rename = "d")]
    DifficultPeduncle,
    /// e: planned waypoint unreachable.
    #[serde(rename = "e")]
    PathPlanningFailure,
    /// f: peduncle fully occluded.
    #[serde(rename = "f")]
    PeduncleObstructed,
    /// g: crop abnormal in size or shape.
    #[serde(rename = "g")]
    DifficultPepper,
    /// h: crop fully occluded.
    #[serde(rename = "h")]
    PepperObstructed,
    /// i: suction attachment failure.
    #[serde(rename = "i")]
    AttachmentFailure,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 9] = [
        FailureCategory::PeduncleNotDetected,
        FailureCategory::PedunclePartiallyCut,
        FailureCategory::PeduncleMoved,
        FailureCategory::DifficultPeduncle,
        FailureCategory::PathPlanningFailure,
        FailureCategory::PeduncleObstructed,
        FailureCategory::DifficultPepper,
        FailureCategory::PepperObstructed,
        FailureCategory::AttachmentFailure,
    ];

    pub fn letter(self) -> char {
        (b'a' + Self::ALL.iter().position(|c| *c == self).unwrap() as u8) as char
    }
}

/// Full trace of one harvest attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub pepper_id: u64,
    pub modified: bool,
    pub attempt_index: u32,
    pub pepper_detected: bool,
    pub peduncle_detected: bool,
    pub attached: bool,
    pub harvested: bool,
    pub failure_category: Option<FailureCategory>,
    pub durations: StageDurations,
}

impl AttemptRecord {
    /// Later stage success implies all earlier successes.
    pub fn stages_monotone(&self) -> bool {
        (!self.peduncle_detected || self.pepper_detected)
            && (!self.attached || self.peduncle_detected)
            && (!self.harvested || self.attached)
    }
}

/// Thresholds of the surrogate outcome models. These are simulator
/// calibration knobs, not measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateTolerances {
    /// Max angle between the approach and the inward true normal (radians).
    pub max_approach_angle: f64,
    /// Max PCA curvature of the true surface at the contact point.
    pub max_contact_curvature: f64,
    /// Suction cup footprint radius; a leaf inside it breaks the seal.
    pub suction_radius: f64,
    /// Cut succeeds within this distance of the true peduncle centroid.
    pub blade_half_width: f64,
    /// Residual random attachment failure probability.
    pub attach_failure_prob: f64,
    /// Residual random cut failure probability.
    pub cut_failure_prob: f64,
    /// Crop diameters outside this range count as difficult (category g).
    pub pepper_size_limits: [f64; 2],
    /// Peduncle lengths outside this range count as difficult (category d).
    pub peduncle_length_limits: [f64; 2],
    /// Visible fraction below which a crop or peduncle counts as fully
    /// occluded.
    pub occlusion_visibility_threshold: f64,
}

impl Default for SurrogateTolerances {
    fn default() -> Self {
        Self {
            max_approach_angle: std::f64::consts::FRAC_PI_4,
            max_contact_curvature: 0.2,
            suction_radius: 0.02,
            blade_half_width: 0.02,
            attach_failure_prob: 0.02,
            cut_failure_prob: 0.02,
            pepper_size_limits: [0.0, 1.0],
            peduncle_length_limits: [0.0, 1.0],
            occlusion_visibility_threshold: 0.05,
        }
    }
}

/// Lognormal stage-duration parameters as `[mean, stddev]` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingModel {
    pub detection: [f64; 2],
    pub grasp_selection: [f64; 2],
    pub peduncle_detection: [f64; 2],
    pub attach: [f64; 2],
    pub detach: [f64; 2],
    pub place: [f64; 2],
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            detection: [4.3, 1.2],
            grasp_selection: [0.9, 0.5],
            peduncle_detection: [1.4, 2.2],
            attach: [6.7, 4.7],
            detach: [14.5, 2.9],
            place: [9.2, 2.4],
        }
    }
}

impl TimingModel {
    fn draw(&self, stage: Stage, rng: &mut Rng) -> f64 {
        let [mean, sd] = match stage {
            Stage::Detection => self.detection,
            Stage::GraspSelection => self.grasp_selection,
            Stage::PeduncleDetection => self.peduncle_detection,
            Stage::Attach => self.attach,
            Stage::Detach => self.detach,
            Stage::Place => self.place,
        };
        rng.lognormal_mean_sd(mean, sd)
    }
}

/// Distance from a point to a finite disk.
fn point_disk_distance(p: Point3, leaf: &Leaf) -> f64 {
    let v = p - leaf.center;
    let h = v.dot(leaf.normal);
    let radial = v - leaf.normal * h;
    let rho = radial.norm();
    if rho <= leaf.radius {
        h.abs()
    } else {
        let d = rho - leaf.radius;
        (h * h + d * d).sqrt()
    }
}

/// Does the segment `from -> to` pass through any leaf disk?
fn segment_blocked(scene: &Scene, from: Point3, to: Point3) -> bool {
    let dir = to - from;
    for leaf in &scene.leaves {
        let denom = dir.dot(leaf.normal);
        if denom.abs() < 1e-12 {
            continue;
        }
        let t = (leaf.center - from).dot(leaf.normal) / denom;
        if !(0.0..1.0).contains(&t) {
            continue;
        }
        let hit = from + dir * t;
        if (hit - leaf.center).norm() <= leaf.radius {
            return true;
        }
    }
    false
}

/// Fraction of the crop's surface visible from `from` (leaf occlusion only).
pub fn pepper_visible_fraction(scene: &Scene, pepper: &Pepper, from: Point3) -> f64 {
    let step = (pepper.surface.len() / 400).max(1);
    let mut total = 0usize;
    let mut visible = 0usize;
    for sp in pepper.surface.iter().step_by(step) {
        // Only the camera-facing half matters for visibility.
        if (from - sp.position).dot(sp.normal) <= 0.0 {
            continue;
        }
        total += 1;
        if !segment_blocked(scene, from, sp.position) {
            visible += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        visible as f64 / total as f64
    }
}

/// Fraction of the peduncle centerline visible from `from`.
pub fn peduncle_visible_fraction(scene: &Scene, pepper: &Pepper, from: Point3) -> f64 {
    let n = pepper.peduncle_curve.len();
    if n == 0 {
        return 0.0;
    }
    let visible = pepper
        .peduncle_curve
        .iter()
        .filter(|p| !segment_blocked(scene, from, **p))
        .count();
    visible as f64 / n as f64
}

/// Viewpoint on the camera rail in front of a crop, used for occlusion
/// bookkeeping.
pub fn rail_viewpoint(pepper: &Pepper) -> Point3 {
    Point3::new(
        pepper.center.x,
        -super::scene::DEFAULT_LONG_RANGE_STANDOFF,
        pepper.center.z,
    )
}

#[derive(Debug, Clone, Copy)]
pub struct AttachmentOutcome {
    pub success: bool,
    pub approach_angle: f64,
    pub contact_curvature: f64,
    pub leaf_in_footprint: bool,
    pub random_failure: bool,
}

/// Evaluate the suction attachment surrogate at a grasp pose.
pub fn attachment_outcome(
    scene: &Scene,
    pepper: &Pepper,
    grasp: &GraspCandidate,
    tol: &SurrogateTolerances,
    rng: &mut Rng,
) -> AttachmentOutcome {
    let contact = grasp.position;
    // True normal at the nearest ground-truth surface point.
    let mut best = f64::INFINITY;
    let mut true_normal = Vec3::Z;
    for sp in &pepper.surface {
        let d = sp.position.dist_sq(contact);
        if d < best {
            best = d;
            true_normal = sp.normal;
        }
    }
    let cos = grasp.approach.dot(-true_normal).clamp(-1.0, 1.0);
    let approach_angle = cos.acos();

    let contact_curvature = true_surface_curvature(pepper, contact, 0.02);

    let leaf_in_footprint = scene
        .leaves
        .iter()
        .any(|l| point_disk_distance(contact, l) < tol.suction_radius);

    let random_failure = rng.bernoulli(tol.attach_failure_prob);
    let success = approach_angle <= tol.max_approach_angle
        && contact_curvature <= tol.max_contact_curvature
        && !leaf_in_footprint
        && !random_failure;
    AttachmentOutcome {
        success,
        approach_angle,
        contact_curvature,
        leaf_in_footprint,
        random_failure,
    }
}

/// PCA curvature of the true surface within `radius` of `at`.
fn true_surface_curvature(pepper: &Pepper, at: Point3, radius: f64) -> f64 {
    let r2 = radius * radius;
    let mut pts: Vec<Vec3> = Vec::new();
    for sp in &pepper.surface {
        if sp.position.dist_sq(at) <= r2 {
            pts.push(sp.position.to_vec());
        }
    }
    if pts.len() < 3 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mut mean = Vec3::ZERO;
    for p in &pts {
        mean = mean + *p;
    }
    mean = mean * (1.0 / n);
    let mut cov = [[0.0f64; 3]; 3];
    for p in &pts {
        let d = *p - mean;
        let v = [d.x, d.y, d.z];
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += v[r] * v[c] / n;
            }
        }
    }
    let (vals, _) = sym_eigen_3x3(cov);
    let sum: f64 = vals.iter().sum();
    if sum <= 0.0 {
        0.0
    } else {
        vals[0].max(0.0) / sum
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DetachmentOutcome {
    pub success: bool,
    pub position_error: f64,
    pub fully_occluded: bool,
    pub random_failure: bool,
}

/// Evaluate the cut surrogate at an estimated cutting pose.
pub fn detachment_outcome(
    scene: &Scene,
    pepper: &Pepper,
    cut_position: Point3,
    tol: &SurrogateTolerances,
    rng: &mut Rng,
) -> DetachmentOutcome {
    let position_error = cut_position.dist(pepper.peduncle_centroid);
    let fully_occluded = peduncle_visible_fraction(scene, pepper, rail_viewpoint(pepper))
        <= tol.occlusion_visibility_threshold;
    let random_failure = rng.bernoulli(tol.cut_failure_prob);
    let success =
        position_error <= tol.blade_half_width && !fully_occluded && !random_failure;
    DetachmentOutcome {
        success,
        position_error,
        fully_occluded,
        random_failure,
    }
}

/// What the perception pipeline produced for one attempt.
#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    /// Crop re-detected at close range and at least one grasp candidate
    /// found.
    pub pepper_detected: bool,
    pub cut_pose: Option<CutPoseEstimate>,
    pub grasp: Option<GraspCandidate>,
    pub trajectory: Option<Trajectory>,
    /// Absolute workspace box for this platform position.
    pub workspace: Aabb3,
}

/// Score one attempt against the surrogate models and assemble its record.
///
/// Stage outcomes are monotone by construction, and the failure category
/// reflects the first failed stage:
///
/// - detection failed -> `h` when the crop is mostly hidden, else `g`;
/// - peduncle missing -> `f` when fully occluded, `d` for a size outlier,
///   else `a`;
/// - unreachable waypoint -> `e`;
/// - attachment failed -> `g` for a crop size outlier, else `i`;
/// - cut failed -> `f` when occluded at cut height, `d` for a length
///   outlier, `b` within twice the blade tolerance, else `c`.
pub fn simulate_attempt(
    scene: &Scene,
    pepper_id: usize,
    attempt_index: u32,
    outputs: &PipelineOutputs,
    tol: &SurrogateTolerances,
    timing: &TimingModel,
    rng: &mut Rng,
) -> Result<AttemptRecord, SimError> {
    let pepper = scene
        .peppers
        .iter()
        .find(|p| p.id == pepper_id)
        .ok_or(SimError::UnknownPepper(pepper_id))?;

    let mut record = AttemptRecord {
        pepper_id: pepper_id as u64,
        modified: scene.spec.modified,
        attempt_index,
        pepper_detected: false,
        peduncle_detected: false,
        attached: false,
        harvested: false,
        failure_category: None,
        durations: StageDurations::default(),
    };
    record.durations.detection = Some(timing.draw(Stage::Detection, rng));

    if !outputs.pepper_detected {
        let visible = pepper_visible_fraction(scene, pepper, rail_viewpoint(pepper));
        record.failure_category = Some(if visible <= tol.occlusion_visibility_threshold {
            FailureCategory::PepperObstructed
        } else {
            FailureCategory::DifficultPepper
        });
        return Ok(record);
    }
    record.pepper_detected = true;
    record.durations.grasp_selection = Some(timing.draw(Stage::GraspSelection, rng));
    record.durations.peduncle_detection = Some(timing.draw(Stage::PeduncleDetection, rng));

    let cut = match &outputs.cut_pose {
        Some(c) => c,
        None => {
            let visible = peduncle_visible_fraction(scene, pepper, rail_viewpoint(pepper));
            record.failure_category = Some(if visible <= tol.occlusion_visibility_threshold {
                FailureCategory::PeduncleObstructed
            } else if pepper.peduncle_length < tol.peduncle_length_limits[0]
                || pepper.peduncle_length > tol.peduncle_length_limits[1]
            {
                FailureCategory::DifficultPeduncle
            } else {
                FailureCategory::PeduncleNotDetected
            });
            return Ok(record);
        }
    };
    record.peduncle_detected = true;

    if let Some(traj) = &outputs.trajectory {
        if !traj.reachable_within(&outputs.workspace) {
            record.failure_category = Some(FailureCategory::PathPlanningFailure);
            return Ok(record);
        }
    }

    record.durations.attach = Some(timing.draw(Stage::Attach, rng));
    let grasp = outputs.grasp.as_ref().expect("grasp present when detected");
    let attach = attachment_outcome(scene, pepper, grasp, tol, rng);
    if !attach.success {
        let diameter = 2.0 * pepper.radii.x.max(pepper.radii.y);
        record.failure_category = Some(
            if diameter < tol.pepper_size_limits[0] || diameter > tol.pepper_size_limits[1] {
                FailureCategory::DifficultPepper
            } else {
                FailureCategory::AttachmentFailure
            },
        );
        return Ok(record);
    }
    record.attached = true;

    record.durations.detach = Some(timing.draw(Stage::Detach, rng));
    let detach = detachment_outcome(scene, pepper, cut.position, tol, rng);
    if !detach.success {
        record.failure_category = Some(if detach.fully_occluded {
            FailureCategory::PeduncleObstructed
        } else if pepper.peduncle_length < tol.peduncle_length_limits[0]
            || pepper.peduncle_length > tol.peduncle_length_limits[1]
        {
            FailureCategory::DifficultPeduncle
        } else if detach.position_error <= 2.0 * tol.blade_half_width {
            FailureCategory::PedunclePartiallyCut
        } else {
            FailureCategory::PeduncleMoved
        });
        return Ok(record);
    }
    record.harvested = true;
    record.durations.place = Some(timing.draw(Stage::Place, rng));
    Ok(record)
}

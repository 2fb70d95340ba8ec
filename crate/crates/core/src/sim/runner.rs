//! The row harvesting state machine.
//!
//! From each platform position the long-range camera scans the row; detected
//! crops are targeted one at a time: move to the close-range viewpoint,
//! re-segment, rank grasps, localize the peduncle, then attach (walking the
//! grasp ranking on failure, up to the attempt cap) and cut. When no fresh
//! targets remain in view, the platform advances half a field of view until
//! the row ends. Every attempt is recorded; harvested crops disappear from
//! later renders; crops never detected from any position still contribute a
//! failed record so reports account for the whole row.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::attempt::{
    pepper_visible_fraction, rail_viewpoint, simulate_attempt, AttemptRecord, FailureCategory,
    PipelineOutputs, Stage, StageDurations, SurrogateTolerances, TimingModel,
};
use super::render::{render_rgbd, RenderOptions, RenderOutput};
use super::rng::Rng;
use super::scene::Scene;
use super::trajectory::{plan_trajectory, TrajectoryOffsets};
use crate::camera::Intrinsics;
use crate::cloud::ColorPointCloud;
use crate::color::GaussianColorModel;
use crate::detect::{
    close_range_viewpoint, detect_peppers, select_target, DetectParams, PepperTarget,
};
use crate::geom::{Aabb3, Point3, Vec3};
use crate::grasp::{candidate_grasps, next_grasp, score_grasps, surface_samples, GraspWeights};
use crate::peduncle::{
    compute_roi, estimate_cutting_pose, filter_peduncle_points, score_pixels, ClusterParams,
    CutPoseEstimate, FilterTrace, GaussianPeduncleScorer, PatchClassifier, PixelScorer,
    ScoreMapScorer,
};

/// Which pixel scorer drives peduncle localization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    /// Color-Gaussian scorer using the peduncle color model.
    Gaussian,
    /// Ground-truth score maps derived from the render labels (the stand-in
    /// for an external segmentation network's confidence output).
    ScoreMap,
    /// The trained logistic patch classifier.
    Patch,
}

/// Camera and viewpoint geometry for the row runner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraParams {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub long_range_standoff: f64,
    pub close_range_standoff: f64,
    pub vertical_offset: f64,
    /// Height of the long-range optical axis.
    pub camera_height: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            fx: 475.0,
            fy: 475.0,
            cx: 320.0,
            cy: 240.0,
            long_range_standoff: super::scene::DEFAULT_LONG_RANGE_STANDOFF,
            close_range_standoff: 0.4,
            vertical_offset: 0.1,
            camera_height: 1.0,
        }
    }
}

impl CameraParams {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::new(self.width, self.height, self.fx, self.fy, self.cx, self.cy)
    }
}

/// Peduncle localization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeduncleParams {
    pub scorer: ScorerKind,
    /// Confidence threshold for filter step 1.
    pub threshold: f64,
    /// Vertical half-span of the constraint box above the crop top.
    pub h_offset: f64,
    pub cluster_tolerance: f64,
    pub cluster_min: usize,
    pub cluster_max: usize,
    /// Color model for the gaussian scorer.
    pub hsv_mu: [f64; 3],
    pub hsv_sigma: [f64; 3],
    /// Trained classifier weights for the patch scorer.
    pub patch_weights: Option<PatchClassifier>,
}

impl Default for PeduncleParams {
    fn default() -> Self {
        Self {
            scorer: ScorerKind::Gaussian,
            threshold: 0.35,
            h_offset: 0.05,
            cluster_tolerance: 0.01,
            cluster_min: 50,
            cluster_max: 250_000,
            hsv_mu: [141.7, 0.654, 0.431],
            hsv_sigma: [90.0, 0.02, 0.015],
            patch_weights: None,
        }
    }
}

impl PeduncleParams {
    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            tolerance: self.cluster_tolerance,
            min_size: self.cluster_min,
            max_size: self.cluster_max,
        }
    }

    pub fn color_model(&self) -> GaussianColorModel {
        GaussianColorModel::new(self.hsv_mu, self.hsv_sigma)
            .expect("validated peduncle color model")
    }
}

/// Grasp ranking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraspParams {
    pub weights: [f64; 3],
    /// Candidates steeper than this elevation are discarded (radians).
    pub angle_threshold: f64,
    pub patch_radius: f64,
    /// Angular gap that marks a boundary point (radians).
    pub boundary_angle_gap: f64,
    pub max_attempts: usize,
}

impl Default for GraspParams {
    fn default() -> Self {
        Self {
            weights: [0.2, 0.5, 0.3],
            angle_threshold: std::f64::consts::FRAC_PI_4,
            patch_radius: 0.02,
            boundary_angle_gap: std::f64::consts::FRAC_PI_2,
            max_attempts: 5,
        }
    }
}

impl GraspParams {
    pub fn grasp_weights(&self) -> GraspWeights {
        GraspWeights::new(self.weights[0], self.weights[1], self.weights[2])
            .expect("validated grasp weights")
    }
}

/// Everything the row runner needs besides the scene.
#[derive(Debug, Clone)]
pub struct RowParams {
    pub seed: u64,
    pub camera: CameraParams,
    pub detect: DetectParams,
    /// Crop color model used for segmentation and filter step 3.
    pub pepper_model: GaussianColorModel,
    pub peduncle: PeduncleParams,
    pub grasp: GraspParams,
    pub offsets: TrajectoryOffsets,
    /// Workspace box relative to the platform origin.
    pub workspace_min: [f64; 3],
    pub workspace_max: [f64; 3],
    pub tolerances: SurrogateTolerances,
    pub timing: TimingModel,
    /// Platform advance per move state.
    pub platform_step: f64,
}

/// Outputs of one full row traversal.
#[derive(Debug, Clone)]
pub struct RowOutcome {
    pub records: Vec<AttemptRecord>,
    /// Five-step filter traces for every close-range frame processed.
    pub filter_traces: Vec<FilterTrace>,
    /// Cut-pose error against ground truth per successful localization.
    pub cut_errors: Vec<f64>,
}

struct MatchedTarget {
    target: PepperTarget,
    pepper_id: usize,
}

/// Run the harvest state machine over a whole row.
pub fn run_row(scene: &Scene, params: &RowParams) -> RowOutcome {
    let intr = params.camera.intrinsics();
    let mut records = Vec::new();
    let mut filter_traces = Vec::new();
    let mut cut_errors = Vec::new();
    let mut harvested: Vec<usize> = Vec::new();
    let mut attempted: HashSet<usize> = HashSet::new();

    let mut platform_x = 0.0;
    while platform_x <= scene.spec.row_length + 1e-9 {
        loop {
            let rail = Point3::new(
                platform_x,
                -params.camera.long_range_standoff,
                params.camera.camera_height,
            );
            let long_pose = crate::geom::Pose::looking(rail, Vec3::Y, Vec3::Z);
            let long_out = render_rgbd(
                scene,
                &long_pose,
                &intr,
                &RenderOptions {
                    exclude_peppers: harvested.clone(),
                    ..RenderOptions::default()
                },
            );
            let targets = detect_peppers(&long_out.frame, &params.pepper_model, &params.detect);
            let fresh: Vec<MatchedTarget> = targets
                .into_iter()
                .filter_map(|t| {
                    match_pepper(scene, &t, &harvested).map(|pepper_id| MatchedTarget {
                        target: t,
                        pepper_id,
                    })
                })
                .filter(|m| !attempted.contains(&m.pepper_id))
                .collect();
            if fresh.is_empty() {
                break;
            }
            let clouds: Vec<PepperTarget> = fresh.iter().map(|m| m.target.clone()).collect();
            let chosen = select_target(&clouds, rail).expect("fresh is non-empty");
            let chosen_idx = clouds
                .iter()
                .position(|t| std::ptr::eq(t, chosen))
                .expect("chosen comes from clouds");
            let pepper_id = fresh[chosen_idx].pepper_id;

            let cycle = harvest_cycle(
                scene,
                pepper_id,
                &fresh[chosen_idx].target,
                platform_x,
                &harvested,
                params,
            );
            records.extend(cycle.records);
            filter_traces.extend(cycle.filter_traces);
            cut_errors.extend(cycle.cut_errors);
            attempted.insert(pepper_id);
            if cycle.harvested {
                harvested.push(pepper_id);
            }
        }
        platform_x += params.platform_step;
    }

    // Crops never targeted from any platform position: record the miss.
    for pepper in &scene.peppers {
        if attempted.contains(&pepper.id) {
            continue;
        }
        let mut rng = Rng::stream(params.seed, &[0x907e, pepper.id as u64]);
        let visible = pepper_visible_fraction(scene, pepper, rail_viewpoint(pepper));
        let mut record = AttemptRecord {
            pepper_id: pepper.id as u64,
            modified: scene.spec.modified,
            attempt_index: 0,
            pepper_detected: false,
            peduncle_detected: false,
            attached: false,
            harvested: false,
            failure_category: Some(
                if visible <= params.tolerances.occlusion_visibility_threshold {
                    FailureCategory::PepperObstructed
                } else {
                    FailureCategory::DifficultPepper
                },
            ),
            durations: StageDurations::default(),
        };
        record.durations.detection =
            Some(params.timing.draw_public(Stage::Detection, &mut rng));
        records.push(record);
    }

    RowOutcome {
        records,
        filter_traces,
        cut_errors,
    }
}

/// Match a detected target to the nearest active ground-truth crop.
fn match_pepper(scene: &Scene, target: &PepperTarget, harvested: &[usize]) -> Option<usize> {
    scene
        .peppers
        .iter()
        .filter(|p| !harvested.contains(&p.id))
        .map(|p| (p.id, p.centroid.dist(target.centroid)))
        .filter(|(_, d)| *d < 0.08)
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(id, _)| id)
}

struct CycleOutcome {
    records: Vec<AttemptRecord>,
    filter_traces: Vec<FilterTrace>,
    cut_errors: Vec<f64>,
    harvested: bool,
}

/// One harvest cycle against a selected target.
fn harvest_cycle(
    scene: &Scene,
    pepper_id: usize,
    long_target: &PepperTarget,
    platform_x: f64,
    harvested: &[usize],
    params: &RowParams,
) -> CycleOutcome {
    let intr = params.camera.intrinsics();
    let platform_origin = Point3::new(platform_x, 0.0, 0.0);
    let workspace = Aabb3::new(
        platform_origin
            + Vec3::new(
                params.workspace_min[0],
                params.workspace_min[1],
                params.workspace_min[2],
            ),
        platform_origin
            + Vec3::new(
                params.workspace_max[0],
                params.workspace_max[1],
                params.workspace_max[2],
            ),
    );
    let mut outcome = CycleOutcome {
        records: Vec::new(),
        filter_traces: Vec::new(),
        cut_errors: Vec::new(),
        harvested: false,
    };

    // Close-range re-capture.
    let close_pose = close_range_viewpoint(
        long_target,
        params.camera.close_range_standoff,
        params.camera.vertical_offset,
        Vec3::Y,
    );
    let close_out = render_rgbd(
        scene,
        &close_pose,
        &intr,
        &RenderOptions {
            exclude_peppers: harvested.to_vec(),
            ..RenderOptions::default()
        },
    );

    // Final target segmentation: the close-range cluster belonging to the
    // same crop.
    let close_targets = detect_peppers(&close_out.frame, &params.pepper_model, &params.detect);
    let target = close_targets
        .into_iter()
        .filter(|t| t.centroid.dist(long_target.centroid) < 0.08)
        .min_by(|a, b| {
            a.centroid
                .dist(long_target.centroid)
                .partial_cmp(&b.centroid.dist(long_target.centroid))
                .unwrap()
        });

    // Grasp ranking; per the stage definitions a crop only counts as
    // detected once a grasp pose exists for it.
    let camera_pos = close_pose.position();
    let ranked = target.as_ref().and_then(|t| {
        let samples = surface_samples(
            t,
            params.grasp.patch_radius,
            camera_pos,
            params.grasp.boundary_angle_gap,
        );
        candidate_grasps(&samples, params.grasp.angle_threshold)
            .ok()
            .map(|cands| score_grasps(cands, &samples, &params.grasp.grasp_weights(), t.centroid))
    });

    let (target, ranked) = match (target, ranked) {
        (Some(t), Some(r)) if !r.is_empty() => (t, r),
        _ => {
            let mut rng = Rng::stream(params.seed, &[0xa77e, pepper_id as u64, 0]);
            let outputs = PipelineOutputs {
                pepper_detected: false,
                cut_pose: None,
                grasp: None,
                trajectory: None,
                workspace,
            };
            let record = simulate_attempt(
                scene,
                pepper_id,
                0,
                &outputs,
                &params.tolerances,
                &params.timing,
                &mut rng,
            )
            .expect("pepper id comes from the scene");
            outcome.records.push(record);
            return outcome;
        }
    };

    // Peduncle localization from the close frame.
    let (cut_pose, trace) = localize_peduncle(pepper_id, &target, &close_out, params);
    if let Some(trace) = trace {
        outcome.filter_traces.push(trace);
    }
    if let Some(cut) = &cut_pose {
        let truth = scene
            .peppers
            .iter()
            .find(|p| p.id == pepper_id)
            .expect("matched id")
            .peduncle_centroid;
        outcome.cut_errors.push(cut.position.dist(truth));
    }

    // Attempt loop: walk the grasp ranking.
    for attempt_index in 0..params.grasp.max_attempts {
        let grasp = match next_grasp(&ranked, attempt_index, params.grasp.max_attempts) {
            Ok(g) => *g,
            Err(_) => break,
        };
        let trajectory = cut_pose.as_ref().map(|cut| {
            plan_trajectory(
                &grasp,
                cut,
                close_pose.position(),
                platform_origin,
                &params.offsets,
            )
        });
        let outputs = PipelineOutputs {
            pepper_detected: true,
            cut_pose,
            grasp: Some(grasp),
            trajectory,
            workspace,
        };
        let mut rng = Rng::stream(
            params.seed,
            &[0xa77e, pepper_id as u64, attempt_index as u64],
        );
        let record = simulate_attempt(
            scene,
            pepper_id,
            attempt_index as u32,
            &outputs,
            &params.tolerances,
            &params.timing,
            &mut rng,
        )
        .expect("pepper id comes from the scene");
        let done = record.harvested;
        let peduncle_missing = !record.peduncle_detected;
        outcome.records.push(record);
        if done {
            outcome.harvested = true;
            break;
        }
        if peduncle_missing {
            // No cutting pose: retrying a grasp cannot help.
            break;
        }
    }
    outcome
}

/// Run the configured scorer and five-step filter; returns the cutting pose
/// (when one exists) and the filter trace.
fn localize_peduncle(
    pepper_id: usize,
    target: &PepperTarget,
    close_out: &RenderOutput,
    params: &RowParams,
) -> (Option<CutPoseEstimate>, Option<FilterTrace>) {
    let frame = &close_out.frame;
    let roi = match compute_roi(&target.bb2, frame.width(), frame.height()) {
        Ok(r) => r,
        Err(_) => return (None, None),
    };

    let gaussian;
    let scoremap;
    let scorer: &dyn PixelScorer = match params.peduncle.scorer {
        ScorerKind::Gaussian => {
            gaussian = GaussianPeduncleScorer {
                model: params.peduncle.color_model(),
            };
            &gaussian
        }
        ScorerKind::ScoreMap => {
            scoremap = ScoreMapScorer {
                map: close_out.labels.peduncle_score_map(pepper_id, 0.9, 0.05),
            };
            &scoremap
        }
        ScorerKind::Patch => match &params.peduncle.patch_weights {
            Some(w) => w,
            None => return (None, None),
        },
    };
    let scores = match score_pixels(scorer, &frame.rgb, &roi) {
        Ok(s) => s,
        Err(_) => return (None, None),
    };
    let bb3 = crate::peduncle::peduncle_bbox3(&target.bb3, params.peduncle.h_offset);
    let (cloud, trace) = filter_peduncle_points(
        &scores,
        frame,
        &params.pepper_model,
        params.detect.threshold,
        &bb3,
        params.peduncle.threshold,
        &params.peduncle.cluster_params(),
    );
    let pose = estimate_cutting_pose(&cloud, params.peduncle.cluster_min).ok();
    (pose, Some(trace))
}

/// Fraction helper exposed for tests: share of the cloud's points whose
/// pixel origins are crop pixels in the label image.
pub fn origin_purity(cloud: &ColorPointCloud, out: &RenderOutput, pepper_id: usize) -> f64 {
    let origins = match &cloud.pixel_origin {
        Some(o) => o,
        None => return 0.0,
    };
    if origins.is_empty() {
        return 0.0;
    }
    let hits = origins
        .iter()
        .filter(|(r, c)| {
            out.labels.get(*r as usize, *c as usize)
                == super::render::PixelLabel::Pepper(pepper_id)
        })
        .count();
    hits as f64 / origins.len() as f64
}

impl TimingModel {
    /// Public draw used by the runner for synthetic non-detection records.
    pub(crate) fn draw_public(&self, stage: Stage, rng: &mut Rng) -> f64 {
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

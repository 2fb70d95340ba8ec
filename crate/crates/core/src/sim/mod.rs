//! Deterministic synthetic greenhouse simulation: scene generation, RGB-D
//! rendering, waypoint trajectories, harvest outcome surrogates, and the row
//! state machine. One run is single-threaded and fully determined by its
//! seed; independent runs can execute in parallel because every random
//! stream is derived from the master seed, never from scheduling order.

mod attempt;
mod render;
pub mod rng;
mod runner;
pub mod scene;
mod trajectory;

pub use attempt::{
    attachment_outcome, detachment_outcome, pepper_visible_fraction, peduncle_visible_fraction,
    rail_viewpoint, simulate_attempt, AttachmentOutcome, AttemptRecord, DetachmentOutcome,
    FailureCategory, PipelineOutputs, SimError, Stage, StageDurations, SurrogateTolerances,
    TimingModel, STAGES,
};
pub use render::{render_rgbd, LabelImage, PixelLabel, RenderOptions, RenderOutput};
pub use runner::{
    origin_purity, run_row, CameraParams, GraspParams, PeduncleParams, RowOutcome, RowParams,
    ScorerKind,
};
pub use scene::{generate_scene, Leaf, Pepper, Scene, SceneSpec, SurfacePoint};
pub use trajectory::{plan_trajectory, Phase, Trajectory, TrajectoryOffsets, Waypoint, PHASE_ORDER};

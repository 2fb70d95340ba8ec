//! Simplified waypoint trajectories for one harvest cycle.
//!
//! The real platform plans arm motions; here a harvest cycle is a fixed
//! sequence of straight-segment waypoints: approach from the close-range
//! capture pose, a pre-grasp offset back along the approach direction, the
//! grasp itself pushed slightly into the crop so the suction cup seals, a
//! vertical separation move that decouples the cutter, the level cut sweep
//! along the world x axis, and the drop into the crate.

use serde::{Deserialize, Serialize};

use crate::geom::{frame_from_approach, Aabb3, Mat3, Point3, Vec3};
use crate::grasp::GraspCandidate;
use crate::peduncle::CutPoseEstimate;

/// Harvest cycle phases in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    CloseRange,
    PreGrasp,
    Grasp,
    Separate,
    CutIn,
    CutOut,
    Place,
}

pub const PHASE_ORDER: [Phase; 7] = [
    Phase::CloseRange,
    Phase::PreGrasp,
    Phase::Grasp,
    Phase::Separate,
    Phase::CutIn,
    Phase::CutOut,
    Phase::Place,
];

/// A 6-DoF waypoint tagged with its phase.
#[derive(Debug, Clone, Copy)]
pub struct Waypoint {
    pub phase: Phase,
    pub position: Point3,
    pub orientation: Mat3,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    /// Phases appear exactly in the canonical order.
    pub fn phases_in_order(&self) -> bool {
        self.waypoints.len() == PHASE_ORDER.len()
            && self
                .waypoints
                .iter()
                .zip(PHASE_ORDER.iter())
                .all(|(w, p)| w.phase == *p)
    }

    pub fn waypoint(&self, phase: Phase) -> &Waypoint {
        self.waypoints
            .iter()
            .find(|w| w.phase == phase)
            .expect("canonical trajectory has every phase")
    }

    /// True when every waypoint lies inside the workspace box.
    pub fn reachable_within(&self, workspace: &Aabb3) -> bool {
        self.waypoints.iter().all(|w| workspace.contains(w.position))
    }
}

/// Fixed offsets shaping the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryOffsets {
    /// Setback from the grasp along the approach direction.
    pub pre_grasp_offset: f64,
    /// Push past the surface along the approach so the suction cup seals.
    pub seal_offset: f64,
    /// Vertical move that decouples the cutter from the suction cup.
    pub separation_height: f64,
    /// Staging setback of the blade along -x before the cut sweep.
    pub cut_approach_offset: f64,
    /// Crate drop position relative to the platform origin.
    pub place_position: [f64; 3],
}

impl Default for TrajectoryOffsets {
    fn default() -> Self {
        Self {
            pre_grasp_offset: 0.10,
            seal_offset: 0.01,
            separation_height: 0.05,
            cut_approach_offset: 0.10,
            place_position: [0.0, -0.55, 0.45],
        }
    }
}

/// Build the waypoint sequence for one harvest cycle.
pub fn plan_trajectory(
    grasp: &GraspCandidate,
    cut: &CutPoseEstimate,
    close_range_position: Point3,
    platform_origin: Point3,
    offsets: &TrajectoryOffsets,
) -> Trajectory {
    let approach = grasp.approach;
    let grasp_frame = frame_from_approach(approach);
    let pre_grasp = grasp.position - approach * offsets.pre_grasp_offset;
    let seal = grasp.position + approach * offsets.seal_offset;
    let separate = seal + Vec3::Z * offsets.separation_height;
    let cut_in = cut.position;
    let cut_out = cut.position - cut.approach * offsets.cut_approach_offset;
    let place = platform_origin
        + Vec3::new(
            offsets.place_position[0],
            offsets.place_position[1],
            offsets.place_position[2],
        );
    Trajectory {
        waypoints: vec![
            Waypoint {
                phase: Phase::CloseRange,
                position: close_range_position,
                orientation: Mat3::IDENTITY,
            },
            Waypoint {
                phase: Phase::PreGrasp,
                position: pre_grasp,
                orientation: grasp_frame,
            },
            Waypoint {
                phase: Phase::Grasp,
                position: seal,
                orientation: grasp_frame,
            },
            Waypoint {
                phase: Phase::Separate,
                position: separate,
                orientation: grasp_frame,
            },
            Waypoint {
                phase: Phase::CutIn,
                position: cut_in,
                orientation: cut.orientation,
            },
            Waypoint {
                phase: Phase::CutOut,
                position: cut_out,
                orientation: cut.orientation,
            },
            Waypoint {
                phase: Phase::Place,
                position: place,
                orientation: Mat3::IDENTITY,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grasp() -> GraspCandidate {
        GraspCandidate {
            position: Point3::new(0.0, 1.0, 1.0),
            approach: Vec3::Y,
            s1: 1.0,
            s2: 1.0,
            s3: 1.0,
            utility: 1.0,
            sample_index: 0,
        }
    }

    fn sample_cut() -> CutPoseEstimate {
        CutPoseEstimate {
            position: Point3::new(0.0, 1.0, 1.08),
            approach: Vec3::X,
            orientation: Mat3::IDENTITY,
            support_count: 100,
        }
    }

    #[test]
    fn pre_grasp_offsets_back_along_approach() {
        let offsets = TrajectoryOffsets {
            pre_grasp_offset: 0.1,
            ..TrajectoryOffsets::default()
        };
        let t = plan_trajectory(
            &sample_grasp(),
            &sample_cut(),
            Point3::new(0.0, 0.6, 1.1),
            Point3::new(0.0, -0.8, 0.0),
            &offsets,
        );
        let wp = t.waypoint(Phase::PreGrasp);
        assert!(wp.position.dist(Point3::new(0.0, 0.9, 1.0)) < 1e-12);
    }

    #[test]
    fn separate_is_straight_above_the_seal_point() {
        let offsets = TrajectoryOffsets {
            seal_offset: 0.01,
            separation_height: 0.05,
            ..TrajectoryOffsets::default()
        };
        let t = plan_trajectory(
            &sample_grasp(),
            &sample_cut(),
            Point3::new(0.0, 0.6, 1.1),
            Point3::new(0.0, -0.8, 0.0),
            &offsets,
        );
        let seal = t.waypoint(Phase::Grasp).position;
        assert!(seal.dist(Point3::new(0.0, 1.01, 1.0)) < 1e-12);
        let sep = t.waypoint(Phase::Separate).position;
        assert!(sep.dist(Point3::new(0.0, 1.01, 1.05)) < 1e-12);
    }

    #[test]
    fn phases_always_in_canonical_order() {
        let t = plan_trajectory(
            &sample_grasp(),
            &sample_cut(),
            Point3::new(0.0, 0.6, 1.1),
            Point3::new(0.0, -0.8, 0.0),
            &TrajectoryOffsets::default(),
        );
        assert!(t.phases_in_order());
    }

    #[test]
    fn cut_sweep_runs_along_world_x() {
        let t = plan_trajectory(
            &sample_grasp(),
            &sample_cut(),
            Point3::new(0.0, 0.6, 1.1),
            Point3::new(0.0, -0.8, 0.0),
            &TrajectoryOffsets::default(),
        );
        let cut_in = t.waypoint(Phase::CutIn).position;
        let cut_out = t.waypoint(Phase::CutOut).position;
        let sweep = (cut_in - cut_out).normalized().unwrap();
        assert!((sweep - Vec3::X).norm() < 1e-12);
        // Blade stays level: orientation's z column is world up.
        assert!((t.waypoint(Phase::CutIn).orientation.col(2) - Vec3::Z).norm() < 1e-12);
    }

    #[test]
    fn reachability_against_workspace_box() {
        let t = plan_trajectory(
            &sample_grasp(),
            &sample_cut(),
            Point3::new(0.0, 0.6, 1.1),
            Point3::new(0.0, -0.8, 0.0),
            &TrajectoryOffsets::default(),
        );
        let roomy = Aabb3::new(Point3::new(-1.0, -2.0, 0.0), Point3::new(1.0, 2.0, 2.0));
        assert!(t.reachable_within(&roomy));
        let cramped = Aabb3::new(Point3::new(-1.0, -2.0, 0.0), Point3::new(1.0, 0.5, 2.0));
        assert!(!t.reachable_within(&cramped));
    }
}

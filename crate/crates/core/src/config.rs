//! Run configuration: every pipeline parameter with a validated default,
//! loadable from TOML. Unknown keys are rejected. A built-in
//! `[paper_defaults]` profile swaps in the color-model parameters used on
//! the original platform, so runs with those numbers are one flag away.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::GaussianColorModel;
use crate::detect::DetectParams;
use crate::sim::{
    CameraParams, GraspParams, PeduncleParams, RowParams, SceneSpec, SurrogateTolerances,
    TimingModel, TrajectoryOffsets,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Crop detection settings (color model plus clustering).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub hsv_mu: [f64; 3],
    pub hsv_sigma: [f64; 3],
    /// Log-likelihood segmentation threshold.
    pub threshold: f64,
    pub downsample_radius: f64,
    pub cluster_tolerance: f64,
    pub cluster_min: usize,
    pub cluster_max: usize,
    pub outlier_k: usize,
    pub outlier_stddev_mult: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        // The color model matches the synthetic crop colors; the clustering
        // numbers are the platform parameters.
        Self {
            hsv_mu: [91.4, 0.82, 0.72],
            hsv_sigma: [50.0, 0.02, 0.02],
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

impl DetectionConfig {
    pub fn detect_params(&self) -> DetectParams {
        DetectParams {
            threshold: self.threshold,
            downsample_radius: self.downsample_radius,
            cluster_tolerance: self.cluster_tolerance,
            cluster_min: self.cluster_min,
            cluster_max: self.cluster_max,
            outlier_k: self.outlier_k,
            outlier_stddev_mult: self.outlier_stddev_mult,
        }
    }

    pub fn color_model(&self) -> Result<GaussianColorModel, ConfigError> {
        GaussianColorModel::new(self.hsv_mu, self.hsv_sigma)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Workspace box relative to the platform origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkspaceConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self {
            min: [-0.7, -1.2, 0.2],
            max: [0.7, 0.06, 1.9],
        }
    }
}

/// Overrides applied by the paper-parameter profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PaperDefaults {
    pub hsv_mu: Option<[f64; 3]>,
    pub hsv_sigma: Option<[f64; 3]>,
}

impl PaperDefaults {
    /// The built-in platform color model.
    pub fn builtin() -> Self {
        Self {
            hsv_mu: Some([180.0, 1.0, 0.39]),
            hsv_sigma: Some([255.0, 0.13, 0.017]),
        }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; `--seed` overrides.
    pub seed: u64,
    /// Number of independent runs (seed, seed+1, ...).
    pub runs: usize,
    pub scene: SceneSpec,
    pub detection: DetectionConfig,
    pub camera: CameraParams,
    pub peduncle: PeduncleParams,
    pub grasp: GraspParams,
    pub trajectory: TrajectoryOffsets,
    pub workspace: WorkspaceConfig,
    pub attempt: SurrogateTolerances,
    pub timing: TimingModel,
    /// Platform advance per move state.
    pub platform_step: f64,
    pub paper_defaults: PaperDefaults,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            runs: 1,
            scene: SceneSpec::default(),
            detection: DetectionConfig::default(),
            camera: CameraParams::default(),
            peduncle: PeduncleParams::default(),
            grasp: GraspParams::default(),
            trajectory: TrajectoryOffsets::default(),
            workspace: WorkspaceConfig::default(),
            attempt: SurrogateTolerances::default(),
            timing: TimingModel::default(),
            platform_step: 0.5,
            paper_defaults: PaperDefaults::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    /// Apply the paper-parameter profile (file-provided values first, the
    /// built-in ones where the file is silent).
    pub fn apply_paper_defaults(&mut self) {
        let builtin = PaperDefaults::builtin();
        if let Some(mu) = self.paper_defaults.hsv_mu.or(builtin.hsv_mu) {
            self.detection.hsv_mu = mu;
        }
        if let Some(sigma) = self.paper_defaults.hsv_sigma.or(builtin.hsv_sigma) {
            self.detection.hsv_sigma = sigma;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scene
            .validate()
            .map_err(ConfigError::Invalid)?;
        let w = self.grasp.weights;
        if w.iter().any(|&x| x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "grasp weights must be non-negative and sum to 1, got {w:?}"
            )));
        }
        if self.grasp.max_attempts == 0 {
            return Err(ConfigError::Invalid("max_attempts must be >= 1".into()));
        }
        for (name, v) in [
            ("detection.downsample_radius", self.detection.downsample_radius),
            ("detection.cluster_tolerance", self.detection.cluster_tolerance),
            ("peduncle.cluster_tolerance", self.peduncle.cluster_tolerance),
            ("peduncle.h_offset", self.peduncle.h_offset),
            ("grasp.patch_radius", self.grasp.patch_radius),
            ("camera.long_range_standoff", self.camera.long_range_standoff),
            ("camera.close_range_standoff", self.camera.close_range_standoff),
            ("platform_step", self.platform_step),
        ] {
            if v <= 0.0 || v.is_nan() {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.detection.cluster_min < 1 || self.detection.cluster_min > self.detection.cluster_max
        {
            return Err(ConfigError::Invalid(
                "detection cluster bounds must satisfy 1 <= min <= max".into(),
            ));
        }
        if self.peduncle.cluster_min < 1 || self.peduncle.cluster_min > self.peduncle.cluster_max {
            return Err(ConfigError::Invalid(
                "peduncle cluster bounds must satisfy 1 <= min <= max".into(),
            ));
        }
        for p in [
            self.attempt.attach_failure_prob,
            self.attempt.cut_failure_prob,
            self.attempt.occlusion_visibility_threshold,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Invalid(format!(
                    "probabilities must be in [0, 1], got {p}"
                )));
            }
        }
        self.detection.color_model()?;
        GaussianColorModel::new(self.peduncle.hsv_mu, self.peduncle.hsv_sigma)
            .map_err(|e| ConfigError::Invalid(format!("peduncle model: {e}")))?;
        Ok(())
    }

    /// Row-runner parameter bundle for the given run seed.
    pub fn row_params(&self, seed: u64) -> Result<RowParams, ConfigError> {
        Ok(RowParams {
            seed,
            camera: self.camera,
            detect: self.detection.detect_params(),
            pepper_model: self.detection.color_model()?,
            peduncle: self.peduncle.clone(),
            grasp: self.grasp,
            offsets: self.trajectory,
            workspace_min: self.workspace.min,
            workspace_max: self.workspace.max,
            tolerances: self.attempt,
            timing: self.timing,
            platform_step: self.platform_step,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = RunConfig::default();
        let text = toml::to_string_pretty(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(c, back);
        let with_unknown = format!("{text}\nbogus_key = 1\n");
        assert!(toml::from_str::<RunConfig>(&with_unknown).is_err());
    }

    #[test]
    fn bad_weights_rejected() {
        let mut c = RunConfig::default();
        c.grasp.weights = [0.5, 0.5, 0.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn paper_profile_swaps_color_model() {
        let mut c = RunConfig::default();
        c.apply_paper_defaults();
        assert_eq!(c.detection.hsv_mu, [180.0, 1.0, 0.39]);
        assert_eq!(c.detection.hsv_sigma, [255.0, 0.13, 0.017]);
    }

    #[test]
    fn file_paper_defaults_win_over_builtin() {
        let text = r#"
[paper_defaults]
hsv_mu = [170.0, 0.9, 0.4]
"#;
        let mut c: RunConfig = toml::from_str(text).unwrap();
        c.apply_paper_defaults();
        assert_eq!(c.detection.hsv_mu, [170.0, 0.9, 0.4]);
        // Sigma falls back to the built-in profile.
        assert_eq!(c.detection.hsv_sigma, [255.0, 0.13, 0.017]);
    }
}

//! Declarative run configuration: a strict TOML document that materializes
//! every default, so the echoed copy written next to the results reproduces
//! the run exactly.
//!
//! Angles cross this boundary in degrees (`fov_h_deg`, sweep magnitudes for
//! the fov parameter) and are converted to radians internally.

use crate::control::YawControllerConfig;
use crate::eval::{
    CameraModeKind, ControllerKind, Init, SuiteConfig, SweepParameter, TaskKind,
};
use crate::geometry::CameraModel;
use crate::guidance::NoiseModel;
use crate::mppi::MppiConfig;
use crate::world::{QueryPoseParams, TrajectoryParams, WorldParams};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Camera section; the field names carry the units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    /// Horizontal field of view, degrees.
    pub fov_h_deg: f64,
    /// Width/height ratio.
    pub aspect: f64,
    /// Mounting height above ground, meters.
    pub mount_height: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self::from_camera(&CameraModel::default())
    }
}

impl CameraSection {
    pub fn from_camera(camera: &CameraModel) -> Self {
        Self {
            fov_h_deg: camera.fov_h.to_degrees(),
            aspect: camera.aspect,
            mount_height: camera.mount_height,
        }
    }

    pub fn to_camera(self) -> CameraModel {
        CameraModel::new(self.fov_h_deg.to_radians(), self.aspect, self.mount_height)
    }
}

/// Camera modes expressible in a run config; per-parameter sweeps are
/// driven by the `sweep` section instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraModeChoice {
    Matched,
    Cross,
}

/// Suite-level scalars and the episode grid shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    pub trajectories: usize,
    pub initial_poses: usize,
    pub tasks: Vec<TaskKind>,
    pub inits: Vec<Init>,
    pub any_point: bool,
    pub camera_modes: Vec<CameraModeChoice>,
    pub controller: ControllerKind,
    pub step_cap: usize,
    pub success_radius: f64,
    pub agent_radius: f64,
    pub depth_rays: usize,
}

impl Default for SuiteSection {
    fn default() -> Self {
        let suite = SuiteConfig::default();
        Self {
            trajectories: suite.trajectories,
            initial_poses: suite.initial_poses,
            tasks: suite.tasks,
            inits: suite.inits,
            any_point: suite.any_point,
            camera_modes: vec![CameraModeChoice::Matched, CameraModeChoice::Cross],
            controller: suite.controller,
            step_cap: suite.step_cap,
            success_radius: suite.success_radius,
            agent_radius: suite.agent_radius,
            depth_rays: suite.depth_rays,
        }
    }
}

/// Per-parameter mismatch sweep request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    /// Unsigned offset magnitudes in display units: degrees for fov,
    /// ratio for aspect, meters for height.
    pub magnitudes: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { parameter: SweepParameter::Height, magnitudes: vec![0.0, 0.3, 0.6, 0.9, 1.2] }
    }
}

impl SweepSection {
    /// Magnitudes converted to the parameter's native units.
    pub fn native_magnitudes(&self) -> Vec<f64> {
        match self.parameter {
            SweepParameter::Fov => self.magnitudes.iter().map(|m| m.to_radians()).collect(),
            _ => self.magnitudes.clone(),
        }
    }
}

/// Whole run document. Every field has a default, so an empty document is
/// a valid (full-protocol) run; unknown keys anywhere are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of all per-episode seed derivation.
    pub master_seed: u64,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    /// Output directory for results, reports, and the config echo.
    pub out_dir: String,
    pub suite: SuiteSection,
    pub camera: CameraSection,
    pub world: WorldParams,
    pub trajectory: TrajectoryParams,
    pub query: QueryPoseParams,
    pub noise: NoiseModel,
    pub yaw: YawControllerConfig,
    pub mppi: MppiConfig,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            workers: 0,
            out_dir: "results".to_string(),
            suite: SuiteSection::default(),
            camera: CameraSection::default(),
            world: WorldParams::default(),
            trajectory: TrajectoryParams::default(),
            query: QueryPoseParams::default(),
            noise: NoiseModel::default(),
            yaw: YawControllerConfig::default(),
            mppi: MppiConfig::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    /// Serializes with every field present, suitable as the run echo.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// Semantic validation with config-level diagnostics; library-level
    /// invariants assert separately once execution starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        let s = &self.suite;
        if s.trajectories == 0 {
            return fail("suite.trajectories must be at least 1".into());
        }
        if s.initial_poses == 0 {
            return fail("suite.initial_poses must be at least 1".into());
        }
        if s.step_cap == 0 {
            return fail("suite.step_cap must be at least 1".into());
        }
        if !(s.success_radius > 0.0) {
            return fail(format!("suite.success_radius {} must be positive", s.success_radius));
        }
        if !(s.agent_radius > 0.0) {
            return fail(format!("suite.agent_radius {} must be positive", s.agent_radius));
        }
        if s.depth_rays < 8 {
            return fail(format!("suite.depth_rays {} must be at least 8", s.depth_rays));
        }
        if s.tasks.contains(&TaskKind::AnyPoint) {
            return fail(
                "suite.tasks must not contain any_point; enable suite.any_point instead".into(),
            );
        }
        if (s.tasks.is_empty() || s.inits.is_empty()) && !s.any_point {
            return fail("the episode grid is empty: no tasks/inits and any_point is off".into());
        }
        if s.camera_modes.is_empty() {
            return fail("suite.camera_modes must not be empty".into());
        }
        if !(self.camera.fov_h_deg > 0.0 && self.camera.fov_h_deg < 180.0) {
            return fail(format!(
                "camera.fov_h_deg {} outside (0, 180)",
                self.camera.fov_h_deg
            ));
        }
        if !(self.camera.aspect > 0.0) {
            return fail(format!("camera.aspect {} must be positive", self.camera.aspect));
        }
        if !(self.camera.mount_height >= 0.0) {
            return fail(format!(
                "camera.mount_height {} must be non-negative",
                self.camera.mount_height
            ));
        }
        if self.world.width < 10 || self.world.height < 10 {
            return fail(format!(
                "world grid {}x{} below the 10x10 minimum",
                self.world.width, self.world.height
            ));
        }
        if !(self.world.cell_size > 0.0) {
            return fail(format!("world.cell_size {} must be positive", self.world.cell_size));
        }
        if !(0.0..=0.35).contains(&self.world.density) {
            return fail(format!("world.density {} outside [0, 0.35]", self.world.density));
        }
        if !(self.trajectory.min_separation <= self.trajectory.max_separation) {
            return fail("trajectory separation bounds are inverted".into());
        }
        if !(self.noise.sigma_p >= 0.0 && self.noise.sigma_d >= 0.0) {
            return fail("noise stds must be non-negative".into());
        }
        if !(0.0..=0.5).contains(&self.noise.flip_prob) {
            return fail(format!("noise.flip_prob {} outside [0, 0.5]", self.noise.flip_prob));
        }
        if !(self.noise.backward_degradation >= 1.0) {
            return fail("noise.backward_degradation must be at least 1".into());
        }
        if !(self.yaw.k_p > 0.0 && self.yaw.v_forward > 0.0 && self.yaw.omega_max > 0.0) {
            return fail("yaw gains and limits must be positive".into());
        }
        if !(self.yaw.dt > 0.0) {
            return fail(format!("yaw.dt {} must be positive", self.yaw.dt));
        }
        if self.mppi.samples < 2 || self.mppi.horizon == 0 {
            return fail("mppi needs at least 2 samples and 1 horizon step".into());
        }
        if !(self.mppi.dt > 0.0 && self.mppi.beta > 0.0) {
            return fail("mppi.dt and mppi.beta must be positive".into());
        }
        if !(self.mppi.v_max > 0.0 && self.mppi.omega_max > 0.0) {
            return fail("mppi command limits must be positive".into());
        }
        if self.mppi.goal_point_rank == 0 {
            return fail("mppi.goal_point_rank is 1-based".into());
        }
        for &m in &self.sweep.magnitudes {
            let native = match self.sweep.parameter {
                SweepParameter::Fov => m.to_radians(),
                _ => m,
            };
            if !(0.0..=self.sweep.parameter.max_magnitude()).contains(&native) {
                return fail(format!(
                    "sweep magnitude {m} outside the protocol range for {}",
                    self.sweep.parameter.label()
                ));
            }
        }
        Ok(())
    }

    /// Maps the document onto the suite the evaluation module executes.
    pub fn to_suite(&self) -> SuiteConfig {
        SuiteConfig {
            master_seed: self.master_seed,
            trajectories: self.suite.trajectories,
            initial_poses: self.suite.initial_poses,
            tasks: self.suite.tasks.clone(),
            inits: self.suite.inits.clone(),
            any_point: self.suite.any_point,
            camera_modes: self
                .suite
                .camera_modes
                .iter()
                .map(|mode| match mode {
                    CameraModeChoice::Matched => CameraModeKind::Matched,
                    CameraModeChoice::Cross => CameraModeKind::Cross,
                })
                .collect(),
            controller: self.suite.controller,
            noise: self.noise,
            step_cap: self.suite.step_cap,
            success_radius: self.suite.success_radius,
            agent_radius: self.suite.agent_radius,
            depth_rays: self.suite.depth_rays,
            recorder_camera: self.camera.to_camera(),
            world: self.world,
            trajectory: self.trajectory,
            query: self.query,
            yaw: self.yaw,
            mppi: self.mppi,
        }
    }

    /// Worker count with 0 resolved to the available parallelism.
    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn empty_document_is_the_default_run() {
        let config = RunConfig::from_toml_str("").unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.suite.step_cap, 1000);
        assert_eq!(config.suite.trajectories, 50);
        assert_eq!(config.suite.initial_poses, 2);
        assert!((config.suite.success_radius - 0.5).abs() < 1e-12);
    }

    #[test]
    fn echo_round_trips_bit_identically() {
        let mut config = RunConfig::default();
        config.master_seed = 123456789;
        config.camera.aspect = 4.0 / 3.0;
        config.noise.sigma_p = 0.1 + 0.2; // deliberately non-representable
        config.mppi.sigma = [0.3, 0.3, 0.5];
        let echoed = config.to_toml_string();
        let back = RunConfig::from_toml_str(&echoed).unwrap();
        assert_eq!(back, config);
        // A second echo is byte-identical: the materialized form is a
        // fixed point.
        assert_eq!(back.to_toml_string(), echoed);
    }

    #[test]
    fn echo_materializes_every_section() {
        let echoed = RunConfig::default().to_toml_string();
        for section in
            ["[suite]", "[camera]", "[world]", "[trajectory]", "[query]", "[noise]", "[yaw]", "[mppi]", "[sweep]"]
        {
            assert!(echoed.contains(section), "echo missing {section}:\n{echoed}");
        }
        for key in ["master_seed", "workers", "out_dir", "step_cap", "fov_h_deg", "density"] {
            assert!(echoed.contains(key), "echo missing {key}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = RunConfig::from_toml_str("explode = true").unwrap_err();
        assert!(err.to_string().contains("explode"), "{err}");
        let err = RunConfig::from_toml_str("[world]\nwidht = 32").unwrap_err();
        assert!(err.to_string().contains("widht"), "{err}");
        let err = RunConfig::from_toml_str("[suite]\nstep_kap = 10").unwrap_err();
        assert!(err.to_string().contains("step_kap"), "{err}");
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let config = RunConfig::from_toml_str("[suite]\ntrajectories = 3").unwrap();
        assert_eq!(config.suite.trajectories, 3);
        assert_eq!(config.suite.initial_poses, 2);
        assert_eq!(config.world, WorldParams::default());
        let config = RunConfig::from_toml_str("[world]\ndensity = 0.2").unwrap();
        assert!((config.world.density - 0.2).abs() < 1e-12);
        assert_eq!(config.world.width, 64);
    }

    #[test]
    fn angles_convert_from_degrees_at_the_boundary() {
        let config = RunConfig::from_toml_str("[camera]\nfov_h_deg = 90.0").unwrap();
        let suite = config.to_suite();
        assert!((suite.recorder_camera.fov_h - PI / 2.0).abs() < 1e-12);

        let config = RunConfig::from_toml_str(
            "[sweep]\nparameter = \"fov\"\nmagnitudes = [0.0, 30.0, 60.0]",
        )
        .unwrap();
        let native = config.sweep.native_magnitudes();
        assert!((native[1] - PI / 6.0).abs() < 1e-12);
        assert!((native[2] - PI / 3.0).abs() < 1e-12);
        // Height magnitudes pass through unchanged.
        let config = RunConfig::from_toml_str("[sweep]\nmagnitudes = [1.2]").unwrap();
        assert_eq!(config.sweep.native_magnitudes(), vec![1.2]);
    }

    #[test]
    fn semantic_validation_names_the_offending_key() {
        let cases = [
            ("[suite]\nstep_cap = 0", "step_cap"),
            ("[suite]\ntrajectories = 0", "trajectories"),
            ("[suite]\nsuccess_radius = 0.0", "success_radius"),
            ("[suite]\ndepth_rays = 4", "depth_rays"),
            ("[suite]\ntasks = [\"any_point\"]", "any_point"),
            ("[world]\ndensity = 0.9", "density"),
            ("[camera]\nfov_h_deg = 200.0", "fov_h_deg"),
            ("[noise]\nflip_prob = 0.9", "flip_prob"),
            ("[sweep]\nmagnitudes = [5.0]", "sweep"),
            ("[mppi]\ngoal_point_rank = 0", "goal_point_rank"),
        ];
        for (text, needle) in cases {
            let err = RunConfig::from_toml_str(text).unwrap_err();
            assert!(
                matches!(err, ConfigError::Invalid(_)),
                "expected semantic error for {text}, got {err}"
            );
            assert!(err.to_string().contains(needle), "{text} -> {err}");
        }
    }

    #[test]
    fn suite_mapping_carries_all_sections() {
        let text = r#"
            master_seed = 42
            workers = 3
            [suite]
            trajectories = 7
            controller = "mppi"
            camera_modes = ["cross"]
            [noise]
            sigma_p = 0.15
            [yaw]
            k_p = 3.0
        "#;
        let config = RunConfig::from_toml_str(text).unwrap();
        let suite = config.to_suite();
        assert_eq!(suite.master_seed, 42);
        assert_eq!(suite.trajectories, 7);
        assert_eq!(suite.controller, ControllerKind::Mppi);
        assert_eq!(suite.camera_modes, vec![CameraModeKind::Cross]);
        assert!((suite.noise.sigma_p - 0.15).abs() < 1e-12);
        assert!((suite.yaw.k_p - 3.0).abs() < 1e-12);
        assert_eq!(config.effective_workers(), 3);
        assert!(RunConfig::default().effective_workers() >= 1);
    }
}

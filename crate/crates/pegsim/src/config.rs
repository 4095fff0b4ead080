//! TOML scenario configuration.
//!
//! One [`ScenarioConfig`] describes everything a run needs: timing, the
//! inner position loop, controller selection/tuning, synthesis settings,
//! the contact world, the strategy parameters, and the experiment plan.
//! Every field has a default, so a TOML file only has to mention what it
//! changes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::DiscreteLti;
use crate::strategy::{coverage_bound, StrategyConfig};
use crate::synthesis::{ContactPlantModel, SynthesisSpec};
use crate::world::{standard_materials, Geometry, Material, NoiseSpec};

/// Global timing for simulation runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSection {
    /// Control/simulation rate (Hz). The whole toolchain runs on this one
    /// clock.
    pub sample_rate_hz: f64,
    /// Duration of a plain (non-experiment) simulation run (s).
    pub duration_s: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            sample_rate_hz: 125.0,
            duration_s: 30.0,
        }
    }
}

/// Inner position-loop model parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerLoopSection {
    pub natural_frequency_hz: f64,
    pub damping_ratio: f64,
    /// Whole-sample actuation transport delay.
    pub transport_delay_steps: usize,
    /// Whole-sample force-measurement delay.
    pub sensor_delay_steps: usize,
}

impl Default for InnerLoopSection {
    fn default() -> Self {
        Self {
            natural_frequency_hz: 12.0,
            damping_ratio: 0.8,
            transport_delay_steps: 1,
            sensor_delay_steps: 4,
        }
    }
}

impl InnerLoopSection {
    /// Commanded-position → actual-position transfer (transport delay plus
    /// the discretized second-order lag).
    pub fn to_lti(&self, sample_period: f64) -> Result<DiscreteLti> {
        let h2 = crate::lti::zoh_second_order(
            self.natural_frequency_hz,
            self.damping_ratio,
            sample_period,
        )?;
        DiscreteLti::delay(self.transport_delay_steps, sample_period).series(&h2)
    }

    /// Full contact plant at a given environment stiffness.
    pub fn plant(&self, stiffness: f64, sample_period: f64) -> Result<ContactPlantModel> {
        ContactPlantModel::from_second_order(
            self.natural_frequency_hz,
            self.damping_ratio,
            self.transport_delay_steps,
            self.sensor_delay_steps,
            stiffness,
            sample_period,
        )
    }
}

/// Which force law drives the hybrid axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Convex-synthesized controller.
    Ccs,
    /// Integral law tuned for the softest expected contact.
    IntS,
    /// Integral law detuned for a gain margin at the stiffest contact.
    IntH,
}

impl Default for ControllerKind {
    fn default() -> Self {
        ControllerKind::Ccs
    }
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::Ccs => "ccs",
            ControllerKind::IntS => "int_s",
            ControllerKind::IntH => "int_h",
        }
    }
}

/// Controller selection and tuning.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSection {
    pub kind: ControllerKind,
    /// Desired closed-loop force time constant for integral tuning (s).
    pub time_constant_s: f64,
    /// Per-step command increment clamp away from contact (mm).
    pub command_clamp_mm: f64,
    /// Per-step command increment clamp toward contact (mm).
    pub approach_clamp_mm: f64,
    /// Stiffness at which the detuned integral law keeps its gain margin
    /// (N/mm).
    pub margin_stiffness: f64,
    /// Gain margin kept by the detuned integral law.
    pub gain_margin: f64,
    /// Optional path to a synthesized-controller JSON export. When absent
    /// the experiment synthesizes one on the fly.
    pub ccs_export: Option<String>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            kind: ControllerKind::default(),
            time_constant_s: 0.17,
            command_clamp_mm: 0.1,
            approach_clamp_mm: 0.01,
            margin_stiffness: 100.0,
            gain_margin: 2.0,
            ccs_export: None,
        }
    }
}

/// The contact world: geometry, sensor noise, and the material library.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSection {
    pub geometry: Geometry,
    pub noise: NoiseSpec,
    /// Material library; experiment plans refer to these by name.
    pub materials: Vec<Material>,
}

impl Default for WorldSection {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            noise: NoiseSpec::default(),
            materials: standard_materials(),
        }
    }
}

/// Batch experiment plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    /// Material names drawn from the world material library.
    pub materials: Vec<String>,
    pub trials_per_material: usize,
    /// Starting offsets are sampled uniformly on a disk of this radius
    /// (mm).
    pub offset_radius_mm: f64,
    /// Seed for the whole experiment; trial n derives its stream from
    /// `master_seed + n`.
    pub master_seed: u64,
    /// Where CSV logs, the summary, and the manifest land.
    pub output_dir: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            materials: vec![
                "rubber".to_string(),
                "abs".to_string(),
                "pine".to_string(),
                "aluminum".to_string(),
            ],
            trials_per_material: 12,
            offset_radius_mm: 20.0,
            master_seed: 42,
            output_dir: "results".to_string(),
        }
    }
}

/// Complete scenario description.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub sim: SimSection,
    pub inner_loop: InnerLoopSection,
    pub synthesis: SynthesisSpec,
    pub controller: ControllerSection,
    pub world: WorldSection,
    pub strategy: StrategyConfig,
    pub experiment: ExperimentSection,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sim.sample_rate_hz
    }

    pub fn material_by_name(&self, name: &str) -> Result<Material> {
        self.world
            .materials
            .iter()
            .find(|m| m.name == name)
            .cloned()
            .ok_or_else(|| {
                Error::ConfigInvalid(format!("material '{name}' is not in the material library"))
            })
    }

    /// Checks every cross-field constraint; an `Ok` config is runnable.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));

        if !(self.sim.sample_rate_hz.is_finite() && self.sim.sample_rate_hz > 0.0) {
            return bad(format!("sample_rate_hz must be > 0, got {}", self.sim.sample_rate_hz));
        }
        if !(self.sim.duration_s > 0.0) {
            return bad(format!("duration_s must be > 0, got {}", self.sim.duration_s));
        }
        let t = self.sample_period();

        if !(self.inner_loop.natural_frequency_hz > 0.0) {
            return bad("inner-loop natural frequency must be > 0".to_string());
        }
        if !(self.inner_loop.damping_ratio > 0.0) {
            return bad("inner-loop damping ratio must be > 0".to_string());
        }
        if self.inner_loop.natural_frequency_hz >= 0.5 / t {
            return bad(format!(
                "inner-loop natural frequency {} Hz is at or above Nyquist for {} Hz sampling",
                self.inner_loop.natural_frequency_hz, self.sim.sample_rate_hz
            ));
        }
        // The inner loop itself must be a stable model.
        let inner = self.inner_loop.to_lti(t)?;
        let rho = inner.spectral_radius()?;
        if rho >= 1.0 {
            return Err(Error::UnstableInnerLoop(rho));
        }

        self.synthesis.validate(t)?;

        if !(self.controller.time_constant_s > 0.0) {
            return bad("controller time constant must be > 0".to_string());
        }
        if !(self.controller.command_clamp_mm > 0.0) {
            return bad("command clamp must be > 0".to_string());
        }
        if !(self.controller.approach_clamp_mm > 0.0)
            || self.controller.approach_clamp_mm > self.controller.command_clamp_mm
        {
            return bad(format!(
                "approach clamp must lie in (0, command clamp], got {}",
                self.controller.approach_clamp_mm
            ));
        }
        if !(self.controller.gain_margin > 1.0) {
            return bad(format!(
                "gain margin must exceed 1, got {}",
                self.controller.gain_margin
            ));
        }
        if !(self.controller.margin_stiffness > 0.0) {
            return bad("margin stiffness must be > 0".to_string());
        }

        self.world.geometry.validate()?;
        if self.world.materials.is_empty() {
            return bad("the material library is empty".to_string());
        }
        for m in &self.world.materials {
            m.validate()?;
        }
        if !(self.world.noise.sigma_force >= 0.0 && self.world.noise.sigma_position >= 0.0) {
            return bad("noise sigmas must be >= 0".to_string());
        }

        let s = &self.strategy;
        for (name, v) in [
            ("pitch", s.pitch),
            ("v_max", s.v_max),
            ("accel", s.accel),
            ("detect_threshold", s.detect_threshold),
            ("move_speed", s.move_speed),
            ("approach_speed", s.approach_speed),
            ("engage_force", s.engage_force),
            ("tilt_ramp", s.tilt_ramp),
            ("search_force", s.search_force),
            ("two_point_force", s.two_point_force),
            ("press_slope", s.press_slope),
            ("insert_force", s.insert_force),
            ("insert_slope", s.insert_slope),
            ("depth_done", s.depth_done),
            ("state_timeout", s.state_timeout),
            ("search_timeout", s.search_timeout),
            ("global_timeout", s.global_timeout),
            ("overforce", s.overforce),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("strategy.{name} must be > 0, got {v}"));
            }
        }
        if s.depth_done >= self.world.geometry.hole_depth {
            return bad(format!(
                "depth_done {} mm is not reachable in a {} mm hole",
                s.depth_done, self.world.geometry.hole_depth
            ));
        }
        if s.detect_threshold >= self.world.geometry.hole_depth {
            return bad("detect threshold exceeds the hole depth".to_string());
        }
        if s.global_timeout < s.search_timeout {
            return bad("global timeout is shorter than the search budget".to_string());
        }

        let e = &self.experiment;
        if e.trials_per_material == 0 {
            return bad("trials_per_material must be >= 1".to_string());
        }
        if !(e.offset_radius_mm > 0.0) {
            return bad("offset_radius_mm must be > 0".to_string());
        }
        for name in &e.materials {
            self.material_by_name(name)?;
        }
        // The spiral must be able to sweep the whole offset disk within the
        // search budget: arc length to the coverage angle at full speed.
        let theta = coverage_bound(s.pitch, e.offset_radius_mm);
        let b = s.pitch / (2.0 * std::f64::consts::PI);
        let arc = 0.5 * b * theta * theta;
        let sweep_time = arc / s.v_max;
        if sweep_time > s.search_timeout {
            return bad(format!(
                "a {} mm offset disk needs {:.0} s of spiral at v_max, beyond the {:.0} s search budget",
                e.offset_radius_mm, sweep_time, s.search_timeout
            ));
        }

        Ok(())
    }
}

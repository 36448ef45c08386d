//! Scripted closed-loop scenarios: file schema, execution, logs and metrics.
//!
//! Scenario files are TOML. Every section except `[model]` and `duration` is
//! optional and falls back to the defaults documented on each field.

pub mod log;
pub mod metrics;
pub mod script;

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{AdaptationParams, Nonlinearity, RcmState};
use crate::controller::{Controller, ControllerConfig, ToolGeometry};
use crate::manipulator::{JointState, ManipulatorModel, ModelConfig};
use crate::rcm::{init_rcm_point, scope_axis};
use crate::sim::{
    ExogenousInputs, NoiseConfig, SimConfig, SimError, SimState, Simulator, TrocarParams,
};
use crate::spatial::{Mat3, Vec3};
use crate::wrenches::{CameraIntrinsics, GainSchedule};

pub use log::{read_csv, to_csv_string, write_csv, LogRecord, LogWriter};
pub use metrics::{summarize, Completion, Metrics, SummaryConfig};
use script::{check_times, sample_grip, sample_point, sample_wrench, GripKey, PointKey, WrenchKey};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}: file not found")]
    NotFound(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("run aborted: {0}")]
    Aborted(SimError),
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Which manipulator to simulate: a built-in name or a model file path
/// (relative paths resolve against the scenario file's directory).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

pub const BUILTIN_MODELS: [&str; 1] = ["default7"];

/// Controller parameters. Unspecified keys take the values below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Initial RCM location along the scope, fraction of L (0.8).
    pub lambda0: f64,
    /// Adaptation compliance, m/(N·s) (0.003).
    pub alpha: f64,
    /// Adaptation leak, 1/s (0.05).
    pub beta: f64,
    /// Reference re-anchoring rate threshold, m/s (5e-4).
    pub epsilon: f64,
    /// Residual dead zone, N (5).
    pub gamma1: f64,
    /// End of the residual transition band, N (15).
    pub gamma2: f64,
    /// Residual saturation, N (10).
    pub f_op: f64,
    /// Grip normalization (2000).
    pub k_h: f64,
    /// Contacts needed to open the grip gate (3).
    pub k_min: usize,
    /// Pixel dead zone, px (50).
    pub eps1: f64,
    /// End of the pixel transition band, px (200).
    pub eps2: f64,
    /// Tracking force ceiling, N (10).
    pub f_max: f64,
    /// Isotropic RCM stiffness, N/m (300).
    pub kp: f64,
    /// Isotropic RCM damping, N·s/m (20).
    pub kd: f64,
    /// Rotational viscosity, N·m·s (150).
    pub k_t: f64,
    /// Translational viscosity, N·s/m (2).
    pub k_f: f64,
    /// Intrinsics, px (506.57, 506.72, 312.22, 243.39, 640 × 480).
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    pub image_width: f64,
    pub image_height: f64,
    /// Extra joint viscosity in the plant, N·m·s/rad (0).
    pub joint_damping: f64,
}

impl Default for Params {
    fn default() -> Self {
        let a = AdaptationParams::default();
        let g = GainSchedule::default();
        let c = CameraIntrinsics::default();
        Self {
            lambda0: 0.8,
            alpha: a.alpha,
            beta: a.beta,
            epsilon: a.epsilon,
            gamma1: a.gamma1,
            gamma2: a.gamma2,
            f_op: a.f_op,
            k_h: g.k_h,
            k_min: g.k_min,
            eps1: g.eps1,
            eps2: g.eps2,
            f_max: g.f_max,
            kp: 300.0,
            kd: 20.0,
            k_t: g.k_t,
            k_f: g.k_f,
            fx: c.fx,
            fy: c.fy,
            u0: c.u0,
            v0: c.v0,
            image_width: c.width,
            image_height: c.height,
            joint_damping: 0.0,
        }
    }
}

impl Params {
    pub fn adaptation(&self) -> AdaptationParams {
        AdaptationParams {
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            f_op: self.f_op,
        }
    }

    pub fn gains(&self) -> GainSchedule {
        GainSchedule {
            k_h: self.k_h,
            k_min: self.k_min,
            eps1: self.eps1,
            eps2: self.eps2,
            f_max: self.f_max,
            kp: Mat3::identity() * self.kp,
            kd: Mat3::identity() * self.kd,
            k_t: self.k_t,
            k_f: self.k_f,
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.fx,
            fy: self.fy,
            u0: self.u0,
            v0: self.v0,
            width: self.image_width,
            height: self.image_height,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let p = |f: &str, m: &str| Err(invalid(&format!("params.{f}"), m));
        if !(0.0..=1.0).contains(&self.lambda0) {
            return p(
                "lambda0",
                &format!("λ0 ∈ [0,1] required, got {}", self.lambda0),
            );
        }
        let finite = [
            self.alpha,
            self.beta,
            self.epsilon,
            self.gamma1,
            self.gamma2,
            self.f_op,
            self.k_h,
            self.eps1,
            self.eps2,
            self.f_max,
            self.kp,
            self.kd,
            self.k_t,
            self.k_f,
            self.fx,
            self.fy,
            self.u0,
            self.v0,
            self.image_width,
            self.image_height,
            self.joint_damping,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return p("*", "all parameters must be finite");
        }
        if self.alpha < 0.0 {
            return p("alpha", "must be ≥ 0");
        }
        if self.beta < 0.0 {
            return p("beta", "must be ≥ 0");
        }
        if self.epsilon <= 0.0 {
            return p("epsilon", "must be > 0");
        }
        if !(0.0 <= self.gamma1 && self.gamma1 < self.gamma2) {
            return p("gamma1", "0 ≤ gamma1 < gamma2 required");
        }
        if self.f_op <= 0.0 {
            return p("f_op", "must be > 0");
        }
        if self.k_h <= 0.0 {
            return p("k_h", "must be > 0");
        }
        if !(0.0 <= self.eps1 && self.eps1 < self.eps2) {
            return p("eps1", "0 ≤ eps1 < eps2 required");
        }
        if self.f_max <= 0.0 {
            return p("f_max", "must be > 0");
        }
        if self.kp <= 0.0 {
            return p("kp", "must be > 0");
        }
        if self.kd <= 0.0 {
            return p("kd", "must be > 0");
        }
        if self.k_t <= 0.0 {
            return p("k_t", "must be > 0");
        }
        if self.k_f <= 0.0 {
            return p("k_f", "must be > 0");
        }
        if self.joint_damping < 0.0 {
            return p("joint_damping", "must be ≥ 0");
        }
        self.intrinsics()
            .validate()
            .map_err(|m| invalid("params.fx/fy/u0/v0", m))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Features {
    /// RCM point adaptation (on).
    pub adaptation: bool,
    /// Instrument tracking (on).
    pub tracking: bool,
    /// Continuous variant of the dead-zone maps (off).
    pub continuous_nonlinearity: bool,
    /// Add `g(θ)` to the control torque (on).
    pub gravity_compensation: bool,
    /// Add `C(θ,θ̇)θ̇` to the control torque (off).
    pub coriolis_compensation: bool,
    /// Apply handle and trocar wrenches to the robot dynamics (off).
    pub contact_coupling: bool,
}

impl Default for Features {
    fn default() -> Self {
        Self {
            adaptation: true,
            tracking: true,
            continuous_nonlinearity: false,
            gravity_compensation: true,
            coriolis_compensation: false,
            contact_coupling: false,
        }
    }
}

/// Incision model. The center defaults to the initial RCM point and is moved
/// by the `displacement` offsets (base frame, m, piecewise linear).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrocarScript {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    pub stiffness: f64,
    pub damping: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub displacement: Vec<PointKey>,
}

impl Default for TrocarScript {
    fn default() -> Self {
        let d = TrocarParams::default();
        Self {
            center: None,
            stiffness: d.stiffness,
            damping: d.damping,
            displacement: Vec::new(),
        }
    }
}

/// Surgeon input at the handle: wrench keyframes in handle coordinates
/// (piecewise linear) and grip keyframes (piecewise constant).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandleScript {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub wrench: Vec<WrenchKey>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub grip: Vec<GripKey>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentFrame {
    /// Positions are base-frame coordinates.
    #[default]
    Base,
    /// Positions are coordinates in the camera frame at t = 0.
    InitialCamera,
}

/// One instrument tip trajectory, present on `[from, until)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub frame: InstrumentFrame,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<f64>,
    pub path: Vec<PointKey>,
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Defaults to the file stem.
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// s.
    pub duration: f64,
    /// s (1e-3).
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the model's home configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_joints: Option<Vec<f64>>,
    /// Added to the initial RCM point, base frame, m.
    #[serde(default)]
    pub initial_rcm_offset: [f64; 3],
    pub model: ModelRef,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub features: Features,
    #[serde(default)]
    pub geometry: ToolGeometry,
    #[serde(default)]
    pub trocar: TrocarScript,
    #[serde(default)]
    pub handle: HandleScript,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instruments: Vec<InstrumentScript>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<Completion>,
    /// Directory relative model paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Command-line style overrides applied after loading.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub no_adapt: bool,
    pub no_tracking: bool,
    pub continuous_nonlinearity: bool,
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ScenarioError::NotFound(path.to_path_buf()),
        _ => ScenarioError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
    })?;
    let mut s = Scenario::from_toml_str(&text)
        .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
    if s.name.is_empty() {
        s.name = path
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
    }
    s.base_dir = path.parent().map(Path::to_path_buf);
    s.validate()?;
    Ok(s)
}

impl Scenario {
    /// Parses without validating.
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(d) = o.duration {
            self.duration = d;
        }
        if o.no_adapt {
            self.features.adaptation = false;
        }
        if o.no_tracking {
            self.features.tracking = false;
        }
        if o.continuous_nonlinearity {
            self.features.continuous_nonlinearity = true;
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig, ScenarioError> {
        match (&self.model.builtin, &self.model.file) {
            (Some(name), None) => match name.as_str() {
                "default7" => Ok(ModelConfig::default_seven()),
                other => Err(invalid(
                    "model.builtin",
                    format!(
                        "unknown model {other:?} (available: {})",
                        BUILTIN_MODELS.join(", ")
                    ),
                )),
            },
            (None, Some(file)) => {
                let path = match &self.base_dir {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                ModelConfig::load(&path).map_err(|m| invalid("model.file", m))
            }
            _ => Err(invalid("model", "set exactly one of `builtin` or `file`")),
        }
    }

    pub fn build_model(&self) -> Result<ManipulatorModel, ScenarioError> {
        let model = self
            .model_config()?
            .build()
            .map_err(|e| invalid("model", e.to_string()))?;
        model
            .ensure_rcm_capable()
            .map_err(|e| invalid("model", e.to_string()))?;
        Ok(model)
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration", "must be > 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be > 0"));
        }
        if self.dt > self.duration {
            return Err(invalid("dt", "must not exceed duration"));
        }
        self.params.validate()?;
        let model = self.build_model()?;
        if let Some(q) = &self.initial_joints {
            if q.len() != model.dof() {
                return Err(invalid(
                    "initial_joints",
                    format!("expected {} values, got {}", model.dof(), q.len()),
                ));
            }
            if q.iter().any(|x| !x.is_finite()) {
                return Err(invalid("initial_joints", "must be finite"));
            }
        }
        if self.initial_rcm_offset.iter().any(|x| !x.is_finite()) {
            return Err(invalid("initial_rcm_offset", "must be finite"));
        }
        if !(self.trocar.stiffness >= 0.0) {
            return Err(invalid("trocar.stiffness", "must be ≥ 0"));
        }
        if !(self.trocar.damping >= 0.0) {
            return Err(invalid("trocar.damping", "must be ≥ 0"));
        }
        check_times(
            "trocar.displacement",
            self.trocar.displacement.iter().map(|k| k.t),
        )
        .map_err(|m| invalid("trocar.displacement", m))?;
        check_times("handle.wrench", self.handle.wrench.iter().map(|k| k.t))
            .map_err(|m| invalid("handle.wrench", m))?;
        check_times("handle.grip", self.handle.grip.iter().map(|k| k.t))
            .map_err(|m| invalid("handle.grip", m))?;
        if self
            .handle
            .grip
            .iter()
            .any(|k| k.contacts > crate::wrenches::TACTILE_ELEMENTS)
        {
            return Err(invalid("handle.grip", "contacts must be ≤ 64"));
        }
        for (i, inst) in self.instruments.iter().enumerate() {
            let field = format!("instruments[{i}]");
            if inst.path.is_empty() {
                return Err(invalid(&field, "path needs at least one keyframe"));
            }
            check_times(&field, inst.path.iter().map(|k| k.t)).map_err(|m| invalid(&field, m))?;
            if let (Some(a), Some(b)) = (inst.from, inst.until) {
                if !(a < b) {
                    return Err(invalid(&field, "from must precede until"));
                }
            }
        }
        let noise = [
            self.noise.handle_force,
            self.noise.handle_moment,
            self.noise.estimate_force,
            self.noise.estimate_moment,
            self.noise.pixel,
        ];
        if noise.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(invalid("noise", "amplitudes must be finite and ≥ 0"));
        }
        if let Some(c) = &self.completion {
            c.validate().map_err(|m| invalid("completion", m))?;
        }
        Ok(())
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            gains: self.params.gains(),
            adaptation: self.params.adaptation(),
            intrinsics: self.params.intrinsics(),
            geometry: self.geometry,
            shape: if self.features.continuous_nonlinearity {
                Nonlinearity::Continuous
            } else {
                Nonlinearity::Verbatim
            },
            adapt: self.features.adaptation,
            tracking: self.features.tracking,
            gravity_comp: self.features.gravity_compensation,
            coriolis_comp: self.features.coriolis_compensation,
        }
    }

    pub fn summary_config(&self) -> SummaryConfig {
        SummaryConfig {
            eps1: self.params.eps1,
            completion: self.completion.clone(),
        }
    }

    /// Builds the simulator and the time-indexed input script.
    pub fn prepare(&self) -> Result<(Simulator, InputScript), ScenarioError> {
        self.validate()?;
        let model = self.build_model()?;
        let q0 = self
            .initial_joints
            .as_ref()
            .map(|q| DVector::from_column_slice(q))
            .unwrap_or_else(|| model.home().clone());
        let pose = model
            .forward_kinematics(&q0)
            .map_err(|e| invalid("initial_joints", e.to_string()))?;
        let d_z = scope_axis(&pose.rotation);
        let p_r0 = init_rcm_point(
            &pose.position,
            &d_z,
            self.params.lambda0,
            model.scope_length(),
        )
        .map_err(|e| invalid("params.lambda0", e.to_string()))?;
        let controller = Controller::new(self.controller_config());
        let camera = self.geometry.camera_pose(&pose, model.scope_length());
        let instruments = self
            .instruments
            .iter()
            .map(|inst| {
                let path = inst
                    .path
                    .iter()
                    .map(|k| {
                        let p = Vec3::from(k.position);
                        let p = match inst.frame {
                            InstrumentFrame::Base => p,
                            InstrumentFrame::InitialCamera => camera.transform_point(&p),
                        };
                        PointKey {
                            t: k.t,
                            position: p.into(),
                        }
                    })
                    .collect();
                (inst.from, inst.until, path)
            })
            .collect();
        let script = InputScript {
            trocar_center: self.trocar.center.map(Vec3::from).unwrap_or(p_r0),
            trocar_displacement: self.trocar.displacement.clone(),
            handle: self.handle.clone(),
            instruments,
        };
        let sim_config = SimConfig {
            dt: self.dt,
            trocar: TrocarParams {
                stiffness: self.trocar.stiffness,
                damping: self.trocar.damping,
            },
            noise: self.noise,
            contact_coupling: self.features.contact_coupling,
            joint_damping: self.params.joint_damping,
        };
        let state = SimState::new(
            JointState::at_rest(q0),
            RcmState::new(p_r0 + Vec3::from(self.initial_rcm_offset)),
            self.seed,
        );
        Ok((Simulator::new(model, controller, sim_config, state), script))
    }
}

/// Scripted inputs resolved to base-frame coordinates.
#[derive(Clone, Debug)]
pub struct InputScript {
    pub trocar_center: Vec3,
    pub trocar_displacement: Vec<PointKey>,
    pub handle: HandleScript,
    #[allow(clippy::type_complexity)]
    pub instruments: Vec<(Option<f64>, Option<f64>, Vec<PointKey>)>,
}

impl InputScript {
    pub fn at(&self, t: f64) -> ExogenousInputs {
        let offset = sample_point(&self.trocar_displacement, t).unwrap_or_else(Vec3::zeros);
        ExogenousInputs {
            handle_wrench: sample_wrench(&self.handle.wrench, t),
            tactile: sample_grip(&self.handle.grip, t),
            instruments: self
                .instruments
                .iter()
                .map(|(from, until, path)| {
                    let present = from.is_none_or(|a| t >= a) && until.is_none_or(|b| t < b);
                    if present {
                        sample_point(path, t)
                    } else {
                        None
                    }
                })
                .collect(),
            trocar_center: self.trocar_center + offset,
        }
    }
}

/// Log, metrics and the abort reason, if the run stopped early.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<LogRecord>,
    pub metrics: Metrics,
    pub abort: Option<SimError>,
}

/// Executes the scenario, passing each record to `sink` as it is produced.
pub fn run_with(
    scenario: &Scenario,
    mut sink: impl FnMut(&LogRecord),
) -> Result<(Vec<LogRecord>, Option<SimError>), ScenarioError> {
    let (mut sim, script) = scenario.prepare()?;
    let intr = scenario.params.intrinsics();
    let tracking = scenario.features.tracking;
    let mut records = Vec::with_capacity(scenario.ticks());
    let mut abort = None;
    for _ in 0..scenario.ticks() {
        let inputs = script.at(sim.time());
        match sim.step(&inputs) {
            Ok(step) => {
                let rec = LogRecord::from_step(&step, &intr, tracking);
                sink(&rec);
                records.push(rec);
            }
            Err(e) => {
                abort = Some(e);
                break;
            }
        }
    }
    Ok((records, abort))
}

pub fn run(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    let (records, abort) = run_with(scenario, |_| {})?;
    let metrics = match summarize(&records, &scenario.summary_config()) {
        Ok(m) => m,
        Err(_) => {
            return Err(ScenarioError::Aborted(
                abort.unwrap_or(SimError::NonFinite { tick: 0 }),
            ))
        }
    };
    Ok(RunOutput {
        records,
        metrics,
        abort,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "duration = 0.5\n[model]\nbuiltin = \"default7\"\n";

    #[test]
    fn minimal_file_takes_defaults() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        s.validate().unwrap();
        assert_eq!(s.params, Params::default());
        assert_eq!(s.features, Features::default());
        assert_eq!(s.dt, 1e-3);
        assert_eq!(s.params.lambda0, 0.8);
        assert_eq!(s.params.k_t, 150.0);
        assert_eq!(s.params.u0, 312.22);
    }

    #[test]
    fn lambda_out_of_range_names_the_field() {
        let s = Scenario::from_toml_str(&format!("{MINIMAL}[params]\nlambda0 = 1.5\n")).unwrap();
        let err = s.validate().unwrap_err().to_string();
        assert!(
            err.contains("params.lambda0") && err.contains("λ0 ∈ [0,1]"),
            "{err}"
        );
    }

    #[test]
    fn unknown_keys_and_syntax_errors() {
        let err = Scenario::from_toml_str(&format!("{MINIMAL}bogus = 1\n")).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = Scenario::from_toml_str("duration = \n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        let err =
            Scenario::from_toml_str(&format!("{MINIMAL}[params]\nkp_typo = 3\n")).unwrap_err();
        assert!(err.to_string().contains("kp_typo"));
    }

    #[test]
    fn missing_file_is_not_found() {
        let err = load_scenario(Path::new("/nonexistent/scenario.toml")).unwrap_err();
        assert!(matches!(err, ScenarioError::NotFound(_)));
    }

    #[test]
    fn model_reference_checks() {
        let s = Scenario::from_toml_str("duration = 1.0\n[model]\nbuiltin = \"nope\"\n").unwrap();
        assert!(s
            .validate()
            .unwrap_err()
            .to_string()
            .contains("model.builtin"));
        let s = Scenario::from_toml_str("duration = 1.0\n[model]\n").unwrap();
        assert!(s.validate().is_err());
        let s = Scenario::from_toml_str(&format!("initial_joints = [0.0]\n{MINIMAL}")).unwrap();
        assert!(s
            .validate()
            .unwrap_err()
            .to_string()
            .contains("initial_joints"));
    }

    #[test]
    fn script_resolution() {
        let text = format!(
            "{MINIMAL}
[trocar]
displacement = [{{ t = 0.0, position = [0.0, 0.0, 0.0] }}, {{ t = 0.2, position = [0.02, 0.0, 0.0] }}]

[[instruments]]
frame = \"initial_camera\"
until = 0.3
path = [{{ t = 0.0, position = [0.0, 0.0, 0.1] }}]
"
        );
        let s = Scenario::from_toml_str(&text).unwrap();
        let (sim, script) = s.prepare().unwrap();
        let pose = sim.model.forward_kinematics(sim.model.home()).unwrap();
        let inputs = script.at(0.1);
        let tip = pose.position + 0.29 * scope_axis(&pose.rotation);
        let p = inputs.instruments[0].unwrap();
        assert!((p - (tip + 0.1 * scope_axis(&pose.rotation))).norm() < 1e-12);
        assert!(
            (inputs.trocar_center - script.trocar_center - Vec3::new(0.01, 0.0, 0.0)).norm()
                < 1e-12
        );
        assert!(script.at(0.3).instruments[0].is_none());
    }

    #[test]
    fn overrides_apply() {
        let mut s = Scenario::from_toml_str(MINIMAL).unwrap();
        s.apply(&Overrides {
            seed: Some(9),
            dt: Some(2e-3),
            duration: Some(0.1),
            no_adapt: true,
            no_tracking: true,
            continuous_nonlinearity: true,
        });
        assert_eq!((s.seed, s.dt, s.duration), (9, 2e-3, 0.1));
        assert!(
            !s.features.adaptation && !s.features.tracking && s.features.continuous_nonlinearity
        );
        assert_eq!(s.ticks(), 50);
    }
}

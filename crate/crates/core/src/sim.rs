//! Fixed-step closed-loop plant: trocar contact, sensor emulation, control and
//! integration of the rigid-body dynamics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::RcmState;
use crate::controller::{ControlError, ControlOutput, Controller};
use crate::manipulator::{ChainKinematics, JointState, ManipulatorModel};
use crate::rcm::{closest_point, ScopeGeometry};
use crate::spatial::{shift_wrench, Pose, Vec3, Wrench};
use crate::wrenches::{Detection, TactileFrame};

/// Frame rate of the emulated detector.
pub const VISION_RATE_HZ: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("tick {tick}: {source}")]
    Control { tick: u64, source: ControlError },
    #[error("tick {tick}: state became non-finite")]
    NonFinite { tick: u64 },
    #[error("tick {tick}: closed-loop system matrix is singular")]
    SingularUpdate { tick: u64 },
}

impl SimError {
    pub fn tick(&self) -> u64 {
        match self {
            SimError::Control { tick, .. }
            | SimError::NonFinite { tick }
            | SimError::SingularUpdate { tick } => *tick,
        }
    }
}

/// Lateral spring-damper between the scope shaft and the incision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrocarParams {
    /// N/m.
    pub stiffness: f64,
    /// N·s/m.
    pub damping: f64,
}

impl Default for TrocarParams {
    fn default() -> Self {
        Self {
            stiffness: 1000.0,
            damping: 10.0,
        }
    }
}

/// Result of [`trocar_contact`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrocarContact {
    /// Wall force on the shaft, lateral to it.
    pub f_wall: Vec3,
    /// The same force as a wrench about `p_E`.
    pub wrench_at_ee: Wrench,
    /// Shaft point nearest the trocar center.
    pub point: Vec3,
}

/// Wall reaction `−k_w P(x − c_T) − b_w v⊥` at the shaft point `x` nearest `c_T`.
pub fn trocar_contact(
    scope: &ScopeGeometry,
    center: &Vec3,
    params: &TrocarParams,
    lateral_velocity: &Vec3,
) -> TrocarContact {
    let cp = closest_point(&scope.p_e, &scope.d_z, center, scope.length);
    let penetration = scope.projector * (cp.p_g - center);
    let f_wall =
        -params.stiffness * penetration - params.damping * (scope.projector * lateral_velocity);
    TrocarContact {
        f_wall,
        wrench_at_ee: shift_wrench(&Wrench::from_force(f_wall), &cp.p_g, &scope.p_e),
        point: cp.p_g,
    }
}

/// Zero-mean uniform noise half-widths per channel; all zero disables noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// N, on each handle force component.
    pub handle_force: f64,
    /// N·m, on each handle moment component.
    pub handle_moment: f64,
    /// N, on each estimated end-effector force component.
    pub estimate_force: f64,
    /// N·m.
    pub estimate_moment: f64,
    /// px, on each detection coordinate.
    pub pixel: f64,
}

impl NoiseConfig {
    pub fn is_off(&self) -> bool {
        *self == Self::default()
    }
}

/// Scripted world inputs at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct ExogenousInputs {
    /// Surgeon wrench in handle-frame coordinates, about the handle origin.
    pub handle_wrench: Wrench,
    pub tactile: TactileFrame,
    /// Instrument points in the base frame; `None` while an instrument is absent.
    pub instruments: Vec<Option<Vec3>>,
    pub trocar_center: Vec3,
}

impl ExogenousInputs {
    pub fn quiet(trocar_center: Vec3) -> Self {
        Self {
            handle_wrench: Wrench::zero(),
            tactile: TactileFrame::untouched(),
            instruments: Vec::new(),
            trocar_center,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub trocar: TrocarParams,
    pub noise: NoiseConfig,
    /// Feed handle and trocar wrenches into the rigid-body dynamics.
    pub contact_coupling: bool,
    /// Extra joint-space viscosity, N·m·s/rad.
    pub joint_damping: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            trocar: TrocarParams::default(),
            noise: NoiseConfig::default(),
            contact_coupling: false,
            joint_damping: 0.0,
        }
    }
}

impl SimConfig {
    /// Control ticks per detector frame, `round(1/(25·dt))`, at least one.
    pub fn vision_period(&self) -> u64 {
        ((1.0 / (VISION_RATE_HZ * self.dt)).round() as u64).max(1)
    }
}

/// Mutable part of a run.
#[derive(Clone, Debug)]
pub struct SimState {
    pub joints: JointState,
    pub rcm: RcmState,
    pub tick: u64,
    /// Detections of the last detector frame, one slot per instrument.
    pub held: Vec<Option<Detection>>,
    /// Camera pose the held detections were computed from.
    pub vision_camera: Pose,
    rng: ChaCha8Rng,
}

impl SimState {
    pub fn new(joints: JointState, rcm: RcmState, seed: u64) -> Self {
        Self {
            joints,
            rcm,
            tick: 0,
            held: Vec::new(),
            vision_camera: Pose::identity(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Everything observed during one tick, before the state update.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t: f64,
    pub joints: JointState,
    pub p_e: Vec3,
    pub d_z: Vec3,
    pub rcm: RcmState,
    pub contact: TrocarContact,
    pub sensors: crate::controller::SensorBundle,
    /// Held detections per instrument.
    pub detections: Vec<Option<Detection>>,
    pub vision_camera: Pose,
    pub control: ControlOutput,
}

fn uniform(rng: &mut ChaCha8Rng, amp: f64) -> f64 {
    if amp > 0.0 {
        rng.gen_range(-amp..=amp)
    } else {
        0.0
    }
}

fn noisy(rng: &mut ChaCha8Rng, v: Vec3, amp: f64) -> Vec3 {
    let n = Vec3::new(uniform(rng, amp), uniform(rng, amp), uniform(rng, amp));
    v + n
}

/// Closed-loop simulator for one model and controller.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub model: ManipulatorModel,
    pub controller: Controller,
    pub config: SimConfig,
    pub state: SimState,
}

impl Simulator {
    pub fn new(
        model: ManipulatorModel,
        controller: Controller,
        config: SimConfig,
        state: SimState,
    ) -> Self {
        Self {
            model,
            controller,
            config,
            state,
        }
    }

    pub fn time(&self) -> f64 {
        self.state.tick as f64 * self.config.dt
    }

    /// Emulated measurements for the current state.
    ///
    /// The estimated wrench `W_m` contains the handle wrench and the trocar
    /// wrench, so `F_s − F_m` recovers minus the wall force up to noise.
    pub fn emulate_sensors(
        &mut self,
        kin: &ChainKinematics,
        inputs: &ExogenousInputs,
        contact: &TrocarContact,
    ) -> crate::controller::SensorBundle {
        let noise = self.config.noise;
        let geometry = &self.controller.config.geometry;
        let ee = &kin.end_effector;
        let handle = geometry.handle_pose(ee);
        let rng = &mut self.state.rng;

        let handle_base = Wrench::new(
            handle.rotation * inputs.handle_wrench.moment,
            handle.rotation * inputs.handle_wrench.force,
        );
        let handle_at_ee = shift_wrench(&handle_base, &handle.position, &ee.position);
        let truth_m = handle_at_ee + contact.wrench_at_ee;

        let w_s = Wrench::new(
            noisy(rng, inputs.handle_wrench.moment, noise.handle_moment),
            noisy(rng, inputs.handle_wrench.force, noise.handle_force),
        );
        let w_m = Wrench::new(
            noisy(rng, truth_m.moment, noise.estimate_moment),
            noisy(rng, truth_m.force, noise.estimate_force),
        );

        if self.state.tick.is_multiple_of(self.config.vision_period())
            || self.state.held.len() != inputs.instruments.len()
        {
            let camera = geometry.camera_pose(ee, self.model.scope_length());
            let intr = self.controller.config.intrinsics;
            self.state.held = inputs
                .instruments
                .iter()
                .map(|p| {
                    let p = (*p)?;
                    let local = camera.inverse_transform_point(&p);
                    let det = intr.project(&local)?;
                    let det = Detection {
                        u: det.u + uniform(rng, noise.pixel),
                        v: det.v + uniform(rng, noise.pixel),
                    };
                    let inside =
                        (0.0..=intr.width).contains(&det.u) && (0.0..=intr.height).contains(&det.v);
                    inside.then_some(det)
                })
                .collect();
            self.state.vision_camera = camera;
        }

        crate::controller::SensorBundle {
            w_s,
            tactile: inputs.tactile,
            detections: self.state.held.iter().flatten().copied().collect(),
            w_m,
        }
    }

    /// Runs one control tick and advances the plant by `dt`.
    pub fn step(&mut self, inputs: &ExogenousInputs) -> Result<StepRecord, SimError> {
        let tick = self.state.tick;
        let dt = self.config.dt;
        let model = &self.model;
        let joints = self.state.joints.clone();
        let kin = model
            .kinematics(&joints.positions)
            .map_err(|e| SimError::Control {
                tick,
                source: e.into(),
            })?;
        let scope = ScopeGeometry::of_chain(model, &kin);

        let nearest = closest_point(&scope.p_e, &scope.d_z, &inputs.trocar_center, scope.length);
        let v_point = kin.point_jacobian(&nearest.p_g) * &joints.velocities;
        let contact = trocar_contact(
            &scope,
            &inputs.trocar_center,
            &self.config.trocar,
            &Vec3::new(v_point[3], v_point[4], v_point[5]),
        );

        let sensors = self.emulate_sensors(&kin, inputs, &contact);
        let rcm_before = self.state.rcm;
        let control = self
            .controller
            .tick(
                &self.model,
                &kin,
                &joints,
                &mut self.state.rcm,
                &sensors,
                dt,
            )
            .map_err(|source| SimError::Control { tick, source })?;

        let model = &self.model;
        let terms = model.dynamics_terms_with(&kin, &joints.velocities);
        let mut rhs = &control.tau - &terms.coriolis - &terms.gravity;
        let n = model.dof();
        let mut gain = control.velocity_gain.clone();
        if self.config.joint_damping > 0.0 {
            rhs -= &joints.velocities * self.config.joint_damping;
            gain -= DMatrix::identity(n, n) * self.config.joint_damping;
        }
        if self.config.contact_coupling {
            let ee = &kin.end_effector;
            let handle = self.controller.config.geometry.handle_pose(ee);
            let hw = Wrench::new(
                handle.rotation * inputs.handle_wrench.moment,
                handle.rotation * inputs.handle_wrench.force,
            );
            let w_ext = shift_wrench(&hw, &handle.position, &ee.position) + contact.wrench_at_ee;
            rhs += kin.jacobian().transpose() * DVector::from_row_slice(&w_ext.as_array());
        }
        // Velocity update implicit in the damping terms: (M − dt·D) Δθ̇ = dt·rhs.
        let system = &terms.mass - gain * dt;
        let dqd = system
            .lu()
            .solve(&(rhs * dt))
            .ok_or(SimError::SingularUpdate { tick })?;
        let velocities = &joints.velocities + dqd;
        let positions = &joints.positions + &velocities * dt;
        let next = JointState {
            positions,
            velocities,
        };
        if !next.is_finite()
            || !self.state.rcm.is_finite()
            || !control.tau.iter().all(|x| x.is_finite())
        {
            return Err(SimError::NonFinite { tick });
        }

        let record = StepRecord {
            t: tick as f64 * dt,
            joints,
            p_e: scope.p_e,
            d_z: scope.d_z,
            rcm: rcm_before,
            contact,
            sensors,
            detections: self.state.held.clone(),
            vision_camera: self.state.vision_camera,
            control,
        };
        self.state.joints = next;
        self.state.tick += 1;
        Ok(record)
    }
}

/// Closed-loop storage function: kinetic energy plus the RCM spring energy
/// `½ e_Rᵀ Kp e_R`.
pub fn closed_loop_energy(
    model: &ManipulatorModel,
    joints: &JointState,
    e_r: &Vec3,
    kp: &crate::spatial::Mat3,
) -> f64 {
    let ke = model.kinetic_energy(joints).unwrap_or(f64::NAN);
    ke + 0.5 * e_r.dot(&(kp * e_r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerConfig;
    use crate::rcm::{init_rcm_point, scope_axis};
    use approx::assert_relative_eq;

    fn home_sim(config: ControllerConfig, sim: SimConfig) -> (Simulator, Vec3) {
        let model = ManipulatorModel::default_seven();
        let q = model.home().clone();
        let pose = model.forward_kinematics(&q).unwrap();
        let p_r = init_rcm_point(&pose.position, &scope_axis(&pose.rotation), 0.8, 0.29).unwrap();
        let state = SimState::new(JointState::at_rest(q), RcmState::new(p_r), 7);
        (
            Simulator::new(model, Controller::new(config), sim, state),
            p_r,
        )
    }

    #[test]
    fn trocar_examples() {
        let scope = ScopeGeometry::new(Vec3::new(0.5, 0.0, 0.45), -Vec3::z(), 0.29).unwrap();
        let params = TrocarParams::default();
        let center = Vec3::new(0.5, 0.0, 0.25);
        let c = trocar_contact(&scope, &center, &params, &Vec3::zeros());
        assert_eq!(c.f_wall, Vec3::zeros());

        let off = center + Vec3::new(0.01, 0.0, 0.0);
        let c = trocar_contact(&scope, &off, &params, &Vec3::zeros());
        assert_relative_eq!(c.f_wall, Vec3::new(10.0, 0.0, 0.0), epsilon = 1e-9);
        assert!(c.f_wall.dot(&scope.d_z).abs() < 1e-12);
        assert_relative_eq!(
            c.wrench_at_ee.moment,
            (c.point - scope.p_e).cross(&c.f_wall),
            epsilon = 1e-12
        );

        let c = trocar_contact(&scope, &off, &params, &Vec3::new(0.1, 0.0, 5.0));
        assert_relative_eq!(c.f_wall, Vec3::new(9.0, 0.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn vision_period_matches_frame_rate() {
        assert_eq!(SimConfig::default().vision_period(), 40);
        assert_eq!(
            SimConfig {
                dt: 2e-3,
                ..Default::default()
            }
            .vision_period(),
            20
        );
        assert_eq!(
            SimConfig {
                dt: 0.1,
                ..Default::default()
            }
            .vision_period(),
            1
        );
    }

    #[test]
    fn residual_recovers_wall_force() {
        let (mut sim, p_r) = home_sim(
            ControllerConfig {
                adapt: false,
                ..Default::default()
            },
            SimConfig::default(),
        );
        let mut inputs = ExogenousInputs::quiet(p_r + Vec3::new(0.01, -0.004, 0.0));
        inputs.handle_wrench = Wrench::new(Vec3::new(0.1, 0.2, 0.05), Vec3::new(3.0, -2.0, 1.0));
        let rec = sim.step(&inputs).unwrap();
        assert!((rec.control.residual + rec.contact.f_wall).norm() < 1e-10);
        assert!(rec.contact.f_wall.norm() > 5.0);
    }

    #[test]
    fn quiescent_state_stays_at_rest() {
        let (mut sim, p_r) = home_sim(ControllerConfig::default(), SimConfig::default());
        let inputs = ExogenousInputs::quiet(p_r);
        for _ in 0..1000 {
            let rec = sim.step(&inputs).unwrap();
            assert!(rec.control.residual.norm() < 1e-12);
        }
        assert!(sim.state.joints.velocities.norm() < 1e-6);
        assert!((sim.state.rcm.p_r - p_r).norm() < 1e-12);
    }

    #[test]
    fn detections_refresh_on_frame_ticks_and_reproject() {
        let (mut sim, p_r) = home_sim(ControllerConfig::default(), SimConfig::default());
        let model = sim.model.clone();
        let pose = model.forward_kinematics(model.home()).unwrap();
        let camera = sim.controller.config.geometry.camera_pose(&pose, 0.29);
        let target = camera.transform_point(&Vec3::new(0.0395, 0.0, 0.2));
        let mut inputs = ExogenousInputs::quiet(p_r);
        inputs.instruments = vec![
            Some(target),
            Some(camera.transform_point(&Vec3::new(0.0, 0.0, -0.1))),
        ];
        let mut last = None;
        for k in 0..120u64 {
            let rec = sim.step(&inputs).unwrap();
            assert!(rec.detections[1].is_none());
            let det = rec.detections[0].unwrap();
            if k == 0 {
                assert_relative_eq!(det.u - 312.22, 506.57 * 0.0395 / 0.2, epsilon = 1e-9);
            }
            if k % 40 != 0 {
                assert_eq!(Some(det), last);
            }
            let local = rec.vision_camera.inverse_transform_point(&target);
            let again = sim.controller.config.intrinsics.project(&local).unwrap();
            assert_eq!(again, det);
            last = Some(det);
        }
    }

    #[test]
    fn identical_seeds_replay_bit_for_bit() {
        let noise = NoiseConfig {
            handle_force: 0.5,
            estimate_force: 0.5,
            pixel: 1.0,
            ..Default::default()
        };
        let run = || {
            let (mut sim, p_r) = home_sim(
                ControllerConfig::default(),
                SimConfig {
                    noise,
                    ..Default::default()
                },
            );
            let mut inputs = ExogenousInputs::quiet(p_r + Vec3::new(0.005, 0.0, 0.0));
            inputs.handle_wrench = Wrench::from_force(Vec3::new(2.0, 0.0, 0.0));
            inputs.tactile = TactileFrame::uniform(10, 200);
            (0..300)
                .map(|_| sim.step(&inputs).unwrap().control.tau)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}

//! Torque-level task-priority fusion.
//!
//! The RCM task acts through `J_Rᵀ F_r`. Handle, vision and viscous wrenches
//! are summed about the shaft point `p_G`, mapped through `J_Gᵀ`, and filtered
//! by the dynamically consistent null-space projector of the RCM task.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{
    adapt_rcm, lateral_residual, map_residual, residual_force, AdaptationParams, Nonlinearity,
    RcmState,
};
use crate::manipulator::{ChainKinematics, JointState, ManipulatorModel, ModelError};
use crate::rcm::{lateral_basis, rcm_jacobian_from, shaft_point_jacobian, ScopeGeometry};
use crate::spatial::{shift_wrench, Pose, Twist, Vec3, Wrench};
use crate::wrenches::{
    grip_gain, interaction_wrench, pixel_offset_distance, rcm_constraint_wrench, virtual_wrench,
    viscous_wrench, CameraIntrinsics, Detection, GainSchedule, TactileFrame,
};

/// Threshold on the smallest eigenvalue of `J M⁻¹ Jᵀ`.
pub const SINGULAR_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("singular task configuration: smallest eigenvalue of J M⁻¹ Jᵀ is {0:.3e}")]
    Singular(f64),
    #[error("mass matrix is not positive definite")]
    MassNotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mass-weighted pseudo-inverse of a task Jacobian and its null-space projector.
#[derive(Clone, Debug)]
pub struct ProjectorBundle {
    /// `M⁻¹Jᵀ(J M⁻¹ Jᵀ)⁻¹`, n×k.
    pub pinv: DMatrix<f64>,
    /// `I − J⁺J`, n×n.
    pub null: DMatrix<f64>,
}

/// Dynamically consistent projector for a k×n task Jacobian `j` of full row rank.
pub fn null_space_projector(
    j: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<ProjectorBundle, ControlError> {
    let n = m.nrows();
    if m.ncols() != n || j.ncols() != n {
        return Err(ControlError::Dimension(format!(
            "J is {}×{}, M is {}×{}",
            j.nrows(),
            j.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or(ControlError::MassNotPositiveDefinite)?;
    let minv_jt = chol.solve(&j.transpose());
    let lambda_inv = j * &minv_jt;
    let lambda_inv = (&lambda_inv + lambda_inv.transpose()) * 0.5;
    let smallest = lambda_inv.symmetric_eigenvalues().min();
    if !(smallest > SINGULAR_THRESHOLD) {
        return Err(ControlError::Singular(smallest));
    }
    let lambda = lambda_inv
        .cholesky()
        .ok_or(ControlError::Singular(smallest))?
        .inverse();
    let pinv = minv_jt * lambda;
    let null = DMatrix::identity(n, n) - &pinv * j;
    Ok(ProjectorBundle { pinv, null })
}

/// Sum of handle, vision and viscous wrenches re-expressed about `p_G`.
pub fn assemble_null_wrench(
    w_h: &Wrench,
    w_c: &Wrench,
    w_f: &Wrench,
    p_h: &Vec3,
    p_c: &Vec3,
    p_g: &Vec3,
) -> Wrench {
    shift_wrench(w_h, p_h, p_g) + shift_wrench(w_c, p_c, p_g) + *w_f
}

/// Which cue dominates the null-space input at one tick. Diagnostic only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No handle input and no instrument in view.
    Idle,
    /// Instruments in view, no handle input.
    TrackingOnly,
    /// Handle input no larger than the tracking wrench.
    HandleAndTracking,
    /// Handle wrench exceeds the tracking wrench.
    HandleDominant,
}

impl Mode {
    pub fn classify(w_h: &Wrench, w_c: &Wrench, n_s: usize) -> Self {
        let h = w_h.norm();
        if h == 0.0 {
            if n_s == 0 {
                Mode::Idle
            } else {
                Mode::TrackingOnly
            }
        } else if h <= w_c.norm() {
            Mode::HandleAndTracking
        } else {
            Mode::HandleDominant
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::TrackingOnly => "tracking_only",
            Mode::HandleAndTracking => "handle_and_tracking",
            Mode::HandleDominant => "handle_dominant",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [
            Mode::Idle,
            Mode::TrackingOnly,
            Mode::HandleAndTracking,
            Mode::HandleDominant,
        ]
        .into_iter()
        .find(|m| m.label() == s)
    }
}

/// `τ = J_Rᵀ F_r + N_Rᵀ J_Gᵀ W_n (+ g)`, with the projector built from `j_task`.
///
/// `j_task` is the RCM Jacobian itself or its rows in the plane orthogonal to
/// the shaft (see [`lateral_task_jacobian`]).
#[allow(clippy::too_many_arguments)]
pub fn compose_torque(
    j_r: &DMatrix<f64>,
    j_task: &DMatrix<f64>,
    j_g: &DMatrix<f64>,
    mass: &DMatrix<f64>,
    f_r: &Vec3,
    w_n: &Wrench,
    bias: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, ProjectorBundle), ControlError> {
    let proj = null_space_projector(j_task, mass)?;
    let f_r = DVector::from_column_slice(f_r.as_slice());
    let w_n = DVector::from_column_slice(&w_n.as_array());
    let mut tau = j_r.transpose() * f_r + proj.null.transpose() * (j_g.transpose() * w_n);
    if let Some(b) = bias {
        tau += b;
    }
    Ok((tau, proj))
}

/// Rows of `J_R` along an orthonormal basis of the plane orthogonal to `d_z`.
///
/// The along-shaft row of `J_R` vanishes whenever the shaft passes through
/// `p_R`, so the 3-row matrix is rank deficient exactly where the task is met.
pub fn lateral_task_jacobian(j_r: &DMatrix<f64>, d_z: &Vec3) -> DMatrix<f64> {
    let (b1, b2) = lateral_basis(d_z);
    let mut out = DMatrix::zeros(2, j_r.ncols());
    for c in 0..j_r.ncols() {
        let col = Vec3::new(j_r[(0, c)], j_r[(1, c)], j_r[(2, c)]);
        out[(0, c)] = b1.dot(&col);
        out[(1, c)] = b2.dot(&col);
    }
    out
}

/// Control torque for given task force `F_r` and null-space wrench `W_n` about `p_G`.
pub fn control_torque(
    model: &ManipulatorModel,
    state: &JointState,
    p_r: &Vec3,
    f_r: &Vec3,
    w_n: &Wrench,
    gravity_comp: bool,
) -> Result<(DVector<f64>, ProjectorBundle), ControlError> {
    model.check_dim(&state.velocities)?;
    let kin = model.kinematics(&state.positions)?;
    let scope = ScopeGeometry::of_chain(model, &kin);
    let j_r = rcm_jacobian_from(&kin, p_r);
    let j_g = shaft_point_jacobian(&kin, &scope.closest_point(p_r).o_g);
    let terms = model.dynamics_terms_with(&kin, &state.velocities);
    let j_task = lateral_task_jacobian(&j_r, &scope.d_z);
    compose_torque(
        &j_r,
        &j_task,
        &j_g,
        &terms.mass,
        f_r,
        w_n,
        gravity_comp.then_some(&terms.gravity),
    )
}

/// Placement of the handle and camera frames relative to `{E}`.
///
/// Both frames share the orientation of `{E}`. Offsets are in `{E}` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolGeometry {
    #[serde(default)]
    pub handle_offset: [f64; 3],
    /// `None` places the camera at the scope tip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_offset: Option<[f64; 3]>,
}

impl Default for ToolGeometry {
    fn default() -> Self {
        Self {
            handle_offset: [0.0; 3],
            camera_offset: None,
        }
    }
}

impl ToolGeometry {
    pub fn handle_pose(&self, ee: &Pose) -> Pose {
        Pose::new(
            ee.rotation,
            ee.transform_point(&Vec3::from(self.handle_offset)),
        )
    }

    pub fn camera_pose(&self, ee: &Pose, scope_length: f64) -> Pose {
        let offset = self
            .camera_offset
            .map(Vec3::from)
            .unwrap_or_else(|| Vec3::new(0.0, 0.0, scope_length));
        Pose::new(ee.rotation, ee.transform_point(&offset))
    }
}

/// Everything the control law needs besides the robot state.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub gains: GainSchedule,
    pub adaptation: AdaptationParams,
    pub intrinsics: CameraIntrinsics,
    pub geometry: ToolGeometry,
    pub shape: Nonlinearity,
    pub adapt: bool,
    pub tracking: bool,
    pub gravity_comp: bool,
    pub coriolis_comp: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: GainSchedule::default(),
            adaptation: AdaptationParams::default(),
            intrinsics: CameraIntrinsics::default(),
            geometry: ToolGeometry::default(),
            shape: Nonlinearity::Verbatim,
            adapt: true,
            tracking: true,
            gravity_comp: true,
            coriolis_comp: false,
        }
    }
}

/// One control tick's measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorBundle {
    /// Handle F/T reading in handle-frame coordinates, about the handle origin.
    pub w_s: Wrench,
    pub tactile: TactileFrame,
    pub detections: Vec<Detection>,
    /// Robot-estimated external wrench, base frame, about `p_E`.
    pub w_m: Wrench,
}

impl SensorBundle {
    pub fn quiet() -> Self {
        Self {
            w_s: Wrench::zero(),
            tactile: TactileFrame::untouched(),
            detections: Vec::new(),
            w_m: Wrench::zero(),
        }
    }
}

/// Torque and diagnostics of one tick.
#[derive(Clone, Debug)]
pub struct ControlOutput {
    pub tau: DVector<f64>,
    pub f_r: Vec3,
    pub w_r: Wrench,
    pub w_h: Wrench,
    pub w_c: Wrench,
    pub w_f: Wrench,
    pub w_n: Wrench,
    pub e_r: Vec3,
    pub e_r_dot: Vec3,
    pub delta: f64,
    /// Raw residual `F_s − F_m` in base coordinates.
    pub residual: Vec3,
    pub p_g: Vec3,
    pub pixel_distances: Vec<f64>,
    pub mode: Mode,
    /// `∂τ/∂θ̇` of the damping terms, used by the plant's implicit update.
    pub velocity_gain: DMatrix<f64>,
}

/// Stateless control law; the RCM state is owned by the caller.
#[derive(Clone, Debug, Default)]
pub struct Controller {
    pub config: ControllerConfig,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Self {
        Self { config }
    }

    /// Adapts `rcm` from the residual force, then computes the control torque.
    pub fn tick(
        &self,
        model: &ManipulatorModel,
        kin: &ChainKinematics,
        state: &JointState,
        rcm: &mut RcmState,
        sensors: &SensorBundle,
        dt: f64,
    ) -> Result<ControlOutput, ControlError> {
        let cfg = &self.config;
        let g = &cfg.gains;
        let scope = ScopeGeometry::of_chain(model, kin);
        let ee = &kin.end_effector;
        let handle = cfg.geometry.handle_pose(ee);
        let camera = cfg.geometry.camera_pose(ee, model.scope_length());

        let residual = residual_force(&(handle.rotation * sensors.w_s.force), &sensors.w_m.force);
        if cfg.adapt {
            let mapped = map_residual(&residual, &cfg.adaptation, cfg.shape);
            let f_perp = lateral_residual(&mapped, &scope.projector);
            *rcm = adapt_rcm(rcm, &f_perp, &cfg.adaptation, dt);
        }
        let p_r = rcm.p_r;

        let delta = grip_gain(&sensors.tactile, g.k_min, g.k_h);
        let w_h = interaction_wrench(&sensors.w_s, delta, &handle.rotation);
        let (w_c, pixel_distances) = if cfg.tracking {
            (
                virtual_wrench(
                    &sensors.detections,
                    &cfg.intrinsics,
                    &camera.rotation,
                    g,
                    cfg.shape,
                ),
                sensors
                    .detections
                    .iter()
                    .map(|d| pixel_offset_distance(d, &cfg.intrinsics))
                    .collect(),
            )
        } else {
            (Wrench::zero(), Vec::new())
        };
        let n_s = pixel_distances.len();

        let j_r = rcm_jacobian_from(kin, &p_r);
        let qd = &state.velocities;
        let e_r = scope.error(&p_r);
        let e_dot = &j_r * qd;
        let e_r_dot = Vec3::new(e_dot[0], e_dot[1], e_dot[2]);
        let (f_r, w_r) = rcm_constraint_wrench(&e_r, &e_r_dot, &g.kp, &g.kd);

        let cp = scope.closest_point(&p_r);
        let j_g = shaft_point_jacobian(kin, &cp.o_g);
        let v_g = &j_g * qd;
        let twist_g = Twist::new(
            Vec3::new(v_g[0], v_g[1], v_g[2]),
            Vec3::new(v_g[3], v_g[4], v_g[5]),
        );
        let w_f = viscous_wrench(&twist_g, g.k_t, g.k_f);
        let w_n = assemble_null_wrench(
            &w_h,
            &w_c,
            &w_f,
            &handle.position,
            &camera.position,
            &cp.p_g,
        );

        let terms = model.dynamics_terms_with(kin, qd);
        let bias = match (cfg.gravity_comp, cfg.coriolis_comp) {
            (true, true) => Some(&terms.gravity + &terms.coriolis),
            (true, false) => Some(terms.gravity.clone()),
            (false, true) => Some(terms.coriolis.clone()),
            (false, false) => None,
        };
        let j_task = lateral_task_jacobian(&j_r, &scope.d_z);
        let (tau, proj) =
            compose_torque(&j_r, &j_task, &j_g, &terms.mass, &f_r, &w_n, bias.as_ref())?;

        // Damping terms: −J_Rᵀ Kd J_R θ̇ and −N_Rᵀ J_Gᵀ diag(k_t, k_f) J_G θ̇.
        let kd = DMatrix::from_fn(3, 3, |r, c| g.kd[(r, c)]);
        let mut k_g = j_g.clone();
        k_g.rows_mut(0, 3).scale_mut(g.k_t);
        k_g.rows_mut(3, 3).scale_mut(g.k_f);
        let velocity_gain =
            -(j_r.transpose() * kd * &j_r) - proj.null.transpose() * (j_g.transpose() * k_g);

        Ok(ControlOutput {
            tau,
            f_r,
            w_r,
            w_h,
            w_c,
            w_f,
            w_n,
            e_r,
            e_r_dot,
            delta,
            residual,
            p_g: cp.p_g,
            mode: Mode::classify(&w_h, &w_c, n_s),
            pixel_distances,
            velocity_gain,
        })
    }
}

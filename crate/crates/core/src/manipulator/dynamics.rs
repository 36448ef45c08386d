use nalgebra::{DMatrix, DVector};

use super::{ChainKinematics, JointState, ManipulatorModel, ModelError};
use crate::spatial::{Vec3, Wrench};

/// Joint-space dynamic model `M(θ)θ̈ + c(θ, θ̇) + g(θ) = τ` at one state.
#[derive(Clone, Debug)]
pub struct DynamicsTerms {
    pub mass: DMatrix<f64>,
    /// Coriolis and centrifugal torques `C(θ, θ̇)θ̇`.
    pub coriolis: DVector<f64>,
    pub gravity: DVector<f64>,
}

impl ManipulatorModel {
    /// Recursive Newton-Euler inverse dynamics with base-frame recursion.
    ///
    /// Gravity enters as an upward acceleration of the base.
    pub(crate) fn rnea(
        &self,
        kin: &ChainKinematics,
        qd: &DVector<f64>,
        qdd: &DVector<f64>,
        gravity: &Vec3,
    ) -> DVector<f64> {
        let n = self.dof();
        let mut omega = Vec3::zeros();
        let mut alpha = Vec3::zeros();
        let mut accel = -gravity;
        let mut prev_origin = Vec3::zeros();

        let mut forces = Vec::with_capacity(n);
        let mut moments = Vec::with_capacity(n);
        let mut coms = Vec::with_capacity(n);

        for i in 0..n {
            let frame = &kin.joint_frames[i];
            let axis = kin.axes[i];
            let origin = frame.position;
            let lever = origin - prev_origin;
            accel += alpha.cross(&lever) + omega.cross(&omega.cross(&lever));

            let spin = axis * qd[i];
            alpha += axis * qdd[i] + omega.cross(&spin);
            omega += spin;

            let link = &self.joints[i].link;
            let com = frame.transform_point(&link.com);
            let r = com - origin;
            let accel_com = accel + alpha.cross(&r) + omega.cross(&omega.cross(&r));
            let rot = frame.rotation.matrix();
            let inertia = rot * link.inertia * rot.transpose();

            forces.push(accel_com * link.mass);
            moments.push(inertia * alpha + omega.cross(&(inertia * omega)));
            coms.push(com);
            prev_origin = origin;
        }

        let mut tau = DVector::zeros(n);
        let mut f_next = Vec3::zeros();
        let mut n_next = Vec3::zeros();
        let mut next_origin = Vec3::zeros();
        for i in (0..n).rev() {
            let origin = kin.joint_frames[i].position;
            let n_i = moments[i]
                + (coms[i] - origin).cross(&forces[i])
                + n_next
                + (next_origin - origin).cross(&f_next);
            f_next += forces[i];
            n_next = n_i;
            next_origin = origin;
            tau[i] = kin.axes[i].dot(&n_i);
        }
        tau
    }

    /// Joint torques realizing `qdd` at `(q, qd)` under the model's gravity.
    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        qdd: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        self.check_dim(qd)?;
        self.check_dim(qdd)?;
        let kin = self.kinematics(q)?;
        Ok(self.rnea(&kin, qd, qdd, &self.gravity))
    }

    /// Mass matrix, Coriolis torques and gravity torques at `state`.
    pub fn dynamics_terms(&self, state: &JointState) -> Result<DynamicsTerms, ModelError> {
        self.check_dim(&state.velocities)?;
        let kin = self.kinematics(&state.positions)?;
        Ok(self.dynamics_terms_with(&kin, &state.velocities))
    }

    pub(crate) fn dynamics_terms_with(
        &self,
        kin: &ChainKinematics,
        qd: &DVector<f64>,
    ) -> DynamicsTerms {
        let n = self.dof();
        let zero = DVector::zeros(n);
        let no_gravity = Vec3::zeros();
        let mut mass = DMatrix::zeros(n, n);
        let mut unit = DVector::zeros(n);
        for j in 0..n {
            unit[j] = 1.0;
            let col = self.rnea(kin, &zero, &unit, &no_gravity);
            mass.set_column(j, &col);
            unit[j] = 0.0;
        }
        // Symmetric by construction up to rounding.
        let mass = (&mass + mass.transpose()) * 0.5;
        let coriolis = if qd.iter().all(|&v| v == 0.0) {
            zero.clone()
        } else {
            self.rnea(kin, qd, &zero, &no_gravity)
        };
        let gravity = self.rnea(kin, &zero, &zero, &self.gravity);
        DynamicsTerms {
            mass,
            coriolis,
            gravity,
        }
    }

    /// Joint accelerations `M⁻¹(τ + J_Eᵀ w_ext − c − g)` with `w_ext` taken
    /// about the end-effector origin.
    pub fn forward_dynamics(
        &self,
        state: &JointState,
        tau: &DVector<f64>,
        w_ext: &Wrench,
    ) -> Result<DVector<f64>, ModelError> {
        self.check_dim(tau)?;
        self.check_dim(&state.velocities)?;
        let kin = self.kinematics(&state.positions)?;
        let terms = self.dynamics_terms_with(&kin, &state.velocities);
        let jac = kin.jacobian();
        let w = DVector::from_row_slice(&w_ext.as_array());
        let rhs = tau + jac.transpose() * w - &terms.coriolis - &terms.gravity;
        let chol = terms
            .mass
            .cholesky()
            .ok_or_else(|| ModelError::Invalid("mass matrix is not positive definite".into()))?;
        Ok(chol.solve(&rhs))
    }

    /// One semi-implicit Euler step: velocities first, then positions with
    /// the updated velocities.
    pub fn semi_implicit_step(
        &self,
        state: &JointState,
        tau: &DVector<f64>,
        dt: f64,
    ) -> Result<JointState, ModelError> {
        let qdd = self.forward_dynamics(state, tau, &Wrench::zero())?;
        let velocities = &state.velocities + qdd * dt;
        let positions = &state.positions + &velocities * dt;
        Ok(JointState {
            positions,
            velocities,
        })
    }

    /// Kinetic energy `½ θ̇ᵀ M θ̇`.
    pub fn kinetic_energy(&self, state: &JointState) -> Result<f64, ModelError> {
        let terms = self.dynamics_terms(state)?;
        Ok(0.5 * state.velocities.dot(&(&terms.mass * &state.velocities)))
    }

    /// Gravitational potential energy relative to the base origin.
    pub fn potential_energy(&self, q: &DVector<f64>) -> Result<f64, ModelError> {
        let kin = self.kinematics(q)?;
        Ok(self
            .joints
            .iter()
            .zip(&kin.joint_frames)
            .map(|(j, frame)| -j.link.mass * self.gravity.dot(&frame.transform_point(&j.link.com)))
            .sum())
    }
}

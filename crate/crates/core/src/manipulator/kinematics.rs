use nalgebra::{DMatrix, DVector, Unit};

use super::{ManipulatorModel, ModelError};
use crate::spatial::{Pose, Rotation, Twist, Vec3};

/// World-frame geometry of a chain at one configuration.
#[derive(Clone, Debug)]
pub struct ChainKinematics {
    /// Pose of each joint frame after applying its joint rotation.
    pub joint_frames: Vec<Pose>,
    /// Joint axes in base coordinates.
    pub axes: Vec<Vec3>,
    /// End-effector frame `{E}`.
    pub end_effector: Pose,
}

impl ChainKinematics {
    pub fn dof(&self) -> usize {
        self.axes.len()
    }

    /// Geometric Jacobian of the body point `point` (6×n, angular rows first).
    pub fn point_jacobian(&self, point: &Vec3) -> DMatrix<f64> {
        let n = self.dof();
        let mut jac = DMatrix::zeros(6, n);
        for (i, (axis, frame)) in self.axes.iter().zip(&self.joint_frames).enumerate() {
            let lin = axis.cross(&(point - frame.position));
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(axis);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&lin);
        }
        jac
    }

    /// Geometric Jacobian at the end-effector origin.
    pub fn jacobian(&self) -> DMatrix<f64> {
        self.point_jacobian(&self.end_effector.position)
    }

    /// Twist of the end-effector frame for joint velocities `qd`.
    pub fn end_effector_twist(&self, qd: &DVector<f64>) -> Twist {
        let v = self.jacobian() * qd;
        Twist::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]))
    }
}

impl ManipulatorModel {
    pub fn kinematics(&self, q: &DVector<f64>) -> Result<ChainKinematics, ModelError> {
        self.check_dim(q)?;
        let mut frames = Vec::with_capacity(self.dof());
        let mut axes = Vec::with_capacity(self.dof());
        let mut current = Pose::identity();
        for (joint, &angle) in self.joints.iter().zip(q.iter()) {
            let at_joint = current.compose(&joint.origin);
            let spin = Rotation::from_axis_angle(&Unit::new_unchecked(joint.axis), angle);
            current = Pose::new(at_joint.rotation * spin, at_joint.position);
            axes.push(current.rotation * joint.axis);
            frames.push(current);
        }
        let end_effector = current.compose(&self.tool);
        Ok(ChainKinematics {
            joint_frames: frames,
            axes,
            end_effector,
        })
    }

    /// End-effector pose `(R_E, p_E)` in the base frame.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Result<Pose, ModelError> {
        Ok(self.kinematics(q)?.end_effector)
    }

    /// Geometric Jacobian at the end-effector origin (6×n, angular rows first).
    pub fn geometric_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        Ok(self.kinematics(q)?.jacobian())
    }
}

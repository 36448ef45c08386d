//! Serial-chain kinematics and rigid-body dynamics.
//!
//! A chain is a list of revolute joints. Each joint carries a fixed transform
//! from its parent frame, a unit rotation axis expressed in the joint frame,
//! and the inertial data of the link that rotates with it. A fixed tool
//! transform after the last joint places the end-effector frame `{E}`, the
//! point where the laparoscope is mounted.

mod config;
mod dynamics;
mod kinematics;

pub use config::{FrameConfig, JointConfig, ModelConfig};
pub use dynamics::DynamicsTerms;
pub use kinematics::ChainKinematics;

use nalgebra::DVector;
use thiserror::Error;

use crate::spatial::{Mat3, Pose, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint {index}: {reason}")]
    InvalidJoint { index: usize, reason: String },
    #[error("model needs at least {required} joints for this use, has {actual}")]
    TooFewJoints { required: usize, actual: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Mass properties of one link, expressed in the frame of the joint driving it.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkInertia {
    pub mass: f64,
    /// Center of mass, m.
    pub com: Vec3,
    /// Rotational inertia about the center of mass, kg·m².
    pub inertia: Mat3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    /// Parent frame to joint frame at zero joint angle.
    pub origin: Pose,
    /// Unit rotation axis in the joint frame.
    pub axis: Vec3,
    pub link: LinkInertia,
}

/// Immutable description of a revolute serial chain carrying a laparoscope.
#[derive(Clone, Debug, PartialEq)]
pub struct ManipulatorModel {
    name: String,
    joints: Vec<Joint>,
    tool: Pose,
    gravity: Vec3,
    scope_length: f64,
    home: DVector<f64>,
}

/// Minimum joint count for RCM-constrained use: the lateral RCM task takes
/// up to three rows and the scope keeps four admissible motions.
pub const MIN_RCM_JOINTS: usize = 4;

impl ManipulatorModel {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<Joint>,
        tool: Pose,
        gravity: Vec3,
        scope_length: f64,
        home: Option<DVector<f64>>,
    ) -> Result<Self, ModelError> {
        if joints.is_empty() {
            return Err(ModelError::TooFewJoints {
                required: 1,
                actual: 0,
            });
        }
        for (index, j) in joints.iter().enumerate() {
            let bad = |reason: &str| ModelError::InvalidJoint {
                index,
                reason: reason.to_string(),
            };
            if !((j.axis.norm() - 1.0).abs() < 1e-9) {
                return Err(bad("axis must be a unit vector"));
            }
            if !(j.link.mass > 0.0 && j.link.mass.is_finite()) {
                return Err(bad("mass must be positive"));
            }
            let inertia = &j.link.inertia;
            if (inertia - inertia.transpose()).norm() > 1e-12 {
                return Err(bad("inertia must be symmetric"));
            }
            // Point masses (zero rotational inertia) are allowed.
            if inertia.symmetric_eigenvalues().iter().any(|&l| l < -1e-12) {
                return Err(bad("inertia must be positive semi-definite"));
            }
            if !j.link.com.iter().all(|x| x.is_finite()) {
                return Err(bad("center of mass must be finite"));
            }
        }
        if !(scope_length > 0.0 && scope_length.is_finite()) {
            return Err(ModelError::Invalid("scope length must be positive".into()));
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(ModelError::Invalid("gravity must be finite".into()));
        }
        let n = joints.len();
        let home = home.unwrap_or_else(|| DVector::zeros(n));
        if home.len() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                got: home.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            joints,
            tool,
            gravity,
            scope_length,
            home,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn tool(&self) -> &Pose {
        &self.tool
    }

    pub fn gravity(&self) -> Vec3 {
        self.gravity
    }

    pub fn scope_length(&self) -> f64 {
        self.scope_length
    }

    /// Nominal starting configuration.
    pub fn home(&self) -> &DVector<f64> {
        &self.home
    }

    pub fn with_gravity(mut self, gravity: Vec3) -> Self {
        self.gravity = gravity;
        self
    }

    /// Checks the joint count needed to hold an RCM constraint.
    pub fn ensure_rcm_capable(&self) -> Result<(), ModelError> {
        if self.dof() < MIN_RCM_JOINTS {
            return Err(ModelError::TooFewJoints {
                required: MIN_RCM_JOINTS,
                actual: self.dof(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_dim(&self, v: &DVector<f64>) -> Result<(), ModelError> {
        if v.len() != self.dof() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dof(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Generic 7R tabletop arm (z-y-z-y-z-y-z) holding a 0.29 m laparoscope.
    ///
    /// Link lengths follow the usual shoulder/elbow/wrist layout (0.34 m to the
    /// shoulder, two 0.40 m segments, 0.13 m wrist to flange). Link inertias
    /// approximate solid cylinders. The last link lumps the flange, handle and
    /// scope (0.6 kg). The home pose points the scope straight down with the
    /// flange at (0.5, 0, 0.45) m.
    pub fn default_seven() -> Self {
        ModelConfig::default_seven()
            .build()
            .expect("built-in model is valid")
    }

    /// Two-link planar arm: revolute z joints, 1 m links along x, unit point
    /// masses at the link tips, gravity along -y.
    pub fn planar_two_link() -> Self {
        ModelConfig::planar_two_link()
            .build()
            .expect("built-in model is valid")
    }

    /// Single revolute z joint with a 1 kg point mass at 1 m along x and
    /// gravity (0, -9.81, 0).
    pub fn point_pendulum() -> Self {
        ModelConfig::point_pendulum()
            .build()
            .expect("built-in model is valid")
    }
}

/// Joint positions and velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub positions: DVector<f64>,
    pub velocities: DVector<f64>,
}

impl JointState {
    pub fn new(positions: DVector<f64>, velocities: DVector<f64>) -> Result<Self, ModelError> {
        if positions.len() != velocities.len() {
            return Err(ModelError::DimensionMismatch {
                expected: positions.len(),
                got: velocities.len(),
            });
        }
        Ok(Self {
            positions,
            velocities,
        })
    }

    pub fn at_rest(positions: DVector<f64>) -> Self {
        let n = positions.len();
        Self {
            positions,
            velocities: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.positions.len()
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(self.velocities.iter())
            .all(|x| x.is_finite())
    }
}

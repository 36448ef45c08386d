//! Geometric vocabulary shared by the rest of the crate.
//!
//! Convention: every 6-vector stacks the rotational part above the
//! translational part. A [`Wrench`] is `[moment; force]` and a [`Twist`] is
//! `[angular; linear]`. All coordinates are base-frame coordinates; the
//! reference point of a wrench or twist is not stored and must be tracked by
//! the caller (the shift functions below make the re-referencing explicit).

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Rotation = Rotation3<f64>;

/// Cross-product matrix: `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rigid transform `x ↦ rotation * x + position`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub position: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation::identity(),
            position: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, position: Vec3) -> Self {
        Self { rotation, position }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self {
            rotation: Rotation::identity(),
            position,
        }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            position: self.position + self.rotation * other.position,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.position
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.position)
    }
}

/// Generalized force `[moment (N·m); force (N)]` about an implicit point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wrench {
    pub moment: Vec3,
    pub force: Vec3,
}

impl Wrench {
    pub fn new(moment: Vec3, force: Vec3) -> Self {
        Self { moment, force }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_force(force: Vec3) -> Self {
        Self {
            moment: Vec3::zeros(),
            force,
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.moment.x,
            self.moment.y,
            self.moment.z,
            self.force.x,
            self.force.y,
            self.force.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            moment: Vec3::new(v[0], v[1], v[2]),
            force: Vec3::new(v[3], v[4], v[5]),
        }
    }

    /// Euclidean norm of the stacked 6-vector.
    pub fn norm(&self) -> f64 {
        (self.moment.norm_squared() + self.force.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.moment
            .iter()
            .chain(self.force.iter())
            .all(|x| x.is_finite())
    }

    /// Instantaneous power delivered to a twist taken about the same point.
    pub fn power(&self, twist: &Twist) -> f64 {
        self.moment.dot(&twist.angular) + self.force.dot(&twist.linear)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.moment.x,
            self.moment.y,
            self.moment.z,
            self.force.x,
            self.force.y,
            self.force.z,
        ]
    }
}

impl Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.moment + rhs.moment, self.force + rhs.force)
    }
}

impl AddAssign for Wrench {
    fn add_assign(&mut self, rhs: Wrench) {
        self.moment += rhs.moment;
        self.force += rhs.force;
    }
}

impl Sub for Wrench {
    type Output = Wrench;
    fn sub(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.moment - rhs.moment, self.force - rhs.force)
    }
}

impl Neg for Wrench {
    type Output = Wrench;
    fn neg(self) -> Wrench {
        Wrench::new(-self.moment, -self.force)
    }
}

impl Mul<f64> for Wrench {
    type Output = Wrench;
    fn mul(self, s: f64) -> Wrench {
        Wrench::new(self.moment * s, self.force * s)
    }
}

/// Rigid-body velocity `[angular (rad/s); linear (m/s)]` at an implicit point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub angular: Vec3,
    pub linear: Vec3,
}

impl Twist {
    pub fn new(angular: Vec3, linear: Vec3) -> Self {
        Self { angular, linear }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            angular: Vec3::new(v[0], v[1], v[2]),
            linear: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.angular
            .iter()
            .chain(self.linear.iter())
            .all(|x| x.is_finite())
    }
}

/// Re-express a wrench taken about `from` as the equivalent wrench about `to`.
///
/// The force is unchanged and the moment picks up `(from - to) × force`.
pub fn shift_wrench(w: &Wrench, from: &Vec3, to: &Vec3) -> Wrench {
    Wrench {
        moment: w.moment + (from - to).cross(&w.force),
        force: w.force,
    }
}

/// Velocity of the body point `to` given the twist of the same body at `from`.
pub fn shift_twist(t: &Twist, from: &Vec3, to: &Vec3) -> Twist {
    Twist {
        angular: t.angular,
        linear: t.linear + t.angular.cross(&(to - from)),
    }
}

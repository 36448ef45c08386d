//! Conversion of handle, vision and constraint cues into equivalent wrenches.

use serde::{Deserialize, Serialize};

use crate::adaptation::Nonlinearity;
use crate::spatial::{Mat3, Rotation, Twist, Vec3, Wrench};

pub const TACTILE_ELEMENTS: usize = 64;

/// One reading of the 64-element grip array; 0 means no contact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TactileFrame(pub [u8; TACTILE_ELEMENTS]);

impl TactileFrame {
    pub fn untouched() -> Self {
        Self([0; TACTILE_ELEMENTS])
    }

    /// The first `contacts` elements pressed to `level`.
    pub fn uniform(contacts: usize, level: u8) -> Self {
        let mut values = [0; TACTILE_ELEMENTS];
        for v in values.iter_mut().take(contacts.min(TACTILE_ELEMENTS)) {
            *v = level;
        }
        Self(values)
    }

    pub fn from_slice(values: &[u8]) -> Result<Self, String> {
        let arr: [u8; TACTILE_ELEMENTS] = values.try_into().map_err(|_| {
            format!(
                "tactile frame needs {TACTILE_ELEMENTS} elements, got {}",
                values.len()
            )
        })?;
        Ok(Self(arr))
    }

    pub fn contact_count(&self) -> usize {
        self.0.iter().filter(|&&v| v > 0).count()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 506.57,
            fy: 506.72,
            u0: 312.22,
            v0: 243.39,
            width: 640.0,
            height: 480.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err("focal lengths must be positive".into());
        }
        let inside =
            (0.0..=self.width).contains(&self.u0) && (0.0..=self.height).contains(&self.v0);
        if !inside {
            return Err("principal point must lie inside the image".into());
        }
        Ok(())
    }

    /// Pinhole projection of a camera-frame point; `None` when it is behind the
    /// image plane or lands outside the image.
    pub fn project(&self, p_cam: &Vec3) -> Option<Detection> {
        if !(p_cam.z > 0.0) {
            return None;
        }
        let u = self.u0 + self.fx * p_cam.x / p_cam.z;
        let v = self.v0 + self.fy * p_cam.y / p_cam.z;
        let inside = (0.0..=self.width).contains(&u) && (0.0..=self.height).contains(&v);
        inside.then_some(Detection { u, v })
    }
}

/// Instrument center in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub u: f64,
    pub v: f64,
}

/// Gains shared by the wrench generators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainSchedule {
    pub k_h: f64,
    pub k_min: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub f_max: f64,
    pub kp: Mat3,
    pub kd: Mat3,
    /// Rotational viscosity, N·m·s.
    pub k_t: f64,
    /// Translational viscosity, N·s/m.
    pub k_f: f64,
}

impl Default for GainSchedule {
    fn default() -> Self {
        Self {
            k_h: 2000.0,
            k_min: 3,
            eps1: 50.0,
            eps2: 200.0,
            f_max: 10.0,
            kp: Mat3::identity() * 300.0,
            kd: Mat3::identity() * 20.0,
            k_t: 150.0,
            k_f: 2.0,
        }
    }
}

fn is_spd(m: &Mat3) -> bool {
    (m - m.transpose()).norm() <= 1e-12 * m.norm().max(1.0) && m.cholesky().is_some()
}

impl GainSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k_h > 0.0) {
            return Err("k_h must be > 0".into());
        }
        if !(0.0 <= self.eps1 && self.eps1 < self.eps2) {
            return Err("0 ≤ eps1 < eps2 required".into());
        }
        if !(self.f_max > 0.0) {
            return Err("f_max must be > 0".into());
        }
        if !is_spd(&self.kp) || !is_spd(&self.kd) {
            return Err("kp and kd must be positive definite".into());
        }
        if !(self.k_t > 0.0 && self.k_f > 0.0) {
            return Err("k_t and k_f must be > 0".into());
        }
        Ok(())
    }
}

/// Grip scale δ: zero unless more than `k_min` elements are in contact.
pub fn grip_gain(frame: &TactileFrame, k_min: usize, k_h: f64) -> f64 {
    if frame.contact_count() <= k_min {
        0.0
    } else {
        frame.total() / k_h
    }
}

/// Handle wrench in the base frame, about the handle origin. Keeps the three
/// force components and the torque about the handle z axis, scaled by δ.
pub fn interaction_wrench(w_s: &Wrench, delta: f64, r_h: &Rotation) -> Wrench {
    let z_h = r_h * Vec3::z();
    Wrench::new(z_h * (delta * w_s.moment.z), r_h * (w_s.force * delta))
}

pub fn pixel_offset_distance(det: &Detection, intr: &CameraIntrinsics) -> f64 {
    (det.u - intr.u0).hypot(det.v - intr.v0)
}

/// Attraction magnitude versus pixel distance.
pub fn fov_force_magnitude(d: f64, eps1: f64, eps2: f64, f_max: f64, shape: Nonlinearity) -> f64 {
    shape.shaped(d, eps1, eps2, f_max)
}

/// Unit direction `((z_c × P') × P')/‖·‖` for the unit-depth ray `P'` through
/// the detection. `None` at the principal point, where it is undefined.
pub fn fov_attraction_direction(
    det: &Detection,
    intr: &CameraIntrinsics,
    r_c: &Rotation,
) -> Option<Vec3> {
    let a = (det.u - intr.u0) / intr.fx;
    let b = (det.v - intr.v0) / intr.fy;
    let m = r_c.matrix();
    let (x_c, y_c, z_c) = (
        m.column(0).into_owned(),
        m.column(1).into_owned(),
        m.column(2).into_owned(),
    );
    let ray = a * x_c + b * y_c + z_c;
    let v = z_c.cross(&ray).cross(&ray);
    let norm = v.norm();
    (norm > 1e-15).then(|| v / norm)
}

/// Tracking wrench about the camera origin: zero moment, summed attraction forces.
pub fn virtual_wrench(
    dets: &[Detection],
    intr: &CameraIntrinsics,
    r_c: &Rotation,
    gains: &GainSchedule,
    shape: Nonlinearity,
) -> Wrench {
    let force = dets
        .iter()
        .filter_map(|det| {
            let mag = fov_force_magnitude(
                pixel_offset_distance(det, intr),
                gains.eps1,
                gains.eps2,
                gains.f_max,
                shape,
            );
            fov_attraction_direction(det, intr, r_c).map(|dir| dir * mag)
        })
        .fold(Vec3::zeros(), |acc, f| acc + f);
    Wrench::from_force(force)
}

/// PD force `F_r = −Kp e_R − Kd ė_R` and its zero-moment wrench.
pub fn rcm_constraint_wrench(e_r: &Vec3, e_r_dot: &Vec3, kp: &Mat3, kd: &Mat3) -> (Vec3, Wrench) {
    let f = -(kp * e_r) - kd * e_r_dot;
    (f, Wrench::from_force(f))
}

pub fn viscous_wrench(twist: &Twist, k_t: f64, k_f: f64) -> Wrench {
    Wrench::new(-k_t * twist.angular, -k_f * twist.linear)
}

//! Geometry of the laparoscope shaft relative to the remote center of motion.
//!
//! The scope runs from the end-effector origin `p_E` along `d_z = R_E·ẑ` for a
//! length `L`. The RCM point `p_R` should stay on that line. Its lateral
//! deviation `e_R` is the constraint error regulated by the primary task.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::manipulator::{ChainKinematics, ManipulatorModel, ModelError};
use crate::spatial::{skew, Mat3, Rotation, Vec3};

/// Allowed deviation of `‖d_z‖` from one.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RcmError {
    #[error("scope axis must be a unit vector (norm {0})")]
    NonUnitAxis(f64),
    #[error("λ0 ∈ [0,1] required, got {0}")]
    LambdaOutOfRange(f64),
    #[error("scope length must be positive, got {0}")]
    InvalidLength(f64),
}

/// Scope axis `d_z`, lateral projector `P = I − d_z d_zᵀ`, mount point and length.
#[derive(Clone, Debug, PartialEq)]
pub struct ScopeGeometry {
    pub d_z: Vec3,
    pub projector: Mat3,
    pub p_e: Vec3,
    pub length: f64,
}

impl ScopeGeometry {
    pub fn new(p_e: Vec3, d_z: Vec3, length: f64) -> Result<Self, RcmError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(RcmError::InvalidLength(length));
        }
        Ok(Self {
            projector: lateral_projector(&d_z)?,
            d_z,
            p_e,
            length,
        })
    }

    /// Scope geometry of `model` at the configuration captured by `kin`.
    pub fn of_chain(model: &ManipulatorModel, kin: &ChainKinematics) -> Self {
        let pose = &kin.end_effector;
        let d_z = scope_axis(&pose.rotation);
        Self {
            projector: unchecked_projector(&d_z),
            d_z,
            p_e: pose.position,
            length: model.scope_length(),
        }
    }

    pub fn tip(&self) -> Vec3 {
        self.p_e + self.length * self.d_z
    }

    pub fn error(&self, p_r: &Vec3) -> Vec3 {
        self.projector * (p_r - self.p_e)
    }

    pub fn closest_point(&self, p_r: &Vec3) -> ClosestPoint {
        closest_point(&self.p_e, &self.d_z, p_r, self.length)
    }
}

pub fn scope_axis(r_e: &Rotation) -> Vec3 {
    r_e * Vec3::z()
}

fn unchecked_projector(d: &Vec3) -> Mat3 {
    Mat3::identity() - d * d.transpose()
}

pub fn lateral_projector(d_z: &Vec3) -> Result<Mat3, RcmError> {
    let norm = d_z.norm();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(RcmError::NonUnitAxis(norm));
    }
    Ok(unchecked_projector(d_z))
}

/// Orthonormal pair spanning the plane orthogonal to the unit vector `d`.
pub fn lateral_basis(d: &Vec3) -> (Vec3, Vec3) {
    // Cross with the coordinate axis least aligned with d.
    let helper = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
        Vec3::x()
    } else if d.y.abs() <= d.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let b1 = d.cross(&helper).normalize();
    let b2 = d.cross(&b1);
    (b1, b2)
}

/// Initial RCM point on the scope axis, `p_E + λ0·L·d_z`.
pub fn init_rcm_point(p_e: &Vec3, d_z: &Vec3, lambda0: f64, length: f64) -> Result<Vec3, RcmError> {
    if !(0.0..=1.0).contains(&lambda0) {
        return Err(RcmError::LambdaOutOfRange(lambda0));
    }
    Ok(p_e + lambda0 * length * d_z)
}

/// Lateral deviation `e_R = P·(p_R − p_E)` of the shaft line from `p_R`.
pub fn rcm_error(p_r: &Vec3, p_e: &Vec3, d_z: &Vec3) -> Vec3 {
    unchecked_projector(d_z) * (p_r - p_e)
}

/// `∂e_R/∂θ` at fixed `p_R` (3×n).
pub fn rcm_task_jacobian(
    model: &ManipulatorModel,
    q: &nalgebra::DVector<f64>,
    p_r: &Vec3,
) -> Result<DMatrix<f64>, ModelError> {
    Ok(rcm_jacobian_from(&model.kinematics(q)?, p_r))
}

/// Product rule on `e_R = P r`, `r = p_R − p_E`, with `ḋ_z = ω × d_z`:
/// `ė_R = ((d·r)[d]× − d (d×r)ᵀ) ω − P ṗ_E`.
pub fn rcm_jacobian_from(kin: &ChainKinematics, p_r: &Vec3) -> DMatrix<f64> {
    let d = scope_axis(&kin.end_effector.rotation);
    let r = p_r - kin.end_effector.position;
    let rot_map = d.dot(&r) * skew(&d) - d * d.cross(&r).transpose();
    let proj = unchecked_projector(&d);
    let jac = kin.jacobian();
    let n = kin.dof();
    let mut out = DMatrix::zeros(3, n);
    for c in 0..n {
        let w = Vec3::new(jac[(0, c)], jac[(1, c)], jac[(2, c)]);
        let v = Vec3::new(jac[(3, c)], jac[(4, c)], jac[(5, c)]);
        out.fixed_view_mut::<3, 1>(0, c)
            .copy_from(&(rot_map * w - proj * v));
    }
    out
}

/// Point on the scope segment nearest `p_R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestPoint {
    pub s_raw: f64,
    /// `s_raw` clamped to `[0, 1]`.
    pub s_star: f64,
    pub p_g: Vec3,
    /// Offset `p_G − p_E`.
    pub o_g: Vec3,
}

pub fn closest_point(p_e: &Vec3, d_z: &Vec3, p_r: &Vec3, length: f64) -> ClosestPoint {
    let s_raw = d_z.dot(&(p_r - p_e)) / length;
    let s_star = s_raw.clamp(0.0, 1.0);
    let o_g = s_star * length * d_z;
    ClosestPoint {
        s_raw,
        s_star,
        p_g: p_e + o_g,
        o_g,
    }
}

/// Jacobian of the shaft point `p_G` (6×n) with `s*` frozen at its current value.
pub fn closest_point_jacobian(
    model: &ManipulatorModel,
    q: &nalgebra::DVector<f64>,
    p_r: &Vec3,
) -> Result<DMatrix<f64>, ModelError> {
    let kin = model.kinematics(q)?;
    let cp = ScopeGeometry::of_chain(model, &kin).closest_point(p_r);
    Ok(shaft_point_jacobian(&kin, &cp.o_g))
}

/// `[J_ω; J_v − [o]× J_ω]` for the body point at offset `o` from `p_E`.
pub fn shaft_point_jacobian(kin: &ChainKinematics, offset: &Vec3) -> DMatrix<f64> {
    kin.point_jacobian(&(kin.end_effector.position + offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{rngs::StdRng, Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    fn random_q(rng: &mut StdRng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-2.5..2.5))
    }

    fn random_v3(rng: &mut StdRng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    fn random_unit(rng: &mut StdRng) -> Vec3 {
        loop {
            let v = random_v3(rng, 1.0);
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    fn column_rel_err(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
        (analytic - fd).norm() / fd.norm().max(1e-12)
    }

    #[test]
    fn axis_examples() {
        assert_relative_eq!(scope_axis(&Rotation::identity()), Vec3::z());
        let r = Rotation::from_axis_angle(&Vec3::x_axis(), FRAC_PI_2);
        assert_relative_eq!(scope_axis(&r), Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn projector_examples() {
        let p = lateral_projector(&Vec3::z()).unwrap();
        assert_relative_eq!(p, Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0)));
        let d = Vec3::new(1.0, 0.0, 1.0) / 2f64.sqrt();
        let p = lateral_projector(&d).unwrap();
        assert_relative_eq!(p * Vec3::x(), Vec3::new(0.5, 0.0, -0.5), epsilon = 1e-15);
        assert!(matches!(
            lateral_projector(&Vec3::new(0.0, 0.0, 1.01)),
            Err(RcmError::NonUnitAxis(_))
        ));
        assert!(lateral_projector(&Vec3::new(0.0, 0.0, 1.0 + 5e-7)).is_ok());
    }

    #[test]
    fn projector_properties() {
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..200 {
            let d = random_unit(&mut rng);
            let p = lateral_projector(&d).unwrap();
            assert!((p - p.transpose()).norm() == 0.0);
            assert!((p * p - p).norm() < 1e-10);
            assert!((p * d).norm() < 1e-12);
            let (b1, b2) = lateral_basis(&d);
            assert!((b1.norm() - 1.0).abs() < 1e-12 && (b2.norm() - 1.0).abs() < 1e-12);
            assert!(
                b1.dot(&d).abs() < 1e-12 && b2.dot(&d).abs() < 1e-12 && b1.dot(&b2).abs() < 1e-12
            );
        }
    }

    #[test]
    fn init_examples() {
        let p_e = Vec3::new(0.4, 0.0, 0.6);
        let d = -Vec3::z();
        let p_r = init_rcm_point(&p_e, &d, 0.8, 0.29).unwrap();
        assert_relative_eq!(p_r, Vec3::new(0.4, 0.0, 0.368), epsilon = 1e-12);
        assert_eq!(init_rcm_point(&p_e, &d, 0.0, 0.29).unwrap(), p_e);
        assert_relative_eq!(init_rcm_point(&p_e, &d, 1.0, 0.29).unwrap(), p_e + 0.29 * d);
        assert_eq!(
            init_rcm_point(&p_e, &d, 1.5, 0.29),
            Err(RcmError::LambdaOutOfRange(1.5))
        );
        assert!(init_rcm_point(&p_e, &d, -0.1, 0.29).is_err());
    }

    #[test]
    fn error_examples() {
        let e = rcm_error(&Vec3::new(0.03, 0.04, 0.2), &Vec3::zeros(), &Vec3::z());
        assert_relative_eq!(e, Vec3::new(0.03, 0.04, 0.0), epsilon = 1e-15);
        assert_relative_eq!(e.norm(), 0.05, epsilon = 1e-15);
        let d = Vec3::new(1.0, 0.0, 1.0) / 2f64.sqrt();
        assert!(rcm_error(&(0.2 * d), &Vec3::zeros(), &d).norm() < 1e-15);
        let e = rcm_error(&Vec3::x(), &Vec3::zeros(), &d);
        assert_relative_eq!(e, Vec3::new(0.5, 0.0, -0.5), epsilon = 1e-15);
    }

    #[test]
    fn error_is_lateral() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..1000 {
            let d = random_unit(&mut rng);
            let e = rcm_error(&random_v3(&mut rng, 1.0), &random_v3(&mut rng, 1.0), &d);
            assert!(d.dot(&e).abs() < 1e-12);
        }
    }

    #[test]
    fn closest_point_examples() {
        let d = -Vec3::z();
        let p_e = Vec3::new(0.5, 0.0, 0.45);
        let cp = closest_point(&p_e, &d, &(p_e + 0.232 * d), 0.29);
        assert_relative_eq!(cp.s_raw, 0.8, epsilon = 1e-12);
        assert_relative_eq!(cp.s_star, 0.8, epsilon = 1e-12);
        assert_relative_eq!(cp.p_g, p_e + 0.232 * d, epsilon = 1e-12);

        let cp = closest_point(&p_e, &d, &(p_e + 0.35 * d), 0.29);
        assert_relative_eq!(cp.s_raw, 0.35 / 0.29, epsilon = 1e-12);
        assert_eq!(cp.s_star, 1.0);
        assert_relative_eq!(cp.p_g, p_e + 0.29 * d, epsilon = 1e-12);

        let cp = closest_point(&p_e, &d, &(p_e - 0.1 * d + Vec3::x() * 0.01), 0.29);
        assert!(cp.s_raw < 0.0);
        assert_eq!(cp.s_star, 0.0);
        assert_eq!(cp.p_g, p_e);
        assert_eq!(cp.o_g, Vec3::zeros());
    }

    #[test]
    fn closest_point_is_optimal_on_grid() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..1000 {
            let p_e = random_v3(&mut rng, 0.5);
            let d = random_unit(&mut rng);
            let len = rng.gen_range(0.05..0.5);
            let p_r = random_v3(&mut rng, 0.6);
            let cp = closest_point(&p_e, &d, &p_r, len);
            let best = (p_r - cp.p_g).norm();
            for k in 0..=1000 {
                let psi = k as f64 * 1e-3;
                let x = p_e + psi * len * d;
                assert!((p_r - x).norm() >= best - 1e-12);
            }
        }
    }

    /// Central differences of `f(θ)` (3-vector) over each joint.
    fn fd_jacobian(q: &DVector<f64>, f: impl Fn(&DVector<f64>) -> Vec3) -> DMatrix<f64> {
        let h = 1e-6;
        let mut out = DMatrix::zeros(3, q.len());
        for i in 0..q.len() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            out.set_column(i, &((f(&qp) - f(&qm)) / (2.0 * h)));
        }
        out
    }

    #[test]
    fn rcm_jacobian_matches_finite_differences() {
        let model = ManipulatorModel::default_seven();
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..100 {
            let q = random_q(&mut rng, 7);
            let p_r = random_v3(&mut rng, 0.8);
            let jr = rcm_task_jacobian(&model, &q, &p_r).unwrap();
            let fd = fd_jacobian(&q, |q| {
                let pose = model.forward_kinematics(q).unwrap();
                rcm_error(&p_r, &pose.position, &scope_axis(&pose.rotation))
            });
            assert!(column_rel_err(&jr, &fd) < 1e-4);
        }
    }

    #[test]
    fn rcm_jacobian_product_rule_identity() {
        let model = ManipulatorModel::default_seven();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..100 {
            let q = random_q(&mut rng, 7);
            let qd = random_q(&mut rng, 7);
            let p_r = random_v3(&mut rng, 0.8);
            let kin = model.kinematics(&q).unwrap();
            let twist = kin.end_effector_twist(&qd);
            let d = scope_axis(&kin.end_effector.rotation);
            let r = p_r - kin.end_effector.position;
            let d_dot = twist.angular.cross(&d);
            let expected = -(d_dot * d.transpose() + d * d_dot.transpose()) * r
                - unchecked_projector(&d) * twist.linear;
            let got = rcm_jacobian_from(&kin, &p_r) * &qd;
            assert!(
                (Vec3::new(got[0], got[1], got[2]) - expected).norm()
                    < 1e-12 * (1.0 + expected.norm())
            );
        }
    }

    #[test]
    fn rcm_jacobian_null_motion_keeps_error() {
        let model = ManipulatorModel::default_seven();
        let q = model.home().clone();
        let pose = model.forward_kinematics(&q).unwrap();
        let p_r = init_rcm_point(&pose.position, &scope_axis(&pose.rotation), 0.8, 0.29).unwrap();
        let jr = rcm_task_jacobian(&model, &q, &p_r).unwrap();
        let svd = jr.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        // Right singular vector of the smallest singular value (rank ≤ 2 on the axis).
        let k = (0..svd.singular_values.len())
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap();
        let qd = vt.row(k).transpose();
        assert!((&jr * qd).norm() < 1e-10);
    }

    #[test]
    fn rcm_jacobian_full_rank_at_generic_points() {
        let model = ManipulatorModel::default_seven();
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..100 {
            let q = random_q(&mut rng, 7);
            let p_r = random_v3(&mut rng, 0.8);
            let jr = rcm_task_jacobian(&model, &q, &p_r).unwrap();
            assert_eq!(jr.rank(1e-8), 3);
        }
    }

    #[test]
    fn closest_point_jacobian_cases() {
        let planar = ManipulatorModel::planar_two_link();
        let kin = planar.kinematics(&DVector::zeros(2)).unwrap();
        let jg = shaft_point_jacobian(&kin, &Vec3::x());
        assert_relative_eq!(jg[(4, 0)], 3.0, epsilon = 1e-12);
        assert_relative_eq!(jg[(3, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(jg[(5, 0)], 0.0, epsilon = 1e-12);

        let model = ManipulatorModel::default_seven();
        let q = model.home().clone();
        let pose = model.forward_kinematics(&q).unwrap();
        let behind = pose.position - 0.1 * scope_axis(&pose.rotation);
        let jg = closest_point_jacobian(&model, &q, &behind).unwrap();
        assert_eq!(jg, model.geometric_jacobian(&q).unwrap());
    }

    #[test]
    fn closest_point_jacobian_matches_finite_differences() {
        let model = ManipulatorModel::default_seven();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let q = random_q(&mut rng, 7);
            let pose = model.forward_kinematics(&q).unwrap();
            let d = scope_axis(&pose.rotation);
            let p_r =
                pose.position + rng.gen_range(-0.05..0.35) * d + 0.01 * random_v3(&mut rng, 1.0);
            let jg = closest_point_jacobian(&model, &q, &p_r).unwrap();
            let s = closest_point(&pose.position, &d, &p_r, 0.29).s_star;
            let fd = fd_jacobian(&q, |q| {
                let pose = model.forward_kinematics(q).unwrap();
                pose.position + s * 0.29 * scope_axis(&pose.rotation)
            });
            let jw = model
                .geometric_jacobian(&q)
                .unwrap()
                .rows(0, 3)
                .into_owned();
            assert_eq!(jg.rows(0, 3).into_owned(), jw);
            assert!(column_rel_err(&jg.rows(3, 3).into_owned(), &fd) < 1e-4);
        }
    }
}

//! Online drift of the RCM point driven by the residual trocar force.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::spatial::{Mat3, Vec3};

/// Shape of the dead-zone-saturation maps.
///
/// `Verbatim` jumps from 0 to half the ceiling at the dead-zone edge.
/// `Continuous` ramps from 0 to the ceiling over the transition band.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Verbatim,
    Continuous,
}

impl Nonlinearity {
    /// `(ceiling/2)(sin η + 1)` over `(lo, hi]`, zero below, `ceiling` above.
    pub fn shaped(self, x: f64, lo: f64, hi: f64, ceiling: f64) -> f64 {
        if x <= lo {
            return 0.0;
        }
        if x > hi {
            return ceiling;
        }
        let eta = (x - lo) * PI / (2.0 * (hi - lo));
        let eta = match self {
            Nonlinearity::Verbatim => eta,
            Nonlinearity::Continuous => 2.0 * eta - FRAC_PI_2,
        };
        0.5 * ceiling * (eta.sin() + 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationParams {
    /// Adaptation compliance, m/(N·s).
    pub alpha: f64,
    /// Leakage toward the reference point, 1/s.
    pub beta: f64,
    /// Rate below which the reference is re-anchored, m/s.
    pub epsilon: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub f_op: f64,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            alpha: 0.003,
            beta: 0.05,
            epsilon: 5e-4,
            gamma1: 5.0,
            gamma2: 15.0,
            f_op: 10.0,
        }
    }
}

impl AdaptationParams {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.alpha,
            self.beta,
            self.epsilon,
            self.gamma1,
            self.gamma2,
            self.f_op,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err("adaptation parameters must be finite".into());
        }
        if self.alpha < 0.0 {
            return Err("alpha must be ≥ 0".into());
        }
        if self.beta < 0.0 {
            return Err("beta must be ≥ 0".into());
        }
        if !(0.0 <= self.gamma1 && self.gamma1 < self.gamma2) {
            return Err("0 ≤ gamma1 < gamma2 required".into());
        }
        if self.f_op <= 0.0 {
            return Err("f_op must be > 0".into());
        }
        if self.epsilon <= 0.0 {
            return Err("epsilon must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RcmState {
    pub p_r: Vec3,
    /// Piecewise-constant anchor the leak pulls toward.
    pub p_r_ref: Vec3,
    pub last_rate: Vec3,
}

impl RcmState {
    pub fn new(p_r: Vec3) -> Self {
        Self {
            p_r,
            p_r_ref: p_r,
            last_rate: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p_r
            .iter()
            .chain(self.p_r_ref.iter())
            .all(|x| x.is_finite())
    }
}

/// Sensor force minus robot-estimated force, per axis.
pub fn residual_force(f_s: &Vec3, f_m: &Vec3) -> Vec3 {
    f_s - f_m
}

/// `sgn(x)·Φ(|x|)`.
pub fn deadzone_saturation(x: f64, params: &AdaptationParams, shape: Nonlinearity) -> f64 {
    let mag = shape.shaped(x.abs(), params.gamma1, params.gamma2, params.f_op);
    if x < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Applies [`deadzone_saturation`] to each component.
pub fn map_residual(delta: &Vec3, params: &AdaptationParams, shape: Nonlinearity) -> Vec3 {
    delta.map(|x| deadzone_saturation(x, params, shape))
}

/// Drops the along-shaft part of the mapped residual.
pub fn lateral_residual(f_re: &Vec3, projector: &Mat3) -> Vec3 {
    projector * f_re
}

/// One explicit Euler step of `ṗ_R = −α F⊥ − β (p_R − p_R*)`, re-anchoring
/// `p_R*` whenever the rate magnitude is at most ε.
pub fn adapt_rcm(state: &RcmState, f_perp: &Vec3, params: &AdaptationParams, dt: f64) -> RcmState {
    debug_assert!(dt > 0.0);
    let rate = -params.alpha * f_perp - params.beta * (state.p_r - state.p_r_ref);
    let p_r = state.p_r + dt * rate;
    let p_r_ref = if rate.norm() <= params.epsilon {
        p_r
    } else {
        state.p_r_ref
    };
    RcmState {
        p_r,
        p_r_ref,
        last_rate: rate,
    }
}

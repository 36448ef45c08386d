//! Summary statistics computed from a log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::log::LogRecord;
use crate::controller::Mode;
use crate::spatial::Vec3;

/// Target visual condition that ends a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Completion {
    /// The camera axis lies within `tolerance` rad of `direction` (base frame).
    AxisAngle { direction: [f64; 3], tolerance: f64 },
    /// At least one instrument is detected and every detection is within
    /// `max_distance` px of the principal point.
    Pixel { max_distance: f64 },
}

impl Completion {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Completion::AxisAngle {
                direction,
                tolerance,
            } => {
                if !(Vec3::from(*direction).norm() > 0.0) {
                    return Err("completion.direction must be non-zero".into());
                }
                if !(*tolerance > 0.0) {
                    return Err("completion.tolerance must be > 0".into());
                }
            }
            Completion::Pixel { max_distance } => {
                if !(*max_distance >= 0.0) {
                    return Err("completion.max_distance must be ≥ 0".into());
                }
            }
        }
        Ok(())
    }

    pub fn holds(&self, r: &LogRecord) -> bool {
        match self {
            Completion::AxisAngle {
                direction,
                tolerance,
            } => {
                let dir = Vec3::from(*direction).normalize();
                r.d_z.angle(&dir) <= *tolerance
            }
            Completion::Pixel { max_distance } => {
                r.n_s > 0 && r.max_pixel_distance().is_some_and(|d| d <= *max_distance)
            }
        }
    }
}

/// What `summarize` needs from the scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryConfig {
    /// Pixel dead-zone radius used for the settle time.
    pub eps1: f64,
    pub completion: Option<Completion>,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            eps1: 50.0,
            completion: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ticks: usize,
    pub duration: f64,
    /// First time the completion predicate holds.
    pub completion_time: Option<f64>,
    /// Mean grip gain over ticks where the grip gate is open.
    pub mean_delta: Option<f64>,
    pub peak_residual: f64,
    /// Mean `‖ΔF‖` over the final second.
    pub steady_residual: f64,
    pub max_rcm_error: f64,
    pub final_rcm_error: f64,
    /// Earliest time after which every tick with detections has all of them
    /// within the pixel dead zone.
    pub settle_time: Option<f64>,
    pub final_pixel_distance: Option<f64>,
    /// Seconds spent in each mode.
    pub mode_durations: BTreeMap<String, f64>,
    /// Seconds with no instrument detected.
    pub no_detection_time: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("cannot summarize an empty log")]
pub struct EmptyLog;

/// Window for steady-state averages, s.
pub const STEADY_WINDOW: f64 = 1.0;

pub fn summarize(log: &[LogRecord], config: &SummaryConfig) -> Result<Metrics, EmptyLog> {
    let last = log.last().ok_or(EmptyLog)?;
    let first = &log[0];
    let dt = if log.len() > 1 {
        (last.t - first.t) / (log.len() - 1) as f64
    } else {
        0.0
    };

    let completion_time = config
        .completion
        .as_ref()
        .and_then(|c| log.iter().find(|r| c.holds(r)))
        .map(|r| r.t);

    let gripped: Vec<f64> = log.iter().map(|r| r.delta).filter(|&d| d > 0.0).collect();
    let mean_delta =
        (!gripped.is_empty()).then(|| gripped.iter().sum::<f64>() / gripped.len() as f64);

    let peak_residual = log.iter().map(|r| r.residual_norm).fold(0.0, f64::max);
    let window: Vec<f64> = log
        .iter()
        .filter(|r| r.t >= last.t - STEADY_WINDOW)
        .map(|r| r.residual_norm)
        .collect();
    let steady_residual = window.iter().sum::<f64>() / window.len() as f64;

    let max_rcm_error = log.iter().map(|r| r.e_r.norm()).fold(0.0, f64::max);

    let outside =
        |r: &LogRecord| r.n_s > 0 && r.max_pixel_distance().is_some_and(|d| d > config.eps1);
    let settle_time = if log.iter().any(|r| r.n_s > 0) {
        match log.iter().rposition(outside) {
            None => Some(first.t),
            Some(i) => log[i + 1..].iter().find(|r| r.n_s > 0).map(|r| r.t),
        }
    } else {
        None
    };

    let mut mode_durations = BTreeMap::new();
    for mode in [
        Mode::Idle,
        Mode::TrackingOnly,
        Mode::HandleAndTracking,
        Mode::HandleDominant,
    ] {
        let n = log.iter().filter(|r| r.mode == mode).count();
        mode_durations.insert(mode.label().to_string(), n as f64 * dt);
    }
    let no_detection_time = log.iter().filter(|r| r.n_s == 0).count() as f64 * dt;

    Ok(Metrics {
        ticks: log.len(),
        duration: log.len() as f64 * dt,
        completion_time,
        mean_delta,
        peak_residual,
        steady_residual,
        max_rcm_error,
        final_rcm_error: last.e_r.norm(),
        settle_time,
        final_pixel_distance: if last.n_s > 0 {
            last.max_pixel_distance()
        } else {
            None
        },
        mode_durations,
        no_detection_time,
    })
}

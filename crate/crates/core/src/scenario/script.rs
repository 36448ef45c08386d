//! Time-indexed scripted signals.

use serde::{Deserialize, Serialize};

use crate::spatial::{Vec3, Wrench};
use crate::wrenches::TactileFrame;

fn lerp3(a: &[f64; 3], b: &[f64; 3], s: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + s * (b[i] - a[i]))
}

/// Piecewise-linear interpolation over keyframes sorted by time.
///
/// Values hold before the first and after the last keyframe. Two keyframes at
/// the same time make a step; the later one applies from that instant on.
fn sample<K, T>(
    keys: &[K],
    t: f64,
    time: impl Fn(&K) -> f64,
    value: impl Fn(&K) -> T,
    lerp: impl Fn(&T, &T, f64) -> T,
) -> Option<T> {
    let first = keys.first()?;
    if t < time(first) {
        return Some(value(first));
    }
    let idx = keys.partition_point(|k| time(k) <= t) - 1;
    let k0 = &keys[idx];
    match keys.get(idx + 1) {
        Some(k1) if time(k1) > time(k0) => {
            let s = (t - time(k0)) / (time(k1) - time(k0));
            Some(lerp(&value(k0), &value(k1), s))
        }
        _ => Some(value(k0)),
    }
}

pub(crate) fn check_times(name: &str, times: impl Iterator<Item = f64>) -> Result<(), String> {
    let mut last = f64::NEG_INFINITY;
    for t in times {
        if !t.is_finite() || t < 0.0 {
            return Err(format!("{name}: keyframe times must be finite and ≥ 0"));
        }
        if t < last {
            return Err(format!("{name}: keyframe times must be non-decreasing"));
        }
        last = t;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrenchKey {
    pub t: f64,
    #[serde(default)]
    pub force: [f64; 3],
    #[serde(default)]
    pub moment: [f64; 3],
}

pub fn sample_wrench(keys: &[WrenchKey], t: f64) -> Wrench {
    sample(
        keys,
        t,
        |k| k.t,
        |k| (k.moment, k.force),
        |a, b, s| (lerp3(&a.0, &b.0, s), lerp3(&a.1, &b.1, s)),
    )
    .map(|(m, f)| Wrench::new(Vec3::from(m), Vec3::from(f)))
    .unwrap_or_else(Wrench::zero)
}

/// Grip held from `t` until the next keyframe: the first `contacts` elements at `level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripKey {
    pub t: f64,
    pub contacts: usize,
    pub level: u8,
}

pub fn sample_grip(keys: &[GripKey], t: f64) -> TactileFrame {
    let step = |a: &(usize, u8), _: &(usize, u8), _s: f64| *a;
    sample(keys, t, |k| k.t, |k| (k.contacts, k.level), step)
        .map(|(c, l)| TactileFrame::uniform(c, l))
        .unwrap_or_else(TactileFrame::untouched)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointKey {
    pub t: f64,
    pub position: [f64; 3],
}

pub fn sample_point(keys: &[PointKey], t: f64) -> Option<Vec3> {
    sample(keys, t, |k| k.t, |k| k.position, lerp3).map(Vec3::from)
}

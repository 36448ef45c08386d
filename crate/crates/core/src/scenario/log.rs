//! Per-tick log records and their CSV form.
//!
//! Columns, in order: `t`, `q1..qn`, `qd1..qdn`, `p_e_{x,y,z}`, `d_z_{x,y,z}`,
//! `e_r_{x,y,z}`, `p_r_{x,y,z}`, `p_r_ref_{x,y,z}`, `delta`, `residual_norm`,
//! `f_wall_{x,y,z}`, six components each of `w_h`, `w_c`, `w_f`, `w_n`
//! (`m{x,y,z}` then `f{x,y,z}`), `tau1..taun`, `d1..dk` (pixel distance of
//! each scripted instrument, `NaN` when not detected), `n_s`, `mode`.
//! Floats are written with 17 significant digits so files replay exactly.

use std::io::{Read, Write};

use crate::controller::Mode;
use crate::sim::StepRecord;
use crate::spatial::{Vec3, Wrench};
use crate::wrenches::{pixel_offset_distance, CameraIntrinsics};

#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub p_e: Vec3,
    pub d_z: Vec3,
    pub e_r: Vec3,
    pub p_r: Vec3,
    pub p_r_ref: Vec3,
    pub delta: f64,
    pub residual_norm: f64,
    pub f_wall: Vec3,
    pub w_h: Wrench,
    pub w_c: Wrench,
    pub w_f: Wrench,
    pub w_n: Wrench,
    pub tau: Vec<f64>,
    /// Pixel distance per scripted instrument; `NaN` when not detected.
    pub pixel_distance: Vec<f64>,
    pub n_s: usize,
    pub mode: Mode,
}

impl LogRecord {
    pub fn from_step(rec: &StepRecord, intr: &CameraIntrinsics, tracking: bool) -> Self {
        let c = &rec.control;
        let pixel_distance = rec
            .detections
            .iter()
            .map(|d| match d {
                Some(d) if tracking => pixel_offset_distance(d, intr),
                _ => f64::NAN,
            })
            .collect();
        Self {
            t: rec.t,
            q: rec.joints.positions.iter().copied().collect(),
            qd: rec.joints.velocities.iter().copied().collect(),
            p_e: rec.p_e,
            d_z: rec.d_z,
            e_r: c.e_r,
            p_r: rec.rcm.p_r,
            p_r_ref: rec.rcm.p_r_ref,
            delta: c.delta,
            residual_norm: c.residual.norm(),
            f_wall: rec.contact.f_wall,
            w_h: c.w_h,
            w_c: c.w_c,
            w_f: c.w_f,
            w_n: c.w_n,
            tau: c.tau.iter().copied().collect(),
            pixel_distance,
            n_s: c.pixel_distances.len(),
            mode: c.mode,
        }
    }

    /// Largest pixel distance among detected instruments.
    pub fn max_pixel_distance(&self) -> Option<f64> {
        self.pixel_distance
            .iter()
            .copied()
            .filter(|d| !d.is_nan())
            .reduce(f64::max)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn header(dof: usize, instruments: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=dof).map(|i| format!("q{i}")));
    h.extend((1..=dof).map(|i| format!("qd{i}")));
    for v in ["p_e", "d_z", "e_r", "p_r", "p_r_ref"] {
        h.extend(["x", "y", "z"].map(|a| format!("{v}_{a}")));
    }
    h.push("delta".into());
    h.push("residual_norm".into());
    h.extend(["x", "y", "z"].map(|a| format!("f_wall_{a}")));
    for w in ["w_h", "w_c", "w_f", "w_n"] {
        h.extend(["mx", "my", "mz", "fx", "fy", "fz"].map(|a| format!("{w}_{a}")));
    }
    h.extend((1..=dof).map(|i| format!("tau{i}")));
    h.extend((1..=instruments).map(|i| format!("d{i}")));
    h.push("n_s".into());
    h.push("mode".into());
    h
}

fn row(r: &LogRecord) -> Vec<String> {
    let mut out = vec![fmt(r.t)];
    out.extend(r.q.iter().map(|&x| fmt(x)));
    out.extend(r.qd.iter().map(|&x| fmt(x)));
    for v in [&r.p_e, &r.d_z, &r.e_r, &r.p_r, &r.p_r_ref] {
        out.extend(v.iter().map(|&x| fmt(x)));
    }
    out.push(fmt(r.delta));
    out.push(fmt(r.residual_norm));
    out.extend(r.f_wall.iter().map(|&x| fmt(x)));
    for w in [&r.w_h, &r.w_c, &r.w_f, &r.w_n] {
        out.extend(w.as_array().iter().map(|&x| fmt(x)));
    }
    out.extend(r.tau.iter().map(|&x| fmt(x)));
    out.extend(r.pixel_distance.iter().map(|&x| fmt(x)));
    out.push(r.n_s.to_string());
    out.push(r.mode.label().to_string());
    out
}

/// Streams records to CSV. The header is fixed by the first record's shape.
pub struct LogWriter<W: Write> {
    inner: csv::Writer<W>,
    shape: Option<(usize, usize)>,
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(out),
            shape: None,
        }
    }

    pub fn write(&mut self, r: &LogRecord) -> Result<(), LogError> {
        let shape = (r.q.len(), r.pixel_distance.len());
        match self.shape {
            None => {
                self.inner.write_record(header(shape.0, shape.1))?;
                self.shape = Some(shape);
            }
            Some(s) if s != shape => {
                return Err(LogError::Format(format!(
                    "record shape {shape:?} differs from header {s:?}"
                )))
            }
            _ => {}
        }
        self.inner.write_record(row(r))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, LogError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| LogError::Format(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log format: {0}")]
    Format(String),
}

pub fn write_csv<W: Write>(out: W, records: &[LogRecord]) -> Result<W, LogError> {
    let mut w = LogWriter::new(out);
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn to_csv_string(records: &[LogRecord]) -> String {
    let buf = write_csv(Vec::new(), records).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

fn count_prefixed(header: &csv::StringRecord, prefix: &str) -> usize {
    header
        .iter()
        .filter(|h| {
            h.strip_prefix(prefix)
                .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
        })
        .count()
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<LogRecord>, LogError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    let dof = count_prefixed(&header, "q");
    let instruments = count_prefixed(&header, "d");
    let expected = header_record(dof, instruments);
    if header != expected {
        return Err(LogError::Format("unexpected column layout".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| LogError::Format(format!("row {}: bad {what}", line + 1));
        let mut it = rec.iter();
        let mut num = |what: &str| -> Result<f64, LogError> {
            it.next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| bad(what))
        };
        let t = num("t")?;
        let q = (0..dof).map(|_| num("q")).collect::<Result<Vec<_>, _>>()?;
        let qd = (0..dof).map(|_| num("qd")).collect::<Result<Vec<_>, _>>()?;
        let mut v3 = |what: &str| -> Result<Vec3, LogError> {
            Ok(Vec3::new(num(what)?, num(what)?, num(what)?))
        };
        let p_e = v3("p_e")?;
        let d_z = v3("d_z")?;
        let e_r = v3("e_r")?;
        let p_r = v3("p_r")?;
        let p_r_ref = v3("p_r_ref")?;
        let delta = num("delta")?;
        let residual_norm = num("residual_norm")?;
        let f_wall = Vec3::new(num("f_wall")?, num("f_wall")?, num("f_wall")?);
        let mut w6 = |what: &str| -> Result<Wrench, LogError> {
            let m = Vec3::new(num(what)?, num(what)?, num(what)?);
            let f = Vec3::new(num(what)?, num(what)?, num(what)?);
            Ok(Wrench::new(m, f))
        };
        let w_h = w6("w_h")?;
        let w_c = w6("w_c")?;
        let w_f = w6("w_f")?;
        let w_n = w6("w_n")?;
        let tau = (0..dof)
            .map(|_| num("tau"))
            .collect::<Result<Vec<_>, _>>()?;
        let pixel_distance = (0..instruments)
            .map(|_| num("d"))
            .collect::<Result<Vec<_>, _>>()?;
        let n_s = rec
            .get(rec.len() - 2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("n_s"))?;
        let mode = rec
            .get(rec.len() - 1)
            .and_then(Mode::from_label)
            .ok_or_else(|| bad("mode"))?;
        out.push(LogRecord {
            t,
            q,
            qd,
            p_e,
            d_z,
            e_r,
            p_r,
            p_r_ref,
            delta,
            residual_norm,
            f_wall,
            w_h,
            w_c,
            w_f,
            w_n,
            tau,
            pixel_distance,
            n_s,
            mode,
        });
    }
    Ok(out)
}

fn header_record(dof: usize, instruments: usize) -> csv::StringRecord {
    csv::StringRecord::from(header(dof, instruments))
}

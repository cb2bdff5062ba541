//! Gaze log ingestion.
//!
//! A gaze log is a CSV with header `t,x,y,valid`. After parsing, samples are
//! sorted by time and short track-loss gaps are repaired: a run of invalid
//! samples whose bracketing valid samples are at most [`MAX_INTERPOLATED_GAP`]
//! seconds apart is linearly interpolated and marked valid. Longer gaps hold
//! the last valid position and stay flagged invalid.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::csv_error;

/// Longest track-loss gap, in seconds, that is bridged by interpolation.
pub const MAX_INTERPOLATED_GAP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl GazeSample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y, valid: true }
    }
}

/// Parsed gaze samples plus any non-fatal findings.
#[derive(Debug, Clone, Default)]
pub struct GazeLog {
    pub samples: Vec<GazeSample>,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct Row {
    t: f64,
    x: f64,
    y: f64,
    valid: u8,
}

pub fn parse_gaze_csv<R: Read>(reader: R, path: &Path) -> Result<GazeLog> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().collect::<Vec<_>>() != ["t", "x", "y", "valid"] {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: "expected header t,x,y,valid".into(),
        });
    }

    let mut samples = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = i as u64 + 2;
        if row.valid > 1 || !row.t.is_finite() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: "valid must be 0 or 1 and t finite".into(),
            });
        }
        samples.push(GazeSample {
            t: row.t,
            x: row.x,
            y: row.y,
            valid: row.valid == 1,
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput(path.into()));
    }

    let mut warnings = Vec::new();
    if samples.windows(2).any(|w| w[1].t < w[0].t) {
        let msg = format!("{}: rows out of time order, sorted", path.display());
        log::warn!("{msg}");
        warnings.push(msg);
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    if let Some(w) = samples.windows(2).find(|w| w[1].t == w[0].t) {
        return Err(Error::format(path, format!("duplicate timestamp {}", w[0].t)));
    }

    repair_gaps(&mut samples);
    Ok(GazeLog { samples, warnings })
}

/// Reads a gaze log from disk.
pub fn parse_gaze_log(path: &Path) -> Result<GazeLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_gaze_csv(std::io::BufReader::new(file), path)
}

pub fn write_gaze_csv<W: Write>(samples: &[GazeSample], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "x", "y", "valid"])?;
    for s in samples {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        w.write_record([
            s.t.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            u8::from(s.valid).to_string(),
        ])?;
    }
    w.flush()
}

/// Interpolates or holds across runs of invalid samples. Expects sorted input.
pub fn repair_gaps(samples: &mut [GazeSample]) {
    let n = samples.len();
    let mut i = 0;
    while i < n {
        if samples[i].valid {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !samples[i].valid {
            i += 1;
        }
        let prev = start.checked_sub(1).map(|p| samples[p]);
        let next = (i < n).then(|| samples[i]);
        match (prev, next) {
            (Some(a), Some(b)) if b.t - a.t <= MAX_INTERPOLATED_GAP => {
                for s in &mut samples[start..i] {
                    let u = (s.t - a.t) / (b.t - a.t);
                    s.x = a.x + u * (b.x - a.x);
                    s.y = a.y + u * (b.y - a.y);
                    s.valid = true;
                }
            }
            (Some(hold), _) | (None, Some(hold)) => {
                for s in &mut samples[start..i] {
                    s.x = hold.x;
                    s.y = hold.y;
                }
            }
            (None, None) => {}
        }
    }
}

/// Linearly resamples onto a uniform clock starting at the first sample.
///
/// The output holds `floor((t_last - t_first) * rate) + 1` samples, so both
/// endpoints are reproduced when the span is a whole number of periods. An
/// output sample is valid when both bracketing inputs are.
pub fn resample_gaze(samples: &[GazeSample], target_rate: f64) -> Result<Vec<GazeSample>> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::param(format!("target rate must be positive, got {target_rate}")));
    }
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "resampling needs at least 2 gaze samples, got {}",
            samples.len()
        )));
    }
    let t0 = samples[0].t;
    let t1 = samples[samples.len() - 1].t;
    let n = ((t1 - t0) * target_rate + 1e-9).floor() as usize + 1;

    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 / target_rate;
        while j + 2 < samples.len() && samples[j + 1].t <= t {
            j += 1;
        }
        let (a, b) = (samples[j], samples[j + 1]);
        let u = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        out.push(GazeSample {
            t,
            x: a.x + u * (b.x - a.x),
            y: a.y + u * (b.y - a.y),
            valid: a.valid && b.valid,
        });
    }
    Ok(out)
}

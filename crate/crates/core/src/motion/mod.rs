//! Global ego-motion from sparse corner tracking.
//!
//! For each consecutive frame pair, Shi–Tomasi corners of the first frame are
//! tracked with pyramidal Lucas–Kanade, tracks failing a forward-backward
//! consistency check are dropped, and the component-wise median of the
//! surviving displacements is the frame's global flow. The flow sequence is
//! then symbol-encoded like gaze.

pub mod corners;
pub mod frame;
pub mod lk;

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use corners::{corner_scores, detect_corners, min_eigenvalue};
pub use frame::{Frame, Pyramid};
pub use lk::{track_lk, LkParams, LkTracker, TrackStatus, TrackedPoint};

use crate::config::PipelineConfig;
use crate::encoding::{encode_signal, median_in_place, MotionSymbol, Thresholds};
use crate::error::{Error, Result};
use crate::labels::csv_error;

/// Median displacement between two frames from `n_points` surviving tracks.
/// `n_points == 0` marks a frame pair where nothing survived (flow set to 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimate {
    pub dx: f64,
    pub dy: f64,
    pub n_points: usize,
}

impl FlowEstimate {
    pub const NONE: FlowEstimate = FlowEstimate { dx: 0.0, dy: 0.0, n_points: 0 };

    pub fn is_flagged(&self) -> bool {
        self.n_points == 0
    }
}

/// Flow from frame `frame_index` to `frame_index + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub frame_index: usize,
    pub flow: FlowEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    pub max_corners: usize,
    pub quality: f64,
    pub min_distance: f64,
    pub fb_threshold: f64,
    pub lk: LkParams,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            max_corners: 200,
            quality: 0.01,
            min_distance: 8.0,
            fb_threshold: 1.0,
            lk: LkParams::default(),
        }
    }
}

impl From<&PipelineConfig> for TrackerParams {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            max_corners: c.max_corners,
            quality: c.corner_quality,
            min_distance: c.corner_min_distance,
            fb_threshold: c.fb_threshold,
            lk: LkParams { window: c.lk_window | 1, levels: c.lk_levels, ..LkParams::default() },
        }
    }
}

/// Re-tracks each `Ok` point backward and rejects those whose round trip
/// misses the origin by more than `threshold` pixels. Destinations are left
/// untouched; only status and `fb_error` change.
pub fn fb_filter(
    forward: &[TrackedPoint],
    frame_a: &Frame,
    frame_b: &Frame,
    threshold: f64,
    params: LkParams,
) -> Result<Vec<TrackedPoint>> {
    Ok(fb_filter_with(forward, &LkTracker::new(frame_b, frame_a, params)?, threshold))
}

/// [`fb_filter`] with a prebuilt backward tracker (frame b to frame a).
pub fn fb_filter_with(forward: &[TrackedPoint], backward: &LkTracker, threshold: f64) -> Vec<TrackedPoint> {
    forward
        .iter()
        .map(|&p| {
            if p.status != TrackStatus::Ok {
                return p;
            }
            let back = backward.track_point(p.destination);
            let fb_error = if back.status == TrackStatus::Ok {
                (back.destination[0] - p.origin[0]).hypot(back.destination[1] - p.origin[1])
            } else {
                f64::INFINITY
            };
            let status = if fb_error > threshold { TrackStatus::Rejected } else { TrackStatus::Ok };
            TrackedPoint { fb_error, status, ..p }
        })
        .collect()
}

/// Component-wise median of the displacements of `Ok` points.
pub fn median_flow(points: &[TrackedPoint]) -> Result<FlowEstimate> {
    let (mut xs, mut ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.status == TrackStatus::Ok)
        .map(|p| {
            let f = p.flow();
            (f[0], f[1])
        })
        .unzip();
    if xs.is_empty() {
        return Err(Error::NoFlow);
    }
    Ok(FlowEstimate {
        dx: median_in_place(&mut xs),
        dy: median_in_place(&mut ys),
        n_points: ys.len(),
    })
}

/// Global flow between two frames; [`FlowEstimate::NONE`] when no track survives.
pub fn estimate_flow(frame_a: &Frame, frame_b: &Frame, params: &TrackerParams) -> Result<FlowEstimate> {
    let corners = detect_corners(frame_a, params.max_corners, params.quality, params.min_distance);
    let tracker = LkTracker::new(frame_a, frame_b, params.lk)?;
    let forward = tracker.track(&corners);
    let filtered = fb_filter_with(&forward, &tracker.reversed(), params.fb_threshold);
    match median_flow(&filtered) {
        Ok(f) => Ok(f),
        Err(Error::NoFlow) => Ok(FlowEstimate::NONE),
        Err(e) => Err(e),
    }
}

/// Flow for every consecutive pair of in-memory frames.
pub fn flows_from_frames(frames: &[Frame], params: &TrackerParams) -> Result<Vec<FlowRecord>> {
    (0..frames.len().saturating_sub(1))
        .into_par_iter()
        .map(|i| {
            Ok(FlowRecord {
                frame_index: i,
                flow: estimate_flow(&frames[i], &frames[i + 1], params)?,
            })
        })
        .collect()
}

/// Flow for every consecutive pair of image files, decoded on demand.
pub fn flows_from_paths(paths: &[PathBuf], params: &TrackerParams) -> Result<Vec<FlowRecord>> {
    (0..paths.len().saturating_sub(1))
        .into_par_iter()
        .map(|i| {
            let a = Frame::load(&paths[i], i)?;
            let b = Frame::load(&paths[i + 1], i + 1)?;
            Ok(FlowRecord { frame_index: i, flow: estimate_flow(&a, &b, params)? })
        })
        .collect()
}

pub fn read_flow_csv(path: &Path) -> Result<Vec<FlowRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().collect::<Vec<_>>() != ["frame_index", "dx", "dy", "n_points"] {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: "expected header frame_index,dx,dy,n_points".into(),
        });
    }
    #[derive(Deserialize)]
    struct Row {
        frame_index: usize,
        dx: f64,
        dy: f64,
        n_points: usize,
    }

    let mut out: Vec<FlowRecord> = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let rec = FlowRecord {
            frame_index: row.frame_index,
            flow: FlowEstimate { dx: row.dx, dy: row.dy, n_points: row.n_points },
        };
        if rec.frame_index != out.len() {
            return Err(Error::Parse {
                path: path.into(),
                line: out.len() as u64 + 2,
                message: format!("expected frame_index {}, got {}", out.len(), rec.frame_index),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_flow_csv<W: Write>(flows: &[FlowRecord], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["frame_index", "dx", "dy", "n_points"])?;
    for f in flows {
        w.write_record([
            f.frame_index.to_string(),
            f.flow.dx.to_string(),
            f.flow.dy.to_string(),
            f.flow.n_points.to_string(),
        ])?;
    }
    w.flush()
}

/// Frames or an already computed flow sequence.
pub enum MotionInput<'a> {
    Frames(&'a [Frame]),
    Paths(&'a [PathBuf]),
    Flows(&'a [FlowRecord]),
}

impl MotionInput<'_> {
    pub fn flows(&self, config: &PipelineConfig) -> Result<Vec<FlowRecord>> {
        let params = TrackerParams::from(config);
        match self {
            MotionInput::Frames(f) => flows_from_frames(f, &params),
            MotionInput::Paths(p) => flows_from_paths(p, &params),
            MotionInput::Flows(f) => Ok(f.to_vec()),
        }
    }
}

/// Ego-motion thresholds from the configuration.
pub fn motion_thresholds(config: &PipelineConfig) -> Result<Thresholds> {
    match (config.motion_tau_small, config.motion_tau_large) {
        (Some(s), Some(l)) => Thresholds::new(s, l),
        _ => Err(Error::param(
            "motion thresholds not configured; set motion_tau_small/motion_tau_large or estimate them from training data",
        )),
    }
}

/// Values that get quantized: wavelet coefficients of the filtered flow, or the
/// raw flow when `motion_use_wavelet` is off.
pub fn motion_coefficients(flows: &[FlowRecord], config: &PipelineConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let dx: Vec<f64> = flows.iter().map(|f| f.flow.dx).collect();
    let dy: Vec<f64> = flows.iter().map(|f| f.flow.dy).collect();
    if !config.motion_use_wavelet {
        return Ok((dx, dy));
    }
    let (cx, cy) = crate::encoding::axis_coefficients(&dx, &dy, config.median_filter_width, config.wavelet_scale)?;
    Ok((cx.values, cy.values))
}

/// Symbols of a flow sequence, one per frame pair.
pub fn encode_flows(flows: &[FlowRecord], config: &PipelineConfig) -> Result<Vec<MotionSymbol>> {
    let th = motion_thresholds(config)?;
    let dx: Vec<f64> = flows.iter().map(|f| f.flow.dx).collect();
    let dy: Vec<f64> = flows.iter().map(|f| f.flow.dy).collect();
    if config.motion_use_wavelet {
        encode_signal(&dx, &dy, config.median_filter_width, config.wavelet_scale, th)
    } else {
        Ok(dx.iter().zip(&dy).map(|(&x, &y)| MotionSymbol::from_levels(th.level(x), th.level(y))).collect())
    }
}

pub fn encode_motion_channel(input: MotionInput<'_>, config: &PipelineConfig) -> Result<Vec<MotionSymbol>> {
    let flows = input.flows(config)?;
    if flows.is_empty() {
        return Err(Error::InsufficientData("ego-motion needs at least 2 frames".into()));
    }
    encode_flows(&flows, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(dx: f64, dy: f64) -> TrackedPoint {
        TrackedPoint {
            origin: [10.0, 10.0],
            destination: [10.0 + dx, 10.0 + dy],
            fb_error: 0.0,
            status: TrackStatus::Ok,
        }
    }

    #[test]
    fn median_flow_cases() {
        let same: Vec<_> = (0..5).map(|_| point(2.0, 3.0)).collect();
        let f = median_flow(&same).unwrap();
        assert_eq!((f.dx, f.dy, f.n_points), (2.0, 3.0, 5));

        let outlier: Vec<_> = [1.0, 2.0, 100.0, 2.0, 1.0].iter().map(|&d| point(d, 0.0)).collect();
        assert_eq!(median_flow(&outlier).unwrap().dx, 2.0);

        let even = [point(1.0, 0.0), point(3.0, 4.0)];
        let f = median_flow(&even).unwrap();
        assert_eq!((f.dx, f.dy), (2.0, 2.0));
    }

    #[test]
    fn median_flow_ignores_non_ok_points() {
        let mut pts = vec![point(1.0, 1.0), point(50.0, 50.0)];
        pts[1].status = TrackStatus::Rejected;
        assert_eq!(median_flow(&pts).unwrap().dx, 1.0);
        pts[0].status = TrackStatus::Lost;
        assert!(matches!(median_flow(&pts), Err(Error::NoFlow)));
    }

    #[test]
    fn flow_csv_round_trip() {
        let flows: Vec<_> = (0..4)
            .map(|i| FlowRecord { frame_index: i, flow: FlowEstimate { dx: i as f64 * 0.5, dy: -0.25, n_points: 3 } })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.csv");
        write_flow_csv(&flows, std::fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(read_flow_csv(&path).unwrap(), flows);
    }

    #[test]
    fn static_flow_encodes_to_rest() {
        let flows = vec![FlowRecord { frame_index: 0, flow: FlowEstimate { dx: 0.0, dy: 0.0, n_points: 9 } }; 60];
        let flows: Vec<_> = flows.into_iter().enumerate().map(|(i, f)| FlowRecord { frame_index: i, ..f }).collect();
        let cfg = PipelineConfig { motion_tau_small: Some(0.5), motion_tau_large: Some(2.0), ..Default::default() };
        let syms = encode_motion_channel(MotionInput::Flows(&flows), &cfg).unwrap();
        assert!(syms.iter().all(|&s| s == MotionSymbol::REST));
    }

    #[test]
    fn raw_flow_quantization_without_wavelet() {
        let flows: Vec<_> = [(0.0, 0.0), (1.0, -3.0)]
            .iter()
            .enumerate()
            .map(|(i, &(dx, dy))| FlowRecord { frame_index: i, flow: FlowEstimate { dx, dy, n_points: 1 } })
            .collect();
        let cfg = PipelineConfig {
            motion_tau_small: Some(0.5),
            motion_tau_large: Some(2.0),
            motion_use_wavelet: false,
            ..Default::default()
        };
        let codes: Vec<u8> = encode_flows(&flows, &cfg).unwrap().into_iter().map(MotionSymbol::code).collect();
        assert_eq!(codes, vec![12, 15]);
    }

    proptest! {
        #[test]
        fn median_flow_permutation_invariant(
            flows in prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let pts: Vec<_> = flows.iter().map(|&(x, y)| point(x, y)).collect();
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(median_flow(&pts).unwrap(), median_flow(&shuffled).unwrap());
        }

        #[test]
        fn median_flow_resists_minority_outliers(
            k_half in 0usize..15,
            outliers in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 15),
            n_out_frac in 0.0..1.0f64,
        ) {
            let k = 2 * k_half + 1;
            let max_out = (k - 1) / 2;
            let n_out = ((max_out as f64) * n_out_frac).round() as usize;
            let mut pts: Vec<_> = (0..k).map(|_| point(1.5, -0.5)).collect();
            for (p, &(x, y)) in pts.iter_mut().zip(&outliers).take(n_out) {
                *p = point(x, y);
            }
            let f = median_flow(&pts).unwrap();
            prop_assert_eq!((f.dx, f.dy), (1.5, -0.5));
        }
    }
}

//! Sliding-window histograms and feature-level fusion.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ClassMode;
use crate::encoding::N_SYMBOLS;
use crate::error::{Error, Result};
use crate::labels::{csv_error, ActivityLabel, LabelTrack};

/// A discrete event on the master clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedSymbol {
    pub t: f64,
    pub symbol: usize,
}

/// Normalized histogram of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowHistogram {
    pub t_start: f64,
    pub t_center: f64,
    pub bins: Vec<f64>,
    /// No symbol fell inside the window; `bins` is uniform.
    pub empty: bool,
}

/// Start times `t0 + k * stride` of every window that fits in `[t0, t1]`.
pub fn window_starts(span: (f64, f64), window: f64, stride: f64) -> Vec<f64> {
    let (t0, t1) = span;
    if !(t1 - t0 >= window) || !(stride > 0.0) {
        return Vec::new();
    }
    // Tolerance keeps e.g. (30 - 25) / 1 from rounding down to 4.
    let n = ((t1 - t0 - window) / stride + 1e-9).floor() as usize + 1;
    (0..n).map(|k| t0 + k as f64 * stride).collect()
}

/// Histograms of `stream` over windows `[start, start + window)`.
///
/// The stream need not be sorted. Symbols outside `0..n_bins` are an error.
pub fn window_histogram(
    stream: &[TimedSymbol],
    n_bins: usize,
    window: f64,
    stride: f64,
    span: (f64, f64),
) -> Result<Vec<WindowHistogram>> {
    if !(window > 0.0 && stride > 0.0) {
        return Err(Error::param("window and stride must be positive"));
    }
    if window > span.1 - span.0 {
        return Err(Error::param(format!(
            "window {window} s longer than span [{}, {}]",
            span.0, span.1
        )));
    }
    if let Some(s) = stream.iter().find(|s| s.symbol >= n_bins) {
        return Err(Error::param(format!("symbol {} outside {n_bins} bins", s.symbol)));
    }
    let mut sorted = stream.to_vec();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));

    let mut out = Vec::new();
    let (mut lo, mut hi) = (0, 0);
    for start in window_starts(span, window, stride) {
        let end = start + window;
        while lo < sorted.len() && sorted[lo].t < start {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < sorted.len() && sorted[hi].t < end {
            hi += 1;
        }
        let mut bins = vec![0.0; n_bins];
        for s in &sorted[lo..hi] {
            bins[s.symbol] += 1.0;
        }
        let count = (hi - lo) as f64;
        let empty = hi == lo;
        if empty {
            bins.fill(1.0 / n_bins as f64);
        } else {
            bins.iter_mut().for_each(|b| *b /= count);
        }
        out.push(WindowHistogram { t_start: start, t_center: start + 0.5 * window, bins, empty });
    }
    Ok(out)
}

/// The three feature channels, in fused order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Eye,
    Ego,
    Visual,
}

/// A non-empty subset of channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channels {
    pub eye: bool,
    pub ego: bool,
    pub visual: bool,
}

impl Channels {
    pub const ALL: Channels = Channels { eye: true, ego: true, visual: true };
    pub const MOTION: Channels = Channels { eye: true, ego: true, visual: false };
    pub const VISUAL: Channels = Channels { eye: false, ego: false, visual: true };

    pub fn contains(&self, c: Channel) -> bool {
        match c {
            Channel::Eye => self.eye,
            Channel::Ego => self.ego,
            Channel::Visual => self.visual,
        }
    }

    pub fn dimension(&self, k_visual_words: usize) -> usize {
        N_SYMBOLS * (self.eye as usize + self.ego as usize) + if self.visual { k_visual_words } else { 0 }
    }

    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.eye {
            parts.push("eye");
        }
        if self.ego {
            parts.push("ego");
        }
        if self.visual {
            parts.push("visual");
        }
        parts.join(",")
    }
}

impl std::str::FromStr for Channels {
    type Err = String;

    /// Comma separated list, e.g. `eye,ego`.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut c = Channels { eye: false, ego: false, visual: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "eye" => c.eye = true,
                "ego" => c.ego = true,
                "visual" => c.visual = true,
                other => return Err(format!("unknown channel {other:?}")),
            }
        }
        if !(c.eye || c.ego || c.visual) {
            return Err("at least one channel is required".into());
        }
        Ok(c)
    }
}

/// Fused feature of one window. Absent channels are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeature {
    pub t_start: f64,
    pub t_center: f64,
    pub eye: Option<Vec<f64>>,
    pub ego: Option<Vec<f64>>,
    pub visual: Option<Vec<f64>>,
    /// Some channel had an empty window.
    pub flagged: bool,
}

impl WindowFeature {
    /// Concatenation in the fixed order eye, ego, visual.
    pub fn vector(&self) -> Vec<f64> {
        [&self.eye, &self.ego, &self.visual]
            .into_iter()
            .flatten()
            .flat_map(|v| v.iter().copied())
            .collect()
    }
}

/// Concatenates per-channel histograms of the same window.
///
/// All supplied histograms must share a center to within `stride / 2`.
pub fn fuse(
    eye: Option<&WindowHistogram>,
    ego: Option<&WindowHistogram>,
    visual: Option<&WindowHistogram>,
    stride: f64,
) -> Result<WindowFeature> {
    let parts: Vec<&WindowHistogram> = [eye, ego, visual].into_iter().flatten().collect();
    let first = *parts.first().ok_or_else(|| Error::param("fuse needs at least one channel"))?;
    for h in &parts[1..] {
        if (h.t_center - first.t_center).abs() > 0.5 * stride {
            return Err(Error::Alignment(first.t_center, h.t_center));
        }
    }
    for h in [eye, ego].into_iter().flatten() {
        if h.bins.len() != N_SYMBOLS {
            return Err(Error::DimensionMismatch { expected: N_SYMBOLS, actual: h.bins.len() });
        }
    }
    Ok(WindowFeature {
        t_start: first.t_start,
        t_center: first.t_center,
        eye: eye.map(|h| h.bins.clone()),
        ego: ego.map(|h| h.bins.clone()),
        visual: visual.map(|h| h.bins.clone()),
        flagged: parts.iter().any(|h| h.empty),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub feature: WindowFeature,
    pub label: ActivityLabel,
    pub subject_id: String,
    pub session_index: u8,
}

/// Why a window received no label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Unlabeled,
    VoidInFiveClassMode,
}

/// Labels each window with the activity covering most of its duration.
///
/// Ties in coverage go to the lower class index. Windows with no label
/// coverage, and `Void` windows in 5-class mode, are returned as drops.
pub fn label_windows(
    windows: Vec<WindowFeature>,
    labels: &LabelTrack,
    window_seconds: f64,
    class_mode: ClassMode,
    subject_id: &str,
    session_index: u8,
) -> (Vec<LabeledWindow>, Vec<(f64, DropReason)>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for w in windows {
        let cov = labels.coverage(w.t_start, w.t_start + window_seconds);
        let (best, amount) = cov
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc });
        if amount <= 0.0 {
            dropped.push((w.t_center, DropReason::Unlabeled));
            continue;
        }
        let label = ActivityLabel::from_index(best).unwrap();
        if !label.allowed_in(class_mode) {
            dropped.push((w.t_center, DropReason::VoidInFiveClassMode));
            continue;
        }
        kept.push(LabeledWindow {
            feature: w,
            label,
            subject_id: subject_id.to_string(),
            session_index,
        });
    }
    (kept, dropped)
}

/// Writes `t_center,subject,session,label,f0..fN`.
pub fn write_feature_csv<W: Write>(windows: &[LabeledWindow], writer: W) -> Result<()> {
    let dim = windows.first().map(|w| w.feature.vector().len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["t_center", "subject", "session", "label"].map(String::from).to_vec();
    header.extend((0..dim).map(|i| format!("f{i}")));
    let io = |e: csv::Error| Error::format("<features>", e.to_string());
    w.write_record(&header).map_err(io)?;
    for lw in windows {
        let v = lw.feature.vector();
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: v.len() });
        }
        let mut rec = vec![
            lw.feature.t_center.to_string(),
            lw.subject_id.clone(),
            lw.session_index.to_string(),
            lw.label.to_string(),
        ];
        rec.extend(v.iter().map(f64::to_string));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::format("<features>", e.to_string()))
}

/// One row of a feature CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub t_center: f64,
    pub subject_id: String,
    pub session_index: u8,
    pub label: ActivityLabel,
    pub features: Vec<f64>,
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let fixed = ["t_center", "subject", "session", "label"];
    let ok = headers.len() > 4
        && headers.iter().take(4).eq(fixed)
        && headers.iter().skip(4).enumerate().all(|(i, h)| h == format!("f{i}"));
    if !ok {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: "expected header t_center,subject,session,label,f0..".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = i as u64 + 2;
        let bad = |message: String| Error::Parse { path: path.into(), line, message };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        out.push(FeatureRow {
            t_center: num(&rec[0])?,
            subject_id: rec[1].to_string(),
            session_index: rec[2].parse().map_err(|e| bad(format!("session: {e}")))?,
            label: rec[3].parse().map_err(bad)?,
            features: rec.iter().skip(4).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::LabelSegment;

    fn constant_stream(symbol: usize, seconds: f64, rate: f64) -> Vec<TimedSymbol> {
        (0..(seconds * rate) as usize).map(|i| TimedSymbol { t: i as f64 / rate, symbol }).collect()
    }

    #[test]
    fn constant_symbol_window() {
        let h = window_histogram(&constant_stream(12, 25.0, 30.0), 25, 25.0, 1.0, (0.0, 25.0)).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].bins[12], 1.0);
        assert_eq!(h[0].bins.iter().sum::<f64>(), 1.0);
        assert_eq!(h[0].t_center, 12.5);
    }

    #[test]
    fn window_count() {
        let h = window_histogram(&constant_stream(3, 30.0, 10.0), 25, 25.0, 1.0, (0.0, 30.0)).unwrap();
        assert_eq!(h.len(), 6);
        assert_eq!(window_starts((0.0, 24.9), 25.0, 1.0).len(), 0);
    }

    #[test]
    fn empty_window_is_uniform_and_flagged() {
        let stream = [TimedSymbol { t: 40.0, symbol: 1 }];
        let h = window_histogram(&stream, 15, 25.0, 1.0, (0.0, 30.0)).unwrap();
        assert!(h.iter().all(|w| w.empty));
        assert!((h[0].bins[0] - 1.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn bad_inputs() {
        assert!(window_histogram(&[], 25, 25.0, 1.0, (0.0, 10.0)).is_err());
        let bad = [TimedSymbol { t: 0.0, symbol: 25 }];
        assert!(window_histogram(&bad, 25, 5.0, 1.0, (0.0, 10.0)).is_err());
    }

    fn hist(t_center: f64, n: usize) -> WindowHistogram {
        let mut bins = vec![0.0; n];
        bins[n - 1] = 1.0;
        WindowHistogram { t_start: t_center - 12.5, t_center, bins, empty: false }
    }

    #[test]
    fn fusion_layout() {
        let (e, g, v) = (hist(12.5, 25), hist(12.5, 25), hist(12.5, 15));
        let f = fuse(Some(&e), Some(&g), Some(&v), 1.0).unwrap();
        let vec = f.vector();
        assert_eq!(vec.len(), 65);
        assert!((vec.iter().sum::<f64>() - 3.0).abs() < 1e-9);
        assert_eq!(vec[24], 1.0);
        assert_eq!(vec[49], 1.0);
        assert_eq!(vec[64], 1.0);
        assert_eq!(fuse(Some(&e), Some(&g), None, 1.0).unwrap().vector().len(), 50);
        assert_eq!(fuse(None, None, Some(&v), 1.0).unwrap().vector().len(), 15);
        assert!(matches!(fuse(Some(&e), Some(&hist(13.5, 25)), None, 1.0), Err(Error::Alignment(..))));
    }

    #[test]
    fn labeling_rules() {
        let labels = LabelTrack::new(vec![
            LabelSegment { t_start: 0.0, t_end: 15.0, label: ActivityLabel::Read },
            LabelSegment { t_start: 15.0, t_end: 40.0, label: ActivityLabel::Void },
            LabelSegment { t_start: 40.0, t_end: 100.0, label: ActivityLabel::Write },
        ]);
        let mk = |t_start: f64| WindowFeature {
            t_start,
            t_center: t_start + 12.5,
            eye: Some(vec![0.0; 25]),
            ego: None,
            visual: None,
            flagged: false,
        };
        let (kept, dropped) = label_windows(vec![mk(50.0), mk(0.0)], &labels, 25.0, ClassMode::Six, "s", 1);
        assert!(dropped.is_empty());
        assert_eq!(kept[0].label, ActivityLabel::Write);
        // 15 s read vs 10 s void.
        assert_eq!(kept[1].label, ActivityLabel::Read);

        let (kept, dropped) = label_windows(vec![mk(14.0), mk(200.0)], &labels, 25.0, ClassMode::Five, "s", 1);
        assert!(kept.is_empty());
        assert_eq!(dropped, vec![(26.5, DropReason::VoidInFiveClassMode), (212.5, DropReason::Unlabeled)]);
    }

    #[test]
    fn channel_parsing_and_dimensions() {
        let all: Channels = "eye,ego,visual".parse().unwrap();
        assert_eq!(all.dimension(15), 65);
        assert_eq!("eye,ego".parse::<Channels>().unwrap().dimension(15), 50);
        assert_eq!("ego".parse::<Channels>().unwrap().dimension(15), 25);
        assert_eq!("visual".parse::<Channels>().unwrap().dimension(15), 15);
        assert!("".parse::<Channels>().is_err());
        assert!("eye,gist".parse::<Channels>().is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let f = fuse(Some(&hist(12.5, 25)), None, Some(&hist(12.5, 15)), 1.0).unwrap();
        let rows = vec![LabeledWindow { feature: f, label: ActivityLabel::Browse, subject_id: "s3".into(), session_index: 2 }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        write_feature_csv(&rows, std::fs::File::create(&path).unwrap()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_center,subject,session,label,f0,"));
        assert!(text.lines().next().unwrap().ends_with(",f39"));
        let back = read_feature_csv(&path).unwrap();
        assert_eq!(back[0].features, rows[0].feature.vector());
        assert_eq!(back[0].label, ActivityLabel::Browse);
        assert_eq!(back[0].session_index, 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn window_count_formula(span in 25.0..400.0f64, stride in 0.25..5.0f64) {
                let n = window_starts((0.0, span), 25.0, stride).len();
                prop_assert_eq!(n, ((span - 25.0) / stride + 1e-9).floor() as usize + 1);
            }

            #[test]
            fn bins_sum_to_one(syms in prop::collection::vec((0.0..60.0f64, 0usize..25), 0..300)) {
                let stream: Vec<_> = syms.iter().map(|&(t, symbol)| TimedSymbol { t, symbol }).collect();
                for h in window_histogram(&stream, 25, 25.0, 1.0, (0.0, 60.0)).unwrap() {
                    prop_assert!((h.bins.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                    prop_assert!(h.bins.iter().all(|&b| b >= 0.0));
                }
            }

            #[test]
            fn histograms_permutation_equivariant(
                syms in prop::collection::vec((0.0..40.0f64, 0usize..25), 1..200),
                perm in Just((0..25).collect::<Vec<usize>>()).prop_shuffle(),
            ) {
                let stream: Vec<_> = syms.iter().map(|&(t, symbol)| TimedSymbol { t, symbol }).collect();
                let relabeled: Vec<_> = stream.iter().map(|s| TimedSymbol { symbol: perm[s.symbol], ..*s }).collect();
                let a = window_histogram(&stream, 25, 25.0, 1.0, (0.0, 40.0)).unwrap();
                let b = window_histogram(&relabeled, 25, 25.0, 1.0, (0.0, 40.0)).unwrap();
                for (ha, hb) in a.iter().zip(&b) {
                    for s in 0..25 {
                        prop_assert_eq!(ha.bins[s], hb.bins[perm[s]]);
                    }
                }
            }
        }
    }
}

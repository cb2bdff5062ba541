//! Recording sessions and dataset layout.
//!
//! A dataset root holds one directory per subject, each with one directory per
//! session (`1`, `2`, or any name ending in the session number):
//!
//! ```text
//! <root>/<subject>/<session>/gaze.csv
//!                            labels.csv
//!                            frames/        numbered PGM/PNG images, or
//!                            flow.csv       precomputed median flow
//!                            embeddings.bin (optional)
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::gaze::{parse_gaze_log, GazeSample};
use crate::labels::LabelTrack;
use crate::motion::{read_flow_csv, FlowRecord};

/// Source of the ego-motion channel.
#[derive(Debug, Clone)]
pub enum MotionSource {
    /// Image files in temporal order.
    Frames(Vec<PathBuf>),
    /// One record per consecutive frame pair.
    Flows(Vec<FlowRecord>),
}

impl MotionSource {
    pub fn frame_count(&self) -> usize {
        match self {
            MotionSource::Frames(f) => f.len(),
            MotionSource::Flows(f) if f.is_empty() => 0,
            MotionSource::Flows(f) => f.len() + 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub subject_id: String,
    pub session_index: u8,
    pub gaze: Vec<GazeSample>,
    pub motion: MotionSource,
    pub embeddings: Option<EmbeddingSet>,
    pub labels: LabelTrack,
    /// Video frame rate in Hz; the master clock for every channel.
    pub sample_rate: f64,
}

/// A session identifier `(subject, session)`.
pub type SessionKey = (String, u8);

impl SessionRecord {
    pub fn key(&self) -> SessionKey {
        (self.subject_id.clone(), self.session_index)
    }

    pub fn frame_span(&self) -> Option<(f64, f64)> {
        let n = self.motion.frame_count();
        (n > 0).then(|| (0.0, (n - 1) as f64 / self.sample_rate))
    }

    pub fn gaze_span(&self) -> Option<(f64, f64)> {
        Some((self.gaze.first()?.t, self.gaze.last()?.t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveDuration,
    GazeNotMonotone { index: usize },
    EmbeddingCount { embeddings: usize, frames: usize },
    NegativeEmbedding { frame: usize, component: usize },
    LabelOverlap { first: (f64, f64), second: (f64, f64) },
    NoCommonSpan,
    LabelOutsideCoverage { t_start: f64, t_end: f64, covered: (f64, f64) },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveDuration => write!(f, "gaze sequence has no positive duration"),
            Violation::GazeNotMonotone { index } => {
                write!(f, "gaze time not strictly increasing at sample {index}")
            }
            Violation::EmbeddingCount { embeddings, frames } => {
                write!(f, "{embeddings} embeddings for {frames} frames")
            }
            Violation::NegativeEmbedding { frame, component } => {
                write!(f, "negative embedding value at frame {frame}, component {component}")
            }
            Violation::LabelOverlap { first, second } => write!(
                f,
                "label segments [{}, {}) and [{}, {}) overlap",
                first.0, first.1, second.0, second.1
            ),
            Violation::NoCommonSpan => write!(f, "gaze, frames and labels share no time span"),
            Violation::LabelOutsideCoverage { t_start, t_end, covered } => write!(
                f,
                "label segment [{t_start}, {t_end}) extends outside signal coverage [{}, {}]",
                covered.0, covered.1
            ),
        }
    }
}

/// Lists every consistency problem of a session; empty means usable.
pub fn validate_session(session: &SessionRecord) -> Vec<Violation> {
    let mut out = Vec::new();

    match session.gaze_span() {
        Some((a, b)) if b > a => {}
        _ => out.push(Violation::NonPositiveDuration),
    }
    if let Some(i) = session.gaze.windows(2).position(|w| !(w[0].t < w[1].t)) {
        out.push(Violation::GazeNotMonotone { index: i + 1 });
    }

    let frames = session.motion.frame_count();
    if let Some(emb) = &session.embeddings {
        if emb.len() != frames {
            out.push(Violation::EmbeddingCount {
                embeddings: emb.len(),
                frames,
            });
        }
        if let Some((frame, component)) = emb.first_negative() {
            out.push(Violation::NegativeEmbedding { frame, component });
        }
    }

    for (i, j) in session.labels.overlaps() {
        let (a, b) = (&session.labels.segments[i], &session.labels.segments[j]);
        out.push(Violation::LabelOverlap {
            first: (a.t_start, a.t_end),
            second: (b.t_start, b.t_end),
        });
    }

    let spans = [session.gaze_span(), session.frame_span(), session.labels.span()];
    if spans.iter().any(Option::is_none) {
        out.push(Violation::NoCommonSpan);
        return out;
    }
    let lo = spans.iter().flatten().map(|s| s.0).fold(f64::MIN, f64::max);
    let hi = spans.iter().flatten().map(|s| s.1).fold(f64::MAX, f64::min);
    if !(hi > lo) {
        out.push(Violation::NoCommonSpan);
        return out;
    }
    // Labels may overhang the signals by up to one frame period.
    let slack = 1.0 / session.sample_rate;
    let (s0, s1) = (
        spans[0].unwrap().0.max(spans[1].unwrap().0),
        spans[0].unwrap().1.min(spans[1].unwrap().1),
    );
    for seg in &session.labels.segments {
        if seg.t_start < s0 - slack || seg.t_end > s1 + slack {
            out.push(Violation::LabelOutsideCoverage {
                t_start: seg.t_start,
                t_end: seg.t_end,
                covered: (s0, s1),
            });
        }
    }
    out
}

fn trailing_number(name: &str) -> Option<u8> {
    let digits: String = name
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Image files of a frame directory, ordered by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png" | "pgm" | "ppm")
            )
        })
        .collect())
}

/// Loads one session directory.
pub fn load_session(dir: &Path, subject_id: &str, session_index: u8, sample_rate: f64) -> Result<SessionRecord> {
    let gaze = parse_gaze_log(&dir.join("gaze.csv"))?.samples;
    let labels = LabelTrack::load(&dir.join("labels.csv"))?;
    let frames_dir = dir.join("frames");
    let flow_csv = dir.join("flow.csv");
    let motion = if flow_csv.is_file() {
        MotionSource::Flows(read_flow_csv(&flow_csv)?)
    } else if frames_dir.is_dir() {
        MotionSource::Frames(list_frames(&frames_dir)?)
    } else {
        return Err(Error::Protocol(format!(
            "{}: neither frames/ nor flow.csv present",
            dir.display()
        )));
    };
    let emb_path = dir.join("embeddings.bin");
    let embeddings = emb_path.is_file().then(|| EmbeddingSet::load(&emb_path)).transpose()?;
    Ok(SessionRecord {
        subject_id: subject_id.to_string(),
        session_index,
        gaze,
        motion,
        embeddings,
        labels,
        sample_rate,
    })
}

/// Loads every `<subject>/<session>` directory below `root`.
pub fn load_dataset(root: &Path, sample_rate: f64) -> Result<Vec<SessionRecord>> {
    let mut sessions = Vec::new();
    for subject_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let subject = subject_dir.file_name().unwrap().to_string_lossy().into_owned();
        for session_dir in sorted_entries(&subject_dir)?.into_iter().filter(|p| p.is_dir()) {
            let name = session_dir.file_name().unwrap().to_string_lossy().into_owned();
            let Some(index) = trailing_number(&name) else {
                log::warn!("skipping {}: no session number", session_dir.display());
                continue;
            };
            sessions.push(load_session(&session_dir, &subject, index, sample_rate)?);
        }
    }
    if sessions.is_empty() {
        return Err(Error::Protocol(format!("{}: no sessions found", root.display())));
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::EMBEDDING_DIM;
    use crate::labels::{ActivityLabel, LabelSegment};
    use crate::motion::FlowEstimate;

    fn consistent() -> SessionRecord {
        let rate = 10.0;
        let gaze = (0..=100).map(|i| GazeSample::new(i as f64 / rate, 320.0, 240.0)).collect();
        let flows = (0..100)
            .map(|i| FlowRecord { frame_index: i, flow: FlowEstimate { dx: 0.0, dy: 0.0, n_points: 10 } })
            .collect();
        SessionRecord {
            subject_id: "s1".into(),
            session_index: 1,
            gaze,
            motion: MotionSource::Flows(flows),
            embeddings: Some(EmbeddingSet::new(EMBEDDING_DIM, vec![0.5; 101 * EMBEDDING_DIM]).unwrap()),
            labels: LabelTrack::new(vec![
                LabelSegment { t_start: 0.0, t_end: 5.0, label: ActivityLabel::Read },
                LabelSegment { t_start: 5.0, t_end: 10.0, label: ActivityLabel::Write },
            ]),
            sample_rate: rate,
        }
    }

    #[test]
    fn consistent_session_has_empty_report() {
        assert_eq!(validate_session(&consistent()), vec![]);
    }

    #[test]
    fn embedding_count_mismatch_names_both_counts() {
        let mut s = consistent();
        s.embeddings = Some(EmbeddingSet::new(EMBEDDING_DIM, vec![0.5; 99 * EMBEDDING_DIM]).unwrap());
        let report = validate_session(&s);
        assert_eq!(report, vec![Violation::EmbeddingCount { embeddings: 99, frames: 101 }]);
        let text = report[0].to_string();
        assert!(text.contains("99") && text.contains("101"));
    }

    #[test]
    fn overlapping_labels_cite_both_segments() {
        let mut s = consistent();
        s.labels.segments[1].t_start = 4.0;
        let report = validate_session(&s);
        assert_eq!(
            report,
            vec![Violation::LabelOverlap { first: (0.0, 5.0), second: (4.0, 10.0) }]
        );
    }

    #[test]
    fn coverage_problems_reported() {
        let mut s = consistent();
        s.labels.segments[1].t_end = 30.0;
        assert!(matches!(validate_session(&s)[..], [Violation::LabelOutsideCoverage { .. }]));
        s.labels.segments.clear();
        assert!(validate_session(&s).contains(&Violation::NoCommonSpan));
    }

    #[test]
    fn session_numbers_from_directory_names() {
        assert_eq!(trailing_number("1"), Some(1));
        assert_eq!(trailing_number("session2"), Some(2));
        assert_eq!(trailing_number("extra"), None);
    }
}

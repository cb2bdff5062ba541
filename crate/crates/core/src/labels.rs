use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::ClassMode;
use crate::error::{Error, Result};

/// Activity classes. The declaration order is the class index order used
/// everywhere (forest votes, confusion matrices, tie breaking).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLabel {
    Read,
    WatchVideo,
    Write,
    CopyText,
    Browse,
    Void,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 6] = [
        ActivityLabel::Read,
        ActivityLabel::WatchVideo,
        ActivityLabel::Write,
        ActivityLabel::CopyText,
        ActivityLabel::Browse,
        ActivityLabel::Void,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityLabel::Read => "read",
            ActivityLabel::WatchVideo => "watch_video",
            ActivityLabel::Write => "write",
            ActivityLabel::CopyText => "copy_text",
            ActivityLabel::Browse => "browse",
            ActivityLabel::Void => "void",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// The ordered classes active in a class mode.
    pub fn classes(mode: ClassMode) -> &'static [ActivityLabel] {
        &Self::ALL[..mode.n_classes()]
    }

    pub fn allowed_in(self, mode: ClassMode) -> bool {
        self != ActivityLabel::Void || mode == ClassMode::Six
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown activity label {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub label: ActivityLabel,
}

impl LabelSegment {
    pub fn overlap(&self, start: f64, end: f64) -> f64 {
        (self.t_end.min(end) - self.t_start.max(start)).max(0.0)
    }
}

/// Activity annotation of one session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelTrack {
    pub segments: Vec<LabelSegment>,
}

impl LabelTrack {
    pub fn new(segments: Vec<LabelSegment>) -> Self {
        Self { segments }
    }

    /// Pairs of segment indices that overlap, in sorted order.
    pub fn overlaps(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.segments.len()).collect();
        order.sort_by(|&a, &b| self.segments[a].t_start.total_cmp(&self.segments[b].t_start));
        let mut out = Vec::new();
        for (k, &i) in order.iter().enumerate() {
            for &j in &order[k + 1..] {
                if self.segments[j].t_start >= self.segments[i].t_end {
                    break;
                }
                out.push((i.min(j), i.max(j)));
            }
        }
        out
    }

    /// Time covered by each label inside `[start, end)`, indexed by class index.
    pub fn coverage(&self, start: f64, end: f64) -> [f64; 6] {
        let mut cov = [0.0; 6];
        for seg in &self.segments {
            cov[seg.label.index()] += seg.overlap(start, end);
        }
        cov
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        let first = self.segments.iter().map(|s| s.t_start).reduce(f64::min)?;
        let last = self.segments.iter().map(|s| s.t_end).reduce(f64::max)?;
        Some((first, last))
    }

    pub fn parse<R: Read>(reader: R, path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t_start: f64,
            t_end: f64,
            label: String,
        }

        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_start", "t_end", "label"] {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: "expected header t_start,t_end,label".into(),
            });
        }
        let mut segments = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| csv_error(path, e))?;
            let line = segments.len() as u64 + 2;
            let label = row.label.parse().map_err(|message| Error::Parse {
                path: path.into(),
                line,
                message,
            })?;
            if !(row.t_start < row.t_end) {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message: format!("t_start {} is not before t_end {}", row.t_start, row.t_end),
                });
            }
            segments.push(LabelSegment {
                t_start: row.t_start,
                t_end: row.t_end,
                label,
            });
        }
        segments.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        Ok(Self { segments })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file, path)
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.into(),
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_strings_round_trip() {
        for l in ActivityLabel::ALL {
            assert_eq!(l.as_str().parse::<ActivityLabel>().unwrap(), l);
            assert_eq!(ActivityLabel::from_index(l.index()), Some(l));
        }
        assert!("Read".parse::<ActivityLabel>().is_err());
    }

    #[test]
    fn void_only_in_six_class_mode() {
        assert!(!ActivityLabel::Void.allowed_in(ClassMode::Five));
        assert!(ActivityLabel::Void.allowed_in(ClassMode::Six));
        assert_eq!(ActivityLabel::classes(ClassMode::Five).len(), 5);
        assert!(!ActivityLabel::classes(ClassMode::Five).contains(&ActivityLabel::Void));
    }

    #[test]
    fn parses_label_csv() {
        let text = "t_start,t_end,label\n30,150,write\n0,30,void\n";
        let track = LabelTrack::parse(text.as_bytes(), Path::new("labels.csv")).unwrap();
        assert_eq!(track.segments.len(), 2);
        assert_eq!(track.segments[0].label, ActivityLabel::Void);
        assert_eq!(track.span(), Some((0.0, 150.0)));
        assert!(track.overlaps().is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_label = "t_start,t_end,label\n0,1,sleep\n";
        let err = LabelTrack::parse(bad_label.as_bytes(), Path::new("l.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let inverted = "t_start,t_end,label\n0,1,read\n5,4,read\n";
        let err = LabelTrack::parse(inverted.as_bytes(), Path::new("l.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn overlap_detection() {
        let track = LabelTrack::new(vec![
            LabelSegment { t_start: 0.0, t_end: 10.0, label: ActivityLabel::Read },
            LabelSegment { t_start: 9.0, t_end: 20.0, label: ActivityLabel::Write },
            LabelSegment { t_start: 20.0, t_end: 30.0, label: ActivityLabel::Browse },
        ]);
        assert_eq!(track.overlaps(), vec![(0, 1)]);
        let cov = track.coverage(5.0, 25.0);
        assert_eq!(cov[ActivityLabel::Read.index()], 5.0);
        assert_eq!(cov[ActivityLabel::Write.index()], 11.0);
        assert_eq!(cov[ActivityLabel::Browse.index()], 5.0);
    }
}

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use gaze_act::gaze::write_gaze_csv;
use gaze_act::motion::write_flow_csv;
use gaze_act::session::{MotionSource, SessionRecord};

/// Writes sessions as `<root>/<subject>/session<N>/...`.
pub fn write_dataset(root: &Path, sessions: &[SessionRecord]) {
    for s in sessions {
        let dir = root.join(&s.subject_id).join(format!("session{}", s.session_index));
        fs::create_dir_all(&dir).unwrap();
        write_gaze_csv(&s.gaze, fs::File::create(dir.join("gaze.csv")).unwrap()).unwrap();
        let mut labels = String::from("t_start,t_end,label\n");
        for seg in &s.labels.segments {
            labels.push_str(&format!("{},{},{}\n", seg.t_start, seg.t_end, seg.label));
        }
        fs::write(dir.join("labels.csv"), labels).unwrap();
        match &s.motion {
            MotionSource::Flows(f) => write_flow_csv(f, fs::File::create(dir.join("flow.csv")).unwrap()).unwrap(),
            MotionSource::Frames(_) => panic!("only flow sessions are written"),
        }
        if let Some(e) = &s.embeddings {
            e.save(&dir.join("embeddings.bin")).unwrap();
        }
    }
}

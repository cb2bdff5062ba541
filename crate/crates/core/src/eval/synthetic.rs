//! Synthetic sessions with three separable activity regimes.
//!
//! Each regime differs in every channel: gaze saccade pattern, head-motion
//! pattern and which visual words dominate. Running the two-fold protocol on
//! them exercises the whole pipeline without a recorded dataset.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::protocol::{run_two_fold, EvalReport};
use crate::config::{ClassMode, PipelineConfig};
use crate::embeddings::{EmbeddingSet, EMBEDDING_DIM};
use crate::error::Result;
use crate::gaze::{repair_gaps, GazeSample};
use crate::labels::{ActivityLabel, LabelSegment, LabelTrack};
use crate::motion::{FlowEstimate, FlowRecord};
use crate::session::{MotionSource, SessionRecord};
use crate::window::Channels;

/// The three simulated activities.
pub const SYNTHETIC_ACTIVITIES: [ActivityLabel; 3] = [ActivityLabel::Read, ActivityLabel::Write, ActivityLabel::Browse];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub subjects: usize,
    /// Length of each activity segment.
    pub activity_seconds: f64,
    pub frame_rate: f64,
    pub gaze_rate: f64,
    pub k_visual_words: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { subjects: 3, activity_seconds: 45.0, frame_rate: 10.0, gaze_rate: 30.0, k_visual_words: 15 }
    }
}

/// Configuration the self-test runs with.
pub fn selftest_config(spec: &SyntheticSpec, seed: u64) -> PipelineConfig {
    PipelineConfig {
        frame_rate: spec.frame_rate,
        k_visual_words: spec.k_visual_words,
        n_trees: 100,
        rng_seed: seed,
        class_mode: ClassMode::Five,
        ..PipelineConfig::default()
    }
}

/// Thresholds so large that every gaze and motion symbol is the rest symbol.
pub fn degenerate_config(spec: &SyntheticSpec, seed: u64) -> PipelineConfig {
    let (small, large) = (1e12 - 1.0, 1e12);
    PipelineConfig {
        tau_small: Some(small),
        tau_large: Some(large),
        motion_tau_small: Some(small),
        motion_tau_large: Some(large),
        ..selftest_config(spec, seed)
    }
}

/// Gaze for `n` samples of one activity, continuing from `pos`.
fn gaze_regime(activity: usize, n: usize, rate: f64, gain: f64, pos: &mut [f64; 2], rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let jitter = Normal::new(0.0, 1.0).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut next_jump = 0usize;
    let mut fixation = *pos;
    let mut words_on_line = 0;
    for i in 0..n {
        match activity {
            // Reading: short rightward saccades, a long return sweep per line.
            0 => {
                if i >= next_jump {
                    if words_on_line >= 12 {
                        fixation = [100.0, fixation[1] + 20.0 * gain];
                        if fixation[1] > 400.0 {
                            fixation[1] = 100.0;
                        }
                        words_on_line = 0;
                    } else {
                        fixation[0] += 25.0 * gain;
                        words_on_line += 1;
                    }
                    next_jump = i + (rate * rng.random_range(0.2..0.35)) as usize;
                }
            }
            // Writing: slow pursuit of the pen with small tremor.
            1 => {
                fixation[0] += 12.0 * gain / rate;
                if fixation[0] > 500.0 {
                    fixation = [150.0, 150.0 + rng.random_range(0.0..200.0)];
                }
            }
            // Browsing: large saccades anywhere on the page.
            _ => {
                if i >= next_jump {
                    fixation = [
                        320.0 + gain * rng.random_range(-250.0..250.0),
                        240.0 + gain * rng.random_range(-200.0..200.0),
                    ];
                    next_jump = i + (rate * rng.random_range(0.4..1.0)) as usize;
                }
            }
        }
        out.push([fixation[0] + jitter.sample(rng), fixation[1] + jitter.sample(rng)]);
    }
    *pos = fixation;
    out
}

/// Head motion in pixels per frame for `n` frame pairs of one activity.
fn flow_regime(activity: usize, n: usize, rate: f64, gain: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let noise = Normal::new(0.0, 0.15).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut pan_left = 0usize;
    let mut pan_dir = 1.0;
    for i in 0..n {
        let t = i as f64 / rate;
        let base = match activity {
            0 => [0.0, 0.0],
            // Nodding between page and pen.
            1 => [0.0, 0.8 * gain * (std::f64::consts::TAU * t / 3.0).sin()],
            _ => {
                if pan_left == 0 && rng.random_bool(1.0 / (2.5 * rate)) {
                    pan_left = (0.5 * rate) as usize;
                    pan_dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                }
                if pan_left > 0 {
                    pan_left -= 1;
                    [4.0 * gain * pan_dir, 0.5 * gain]
                } else {
                    [0.0, 0.0]
                }
            }
        };
        out.push([base[0] + noise.sample(rng), base[1] + noise.sample(rng)]);
    }
    out
}

/// One session with the three activities in a shuffled order.
fn synthetic_session(
    spec: &SyntheticSpec,
    prototypes: &[Vec<f32>],
    subject: usize,
    session: u8,
    seed: u64,
) -> SessionRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((subject as u64) << 8 | session as u64);
    // Subjects differ in how large their movements are.
    let gain = {
        let mut subject_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        subject_rng.set_stream(subject as u64);
        subject_rng.random_range(0.8..1.2)
    };

    let mut order = [0usize, 1, 2];
    order.shuffle(&mut rng);
    let total = spec.activity_seconds * 3.0;
    let n_gaze = (total * spec.gaze_rate).round() as usize + 1;
    let n_frames = (total * spec.frame_rate).round() as usize + 1;
    let segment_of = |t: f64| order[((t / spec.activity_seconds) as usize).min(2)];

    // Gaze, generated segment by segment so patterns stay continuous.
    let mut gaze = Vec::with_capacity(n_gaze);
    let mut pos = [100.0, 100.0];
    let mut start = 0;
    for (k, &a) in order.iter().enumerate() {
        let end = if k == 2 { n_gaze } else { ((k + 1) as f64 * spec.activity_seconds * spec.gaze_rate).round() as usize };
        for (j, xy) in gaze_regime(a, end - start, spec.gaze_rate, gain, &mut pos, &mut rng).into_iter().enumerate() {
            gaze.push(GazeSample::new((start + j) as f64 / spec.gaze_rate, xy[0], xy[1]));
        }
        start = end;
    }
    // Short tracker dropouts, repaired the same way as recorded logs.
    let mut i = 1;
    while i + 4 < gaze.len() {
        if rng.random_bool(0.005) {
            for g in &mut gaze[i..i + 3] {
                g.valid = false;
                g.x = 0.0;
                g.y = 0.0;
            }
            i += 3;
        }
        i += 1;
    }
    repair_gaps(&mut gaze);

    let mut flows = Vec::with_capacity(n_frames - 1);
    let mut start = 0;
    for (k, &a) in order.iter().enumerate() {
        let end = if k == 2 { n_frames - 1 } else { ((k + 1) as f64 * spec.activity_seconds * spec.frame_rate).round() as usize };
        for (j, d) in flow_regime(a, end - start, spec.frame_rate, gain, &mut rng).into_iter().enumerate() {
            flows.push(FlowRecord { frame_index: start + j, flow: FlowEstimate { dx: d[0], dy: d[1], n_points: 50 } });
        }
        start = end;
    }

    // Each activity favours its own block of visual words.
    let k = prototypes.len();
    let block = k / 3;
    let mut values = Vec::with_capacity(n_frames * EMBEDDING_DIM);
    for f in 0..n_frames {
        let a = segment_of(f as f64 / spec.frame_rate);
        let word = if rng.random_bool(0.85) { a * block + rng.random_range(0..block) } else { rng.random_range(0..k) };
        values.extend(prototypes[word].iter().map(|&p| (p + rng.random_range(-0.15f32..0.15)).max(0.0)));
    }
    let mut embeddings = EmbeddingSet::new(EMBEDDING_DIM, values).expect("whole frames");
    embeddings.comment = "synthetic".into();

    let segments = order
        .iter()
        .enumerate()
        .map(|(k, &a)| LabelSegment {
            t_start: k as f64 * spec.activity_seconds,
            t_end: (k + 1) as f64 * spec.activity_seconds,
            label: SYNTHETIC_ACTIVITIES[a],
        })
        .collect();

    SessionRecord {
        subject_id: format!("s{:02}", subject + 1),
        session_index: session,
        gaze,
        motion: MotionSource::Flows(flows),
        embeddings: Some(embeddings),
        labels: LabelTrack::new(segments),
        sample_rate: spec.frame_rate,
    }
}

/// Two sessions per subject, deterministic in `seed`.
pub fn synthetic_sessions(spec: &SyntheticSpec, seed: u64) -> Vec<SessionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f32>> = (0..spec.k_visual_words)
        .map(|_| (0..EMBEDDING_DIM).map(|_| rng.random_range(0.0f32..1.0)).collect())
        .collect();
    let jobs: Vec<(usize, u8)> = (0..spec.subjects).flat_map(|s| [(s, 1), (s, 2)]).collect();
    jobs.par_iter().map(|&(s, i)| synthetic_session(spec, &prototypes, s, i, seed)).collect()
}

/// Generates synthetic sessions and runs the two-fold protocol on all channels.
pub fn run_synthetic_selftest(seed: u64) -> Result<EvalReport> {
    let spec = SyntheticSpec::default();
    let mut report = run_two_fold(&synthetic_sessions(&spec, seed), &selftest_config(&spec, seed), Channels::ALL)?;
    // Published numbers describe a recorded dataset, not this one.
    report.reference_accuracy = None;
    report.reference_delta = None;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::validate_session;

    #[test]
    fn sessions_are_consistent_and_reproducible() {
        let spec = SyntheticSpec { subjects: 1, activity_seconds: 30.0, ..SyntheticSpec::default() };
        let a = synthetic_sessions(&spec, 3);
        assert_eq!(a.len(), 2);
        for s in &a {
            assert!(validate_session(s).is_empty(), "{:?}", validate_session(s));
            assert_eq!(s.labels.segments.len(), 3);
        }
        let b = synthetic_sessions(&spec, 3);
        assert_eq!(a[0].gaze, b[0].gaze);
        assert_eq!(a[1].embeddings, b[1].embeddings);
    }
}

mod common;

use gaze_act::encoding::MotionSymbol;
use gaze_act::eval::protocol::{
    featurize, fit_encoders, prepare_session, prepare_sessions, run_fold, run_two_fold, run_two_fold_prepared,
    two_fold_specs, PreparedSession,
};
use gaze_act::eval::synthetic::{degenerate_config, selftest_config, synthetic_sessions, SyntheticSpec};
use gaze_act::gaze::{write_gaze_csv, GazeSample};
use gaze_act::session::{load_dataset, load_session, MotionSource, SessionKey};
use gaze_act::vocab::fit_kmeans;
use gaze_act::window::Channels;
use gaze_act::{ActivityLabel, Error, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> (SyntheticSpec, PipelineConfig) {
    let spec = SyntheticSpec { subjects: 2, activity_seconds: 35.0, ..SyntheticSpec::default() };
    let mut config = selftest_config(&spec, 3);
    config.n_trees = 40;
    (spec, config)
}

#[test]
fn degenerate_thresholds_leave_motion_channels_at_chance() {
    let spec = SyntheticSpec::default();
    let sessions = synthetic_sessions(&spec, 0);
    let config = degenerate_config(&spec, 0);
    let report = run_two_fold(&sessions, &config, Channels::MOTION).unwrap();
    assert!(report.overall_accuracy <= 0.5, "accuracy {}", report.overall_accuracy);

    let prepared = prepare_sessions(&sessions, &config).unwrap();
    let train: Vec<&PreparedSession> = prepared.iter().filter(|p| p.session.session_index == 1).collect();
    let enc = fit_encoders(&train, &config, Channels::MOTION).unwrap();
    let rest = MotionSymbol::REST.code() as usize;
    for w in featurize(&prepared[0], &enc, &config, Channels::MOTION).unwrap().windows {
        for block in [w.feature.eye.unwrap(), w.feature.ego.unwrap()] {
            assert_eq!(block[rest], 1.0);
        }
    }
}

#[test]
fn fusion_keeps_single_channel_information() {
    let spec = SyntheticSpec::default();
    let sessions = synthetic_sessions(&spec, 0);
    let config = selftest_config(&spec, 0);
    let prepared = prepare_sessions(&sessions, &config).unwrap();
    let acc = |ch: &str| run_two_fold_prepared(&prepared, &config, ch.parse().unwrap()).unwrap().overall_accuracy;
    let combined = acc("eye,ego,visual");
    let best_single = ["eye", "ego", "visual"].map(acc).into_iter().fold(0.0, f64::max);
    assert!(combined >= best_single - 0.02, "combined {combined} vs best single {best_single}");
}

/// Linear-interpolation percentile, written out independently of the library.
fn percentile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let i = pos as usize;
    if i + 1 >= v.len() {
        return v[i];
    }
    v[i] * (1.0 - (pos - i as f64)) + v[i + 1] * (pos - i as f64)
}

#[test]
fn learned_statistics_use_training_sessions_only() {
    let (spec, config) = small();
    let sessions = synthetic_sessions(&spec, 5);
    let prepared = prepare_sessions(&sessions, &config).unwrap();
    let keys: Vec<SessionKey> = prepared.iter().map(PreparedSession::key).collect();
    let [fold_a, _] = two_fold_specs(&keys).unwrap();
    let train: Vec<&PreparedSession> = prepared.iter().filter(|p| fold_a.train_sessions.contains(&p.key())).collect();
    assert!(train.iter().all(|p| p.session.session_index == 1));

    let mags = |ps: &[&PreparedSession]| -> Vec<f64> {
        ps.iter().flat_map(|p| p.gaze_coeffs.0.iter().chain(&p.gaze_coeffs.1).map(|c| c.abs())).collect()
    };
    let (small, large) = (percentile(mags(&train), 0.5), percentile(mags(&train), 0.9));
    let outcome = run_fold(&prepared, &fold_a, &config, Channels::ALL).unwrap();
    let th = outcome.detail.gaze_thresholds;
    assert!((th.small - small).abs() <= 1e-12 * small && (th.large - large).abs() <= 1e-12 * large);

    // Would the test notice leakage? Thresholds over all sessions differ.
    let all: Vec<&PreparedSession> = prepared.iter().collect();
    assert_ne!(percentile(mags(&all), 0.9), large);

    let mut data = Vec::new();
    for p in &train {
        data.extend_from_slice(&p.session.embeddings.as_ref().unwrap().values);
    }
    let expected = fit_kmeans(&data, 4096, config.k_visual_words, config.rng_seed, config.kmeans_max_iter).unwrap();
    let enc = fit_encoders(&train, &config, Channels::ALL).unwrap();
    assert_eq!(enc.vocab.unwrap().centers, expected.centers);
    assert!(outcome.subjects.len() == outcome.truth.len() && outcome.detail.n_test_windows == outcome.truth.len());
}

#[test]
fn report_pools_folds_consistently() {
    let (spec, config) = small();
    let report = run_two_fold(&synthetic_sessions(&spec, 8), &config, Channels::ALL).unwrap();
    assert_eq!(report.folds.len(), 2);
    let mean = (report.folds[0].accuracy + report.folds[1].accuracy) / 2.0;
    assert!((report.overall_accuracy - mean).abs() <= 1e-12);
    assert_eq!(report.per_subject_accuracy.keys().cloned().collect::<Vec<_>>(), vec!["s01", "s02"]);
    let total: u64 = report.confusion.counts.iter().flatten().sum();
    assert_eq!(total as usize, report.folds.iter().map(|f| f.n_test_windows).sum::<usize>());
    assert_eq!(report.classes, ActivityLabel::classes(config.class_mode));
    assert_eq!(report.reference_accuracy, Some(0.8565));
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["feature_dimension"], 65);
    assert_eq!(json["class_mode"], 5);
}

#[test]
fn missing_session_is_a_protocol_error() {
    let (spec, config) = small();
    let mut sessions = synthetic_sessions(&spec, 1);
    sessions.retain(|s| !(s.subject_id == "s02" && s.session_index == 2));
    let err = run_two_fold(&sessions, &config, Channels::ALL).unwrap_err();
    assert!(matches!(&err, Error::Protocol(m) if m.contains("s02")), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn inconsistent_session_is_rejected() {
    let (spec, config) = small();
    let mut sessions = synthetic_sessions(&spec, 1);
    let emb = sessions[0].embeddings.as_mut().unwrap();
    emb.values.truncate(emb.values.len() - emb.dim);
    let err = prepare_session(&sessions[0], &config).unwrap_err();
    assert!(matches!(&err, Error::Session { subject, .. } if subject == "s01"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn dataset_on_disk_matches_memory() {
    let (spec, config) = small();
    let sessions = synthetic_sessions(&spec, 2);
    let dir = tempfile::tempdir().unwrap();
    common::write_dataset(dir.path(), &sessions);
    let loaded = load_dataset(dir.path(), config.frame_rate).unwrap();
    assert_eq!(loaded.len(), sessions.len());
    let a = run_two_fold(&sessions, &config, Channels::MOTION).unwrap();
    let b = run_two_fold(&loaded, &config, Channels::MOTION).unwrap();
    assert_eq!(a, b);
}

#[test]
fn frame_directory_yields_ego_motion() {
    // A smooth texture panned one pixel right per frame.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (w, h, n) = (96u32, 72u32, 8u32);
    let grid: Vec<f64> = (0..40 * 40).map(|_| rng.random_range(0.0..255.0)).collect();
    let tex = |x: f64, y: f64| {
        let (gx, gy) = (x / 6.0, y / 6.0);
        let (i, j) = (gx as usize, gy as usize);
        let (u, v) = (gx.fract(), gy.fract());
        let g = |i: usize, j: usize| grid[j * 40 + i];
        (1.0 - v) * ((1.0 - u) * g(i, j) + u * g(i + 1, j)) + v * ((1.0 - u) * g(i, j + 1) + u * g(i + 1, j + 1))
    };
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    for k in 0..n {
        let img = image::GrayImage::from_fn(w, h, |x, y| image::Luma([tex((x + 20 - k) as f64, (y + 20) as f64).round() as u8]));
        img.save(frames.join(format!("{k:04}.png"))).unwrap();
    }
    let rate = 10.0;
    let gaze: Vec<GazeSample> = (0..n).map(|i| GazeSample::new(i as f64 / rate, 40.0, 30.0)).collect();
    write_gaze_csv(&gaze, std::fs::File::create(dir.path().join("gaze.csv")).unwrap()).unwrap();
    std::fs::write(dir.path().join("labels.csv"), "t_start,t_end,label\n0,0.7,read\n").unwrap();

    let session = load_session(dir.path(), "s", 1, rate).unwrap();
    assert!(matches!(&session.motion, MotionSource::Frames(p) if p.len() == n as usize));
    let config = PipelineConfig { frame_rate: rate, max_corners: 40, corner_min_distance: 5.0, ..PipelineConfig::default() };
    let prep = prepare_session(&session, &config).unwrap();
    assert_eq!(prep.flows.len(), n as usize - 1);
    for f in &prep.flows {
        assert!(f.flow.n_points > 0);
        assert!((f.flow.dx - 1.0).abs() < 0.1 && f.flow.dy.abs() < 0.1, "{:?}", f.flow);
    }
    assert_eq!(prep.flagged_flows(), 0);
}

#[test]
fn visual_channel_requires_embeddings() {
    let (spec, config) = small();
    let mut sessions = synthetic_sessions(&spec, 1);
    for s in &mut sessions {
        s.embeddings = None;
    }
    assert!(run_two_fold(&sessions, &config, Channels::VISUAL).is_err());
    assert!(run_two_fold(&sessions, &config, Channels::MOTION).is_ok());
}

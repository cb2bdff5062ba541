//! Two-fold session-swap evaluation.
//!
//! Fold A trains on every subject's first session and tests on the second;
//! fold B swaps them. Everything learned from data (quantization thresholds,
//! the visual vocabulary and the forest) is fit on the training sessions of
//! the fold only.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion_matrix, mean_average_precision, ConfusionMatrix};
use crate::config::{ClassMode, PipelineConfig};
use crate::encoding::{axis_coefficients, MotionSymbol, Thresholds, N_SYMBOLS};
use crate::error::{Error, Result};
use crate::forest::{train_forest, ForestModel, ForestParams};
use crate::gaze::resample_gaze;
use crate::labels::ActivityLabel;
use crate::motion::{flows_from_paths, motion_coefficients, FlowRecord, TrackerParams};
use crate::session::{validate_session, MotionSource, SessionKey, SessionRecord, Violation};
use crate::vocab::{fit_kmeans, VocabModel};
use crate::window::{fuse, label_windows, window_histogram, Channels, DropReason, LabeledWindow, TimedSymbol};

/// Sessions used for training and testing in one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub name: String,
    pub train_sessions: Vec<SessionKey>,
    pub test_sessions: Vec<SessionKey>,
}

impl FoldSpec {
    fn check(&self) -> Result<()> {
        if self.train_sessions.is_empty() || self.test_sessions.is_empty() {
            return Err(Error::Protocol(format!("fold {} has an empty side", self.name)));
        }
        if let Some(k) = self.train_sessions.iter().find(|k| self.test_sessions.contains(k)) {
            return Err(Error::Protocol(format!(
                "fold {}: session {}/{} is in both train and test",
                self.name, k.0, k.1
            )));
        }
        Ok(())
    }
}

/// The session-1/session-2 swap over every subject.
///
/// Fails with a protocol error naming the first subject that lacks either
/// session. Sessions numbered above 2 are ignored.
pub fn two_fold_specs<'a>(keys: impl IntoIterator<Item = &'a SessionKey>) -> Result<[FoldSpec; 2]> {
    let mut by_subject: BTreeMap<&str, BTreeSet<u8>> = BTreeMap::new();
    for (subject, idx) in keys {
        by_subject.entry(subject).or_default().insert(*idx);
    }
    if by_subject.is_empty() {
        return Err(Error::Protocol("no sessions".into()));
    }
    for (subject, sessions) in &by_subject {
        for needed in [1, 2] {
            if !sessions.contains(&needed) {
                return Err(Error::Protocol(format!("subject {subject} has no session {needed}")));
            }
        }
        if let Some(extra) = sessions.iter().find(|&&s| s > 2) {
            log::warn!("subject {subject}: session {extra} is not part of the two-fold protocol");
        }
    }
    let side = |i: u8| by_subject.keys().map(|s| (s.to_string(), i)).collect::<Vec<_>>();
    Ok([
        FoldSpec { name: "A".into(), train_sessions: side(1), test_sessions: side(2) },
        FoldSpec { name: "B".into(), train_sessions: side(2), test_sessions: side(1) },
    ])
}

/// Per-session signals that do not depend on training data.
///
/// Flow estimation and wavelet transforms are the expensive steps, so they are
/// done once and shared by both folds and every channel subset.
#[derive(Debug, Clone)]
pub struct PreparedSession<'a> {
    pub session: &'a SessionRecord,
    /// Gaze resampled onto the video clock.
    pub gaze_times: Vec<f64>,
    pub gaze_coeffs: (Vec<f64>, Vec<f64>),
    /// Time of the first frame of each flow pair.
    pub flow_times: Vec<f64>,
    pub flows: Vec<FlowRecord>,
    pub motion_coeffs: (Vec<f64>, Vec<f64>),
    /// Interval covered by gaze, frames and labels.
    pub span: (f64, f64),
}

impl PreparedSession<'_> {
    pub fn key(&self) -> SessionKey {
        self.session.key()
    }

    /// Frames whose ego-motion had no surviving track.
    pub fn flagged_flows(&self) -> usize {
        self.flows.iter().filter(|f| f.flow.is_flagged()).count()
    }
}

fn session_error(s: &SessionRecord, message: impl Into<String>) -> Error {
    Error::Session { subject: s.subject_id.clone(), session: s.session_index, message: message.into() }
}

pub fn prepare_session<'a>(session: &'a SessionRecord, config: &PipelineConfig) -> Result<PreparedSession<'a>> {
    let mut fatal = Vec::new();
    for v in validate_session(session) {
        match v {
            Violation::LabelOutsideCoverage { .. } => log::warn!("{}/{}: {v}", session.subject_id, session.session_index),
            _ => fatal.push(v.to_string()),
        }
    }
    if !fatal.is_empty() {
        return Err(session_error(session, fatal.join("; ")));
    }

    let rate = session.sample_rate;
    let gaze = resample_gaze(&session.gaze, rate)?;
    let gaze_times: Vec<f64> = gaze.iter().map(|g| g.t).collect();
    let xs: Vec<f64> = gaze.iter().map(|g| g.x).collect();
    let ys: Vec<f64> = gaze.iter().map(|g| g.y).collect();
    let (cx, cy) = axis_coefficients(&xs, &ys, config.median_filter_width, config.wavelet_scale)?;

    let flows = match &session.motion {
        MotionSource::Flows(f) => f.clone(),
        MotionSource::Frames(paths) => flows_from_paths(paths, &TrackerParams::from(config))?,
    };
    if flows.is_empty() {
        return Err(session_error(session, "ego-motion needs at least 2 frames"));
    }
    let flow_times = flows.iter().map(|f| f.frame_index as f64 / rate).collect();
    let motion_coeffs = motion_coefficients(&flows, config)?;

    // validate_session guarantees all three spans exist and intersect.
    let spans = [session.gaze_span(), session.frame_span(), session.labels.span()];
    let lo = spans.iter().flatten().map(|s| s.0).fold(f64::MIN, f64::max);
    let hi = spans.iter().flatten().map(|s| s.1).fold(f64::MAX, f64::min);

    Ok(PreparedSession {
        session,
        gaze_times,
        gaze_coeffs: (cx.values, cy.values),
        flow_times,
        flows,
        motion_coeffs,
        span: (lo, hi),
    })
}

/// Prepares sessions concurrently, keeping input order.
pub fn prepare_sessions<'a>(sessions: &'a [SessionRecord], config: &PipelineConfig) -> Result<Vec<PreparedSession<'a>>> {
    sessions.par_iter().map(|s| prepare_session(s, config)).collect()
}

/// Everything fit on training data before featurization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEncoders {
    pub gaze: Thresholds,
    pub motion: Thresholds,
    /// Present when the visual channel is in use.
    #[serde(skip)]
    pub vocab: Option<VocabModel>,
}

fn pooled_thresholds<'a>(
    configured: (Option<f64>, Option<f64>),
    coeffs: impl Iterator<Item = &'a (Vec<f64>, Vec<f64>)>,
) -> Result<Thresholds> {
    match configured {
        (Some(s), Some(l)) => Thresholds::new(s, l),
        (None, None) => Thresholds::from_coefficients(coeffs.flat_map(|(x, y)| x.iter().chain(y))),
        _ => Err(Error::param("set both thresholds of a channel or neither")),
    }
}

/// Fits thresholds (unless configured) and, for the visual channel, the vocabulary.
pub fn fit_encoders(train: &[&PreparedSession], config: &PipelineConfig, channels: Channels) -> Result<FittedEncoders> {
    if train.is_empty() {
        return Err(Error::InsufficientData("no training sessions".into()));
    }
    let gaze = pooled_thresholds((config.tau_small, config.tau_large), train.iter().map(|p| &p.gaze_coeffs))?;
    let motion = pooled_thresholds(
        (config.motion_tau_small, config.motion_tau_large),
        train.iter().map(|p| &p.motion_coeffs),
    )?;
    let vocab = if channels.visual {
        let mut data = Vec::new();
        let mut dim = 0;
        for p in train {
            let emb = p.session.embeddings.as_ref().ok_or_else(|| session_error(p.session, "visual channel needs embeddings"))?;
            dim = emb.dim;
            data.extend_from_slice(&emb.values);
        }
        Some(fit_kmeans(&data, dim, config.k_visual_words, config.rng_seed, config.kmeans_max_iter)?)
    } else {
        None
    };
    Ok(FittedEncoders { gaze, motion, vocab })
}

fn symbol_stream(times: &[f64], coeffs: &(Vec<f64>, Vec<f64>), th: &Thresholds) -> Vec<TimedSymbol> {
    times
        .iter()
        .zip(coeffs.0.iter().zip(&coeffs.1))
        .map(|(&t, (&x, &y))| TimedSymbol {
            t,
            symbol: MotionSymbol::from_levels(th.level(x), th.level(y)).code() as usize,
        })
        .collect()
}

/// Labeled windows of one session plus what was left out.
#[derive(Debug, Clone)]
pub struct Featurized {
    pub windows: Vec<LabeledWindow>,
    pub dropped: Vec<(f64, DropReason)>,
}

/// Windowed, fused and labeled features of a prepared session.
pub fn featurize(
    prep: &PreparedSession,
    enc: &FittedEncoders,
    config: &PipelineConfig,
    channels: Channels,
) -> Result<Featurized> {
    if !(channels.eye || channels.ego || channels.visual) {
        return Err(Error::param("no channel selected"));
    }
    let s = prep.session;
    let (w, stride) = (config.window_seconds, config.stride_seconds);
    if prep.span.1 - prep.span.0 < w {
        return Err(session_error(s, format!("shorter than one {w} s window")));
    }
    let eye = channels
        .eye
        .then(|| window_histogram(&symbol_stream(&prep.gaze_times, &prep.gaze_coeffs, &enc.gaze), N_SYMBOLS, w, stride, prep.span))
        .transpose()?;
    let ego = channels
        .ego
        .then(|| window_histogram(&symbol_stream(&prep.flow_times, &prep.motion_coeffs, &enc.motion), N_SYMBOLS, w, stride, prep.span))
        .transpose()?;
    let visual = if channels.visual {
        let vocab = enc.vocab.as_ref().ok_or_else(|| Error::param("visual channel selected without a vocabulary"))?;
        let emb = s.embeddings.as_ref().ok_or_else(|| session_error(s, "visual channel needs embeddings"))?;
        let words = vocab.assign_all(&emb.values)?;
        let stream: Vec<TimedSymbol> = words
            .into_iter()
            .enumerate()
            .map(|(i, symbol)| TimedSymbol { t: i as f64 / s.sample_rate, symbol })
            .collect();
        Some(window_histogram(&stream, vocab.k, w, stride, prep.span)?)
    } else {
        None
    };

    let n = [&eye, &ego, &visual].into_iter().flatten().map(Vec::len).next().unwrap_or(0);
    let features = (0..n)
        .map(|i| {
            fuse(
                eye.as_ref().map(|h| &h[i]),
                ego.as_ref().map(|h| &h[i]),
                visual.as_ref().map(|h| &h[i]),
                stride,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let (windows, dropped) = label_windows(features, &s.labels, w, config.class_mode, &s.subject_id, s.session_index);
    Ok(Featurized { windows, dropped })
}

/// Forest settings taken from the pipeline configuration.
pub fn forest_params(config: &PipelineConfig) -> ForestParams {
    ForestParams { n_trees: config.n_trees, mtry: config.mtry, seed: config.rng_seed, ..ForestParams::default() }
}

/// Per-fold results kept in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDetail {
    pub spec: FoldSpec,
    pub accuracy: f64,
    pub mean_average_precision: f64,
    pub n_train_windows: usize,
    pub n_test_windows: usize,
    /// Windows where some channel had no symbol.
    pub n_flagged_windows: usize,
    pub n_dropped_windows: usize,
    pub oob_error: f64,
    pub gaze_thresholds: Thresholds,
    pub motion_thresholds: Thresholds,
}

/// Test-set outcome of one fold, before pooling.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub detail: FoldDetail,
    pub truth: Vec<ActivityLabel>,
    pub predicted: Vec<ActivityLabel>,
    /// Vote fractions over the mode's class list.
    pub scores: Vec<Vec<f64>>,
    pub subjects: Vec<String>,
    pub model: ForestModel,
}

/// Trains on the fold's training sessions and scores its test sessions.
pub fn run_fold(
    prepared: &[PreparedSession],
    spec: &FoldSpec,
    config: &PipelineConfig,
    channels: Channels,
) -> Result<FoldOutcome> {
    spec.check()?;
    let pick = |keys: &[SessionKey]| -> Result<Vec<&PreparedSession>> {
        keys.iter()
            .map(|k| {
                prepared
                    .iter()
                    .find(|p| &p.key() == k)
                    .ok_or_else(|| Error::Protocol(format!("subject {} has no session {}", k.0, k.1)))
            })
            .collect()
    };
    let train = pick(&spec.train_sessions)?;
    let test = pick(&spec.test_sessions)?;
    let enc = fit_encoders(&train, config, channels)?;

    let featurize_all = |sessions: &[&PreparedSession]| -> Result<Vec<Featurized>> {
        sessions.par_iter().map(|p| featurize(p, &enc, config, channels)).collect()
    };
    let train_f = featurize_all(&train)?;
    let test_f = featurize_all(&test)?;
    let train_w: Vec<&LabeledWindow> = train_f.iter().flat_map(|f| &f.windows).collect();
    let test_w: Vec<&LabeledWindow> = test_f.iter().flat_map(|f| &f.windows).collect();

    // Provenance: every training example must come from a training session.
    for w in &train_w {
        let key = (w.subject_id.clone(), w.session_index);
        if !spec.train_sessions.contains(&key) || spec.test_sessions.contains(&key) {
            return Err(Error::Protocol(format!(
                "fold {}: training window from test session {}/{}",
                spec.name, key.0, key.1
            )));
        }
    }
    if train_w.is_empty() || test_w.is_empty() {
        return Err(Error::InsufficientData(format!("fold {} has no labeled windows on one side", spec.name)));
    }

    let x: Vec<Vec<f64>> = train_w.iter().map(|w| w.feature.vector()).collect();
    let y: Vec<ActivityLabel> = train_w.iter().map(|w| w.label).collect();
    let model = train_forest(&x, &y, &forest_params(config))?;

    let classes = ActivityLabel::classes(config.class_mode);
    let mut scores = Vec::with_capacity(test_w.len());
    let mut predicted = Vec::with_capacity(test_w.len());
    for w in &test_w {
        let proba = model.predict_proba(&w.feature.vector())?;
        let mut row = vec![0.0; classes.len()];
        for (c, p) in model.classes.iter().zip(&proba) {
            let i = classes.iter().position(|k| k == c).expect("training labels belong to the mode");
            row[i] = *p;
        }
        predicted.push(model.predict(&w.feature.vector())?);
        scores.push(row);
    }
    let truth: Vec<ActivityLabel> = test_w.iter().map(|w| w.label).collect();
    let right = truth.iter().zip(&predicted).filter(|(t, p)| t == p).count();
    let detail = FoldDetail {
        spec: spec.clone(),
        accuracy: right as f64 / truth.len() as f64,
        mean_average_precision: mean_average_precision(&scores, &truth, classes)?,
        n_train_windows: train_w.len(),
        n_test_windows: test_w.len(),
        n_flagged_windows: train_w.iter().chain(&test_w).filter(|w| w.feature.flagged).count(),
        n_dropped_windows: train_f.iter().chain(&test_f).map(|f| f.dropped.len()).sum(),
        oob_error: model.oob_error,
        gaze_thresholds: enc.gaze,
        motion_thresholds: enc.motion,
    };
    Ok(FoldOutcome {
        detail,
        truth,
        predicted,
        scores,
        subjects: test_w.iter().map(|w| w.subject_id.clone()).collect(),
        model,
    })
}

/// Published accuracy for a channel set and class mode, when one exists.
pub fn reference_accuracy(channels: Channels, mode: ClassMode) -> Option<f64> {
    let (six, five) = match channels {
        Channels::ALL => (0.7709, 0.8565),
        Channels::MOTION => (0.7249, 0.7938),
        Channels::VISUAL => (0.4503, 0.6297),
        _ => return None,
    };
    Some(match mode {
        ClassMode::Six => six,
        ClassMode::Five => five,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub channels: String,
    pub class_mode: ClassMode,
    pub feature_dimension: usize,
    pub classes: Vec<ActivityLabel>,
    /// Pooled over both folds' test windows, rows are the true class.
    pub confusion: ConfusionMatrix,
    pub per_class_accuracy: Vec<f64>,
    /// Mean of the two fold accuracies.
    pub overall_accuracy: f64,
    /// Accuracy over each subject's test windows, both folds pooled.
    pub per_subject_accuracy: BTreeMap<String, f64>,
    /// Mean of the two folds' mAP.
    pub mean_average_precision: f64,
    pub folds: Vec<FoldDetail>,
    pub reference_accuracy: Option<f64>,
    /// `overall_accuracy - reference_accuracy`.
    pub reference_delta: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Combines fold outcomes into a report; single-threaded and order-stable.
pub fn assemble_report(outcomes: &[FoldOutcome], config: &PipelineConfig, channels: Channels) -> Result<EvalReport> {
    let classes = ActivityLabel::classes(config.class_mode).to_vec();
    let truth: Vec<ActivityLabel> = outcomes.iter().flat_map(|o| o.truth.iter().copied()).collect();
    let predicted: Vec<ActivityLabel> = outcomes.iter().flat_map(|o| o.predicted.iter().copied()).collect();
    let confusion = confusion_matrix(&truth, &predicted, &classes)?;

    let mut per_subject: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for o in outcomes {
        for ((s, t), p) in o.subjects.iter().zip(&o.truth).zip(&o.predicted) {
            let e = per_subject.entry(s.clone()).or_default();
            e.0 += (t == p) as usize;
            e.1 += 1;
        }
    }
    let n = outcomes.len() as f64;
    let overall_accuracy = outcomes.iter().map(|o| o.detail.accuracy).sum::<f64>() / n;
    let reference = reference_accuracy(channels, config.class_mode);
    Ok(EvalReport {
        channels: channels.name(),
        class_mode: config.class_mode,
        feature_dimension: channels.dimension(config.k_visual_words),
        per_class_accuracy: confusion.per_class_accuracy(),
        classes,
        confusion,
        overall_accuracy,
        per_subject_accuracy: per_subject.into_iter().map(|(s, (r, t))| (s, r as f64 / t as f64)).collect(),
        mean_average_precision: outcomes.iter().map(|o| o.detail.mean_average_precision).sum::<f64>() / n,
        folds: outcomes.iter().map(|o| o.detail.clone()).collect(),
        reference_accuracy: reference,
        reference_delta: reference.map(|r| overall_accuracy - r),
    })
}

/// Two-fold evaluation of already prepared sessions.
pub fn run_two_fold_prepared(
    prepared: &[PreparedSession],
    config: &PipelineConfig,
    channels: Channels,
) -> Result<EvalReport> {
    config.validate()?;
    let keys: Vec<SessionKey> = prepared.iter().map(|p| p.key()).collect();
    let specs = two_fold_specs(&keys)?;
    let (a, b) = rayon::join(
        || run_fold(prepared, &specs[0], config, channels),
        || run_fold(prepared, &specs[1], config, channels),
    );
    assemble_report(&[a?, b?], config, channels)
}

/// Full two-fold evaluation for one channel subset.
pub fn run_two_fold(sessions: &[SessionRecord], config: &PipelineConfig, channels: Channels) -> Result<EvalReport> {
    config.validate()?;
    let keys: Vec<SessionKey> = sessions.iter().map(SessionRecord::key).collect();
    two_fold_specs(&keys)?;
    let prepared = prepare_sessions(sessions, config)?;
    run_two_fold_prepared(&prepared, config, channels)
}

/// One cell of the channel-by-class-mode comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub channels: String,
    pub class_mode: ClassMode,
    pub accuracy: f64,
    pub reference_accuracy: Option<f64>,
    pub reference_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub relation: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub cells: Vec<TableCell>,
    /// Qualitative relations the published results show; reported, not enforced.
    pub ordering: Vec<OrderingCheck>,
}

/// Runs combined, eye+ego and visual channels in both class modes.
pub fn run_table(sessions: &[SessionRecord], config: &PipelineConfig) -> Result<TableReport> {
    config.validate()?;
    let prepared = prepare_sessions(sessions, config)?;
    let sets = [Channels::ALL, Channels::MOTION, Channels::VISUAL];
    let modes = [ClassMode::Six, ClassMode::Five];
    let mut cells = Vec::new();
    let mut acc = BTreeMap::new();
    for mode in modes {
        let cfg = PipelineConfig { class_mode: mode, ..config.clone() };
        for ch in sets {
            let r = run_two_fold_prepared(&prepared, &cfg, ch)?;
            acc.insert((ch.name(), mode.n_classes()), r.overall_accuracy);
            cells.push(TableCell {
                channels: r.channels,
                class_mode: mode,
                accuracy: r.overall_accuracy,
                reference_accuracy: r.reference_accuracy,
                reference_delta: r.reference_delta,
            });
        }
    }
    let get = |ch: Channels, m: ClassMode| acc[&(ch.name(), m.n_classes())];
    let mut ordering = Vec::new();
    for m in modes {
        let n = m.n_classes();
        ordering.push(OrderingCheck {
            relation: format!("{n}-class: combined >= eye+ego >= visual"),
            holds: get(Channels::ALL, m) >= get(Channels::MOTION, m) && get(Channels::MOTION, m) >= get(Channels::VISUAL, m),
        });
    }
    for ch in sets {
        ordering.push(OrderingCheck {
            relation: format!("{}: 5-class > 6-class", ch.name()),
            holds: get(ch, ClassMode::Five) > get(ch, ClassMode::Six),
        });
    }
    Ok(TableReport { cells, ordering })
}

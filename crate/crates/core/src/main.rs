use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gaze_act::encoding::{axis_coefficients, MotionSymbol, Thresholds};
use gaze_act::error::{Error, Result};
use gaze_act::eval::metrics::{confusion_matrix, mean_average_precision, ConfusionMatrix};
use gaze_act::eval::protocol::{featurize, fit_encoders, forest_params, prepare_sessions, run_table, run_two_fold, EvalReport};
use gaze_act::eval::synthetic::run_synthetic_selftest;
use gaze_act::forest::{train_forest, ForestModel};
use gaze_act::gaze::{parse_gaze_log, resample_gaze};
use gaze_act::motion::{motion_coefficients, read_flow_csv, write_flow_csv, MotionInput};
use gaze_act::session::{list_frames, load_dataset};
use gaze_act::vocab::{fit_kmeans, VocabModel};
use gaze_act::window::{read_feature_csv, write_feature_csv, Channels, FeatureRow};
use gaze_act::{ActivityLabel, ClassMode, PipelineConfig};

#[derive(Parser)]
#[command(name = "gaze-act", version, about = "Egocentric activity recognition from gaze, head motion and visual words")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Channels to use, e.g. `eye,ego,visual`.
    #[arg(long, global = true, default_value = "eye,ego,visual")]
    channels: Channels,
    /// 5 or 6 classes; overrides the configuration.
    #[arg(long, global = true, value_parser = parse_classes)]
    classes: Option<ClassMode>,
    /// Random seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

fn parse_classes(s: &str) -> std::result::Result<ClassMode, String> {
    match s {
        "5" => Ok(ClassMode::Five),
        "6" => Ok(ClassMode::Six),
        _ => Err(format!("expected 5 or 6, got {s}")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Encode a gaze log into motion symbols.
    EncodeGaze {
        #[arg(long)]
        gaze: PathBuf,
    },
    /// Estimate ego-motion from frames (or read flows) and encode it.
    EncodeMotion {
        #[arg(long, conflicts_with = "flows", required_unless_present = "flows")]
        frames: Option<PathBuf>,
        #[arg(long)]
        flows: Option<PathBuf>,
    },
    /// Fit a visual vocabulary or assign words with one.
    Vocab {
        /// Embedding files to fit on.
        #[arg(long, conflicts_with = "assign", required_unless_present = "assign", num_args = 1..)]
        fit: Vec<PathBuf>,
        /// Embedding file to assign words to; needs --vocab.
        #[arg(long, requires = "vocab")]
        assign: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Fit encoders on one session number and write windowed features for all sessions.
    Featurize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 1)]
        train_session: u8,
    },
    /// Train a forest on the feature rows of one session number.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 1)]
        train_session: u8,
    },
    /// Score a trained forest on the feature rows of one session number.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 2)]
        test_session: u8,
    },
    /// Two-fold evaluation on a dataset directory.
    Pipeline {
        #[arg(long)]
        dataset: PathBuf,
        /// Run every published channel set in both class modes.
        #[arg(long)]
        table: bool,
    },
    /// Two-fold evaluation on generated sessions.
    Selftest,
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(c) = common.classes {
        config.class_mode = c;
    }
    if let Some(s) = common.seed {
        config.rng_seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn write_symbols(path: &Path, times: &[f64], symbols: &[MotionSymbol]) -> Result<()> {
    let mut text = String::from("t,symbol\n");
    for (t, s) in times.iter().zip(symbols) {
        text.push_str(&format!("{t},{}\n", s.code()));
    }
    write_text(path, &text)
}

fn write_report(out: &Path, report: &EvalReport) -> Result<()> {
    write_text(&out.join("report.json"), &report.to_json())?;
    write_text(&out.join("confusion.csv"), &report.confusion.to_csv())?;
    println!(
        "channels {} ({} dims), {} classes: accuracy {:.4}, mAP {:.4}",
        report.channels,
        report.feature_dimension,
        report.classes.len(),
        report.overall_accuracy,
        report.mean_average_precision
    );
    if let (Some(r), Some(d)) = (report.reference_accuracy, report.reference_delta) {
        println!("published {r:.4}, delta {d:+.4}");
    }
    Ok(())
}

/// Thresholds from the configuration, or from the signal itself.
fn thresholds_or_estimate(configured: (Option<f64>, Option<f64>), cx: &[f64], cy: &[f64]) -> Result<Thresholds> {
    match configured {
        (Some(s), Some(l)) => Thresholds::new(s, l),
        _ => {
            log::warn!("thresholds not configured; estimating them from this input");
            Thresholds::from_coefficients(cx.iter().chain(cy))
        }
    }
}

fn encode_with(th: &Thresholds, cx: &[f64], cy: &[f64]) -> Vec<MotionSymbol> {
    cx.iter().zip(cy).map(|(&x, &y)| MotionSymbol::from_levels(th.level(x), th.level(y))).collect()
}

#[derive(Serialize)]
struct FeatureEvaluation {
    test_session: u8,
    n_windows: usize,
    accuracy: f64,
    mean_average_precision: f64,
    per_subject_accuracy: BTreeMap<String, f64>,
    confusion: ConfusionMatrix,
}

fn evaluate_rows(model: &ForestModel, rows: &[&FeatureRow], mode: ClassMode, test_session: u8) -> Result<FeatureEvaluation> {
    let classes = ActivityLabel::classes(mode);
    let mut predicted = Vec::new();
    let mut scores = Vec::new();
    for r in rows {
        let proba = model.predict_proba(&r.features)?;
        let mut row = vec![0.0; classes.len()];
        for (c, p) in model.classes.iter().zip(proba) {
            if let Some(i) = classes.iter().position(|k| k == c) {
                row[i] = p;
            }
        }
        predicted.push(model.predict(&r.features)?);
        scores.push(row);
    }
    let truth: Vec<ActivityLabel> = rows.iter().map(|r| r.label).collect();
    let mut per_subject: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for ((r, t), p) in rows.iter().zip(&truth).zip(&predicted) {
        let e = per_subject.entry(r.subject_id.clone()).or_default();
        e.0 += (t == p) as usize;
        e.1 += 1;
    }
    let confusion = confusion_matrix(&truth, &predicted, classes)?;
    Ok(FeatureEvaluation {
        test_session,
        n_windows: rows.len(),
        accuracy: confusion.accuracy(),
        mean_average_precision: mean_average_precision(&scores, &truth, classes)?,
        per_subject_accuracy: per_subject.into_iter().map(|(s, (r, t))| (s, r as f64 / t as f64)).collect(),
        confusion,
    })
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.common)?;
    let out = &cli.common.out;
    let channels = cli.common.channels;
    match cli.command {
        Command::EncodeGaze { gaze } => {
            let log = parse_gaze_log(&gaze)?;
            for w in &log.warnings {
                log::warn!("{}: {w}", gaze.display());
            }
            let samples = resample_gaze(&log.samples, config.frame_rate)?;
            let xs: Vec<f64> = samples.iter().map(|g| g.x).collect();
            let ys: Vec<f64> = samples.iter().map(|g| g.y).collect();
            let (cx, cy) = axis_coefficients(&xs, &ys, config.median_filter_width, config.wavelet_scale)?;
            let th = thresholds_or_estimate((config.tau_small, config.tau_large), &cx.values, &cy.values)?;
            let times: Vec<f64> = samples.iter().map(|g| g.t).collect();
            write_symbols(&out.join("gaze_symbols.csv"), &times, &encode_with(&th, &cx.values, &cy.values))?;
            println!("{} gaze symbols, thresholds {} / {}", times.len(), th.small, th.large);
        }
        Command::EncodeMotion { frames, flows } => {
            let records = match (frames, flows) {
                (Some(dir), _) => {
                    let paths = list_frames(&dir)?;
                    let records = MotionInput::Paths(&paths).flows(&config)?;
                    write_flow_csv(&records, create(&out.join("flow.csv"))?).map_err(|e| Error::io(out, e))?;
                    records
                }
                (None, Some(csv)) => read_flow_csv(&csv)?,
                (None, None) => unreachable!("clap requires one input"),
            };
            let (cx, cy) = motion_coefficients(&records, &config)?;
            let th = thresholds_or_estimate((config.motion_tau_small, config.motion_tau_large), &cx, &cy)?;
            let times: Vec<f64> = records.iter().map(|r| r.frame_index as f64 / config.frame_rate).collect();
            write_symbols(&out.join("motion_symbols.csv"), &times, &encode_with(&th, &cx, &cy))?;
            let flagged = records.iter().filter(|r| r.flow.is_flagged()).count();
            println!("{} motion symbols ({flagged} frame pairs without surviving tracks)", records.len());
        }
        Command::Vocab { fit, assign, vocab } => {
            if let Some(path) = assign {
                let model = VocabModel::load(vocab.as_deref().expect("clap requires --vocab"))?;
                let emb = gaze_act::embeddings::EmbeddingSet::load(&path)?;
                let words = model.assign_all(&emb.values)?;
                let mut text = String::from("frame,word\n");
                for (i, w) in words.iter().enumerate() {
                    text.push_str(&format!("{i},{w}\n"));
                }
                write_text(&out.join("words.csv"), &text)?;
                println!("{} frames assigned", words.len());
            } else {
                let mut data = Vec::new();
                let mut dim = 0;
                for p in &fit {
                    let emb = gaze_act::embeddings::EmbeddingSet::load(p)?;
                    dim = emb.dim;
                    data.extend_from_slice(&emb.values);
                }
                let model = fit_kmeans(&data, dim, config.k_visual_words, config.rng_seed, config.kmeans_max_iter)?;
                model.save(&out.join("vocab.gavc"))?;
                println!("k = {}, inertia {:.6e}", model.k, model.training_inertia.unwrap_or(f64::NAN));
            }
        }
        Command::Featurize { dataset, train_session } => {
            let sessions = load_dataset(&dataset, config.frame_rate)?;
            let prepared = prepare_sessions(&sessions, &config)?;
            let train: Vec<_> = prepared.iter().filter(|p| p.session.session_index == train_session).collect();
            if train.is_empty() {
                return Err(Error::Protocol(format!("no session {train_session} in {}", dataset.display())));
            }
            let enc = fit_encoders(&train, &config, channels)?;
            let mut windows = Vec::new();
            for p in &prepared {
                windows.extend(featurize(p, &enc, &config, channels)?.windows);
            }
            write_feature_csv(&windows, create(&out.join("features.csv"))?)?;
            write_json(&out.join("encoders.json"), &enc)?;
            if let Some(v) = &enc.vocab {
                v.save(&out.join("vocab.gavc"))?;
            }
            println!("{} windows of dimension {}", windows.len(), channels.dimension(config.k_visual_words));
        }
        Command::Train { features, train_session } => {
            let rows = read_feature_csv(&features)?;
            let rows: Vec<&FeatureRow> = rows
                .iter()
                .filter(|r| r.session_index == train_session && r.label.allowed_in(config.class_mode))
                .collect();
            if rows.is_empty() {
                return Err(Error::Protocol(format!("no feature rows from session {train_session}")));
            }
            let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features.clone()).collect();
            let y: Vec<ActivityLabel> = rows.iter().map(|r| r.label).collect();
            let model = train_forest(&x, &y, &forest_params(&config))?;
            model.save(&out.join("forest.garf"))?;
            println!("{} trees on {} windows, OOB error {:.4}", model.trees.len(), rows.len(), model.oob_error);
        }
        Command::Evaluate { features, model, test_session } => {
            let model = ForestModel::load(&model)?;
            let rows = read_feature_csv(&features)?;
            let rows: Vec<&FeatureRow> = rows
                .iter()
                .filter(|r| r.session_index == test_session && r.label.allowed_in(config.class_mode))
                .collect();
            if rows.is_empty() {
                return Err(Error::Protocol(format!("no feature rows from session {test_session}")));
            }
            let eval = evaluate_rows(&model, &rows, config.class_mode, test_session)?;
            write_json(&out.join("evaluation.json"), &eval)?;
            write_text(&out.join("confusion.csv"), &eval.confusion.to_csv())?;
            println!("{} windows: accuracy {:.4}, mAP {:.4}", eval.n_windows, eval.accuracy, eval.mean_average_precision);
        }
        Command::Pipeline { dataset, table } => {
            let sessions = load_dataset(&dataset, config.frame_rate)?;
            if table {
                let t = run_table(&sessions, &config)?;
                write_json(&out.join("table.json"), &t)?;
                for c in &t.cells {
                    let reference = c.reference_accuracy.map_or(String::new(), |r| format!(" (published {r:.4})"));
                    println!("{:<16} {} classes: {:.4}{reference}", c.channels, c.class_mode.n_classes(), c.accuracy);
                }
                for o in &t.ordering {
                    println!("{}: {}", o.relation, if o.holds { "holds" } else { "does not hold" });
                }
            } else {
                write_report(out, &run_two_fold(&sessions, &config, channels)?)?;
            }
        }
        Command::Selftest => {
            let start = Instant::now();
            let report = run_synthetic_selftest(config.rng_seed)?;
            write_report(out, &report)?;
            println!("selftest finished in {:.1} s", start.elapsed().as_secs_f64());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! The `motionforge` command line: `synth`, `train`, `infer`, `eval`, `bench`.
//!
//! Settings come from built-in defaults, then an optional TOML config file
//! (`--config` or `MOTIONFORGE_CONFIG`), then command-line flags.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Deserialize;

use crate::classifier::{
    format_train_log, load_checkpoint, save_checkpoint, train, LabeledImages, Model, ModelArchitecture,
    ModelParams, TrainConfig,
};
use crate::dataset::{generate_dataset, ingest_assets, pick_assets, sample_seed, split, Dataset, Manifest};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate, format_counts_table, format_metric, format_sweep_table, interval_sweep, load_corpus, Detector,
    ModelDetector, OracleDetector, Protocol, GROUND_TRUTH_FILE,
};
use crate::imaging::{concat_horizontal, ImageBuffer};
use crate::seed;
use crate::streaming::{
    detect_over_stream, frame_dir_stream, format_detection, FramePredictor, FrameWindow, WindowConfig,
    DETECTION_HEADER,
};
use crate::synthesis::{synthesize_trace, ActionKind, BlendSettings, JitterConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, `--help` and `--version` (clap renders these itself).
    #[error("{0}")]
    Usage(#[from] clap::Error),
    #[error("{0}")]
    Toolkit(#[from] Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Toolkit(Error::io("<output>", e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolkitConfig {
    pub synthesis: SynthesisSection,
    pub training: TrainingSection,
    pub streaming: WindowConfig,
    pub evaluation: EvaluationSection,
    pub paths: PathsSection,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub preset: String,
    /// Full placement ranges; replaces the preset when present.
    pub blend: Option<BlendSettings>,
    pub jitter: JitterConfig,
    pub n_steps: Option<usize>,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            preset: "urfd-like".into(),
            blend: None,
            jitter: JitterConfig::default(),
            n_steps: None,
            per_class: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub input_size: usize,
    pub val_fraction: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            input_size: ModelArchitecture::default().input_size,
            val_fraction: 0.2,
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: t.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub protocol: Protocol,
    pub ground_truth: Option<PathBuf>,
    /// Interval lengths in seconds for the sweep; empty disables it.
    pub sweep: Vec<f64>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            protocol: Protocol::Video,
            ground_truth: None,
            sweep: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub persons: PathBuf,
    pub backgrounds: PathBuf,
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub reports: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            persons: "assets/persons".into(),
            backgrounds: "assets/backgrounds".into(),
            dataset: "data/synthetic".into(),
            checkpoint: "model.mfck".into(),
            reports: "reports".into(),
        }
    }
}

impl ToolkitConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "motionforge", version, about = "Motion-image synthesis, action classifier training and fall detection")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, env = "MOTIONFORGE_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled motion-image dataset from person and background assets.
    Synth(SynthArgs),
    /// Train the action classifier on a generated dataset.
    Train(TrainArgs),
    /// Run rolling mean-frame detection over a directory of frames.
    Infer(InferArgs),
    /// Score fall detection on a labeled corpus of frame directories.
    Eval(EvalArgs),
    /// Measure window maintenance and end-to-end detection throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Person directory (`<id>/image.png` + `<id>/mask.png`, or `<id>.png` + `<id>_mask.png`).
    #[arg(long)]
    persons: Option<PathBuf>,
    /// Directory of person-free background PNGs.
    #[arg(long)]
    backgrounds: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples per action class.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Placement preset: urfd-like or aihub-like.
    #[arg(long)]
    preset: Option<String>,
    /// Frames rendered per motion sequence.
    #[arg(long)]
    n_steps: Option<usize>,
    /// Also write this many contact sheets (rendered frames followed by the sample).
    #[arg(long, value_name = "COUNT")]
    preview: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory containing manifest.tsv.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Fraction of each class held out for validation (0 disables validation).
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Square model input side in pixels.
    #[arg(long)]
    input_size: Option<usize>,
    /// Output checkpoint path.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training log path (default: checkpoint path with `.log.tsv` appended).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WindowArgs {
    /// Frames averaged per detection.
    #[arg(long)]
    window: Option<usize>,
    /// Spacing between retained frames.
    #[arg(long)]
    stride: Option<usize>,
    /// Frames between detections.
    #[arg(long)]
    interval: Option<usize>,
    /// Frame rate used for seconds-to-frames conversion.
    #[arg(long)]
    fps: Option<f64>,
}

#[derive(Debug, Args)]
struct InferArgs {
    /// Directory of frames (PNG, lexicographic order is temporal order).
    video_dir: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    window: WindowArgs,
    /// Write detections here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write each detection's mean frame into this directory.
    #[arg(long, value_name = "DIR")]
    save_mean_frames: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Corpus directory: one frame directory per video.
    corpus_dir: PathBuf,
    #[arg(long, conflicts_with = "oracle")]
    checkpoint: Option<PathBuf>,
    /// Use the ground truth itself as the detector (protocol self-test).
    #[arg(long)]
    oracle: bool,
    /// video or frame.
    #[arg(long)]
    protocol: Option<Protocol>,
    /// Ground-truth file (default: <CORPUS_DIR>/ground_truth.txt).
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Comma-separated interval lengths in seconds for a video-level sweep.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    #[command(flatten)]
    window: WindowArgs,
    /// Machine-readable report (JSON lines).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Model to time; a freshly initialized network is used otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Timed frames per run (at least 1000).
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1000..))]
    frames: u64,
    /// Comma-separated window lengths.
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 50])]
    windows: Vec<usize>,
    /// Square frame side in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Alternating measurement rounds; the median round is reported.
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl WindowArgs {
    fn apply(&self, mut cfg: WindowConfig) -> Result<WindowConfig> {
        if let Some(v) = self.window {
            cfg.window_len = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.interval {
            cfg.interval = v;
        }
        if let Some(v) = self.fps {
            cfg.fps = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// its report to `out`.
pub fn run_from_args<I, T>(args: I, out: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let config = match &cli.config {
        Some(path) => ToolkitConfig::load(path)?,
        None => ToolkitConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(&config, a, out),
        Command::Train(a) => cmd_train(&config, a, out),
        Command::Infer(a) => cmd_infer(&config, a, out),
        Command::Eval(a) => cmd_eval(&config, a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} directory {} does not exist", path.display())))
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} {} does not exist", path.display())))
    }
}

fn load_model(path: &Path) -> Result<Model> {
    require_file(path, "checkpoint")?;
    let (params, arch) = load_checkpoint(path)?;
    Model::new(arch, params)
}

fn cmd_synth(config: &ToolkitConfig, a: SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let s = &config.synthesis;
    let persons = a.persons.unwrap_or_else(|| config.paths.persons.clone());
    let backgrounds = a.backgrounds.unwrap_or_else(|| config.paths.backgrounds.clone());
    let out_dir = a.out.unwrap_or_else(|| config.paths.dataset.clone());
    require_dir(&persons, "person asset")?;
    require_dir(&backgrounds, "background asset")?;

    let mut settings = match (&a.preset, &s.blend) {
        (Some(p), _) => BlendSettings::preset(p)?,
        (None, Some(b)) => b.clone(),
        (None, None) => BlendSettings::preset(&s.preset)?,
    };
    if let Some(n) = a.n_steps.or(s.n_steps) {
        settings.n_steps = n;
    }
    settings.validate()?;
    s.jitter.validate()?;
    let per_class = a.per_class.unwrap_or(s.per_class);
    let global_seed = a.seed.unwrap_or(s.seed);

    let assets = ingest_assets(&persons, &backgrounds)?;
    let manifest = generate_dataset(
        &assets.persons,
        &assets.backgrounds,
        &settings,
        &s.jitter,
        per_class,
        global_seed,
        &out_dir,
    )?;
    writeln!(out, "wrote {} samples to {}", manifest.len(), out_dir.display())?;
    for (action, n) in manifest.count_per_action() {
        writeln!(out, "  {action:<11} {n}")?;
    }
    if !assets.skipped.is_empty() {
        writeln!(out, "skipped {} unusable person assets", assets.skipped.len())?;
    }

    if let Some(count) = a.preview {
        let dir = out_dir.join("preview");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..count {
            let action = ActionKind::ALL[i % ActionKind::ALL.len()];
            let index = (i / ActionKind::ALL.len()) % per_class;
            let sseed = sample_seed(global_seed, action, index);
            let (pi, bi) = pick_assets(sseed, assets.persons.len(), assets.backgrounds.len());
            let trace = synthesize_trace(
                &assets.persons[pi],
                &assets.backgrounds[bi],
                action,
                &settings,
                &s.jitter,
                sseed,
            )?;
            let mut panels = trace.frames;
            panels.push(trace.sample.image);
            let sheet = concat_horizontal(&panels)?;
            sheet.save_png(dir.join(format!("{}_{index:06}.png", action.name())))?;
        }
        writeln!(out, "wrote {count} contact sheets to {}", dir.display())?;
    }
    Ok(())
}

fn load_split(manifest: &Manifest, root: &Path, size: usize) -> Result<LabeledImages> {
    LabeledImages::load(manifest, root, size)
}

fn cmd_train(config: &ToolkitConfig, a: TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let t = &config.training;
    let dataset_dir = a.dataset.unwrap_or_else(|| config.paths.dataset.clone());
    let checkpoint = a.checkpoint.unwrap_or_else(|| config.paths.checkpoint.clone());
    let log_path = a.log.unwrap_or_else(|| {
        let mut p = checkpoint.clone().into_os_string();
        p.push(".log.tsv");
        p.into()
    });
    let cfg = TrainConfig {
        batch_size: a.batch_size.unwrap_or(t.batch_size),
        epochs: a.epochs.unwrap_or(t.epochs),
        learning_rate: a.lr.unwrap_or(t.learning_rate),
        weight_decay: a.weight_decay.unwrap_or(t.weight_decay),
        beta1: t.beta1,
        beta2: t.beta2,
        epsilon: t.epsilon,
        seed: a.seed.unwrap_or(t.seed),
    };
    cfg.validate()?;
    let arch = ModelArchitecture::with_input_size(a.input_size.unwrap_or(t.input_size));
    arch.validate()?;
    let val_fraction = a.val_fraction.unwrap_or(t.val_fraction);

    require_dir(&dataset_dir, "dataset")?;
    let ds = Dataset::open(&dataset_dir)?;
    if ds.manifest.is_empty() {
        return Err(Error::InvalidInput(format!("dataset {} is empty", dataset_dir.display())).into());
    }
    ds.manifest.verify(&ds.root)?;
    let (train_m, val_m) = if val_fraction > 0.0 {
        split(&ds.manifest, val_fraction, seed::derive(cfg.seed, 2))?
    } else {
        (ds.manifest.clone(), Manifest::default())
    };
    let train_set = load_split(&train_m, &ds.root, arch.input_size)?;
    let val_set = load_split(&val_m, &ds.root, arch.input_size)?;
    log::info!("training on {} samples, validating on {}", train_set.len(), val_set.len());

    let outcome = train(&train_set, Some(&val_set), &arch, &cfg)?;
    save_checkpoint(&outcome.params, &arch, &checkpoint)?;
    fs::write(&log_path, format_train_log(&outcome.log)).map_err(|e| Error::io(&log_path, e))?;

    writeln!(out, "checkpoint {}", checkpoint.display())?;
    writeln!(out, "training log {}", log_path.display())?;
    match outcome.best_val_accuracy {
        Some(acc) => writeln!(
            out,
            "best validation accuracy {:.2}% at epoch {}",
            acc * 100.0,
            outcome.best_epoch
        )?,
        None => writeln!(out, "no validation split; kept final epoch")?,
    }
    Ok(())
}

fn cmd_infer(config: &ToolkitConfig, a: InferArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = a.window.apply(config.streaming.clone())?;
    require_dir(&a.video_dir, "frame")?;
    let model = load_model(&a.checkpoint.unwrap_or_else(|| config.paths.checkpoint.clone()))?;
    let keep = a.save_mean_frames.is_some();
    let detections = detect_over_stream(frame_dir_stream(&a.video_dir)?, &model, &cfg, keep)?;
    if detections.is_empty() {
        log::warn!(
            "{} is shorter than one detection window ({} frames); no detections",
            a.video_dir.display(),
            cfg.warm_up_frames()
        );
    }
    let mut text = format!("{DETECTION_HEADER}\n");
    for d in &detections {
        text.push_str(&format_detection(d));
        text.push('\n');
    }
    if let Some(dir) = &a.save_mean_frames {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for d in &detections {
            if let Some(m) = &d.mean_frame {
                m.save_png(dir.join(format!("mean_{:06}.png", d.frame_index)))?;
            }
        }
    }
    match &a.out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_eval(config: &ToolkitConfig, a: EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let e = &config.evaluation;
    let cfg = a.window.apply(config.streaming.clone())?;
    let protocol = a.protocol.unwrap_or(e.protocol);
    require_dir(&a.corpus_dir, "corpus")?;
    let gt = a
        .ground_truth
        .or_else(|| e.ground_truth.clone())
        .unwrap_or_else(|| a.corpus_dir.join(GROUND_TRUTH_FILE));
    require_file(&gt, "ground-truth file")?;
    let videos = load_corpus(&a.corpus_dir, &gt)?;

    let model;
    let model_detector;
    let detector: &dyn Detector = if a.oracle {
        &OracleDetector
    } else {
        model = load_model(&a.checkpoint.unwrap_or_else(|| config.paths.checkpoint.clone()))?;
        model_detector = ModelDetector(&model);
        &model_detector
    };

    let counts = evaluate(protocol, &videos, detector, &cfg)?;
    let m = counts.metrics();
    writeln!(out, "{} videos", videos.len())?;
    write!(out, "{}", format_counts_table(protocol, &counts))?;

    let mut report = vec![serde_json::json!({
        "protocol": protocol.to_string(),
        "videos": videos.len(),
        "window": cfg.window_len,
        "stride": cfg.stride,
        "interval": cfg.interval,
        "tp": counts.true_positives,
        "fn": counts.false_negatives,
        "tn": counts.true_negatives,
        "fp": counts.false_positives,
        "sensitivity": format_metric(m.sensitivity),
        "specificity": format_metric(m.specificity),
        "precision": format_metric(m.precision),
        "accuracy": format_metric(m.accuracy),
    })];

    let sweep = a.sweep.unwrap_or_else(|| e.sweep.clone());
    if !sweep.is_empty() {
        let rows = interval_sweep(&videos, detector, &sweep, cfg.fps)?;
        writeln!(out)?;
        write!(out, "{}", format_sweep_table(&rows))?;
        report.extend(rows.iter().map(|r| {
            serde_json::json!({
                "sweep_seconds": r.seconds,
                "frames": r.frames,
                "tp": r.counts.true_positives,
                "fn": r.counts.false_negatives,
                "tn": r.counts.true_negatives,
                "fp": r.counts.false_positives,
                "accuracy": format_metric(r.metrics.accuracy),
            })
        }));
    }
    if let Some(path) = &a.report {
        let text: String = report.iter().map(|r| format!("{r}\n")).collect();
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Throughput of one window length.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub window: usize,
    /// push + mean frame, frames per second (median round).
    pub mean_frame_fps: f64,
    pub mean_frame_p95_ms: f64,
    /// push + mean frame + classification, frames per second (median round).
    pub pipeline_fps: f64,
    pub pipeline_p95_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub frame_size: usize,
    pub frames: usize,
    pub rows: Vec<BenchRow>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn p95(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((v.len() as f64 * 0.95).ceil() as usize).clamp(1, v.len()) - 1]
}

/// Times `frames` pushes per run after a warm-up of one full window.
/// Returns (frames per second, per-frame latencies in ms).
fn time_stream(
    stream: &[ImageBuffer],
    window_len: usize,
    frames: usize,
    predictor: Option<&dyn FramePredictor>,
) -> Result<(f64, Vec<f64>)> {
    let mut window = FrameWindow::new(window_len, 1)?;
    let mut mean = stream[0].clone();
    for f in stream.iter().cycle().take(window_len) {
        window.push(f)?;
    }
    let mut latencies = Vec::with_capacity(frames);
    let start = Instant::now();
    for f in stream.iter().cycle().skip(window_len).take(frames) {
        let t = Instant::now();
        window.push(f)?;
        window.mean_frame_into(&mut mean)?;
        if let Some(p) = predictor {
            std::hint::black_box(p.predict(&mean)?);
        }
        latencies.push(t.elapsed().as_secs_f64() * 1e3);
    }
    std::hint::black_box(&mean);
    Ok((frames as f64 / start.elapsed().as_secs_f64(), latencies))
}

/// Rounds alternate between window lengths so slow drifts in machine load
/// hit all of them alike.
pub fn run_bench(
    model: &Model,
    windows: &[usize],
    frames: usize,
    frame_size: usize,
    rounds: usize,
    rng_seed: u64,
) -> Result<BenchReport> {
    if windows.is_empty() || rounds == 0 || frames == 0 {
        return Err(Error::Config("bench needs window lengths, rounds and frames".into()));
    }
    let mut rng = seed::rng(rng_seed);
    let stream: Vec<ImageBuffer> = (0..97)
        .map(|_| {
            let data = (0..frame_size * frame_size * 3).map(|_| rng.random()).collect();
            ImageBuffer::new(frame_size, frame_size, data)
        })
        .collect::<Result<_>>()?;
    let mut fps = vec![(Vec::new(), Vec::new()); windows.len()];
    let mut lat = vec![(Vec::new(), Vec::new()); windows.len()];
    for _ in 0..rounds {
        for (i, &n) in windows.iter().enumerate() {
            let (f, l) = time_stream(&stream, n, frames, None)?;
            fps[i].0.push(f);
            lat[i].0.extend(l);
            let (f, l) = time_stream(&stream, n, frames, Some(model))?;
            fps[i].1.push(f);
            lat[i].1.extend(l);
        }
    }
    let rows = windows
        .iter()
        .zip(fps.iter_mut().zip(lat.iter_mut()))
        .map(|(&window, ((mf, pf), (ml, pl)))| BenchRow {
            window,
            mean_frame_fps: median(mf),
            mean_frame_p95_ms: p95(ml),
            pipeline_fps: median(pf),
            pipeline_p95_ms: p95(pl),
        })
        .collect();
    Ok(BenchReport {
        frame_size,
        frames,
        rows,
    })
}

pub fn format_bench_report(r: &BenchReport) -> String {
    let mut s = format!(
        "{}x{} frames, {} timed frames per run\n{:>7} {:>15} {:>13} {:>13} {:>13}\n",
        r.frame_size, r.frame_size, r.frames, "window", "mean_frame_fps", "mean_p95_ms", "pipeline_fps", "pipe_p95_ms"
    );
    for row in &r.rows {
        s.push_str(&format!(
            "{:>7} {:>15.1} {:>13.4} {:>13.1} {:>13.4}\n",
            row.window, row.mean_frame_fps, row.mean_frame_p95_ms, row.pipeline_fps, row.pipeline_p95_ms
        ));
    }
    s
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> CliResult<()> {
    let model = match &a.checkpoint {
        Some(p) => load_model(p)?,
        None => {
            let arch = ModelArchitecture::default();
            let params = ModelParams::init(&arch, a.seed);
            Model::new(arch, params)?
        }
    };
    let report = run_bench(&model, &a.windows, a.frames as usize, a.size, a.rounds, a.seed)?;
    write!(out, "{}", format_bench_report(&report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_sections_and_unknown_keys() {
        let cfg = ToolkitConfig::parse(
            "[synthesis]\npreset = \"aihub-like\"\nper_class = 5\n[synthesis.jitter]\nflip_probability = 0.0\n\
             [training]\nepochs = 3\n[streaming]\nwindow_len = 10\n[evaluation]\nprotocol = \"frame\"\nsweep = [0.4, 1.0]\n\
             [paths]\ndataset = \"d\"\n",
        )
        .unwrap();
        assert_eq!(cfg.synthesis.per_class, 5);
        assert_eq!(cfg.synthesis.jitter.flip_probability, 0.0);
        assert_eq!(cfg.training.epochs, 3);
        assert_eq!(cfg.training.batch_size, 32);
        assert_eq!(cfg.streaming.window_len, 10);
        assert_eq!(cfg.evaluation.protocol, Protocol::Frame);
        assert_eq!(cfg.paths.dataset, PathBuf::from("d"));
        assert!(ToolkitConfig::parse("[training]\nepoch = 3\n").is_err());
        assert!(ToolkitConfig::parse("[nonsense]\n").is_err());
    }

    #[test]
    fn help_lists_commands_and_unknown_flags_fail() {
        let mut sink = Vec::new();
        match run_from_args(["motionforge", "--help"], &mut sink).unwrap_err() {
            CliError::Usage(e) => {
                let text = e.to_string();
                for cmd in ["synth", "train", "infer", "eval", "bench"] {
                    assert!(text.contains(cmd), "{text}");
                }
            }
            e => panic!("{e}"),
        }
        assert!(matches!(
            run_from_args(["motionforge", "synth", "--bogus"], &mut sink),
            Err(CliError::Usage(_))
        ));
        assert!(run_from_args(["motionforge", "bench", "--frames", "10"], &mut sink).is_err());
    }

    #[test]
    fn percentile_helpers() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(p95(&mut v), 95.0);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
    }
}

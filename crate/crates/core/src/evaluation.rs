//! Fall-detection scoring: confusion counts and the two protocols.
//!
//! * video level: a video counts as a fall iff any detection in it is a fall;
//! * frame level: every detection instant is scored against the ground truth
//!   of the frame it was made at.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::streaming::{
    detect_over_stream, frame_dir_stream, list_frames, seconds_to_frames, Detection, FramePredictor,
    WindowConfig,
};
use crate::synthesis::ActionKind;

/// Counts with "fall" as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub false_positives: u64,
}

impl ConfusionCounts {
    pub fn new(true_positives: u64, false_negatives: u64, true_negatives: u64, false_positives: u64) -> Self {
        Self {
            true_positives,
            false_negatives,
            true_negatives,
            false_positives,
        }
    }

    pub fn record(&mut self, actual_fall: bool, predicted_fall: bool) {
        match (actual_fall, predicted_fall) {
            (true, true) => self.true_positives += 1,
            (true, false) => self.false_negatives += 1,
            (false, false) => self.true_negatives += 1,
            (false, true) => self.false_positives += 1,
        }
    }

    pub fn positives(&self) -> u64 {
        self.true_positives + self.false_negatives
    }

    pub fn negatives(&self) -> u64 {
        self.true_negatives + self.false_positives
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            sensitivity: percent(self.true_positives, self.positives()),
            specificity: percent(self.true_negatives, self.negatives()),
            precision: percent(self.true_positives, self.true_positives + self.false_positives),
            accuracy: percent(self.true_positives + self.true_negatives, self.total()),
        }
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(
            self.true_positives + o.true_positives,
            self.false_negatives + o.false_negatives,
            self.true_negatives + o.true_negatives,
            self.false_positives + o.false_positives,
        )
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Percentages; `None` where the denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Two decimals, or `undefined`.
pub fn format_metric(value: Option<f64>) -> String {
    value.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"))
}

impl Metrics {
    pub fn defined(&self) -> impl Iterator<Item = f64> {
        [self.sensitivity, self.specificity, self.precision, self.accuracy]
            .into_iter()
            .flatten()
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sensitivity {}  specificity {}  precision {}  accuracy {}",
            format_metric(self.sensitivity),
            format_metric(self.specificity),
            format_metric(self.precision),
            format_metric(self.accuracy)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroundTruth {
    /// Whole-video label: `true` for a fall video.
    Video(bool),
    /// Inclusive 1-based frame ranges during which a fall is in progress.
    Frames(Vec<(usize, usize)>),
}

impl GroundTruth {
    pub fn video_is_fall(&self) -> bool {
        match self {
            GroundTruth::Video(f) => *f,
            GroundTruth::Frames(r) => !r.is_empty(),
        }
    }

    /// Fall flag at 1-based frame `t`, if per-frame labels exist.
    pub fn frame_is_fall(&self, t: usize) -> Option<bool> {
        match self {
            GroundTruth::Video(_) => None,
            GroundTruth::Frames(r) => Some(r.iter().any(|&(a, b)| a <= t && t <= b)),
        }
    }
}

impl FromStr for GroundTruth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fall" => return Ok(GroundTruth::Video(true)),
            "adl" => return Ok(GroundTruth::Video(false)),
            "none" => return Ok(GroundTruth::Frames(Vec::new())),
            _ => {}
        }
        let mut ranges = Vec::new();
        for part in s.split(',') {
            let (a, b) = part
                .split_once('-')
                .ok_or_else(|| format!("expected `fall`, `adl`, `none` or ranges like 10-20, got `{part}`"))?;
            let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad frame number `{v}`"));
            let (a, b) = (parse(a)?, parse(b)?);
            if a == 0 || b < a {
                return Err(format!("range `{part}` must satisfy 1 <= start <= end"));
            }
            ranges.push((a, b));
        }
        Ok(GroundTruth::Frames(ranges))
    }
}

impl fmt::Display for GroundTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundTruth::Video(true) => f.write_str("fall"),
            GroundTruth::Video(false) => f.write_str("adl"),
            GroundTruth::Frames(r) if r.is_empty() => f.write_str("none"),
            GroundTruth::Frames(r) => {
                let parts: Vec<String> = r.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

/// Parses `<video id> <label>` lines; `#` starts a comment.
pub fn parse_ground_truth(text: &str) -> Result<BTreeMap<String, GroundTruth>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::GroundTruth { line: i + 1, message };
        let mut fields = line.split_whitespace();
        let (Some(id), Some(label), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad(format!("expected `<video id> <label>`, got `{line}`")));
        };
        let truth = label.parse::<GroundTruth>().map_err(bad)?;
        if out.insert(id.to_string(), truth).is_some() {
            return Err(bad(format!("duplicate video id `{id}`")));
        }
    }
    Ok(out)
}

pub fn format_ground_truth(truth: &BTreeMap<String, GroundTruth>) -> String {
    truth.iter().map(|(id, t)| format!("{id} {t}\n")).collect()
}

#[derive(Clone, Debug)]
pub enum FrameSource {
    Directory(PathBuf),
    Memory(Vec<ImageBuffer>),
}

impl FrameSource {
    pub fn len(&self) -> Result<usize> {
        match self {
            FrameSource::Directory(d) => Ok(list_frames(d)?.len()),
            FrameSource::Memory(f) => Ok(f.len()),
        }
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }

    pub fn frames(&self) -> Result<Box<dyn Iterator<Item = Result<ImageBuffer>> + '_>> {
        Ok(match self {
            FrameSource::Directory(d) => Box::new(frame_dir_stream(d)?),
            FrameSource::Memory(f) => Box::new(f.iter().cloned().map(Ok)),
        })
    }
}

#[derive(Clone, Debug)]
pub struct LabeledVideo {
    pub id: String,
    pub frames: FrameSource,
    pub truth: GroundTruth,
}

/// Produces detections for a labeled video.
pub trait Detector {
    fn detect(&self, video: &LabeledVideo, cfg: &WindowConfig) -> Result<Vec<Detection>>;
}

/// Runs a predictor over the video's rolling mean frames.
pub struct ModelDetector<'a>(pub &'a dyn FramePredictor);

impl Detector for ModelDetector<'_> {
    fn detect(&self, video: &LabeledVideo, cfg: &WindowConfig) -> Result<Vec<Detection>> {
        detect_over_stream(video.frames.frames()?, self.0, cfg, false)
    }
}

/// Emits the ground truth itself at every detection instant. Protocol
/// plumbing can be checked with it independently of any model.
pub struct OracleDetector;

impl Detector for OracleDetector {
    fn detect(&self, video: &LabeledVideo, cfg: &WindowConfig) -> Result<Vec<Detection>> {
        cfg.validate()?;
        let instants = cfg.detection_instants(video.frames.len()?);
        Ok(instants
            .into_iter()
            .map(|t| {
                let fall = video.truth.frame_is_fall(t).unwrap_or(video.truth.video_is_fall());
                let (action, probabilities) = if fall {
                    (ActionKind::Falling, [1.0, 0.0, 0.0, 0.0])
                } else {
                    (ActionKind::Standing, [0.0, 0.0, 1.0, 0.0])
                };
                Detection {
                    frame_index: t,
                    action,
                    probabilities,
                    fall,
                    mean_frame: None,
                }
            })
            .collect())
    }
}

fn detections_or_warn(video: &LabeledVideo, detector: &dyn Detector, cfg: &WindowConfig) -> Result<Vec<Detection>> {
    let d = detector.detect(video, cfg)?;
    if d.is_empty() {
        log::warn!(
            "video `{}` is shorter than one detection window ({} frames); counted as non-fall",
            video.id,
            cfg.warm_up_frames()
        );
    }
    Ok(d)
}

/// Video-level protocol: predicted fall iff at least one detection is a fall.
pub fn video_level_eval(
    videos: &[LabeledVideo],
    detector: &dyn Detector,
    cfg: &WindowConfig,
) -> Result<ConfusionCounts> {
    cfg.validate()?;
    let mut counts = ConfusionCounts::default();
    for v in videos {
        let predicted = detections_or_warn(v, detector, cfg)?.iter().any(|d| d.fall);
        counts.record(v.truth.video_is_fall(), predicted);
    }
    Ok(counts)
}

/// Frame-level protocol: each detection instant is one scored unit.
pub fn frame_level_eval(
    videos: &[LabeledVideo],
    detector: &dyn Detector,
    cfg: &WindowConfig,
) -> Result<ConfusionCounts> {
    cfg.validate()?;
    let mut counts = ConfusionCounts::default();
    for v in videos {
        if matches!(v.truth, GroundTruth::Video(_)) {
            return Err(Error::InvalidInput(format!(
                "video `{}` has no per-frame fall labels",
                v.id
            )));
        }
        for d in detections_or_warn(v, detector, cfg)? {
            let actual = v.truth.frame_is_fall(d.frame_index).expect("per-frame labels");
            counts.record(actual, d.fall);
        }
    }
    Ok(counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Video,
    Frame,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "video" => Ok(Protocol::Video),
            "frame" => Ok(Protocol::Frame),
            other => Err(Error::Config(format!("unknown protocol `{other}` (expected video or frame)"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Video => "video",
            Protocol::Frame => "frame",
        })
    }
}

pub fn evaluate(
    protocol: Protocol,
    videos: &[LabeledVideo],
    detector: &dyn Detector,
    cfg: &WindowConfig,
) -> Result<ConfusionCounts> {
    match protocol {
        Protocol::Video => video_level_eval(videos, detector, cfg),
        Protocol::Frame => frame_level_eval(videos, detector, cfg),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub seconds: f64,
    pub frames: usize,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

/// Video-level evaluation for each interval; window and interval both span
/// `round(seconds × fps)` contiguous frames.
pub fn interval_sweep(
    videos: &[LabeledVideo],
    detector: &dyn Detector,
    seconds: &[f64],
    fps: f64,
) -> Result<Vec<SweepRow>> {
    seconds
        .iter()
        .map(|&s| {
            if !(s > 0.0) {
                return Err(Error::Config(format!("sweep intervals must be positive, got {s}")));
            }
            let cfg = WindowConfig::from_seconds(s, fps);
            let counts = video_level_eval(videos, detector, &cfg)?;
            Ok(SweepRow {
                seconds: s,
                frames: seconds_to_frames(s, fps),
                counts,
                metrics: counts.metrics(),
            })
        })
        .collect()
}

pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!("{:>8} {:>7} {:>10}\n", "seconds", "frames", "accuracy");
    for r in rows {
        out.push_str(&format!(
            "{:>8.2} {:>7} {:>10}\n",
            r.seconds,
            r.frames,
            format_metric(r.metrics.accuracy)
        ));
    }
    out
}

pub fn format_counts_table(protocol: Protocol, c: &ConfusionCounts) -> String {
    let m = c.metrics();
    format!(
        "protocol     {protocol}\n\
         tp fn tn fp  {} {} {} {}\n\
         sensitivity  {}\n\
         specificity  {}\n\
         precision    {}\n\
         accuracy     {}\n",
        c.true_positives,
        c.false_negatives,
        c.true_negatives,
        c.false_positives,
        format_metric(m.sensitivity),
        format_metric(m.specificity),
        format_metric(m.precision),
        format_metric(m.accuracy),
    )
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";

/// Pairs every subdirectory of `corpus_dir` (a video's frames) with its
/// ground-truth entry; any unmatched id on either side is an error.
pub fn load_corpus(corpus_dir: &Path, ground_truth: &Path) -> Result<Vec<LabeledVideo>> {
    let text = fs::read_to_string(ground_truth).map_err(|e| Error::io(ground_truth, e))?;
    let mut truth = parse_ground_truth(&text)?;
    let mut dirs = Vec::new();
    for entry in fs::read_dir(corpus_dir).map_err(|e| Error::io(corpus_dir, e))? {
        let path = entry.map_err(|e| Error::io(corpus_dir, e))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "corpus {} contains no video directories",
            corpus_dir.display()
        )));
    }
    let mut videos = Vec::new();
    let mut unlabeled = Vec::new();
    for d in dirs {
        let id = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match truth.remove(&id) {
            Some(t) => videos.push(LabeledVideo {
                id,
                frames: FrameSource::Directory(d),
                truth: t,
            }),
            None => unlabeled.push(id),
        }
    }
    let missing: Vec<String> = truth.into_keys().collect();
    if !unlabeled.is_empty() || !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "ground truth does not match corpus: videos without labels [{}], labels without videos [{}]",
            unlabeled.join(", "),
            missing.join(", ")
        )));
    }
    for v in &videos {
        let n = v.frames.len()?;
        if let GroundTruth::Frames(r) = &v.truth {
            if let Some(&(_, end)) = r.iter().find(|&&(_, end)| end > n) {
                return Err(Error::InvalidInput(format!(
                    "video `{}` labels frame {end} but has only {n} frames",
                    v.id
                )));
            }
        }
    }
    Ok(videos)
}

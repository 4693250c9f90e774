//! Live inference over a frame stream: a strided window of the most recent
//! frames, its mean kept up to date with rolling integer sums, and a
//! classification every `interval` frames once the window is full.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{argmax_action, Model, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::imaging::{rounded_mean, ImageBuffer};
use crate::synthesis::ActionKind;

/// Window geometry and detection cadence, all in frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// Frames averaged per detection (N).
    pub window_len: usize,
    /// Spacing between retained frames (k).
    pub stride: usize,
    /// Frames between successive detections.
    pub interval: usize,
    /// Only used to convert seconds to frames.
    pub fps: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_len: 25,
            stride: 1,
            interval: 25,
            fps: 25.0,
        }
    }
}

/// `round(seconds × fps)`.
pub fn seconds_to_frames(seconds: f64, fps: f64) -> usize {
    (seconds * fps).round().max(0.0) as usize
}

impl WindowConfig {
    /// Window and interval both spanning `seconds` of contiguous frames.
    pub fn from_seconds(seconds: f64, fps: f64) -> Self {
        let frames = seconds_to_frames(seconds, fps);
        Self {
            window_len: frames,
            stride: 1,
            interval: frames,
            fps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.stride == 0 || self.interval == 0 {
            return Err(Error::Config(format!(
                "window length, stride and interval must all be >= 1 (got {}, {}, {})",
                self.window_len, self.stride, self.interval
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }

    /// Index of the first frame at which the window is full.
    pub fn warm_up_frames(&self) -> usize {
        self.stride * self.window_len
    }

    /// 1-based frame indices at which a video of `len` frames gets a detection.
    pub fn detection_instants(&self, len: usize) -> Vec<usize> {
        let first = self.warm_up_frames().div_ceil(self.interval) * self.interval;
        (first.max(self.interval)..=len).step_by(self.interval).collect()
    }
}

/// The retained tail of a stream with a per-sample rolling sum.
///
/// Frames are numbered from 1; frame `t` is retained when `t % stride == 0`,
/// and the window keeps the most recent `capacity` retained frames.
#[derive(Clone, Debug)]
pub struct FrameWindow {
    capacity: usize,
    stride: usize,
    dims: Option<(usize, usize)>,
    slots: Vec<Vec<u8>>,
    next_slot: usize,
    sums: Vec<u32>,
    retained: VecDeque<usize>,
    ingested: usize,
}

impl FrameWindow {
    pub fn new(capacity: usize, stride: usize) -> Result<Self> {
        if capacity == 0 || stride == 0 {
            return Err(Error::Config("window capacity and stride must be >= 1".into()));
        }
        // 255 × capacity must fit the accumulator.
        if capacity > (u32::MAX / 255) as usize {
            return Err(Error::Config(format!("window of {capacity} frames is too long")));
        }
        Ok(Self {
            capacity,
            stride,
            dims: None,
            slots: Vec::with_capacity(capacity),
            next_slot: 0,
            sums: Vec::new(),
            retained: VecDeque::with_capacity(capacity),
            ingested: 0,
        })
    }

    pub fn from_config(cfg: &WindowConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(cfg.window_len, cfg.stride)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn is_warm(&self) -> bool {
        self.retained.len() == self.capacity
    }

    /// Number of frames pushed so far (the index of the latest frame).
    pub fn ingested(&self) -> usize {
        self.ingested
    }

    /// 1-based stream indices of the retained frames, oldest first.
    pub fn retained_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.retained.iter().copied()
    }

    pub fn sums(&self) -> &[u32] {
        &self.sums
    }

    /// Forgets all frames, keeping the allocated buffers.
    pub fn reset(&mut self) {
        self.dims = None;
        self.slots.clear();
        self.next_slot = 0;
        self.sums.clear();
        self.retained.clear();
        self.ingested = 0;
    }

    /// Ingests the next frame; returns whether it was retained.
    pub fn push(&mut self, frame: &ImageBuffer) -> Result<bool> {
        match self.dims {
            Some(d) if d != frame.dims() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: frame.dims(),
                })
            }
            Some(_) => {}
            None => {
                self.dims = Some(frame.dims());
                self.sums = vec![0; frame.data().len()];
            }
        }
        self.ingested += 1;
        if !self.ingested.is_multiple_of(self.stride) {
            return Ok(false);
        }
        let data = frame.data();
        if self.slots.len() < self.capacity {
            for (s, &v) in self.sums.iter_mut().zip(data) {
                *s += v as u32;
            }
            self.slots.push(data.to_vec());
        } else {
            let slot = &mut self.slots[self.next_slot];
            for ((s, old), &new) in self.sums.iter_mut().zip(slot.iter_mut()).zip(data) {
                *s = *s - *old as u32 + new as u32;
                *old = new;
            }
            self.retained.pop_front();
        }
        self.next_slot = (self.next_slot + 1) % self.capacity;
        self.retained.push_back(self.ingested);
        Ok(true)
    }

    /// Round-half-up mean of the retained frames, written into `out`.
    pub fn mean_frame_into(&self, out: &mut ImageBuffer) -> Result<()> {
        let dims = self.dims.filter(|_| !self.is_empty()).ok_or(Error::WarmUpIncomplete)?;
        if out.dims() != dims {
            *out = ImageBuffer::filled(dims.0, dims.1, [0; 3])?;
        }
        let n = self.retained.len() as u32;
        for (o, &s) in out.data_mut().iter_mut().zip(&self.sums) {
            *o = rounded_mean(s, n);
        }
        Ok(())
    }

    pub fn mean_frame(&self) -> Result<ImageBuffer> {
        let dims = self.dims.filter(|_| !self.is_empty()).ok_or(Error::WarmUpIncomplete)?;
        let mut out = ImageBuffer::filled(dims.0, dims.1, [0; 3])?;
        self.mean_frame_into(&mut out)?;
        Ok(out)
    }
}

/// Anything that maps a mean frame to class probabilities.
pub trait FramePredictor {
    fn predict(&self, mean_frame: &ImageBuffer) -> Result<[f64; NUM_CLASSES]>;
}

impl FramePredictor for Model {
    fn predict(&self, mean_frame: &ImageBuffer) -> Result<[f64; NUM_CLASSES]> {
        self.probabilities(mean_frame)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    /// 1-based index of the frame at which the detection was made.
    pub frame_index: usize,
    pub action: ActionKind,
    /// In [`ActionKind::ALL`] order.
    pub probabilities: [f64; NUM_CLASSES],
    pub fall: bool,
    pub mean_frame: Option<ImageBuffer>,
}

/// Classifies the current mean frame; the window must be full.
pub fn predict_at(
    window: &FrameWindow,
    predictor: &dyn FramePredictor,
    keep_mean_frame: bool,
) -> Result<Detection> {
    if !window.is_warm() {
        return Err(Error::WarmUpIncomplete);
    }
    let mean = window.mean_frame()?;
    let probabilities = predictor.predict(&mean)?;
    let action = argmax_action(&probabilities);
    Ok(Detection {
        frame_index: window.ingested(),
        action,
        probabilities,
        fall: action == ActionKind::Falling,
        mean_frame: keep_mean_frame.then_some(mean),
    })
}

/// Push-driven detector over one stream.
pub struct StreamDetector<'a> {
    window: FrameWindow,
    interval: usize,
    predictor: &'a dyn FramePredictor,
    keep_mean_frames: bool,
}

impl<'a> StreamDetector<'a> {
    pub fn new(cfg: &WindowConfig, predictor: &'a dyn FramePredictor) -> Result<Self> {
        Ok(Self {
            window: FrameWindow::from_config(cfg)?,
            interval: cfg.interval,
            predictor,
            keep_mean_frames: false,
        })
    }

    pub fn keep_mean_frames(mut self, keep: bool) -> Self {
        self.keep_mean_frames = keep;
        self
    }

    pub fn window(&self) -> &FrameWindow {
        &self.window
    }

    pub fn reset(&mut self) {
        self.window.reset();
    }

    /// Ingests a frame and classifies when it lands on the detection grid
    /// with a full window.
    pub fn push(&mut self, frame: &ImageBuffer) -> Result<Option<Detection>> {
        self.window.push(frame)?;
        if !self.window.ingested().is_multiple_of(self.interval) || !self.window.is_warm() {
            return Ok(None);
        }
        predict_at(&self.window, self.predictor, self.keep_mean_frames).map(Some)
    }
}

/// Detections over a finite stream of (possibly fallible) frames.
pub fn detect_over_stream<I>(
    frames: I,
    predictor: &dyn FramePredictor,
    cfg: &WindowConfig,
    keep_mean_frames: bool,
) -> Result<Vec<Detection>>
where
    I: IntoIterator<Item = Result<ImageBuffer>>,
{
    let mut detector = StreamDetector::new(cfg, predictor)?.keep_mean_frames(keep_mean_frames);
    let mut out = Vec::new();
    for frame in frames {
        if let Some(d) = detector.push(&frame?)? {
            out.push(d);
        }
    }
    Ok(out)
}

pub fn detect_over_video(
    frames: &[ImageBuffer],
    predictor: &dyn FramePredictor,
    cfg: &WindowConfig,
) -> Result<Vec<Detection>> {
    detect_over_stream(frames.iter().cloned().map(Ok), predictor, cfg, false)
}

/// PNG files of a frame directory in lexicographic (= temporal) order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if png && path.is_file() {
            frames.push(path);
        }
    }
    frames.sort();
    Ok(frames)
}

/// Lazily decoded frames of a directory.
pub fn frame_dir_stream(dir: &Path) -> Result<impl Iterator<Item = Result<ImageBuffer>>> {
    Ok(list_frames(dir)?.into_iter().map(ImageBuffer::load_png))
}

pub fn read_frame_dir(dir: &Path) -> Result<Vec<ImageBuffer>> {
    frame_dir_stream(dir)?.collect()
}

/// Writes `frame_000001.png`, `frame_000002.png`, ... into `dir`.
pub fn write_frame_dir(dir: &Path, frames: &[ImageBuffer]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        f.save_png(dir.join(format!("frame_{:06}.png", i + 1)))?;
    }
    Ok(())
}

pub const DETECTION_HEADER: &str = "frame\taction\tp_falling\tp_walking\tp_standing\tp_lying_down\tfall";

/// One tab-separated record, without trailing newline.
pub fn format_detection(d: &Detection) -> String {
    let p = d.probabilities;
    format!(
        "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
        d.frame_index, d.action, p[0], p[1], p[2], p[3], d.fall
    )
}

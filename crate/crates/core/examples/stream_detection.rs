//! Feed a rendered fall, padded with still frames, through the rolling
//! window and print every detection.
//!
//!     cargo run --release --example stream_detection -- [checkpoint]
//!
//! Without a checkpoint the network is untrained, so the labels are noise but
//! the window mechanics are the same.

use motionforge::classifier::{load_checkpoint, Model, ModelArchitecture, ModelParams};
use motionforge::procedural;
use motionforge::streaming::{format_detection, StreamDetector, WindowConfig, DETECTION_HEADER};
use motionforge::synthesis::{synthesize_trace, ActionKind, BlendSettings, JitterConfig};

fn main() -> motionforge::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => {
            let (params, arch) = load_checkpoint(path.as_ref())?;
            Model::new(arch, params)?
        }
        None => {
            let arch = ModelArchitecture::default();
            Model::new(arch.clone(), ModelParams::init(&arch, 0))?
        }
    };

    let trace = synthesize_trace(
        &procedural::person("p", 32, 64, 901),
        &procedural::background("b", 64, 64, 902),
        ActionKind::Falling,
        &BlendSettings::urfd_like(),
        &JitterConfig::identity(),
        903,
    )?;
    let first = trace.frames[0].clone();
    let last = trace.frames.last().unwrap().clone();
    let mut video = vec![first; 5];
    video.extend(trace.frames.iter().cloned());
    video.extend(std::iter::repeat_n(last, 5));

    let cfg = WindowConfig {
        window_len: trace.frames.len(),
        stride: 1,
        interval: 1,
        fps: 25.0,
    };
    let mut detector = StreamDetector::new(&cfg, &model)?;
    println!("{DETECTION_HEADER}");
    for frame in &video {
        if let Some(d) = detector.push(frame)? {
            println!("{}", format_detection(&d));
        }
    }
    Ok(())
}

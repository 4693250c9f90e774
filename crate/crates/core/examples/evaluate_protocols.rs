//! Score a tiny in-memory corpus under both protocols with the ground-truth
//! oracle, and show the metric arithmetic.

use motionforge::evaluation::{
    format_counts_table, frame_level_eval, interval_sweep, format_sweep_table, video_level_eval, ConfusionCounts,
    FrameSource, GroundTruth, LabeledVideo, OracleDetector, Protocol,
};
use motionforge::imaging::ImageBuffer;
use motionforge::streaming::WindowConfig;

fn video(id: &str, len: usize, truth: GroundTruth) -> LabeledVideo {
    let blank = ImageBuffer::filled(8, 8, [90, 90, 90]).unwrap();
    LabeledVideo {
        id: id.into(),
        frames: FrameSource::Memory(vec![blank; len]),
        truth,
    }
}

fn main() -> motionforge::Result<()> {
    print!("{}", format_counts_table(Protocol::Video, &ConfusionCounts::new(28, 2, 40, 0)));

    let by_video = [
        video("fall-1", 60, GroundTruth::Video(true)),
        video("fall-2", 75, GroundTruth::Video(true)),
        video("adl-1", 50, GroundTruth::Video(false)),
    ];
    let cfg = WindowConfig::from_seconds(1.0, 25.0);
    println!("\noracle, video level:");
    print!("{}", format_counts_table(Protocol::Video, &video_level_eval(&by_video, &OracleDetector, &cfg)?));
    println!();
    print!("{}", format_sweep_table(&interval_sweep(&by_video, &OracleDetector, &[0.4, 1.0, 1.6], 25.0)?));

    let by_frame = [
        video("clip-1", 450, GroundTruth::Frames(vec![(140, 160)])),
        video("clip-2", 300, GroundTruth::Frames(vec![])),
    ];
    let cfg = WindowConfig::from_seconds(5.0, 30.0);
    println!("\noracle, frame level at 5 s / 30 fps:");
    print!("{}", format_counts_table(Protocol::Frame, &frame_level_eval(&by_frame, &OracleDetector, &cfg)?));
    Ok(())
}

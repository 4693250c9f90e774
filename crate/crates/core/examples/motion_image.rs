//! Render the four action scripts for one person and save each as a strip:
//! the rendered frames r_1..r_N followed by the training image (their mean
//! for falling / walking, the last frame otherwise).

use motionforge::imaging::concat_horizontal;
use motionforge::procedural;
use motionforge::synthesis::{synthesize_trace, ActionKind, BlendSettings, JitterConfig};

fn main() -> motionforge::Result<()> {
    let person = procedural::person("p", 32, 64, 21);
    let scene = procedural::background("b", 64, 64, 22);
    let settings = BlendSettings::urfd_like();
    let jitter = JitterConfig::default();

    for (i, action) in ActionKind::ALL.into_iter().enumerate() {
        let trace = synthesize_trace(&person, &scene, action, &settings, &jitter, 100 + i as u64)?;
        let angles: Vec<String> = trace.script.poses.iter().map(|p| format!("{:.0}", p.angle_deg)).collect();
        println!("{action:<11} {:?} angles [{}]", trace.sample.provenance.composition, angles.join(" "));
        let mut strip = trace.frames;
        strip.push(trace.sample.image);
        concat_horizontal(&strip)?.save_png(format!("motion_{}.png", action.name()))?;
    }
    Ok(())
}

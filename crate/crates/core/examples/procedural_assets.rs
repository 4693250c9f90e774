//! Writes a stand-in asset library (figures with masks, empty scenes) that
//! `motionforge synth` can consume.
//!
//!     cargo run --release --example procedural_assets -- assets 12 8

use std::path::PathBuf;

use motionforge::procedural;

fn main() -> motionforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "assets".into()));
    let persons = args.next().and_then(|s| s.parse().ok()).unwrap_or(12);
    let backgrounds = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    procedural::write_assets(&dir, persons, backgrounds, (32, 64), (64, 64), 1)?;
    println!(
        "{persons} persons in {}, {backgrounds} backgrounds in {}",
        dir.join("persons").display(),
        dir.join("backgrounds").display()
    );
    Ok(())
}

//! Generate a small labeled dataset on disk from procedural assets, then
//! reopen it through its manifest.

use std::path::PathBuf;

use motionforge::dataset::{generate_dataset, split, Dataset};
use motionforge::procedural;
use motionforge::synthesis::{BlendSettings, JitterConfig};

fn main() -> motionforge::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synthetic".into()));
    let persons: Vec<_> = (0..6).map(|i| procedural::person(&format!("p{i}"), 32, 64, i)).collect();
    let scenes: Vec<_> = (0..4).map(|i| procedural::background(&format!("b{i}"), 64, 64, 100 + i)).collect();

    let manifest = generate_dataset(
        &persons,
        &scenes,
        &BlendSettings::aihub_like(),
        &JitterConfig::default(),
        25,
        42,
        &out,
    )?;
    println!("{} samples: {:?}", manifest.len(), manifest.count_per_action());

    let ds = Dataset::open(&out)?;
    ds.manifest.verify(&ds.root)?;
    let (train, val) = split(&ds.manifest, 0.2, 1)?;
    println!("split: {} train / {} validation", train.len(), val.len());
    println!("first record: {:?}", ds.manifest.records[0]);
    Ok(())
}

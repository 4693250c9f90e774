//! Train the compact CNN on freshly synthesized motion images and report
//! held-out accuracy.
//!
//!     cargo run --release --example train_classifier -- 60 30

use motionforge::classifier::{accuracy, save_checkpoint, train, LabeledImages, ModelArchitecture, TrainConfig};
use motionforge::dataset::{generate_dataset, split};
use motionforge::procedural;
use motionforge::synthesis::{BlendSettings, JitterConfig};

fn main() -> motionforge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let per_class = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);

    let dir = std::env::temp_dir().join("motionforge-train-example");
    let persons: Vec<_> = (0..10).map(|i| procedural::person(&format!("p{i}"), 32, 64, i)).collect();
    let scenes: Vec<_> = (0..6).map(|i| procedural::background(&format!("b{i}"), 64, 64, 50 + i)).collect();
    let manifest = generate_dataset(
        &persons,
        &scenes,
        &BlendSettings::urfd_like(),
        &JitterConfig::default(),
        per_class,
        3,
        &dir,
    )?;
    let (rest, test) = split(&manifest, 0.2, 10)?;
    let (train_m, val_m) = split(&rest, 0.15, 11)?;

    let arch = ModelArchitecture::default();
    let load = |m| LabeledImages::load(m, &dir, arch.input_size);
    let (train_set, val_set, test_set) = (load(&train_m)?, load(&val_m)?, load(&test)?);
    let cfg = TrainConfig {
        epochs,
        seed: 5,
        ..TrainConfig::default()
    };
    let outcome = train(&train_set, Some(&val_set), &arch, &cfg)?;
    let acc = accuracy(&outcome.params, &arch, &test_set.images, &test_set.labels)?;
    println!(
        "best epoch {} (val {:.2}%), held-out accuracy {:.2}% on {} images",
        outcome.best_epoch,
        outcome.best_val_accuracy.unwrap_or(0.0) * 100.0,
        acc * 100.0,
        test_set.len()
    );
    save_checkpoint(&outcome.params, &arch, &dir.join("model.mfck"))?;
    println!("checkpoint at {}", dir.join("model.mfck").display());
    Ok(())
}

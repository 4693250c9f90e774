//! Acceptance suite. Runs every criterion in sequence, prints one
//! `PASS`/`FAIL` line per criterion and exits nonzero if any failed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use motionforge::classifier::{
    accuracy, backward, cross_entropy, forward, save_checkpoint, train, LabeledImages, Model,
    ModelArchitecture, ModelParams, TrainConfig,
};
use motionforge::cli::{run_bench, run_from_args};
use motionforge::dataset::{generate_dataset, pick_assets, split, ImageBatch};
use motionforge::evaluation::{
    format_metric, interval_sweep, ConfusionCounts, FrameSource, GroundTruth, LabeledVideo, OracleDetector,
};
use motionforge::imaging::{
    affine_warp, alpha_composite, mean_stack, AffineTransform, ImageBuffer, MaskBuffer, Sprite,
};
use motionforge::procedural;
use motionforge::seed;
use motionforge::streaming::{write_frame_dir, FrameWindow};
use motionforge::synthesis::{synthesize_trace, ActionKind, BlendSettings, JitterConfig};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_arithmetic() -> Outcome {
    let m = ConfusionCounts::new(28, 2, 40, 0).metrics();
    let got = [m.sensitivity, m.specificity, m.precision, m.accuracy].map(format_metric);
    check(got == ["93.33", "100.00", "100.00", "97.14"], got.join(" / "))
}

fn sweep_frames_column() -> Outcome {
    let blank = ImageBuffer::filled(4, 4, [0; 3]).unwrap();
    let videos = vec![LabeledVideo {
        id: "v".into(),
        frames: FrameSource::Memory(vec![blank; 50]),
        truth: GroundTruth::Video(false),
    }];
    let seconds = [0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6];
    let rows = interval_sweep(&videos, &OracleDetector, &seconds, 25.0).map_err(|e| e.to_string())?;
    let frames: Vec<usize> = rows.iter().map(|r| r.frames).collect();
    check(frames == [10, 15, 20, 25, 30, 35, 40], format!("frames {frames:?}"))
}

fn non_reproducibility_note() -> Outcome {
    Ok("published accuracies and fps depend on unreleased datasets and hardware; not asserted, \
        the property suite below stands in"
        .into())
}

fn random_frame(rng: &mut impl Rng, w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::new(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
}

fn rolling_mean_equivalence() -> Outcome {
    let mut rng = seed::rng(0x5011);
    let mut checks = 0usize;
    for stream in 0..200 {
        let n = rng.random_range(2..=30);
        let k = rng.random_range(1..=4);
        let frames: Vec<ImageBuffer> = (0..100).map(|_| random_frame(&mut rng, 12, 9)).collect();
        let mut window = FrameWindow::new(n, k).unwrap();
        for (i, f) in frames.iter().enumerate() {
            window.push(f).unwrap();
            if window.is_empty() {
                continue;
            }
            // Naive recomputation: the last min(n, ⌊t/k⌋) multiples of k up to t.
            let t = i + 1;
            let kept: Vec<ImageBuffer> = (1..=t)
                .filter(|j| j % k == 0)
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .take(n)
                .rev()
                .map(|j| frames[j - 1].clone())
                .collect();
            if window.mean_frame().unwrap() != mean_stack(&kept).unwrap() {
                return Err(format!("stream {stream} (N={n}, k={k}) diverged at frame {t}"));
            }
            checks += 1;
        }
    }
    Ok(format!("{checks} mean frames over 200 streams bit-identical"))
}

/// Brute-force warp: every canvas pixel, nearest alpha, clamped bilinear color.
fn warp_oracle(src: &Sprite, t: &AffineTransform, w: usize, h: usize) -> (Vec<u8>, Vec<u8>) {
    let inv = t.inverse().unwrap();
    let (sw, sh) = src.dims();
    let mut px = vec![0u8; w * h * 3];
    let mut al = vec![0u8; w * h];
    let at = |x: isize, y: isize| src.pixels.pixel(x.clamp(0, sw as isize - 1) as usize, y.clamp(0, sh as isize - 1) as usize);
    for oy in 0..h {
        for ox in 0..w {
            let (u, v) = inv.apply(ox as f64 + 0.5, oy as f64 + 0.5);
            if u < 0.0 || v < 0.0 || u >= sw as f64 || v >= sh as f64 {
                continue;
            }
            if src.alpha.get(u.floor() as usize, v.floor() as usize) == 0 {
                continue;
            }
            al[oy * w + ox] = 255;
            let (cu, cv) = (u - 0.5, v - 0.5);
            let (x0, y0) = (cu.floor(), cv.floor());
            let (fx, fy) = (cu - x0, cv - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for c in 0..3 {
                let top = (1.0 - fx) * at(x0, y0)[c] as f64 + fx * at(x0 + 1, y0)[c] as f64;
                let bot = (1.0 - fx) * at(x0, y0 + 1)[c] as f64 + fx * at(x0 + 1, y0 + 1)[c] as f64;
                let val = (1.0 - fy) * top + fy * bot;
                px[(oy * w + ox) * 3 + c] = (val + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    }
    (px, al)
}

fn warp_and_composite_oracles() -> Outcome {
    let mut rng = seed::rng(0xc0de);
    for case in 0..50 {
        let (sw, sh) = (rng.random_range(2..24), rng.random_range(2..24));
        let pixels = random_frame(&mut rng, sw, sh);
        let mask = (0..sw * sh).map(|_| if rng.random_bool(0.6) { 255 } else { 0 }).collect();
        let sprite = Sprite::new(pixels, MaskBuffer::new(sw, sh, mask).unwrap(), (sw as f64 / 2.0, sh as f64)).unwrap();
        let (w, h) = (rng.random_range(8..48), rng.random_range(8..48));
        let t = AffineTransform::new(
            rng.random_range(0.4..2.5),
            rng.random_range(-0.8..0.8),
            rng.random_range(-10.0..30.0),
            rng.random_range(-0.8..0.8),
            rng.random_range(0.4..2.5),
            rng.random_range(-10.0..30.0),
        );
        if !t.is_invertible() {
            continue;
        }
        let warped = affine_warp(&sprite, &t, w, h).map_err(|e| e.to_string())?;
        let (px, al) = warp_oracle(&sprite, &t, w, h);
        if warped.pixels.data() != px.as_slice() || warped.alpha.data() != al.as_slice() {
            return Err(format!("warp case {case} differs from oracle"));
        }
        let background = random_frame(&mut rng, w, h);
        let out = alpha_composite(&background, &warped).map_err(|e| e.to_string())?;
        for i in 0..w * h {
            let expected = if al[i] != 0 { &px[i * 3..i * 3 + 3] } else { &background.data()[i * 3..i * 3 + 3] };
            if &out.data()[i * 3..i * 3 + 3] != expected {
                return Err(format!("composite case {case} differs at pixel {i}"));
            }
        }
    }
    Ok("50 random warps and composites match brute-force oracles exactly".into())
}

fn gradient_check() -> Outcome {
    let arch = ModelArchitecture {
        input_size: 16,
        widths: vec![4, 8, 8, 8],
        num_classes: 4,
    };
    // Small enough that no ReLU or max-pool selection flips inside ±step.
    let step = 1e-5;
    let (mut worst_vector, mut worst_element): (f64, f64) = (0.0, 0.0);
    for b in 0..5u64 {
        let params = ModelParams::<f64>::init(&arch, 100 + b);
        let mut rng = seed::rng(200 + b);
        let n = 3;
        let batch = ImageBatch {
            n,
            size: 16,
            data: (0..n * 3 * 16 * 16).map(|_| rng.random::<f64>()).collect(),
        };
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let (_, grads) = backward(&params, &arch, &batch, &labels).map_err(|e| e.to_string())?;
        let analytic = grads.flat();
        let loss = |p: &ModelParams<f64>| cross_entropy(&forward(p, &arch, &batch).unwrap(), &labels, 4).unwrap().0;
        let (mut diff2, mut norm2) = (0.0, 0.0);
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            *plus.flat_mut(i) += step;
            let mut minus = params.clone();
            *minus.flat_mut(i) -= step;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * step);
            diff2 += (a - numeric).powi(2);
            norm2 += a.powi(2).max(numeric.powi(2));
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            worst_element = worst_element.max(rel);
        }
        worst_vector = worst_vector.max((diff2 / norm2).sqrt());
    }
    check(
        worst_vector < 1e-4 && worst_element < 1e-4,
        format!(
            "worst relative error {worst_vector:.2e} (vector), {worst_element:.2e} (per parameter) over 5 batches, \
             {} parameters, step {step:e}",
            arch.parameter_count()
        ),
    )
}

fn cross_entropy_closed_forms() -> Outcome {
    let (uniform, _) = cross_entropy(&[0.0f64; 4], &[2], 4).map_err(|e| e.to_string())?;
    let logits: Vec<f64> = [0.7f64, 0.1, 0.1, 0.1].iter().map(|p| p.ln()).collect();
    let (skewed, _) = cross_entropy(&logits, &[0], 4).map_err(|e| e.to_string())?;
    check(
        (uniform - 4f64.ln()).abs() <= 1e-9 && (skewed + 0.7f64.ln()).abs() <= 1e-9,
        format!("uniform {uniform:.9}, p=0.7 {skewed:.9}"),
    )
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut full = vec!["motionforge"];
    full.extend_from_slice(args);
    run_from_args(full, &mut out).map_err(|e| format!("{args:?}: {e}"))?;
    Ok(String::from_utf8(out).unwrap())
}

fn closed_loop() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let persons: Vec<_> = (0..16).map(|i| procedural::person(&format!("p{i}"), 32, 64, 1000 + i)).collect();
    let scenes: Vec<_> = (0..10).map(|i| procedural::background(&format!("b{i}"), 64, 64, 2000 + i)).collect();
    let settings = BlendSettings::urfd_like();
    let jitter = JitterConfig::default();
    let data_dir = root.join("data");
    let manifest = generate_dataset(&persons, &scenes, &settings, &jitter, 200, 11, &data_dir).map_err(|e| e.to_string())?;

    let arch = ModelArchitecture::default();
    let (rest, test) = split(&manifest, 0.2, 12).map_err(|e| e.to_string())?;
    let (train_m, val_m) = split(&rest, 0.15, 13).map_err(|e| e.to_string())?;
    let load = |m| LabeledImages::load(m, &data_dir, arch.input_size).map_err(|e| e.to_string());
    let (train_set, val_set, test_set) = (load(&train_m)?, load(&val_m)?, load(&test)?);
    // Smaller batches generalize better on this corpus than the default 32.
    let cfg = TrainConfig {
        epochs: 100,
        batch_size: 16,
        seed: 14,
        ..TrainConfig::default()
    };
    let outcome = train(&train_set, Some(&val_set), &arch, &cfg).map_err(|e| e.to_string())?;
    let held_out = accuracy(&outcome.params, &arch, &test_set.images, &test_set.labels).map_err(|e| e.to_string())?;
    let checkpoint = root.join("model.mfck");
    save_checkpoint(&outcome.params, &arch, &checkpoint).map_err(|e| e.to_string())?;

    // Fresh falling sequences (unseen seeds), held still before and after the fall.
    let mut flagged = 0;
    for i in 0..20u64 {
        let s = seed::derive(0xfa11, i);
        let (pi, bi) = pick_assets(s, persons.len(), scenes.len());
        let trace = synthesize_trace(&persons[pi], &scenes[bi], ActionKind::Falling, &settings, &jitter, s)
            .map_err(|e| e.to_string())?;
        let mut frames = vec![trace.frames[0].clone(); 5];
        frames.extend(trace.frames.iter().cloned());
        frames.extend(std::iter::repeat_n(trace.frames.last().unwrap().clone(), 5));
        let dir = root.join(format!("fall_{i:02}"));
        write_frame_dir(&dir, &frames).map_err(|e| e.to_string())?;
        let n = trace.frames.len().to_string();
        let report = cli(&[
            "infer",
            dir.to_str().unwrap(),
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--window",
            &n,
            "--stride",
            "1",
            "--interval",
            "1",
        ])?;
        if report.lines().skip(1).any(|l| l.ends_with("\ttrue")) {
            flagged += 1;
        }
    }
    check(
        held_out >= 0.9 && flagged >= 16,
        format!(
            "held-out accuracy {:.2}% on {} images (best epoch {}/{}), {flagged}/20 falling videos flagged, {:.0} s",
            held_out * 100.0,
            test_set.len(),
            outcome.best_epoch,
            cfg.epochs,
            started.elapsed().as_secs_f64()
        ),
    )
}

fn protocol_oracle_closure() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = tmp.path().join("corpus");
    let truth: BTreeMap<&str, &str> = [
        ("fall_a", "10-14"),
        ("fall_b", "20-30"),
        ("fall_c", "1-5,25-27"),
        ("adl_a", "none"),
        ("adl_b", "none"),
        ("adl_c", "none"),
    ]
    .into();
    let frame = ImageBuffer::filled(8, 8, [40, 80, 120]).unwrap();
    for id in truth.keys() {
        write_frame_dir(&corpus.join(id), &vec![frame.clone(); 30]).map_err(|e| e.to_string())?;
    }
    let gt: String = truth.iter().map(|(id, t)| format!("{id} {t}\n")).collect();
    fs::write(corpus.join("ground_truth.txt"), gt).map_err(|e| e.to_string())?;
    let c = corpus.to_str().unwrap();
    let mut lines = Vec::new();
    for protocol in ["video", "frame"] {
        let out = cli(&["eval", c, "--oracle", "--protocol", protocol, "--window", "5", "--interval", "5"])?;
        let metrics: Vec<&str> = out
            .lines()
            .filter(|l| ["sensitivity", "specificity", "precision", "accuracy"].iter().any(|m| l.starts_with(m)))
            .map(|l| l.split_whitespace().last().unwrap())
            .collect();
        if metrics.len() != 4 || metrics.iter().any(|m| *m != "100.00") {
            return Err(format!("{protocol} protocol: {metrics:?}"));
        }
        lines.push(format!("{protocol}: all 100.00"));
    }
    Ok(format!("6-video corpus, {}", lines.join(", ")))
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    procedural::write_assets(&root.join("assets"), 4, 3, (32, 64), (64, 64), 5).map_err(|e| e.to_string())?;
    let persons = root.join("assets/persons");
    let backgrounds = root.join("assets/backgrounds");
    let mut datasets = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(format!("data_{run}"));
        cli(&[
            "synth",
            "--persons",
            persons.to_str().unwrap(),
            "--backgrounds",
            backgrounds.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--per-class",
            "6",
            "--seed",
            "7",
        ])?;
        datasets.push(dir_bytes(&out));
    }
    let same_data = datasets[0] == datasets[1] && datasets[0].len() == 25;
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let ckpt = root.join(format!("model_{run}.mfck"));
        let log = root.join(format!("log_{run}.tsv"));
        cli(&[
            "train",
            "--dataset",
            root.join("data_a").to_str().unwrap(),
            "--epochs",
            "3",
            "--seed",
            "3",
            "--input-size",
            "32",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ])?;
        logs.push((fs::read(&log).unwrap(), fs::read(&ckpt).unwrap()));
    }
    check(
        same_data && logs[0] == logs[1],
        format!(
            "synth reruns identical: {same_data} ({} files); train logs and checkpoints identical: {}",
            datasets[0].len(),
            logs[0] == logs[1]
        ),
    )
}

fn rolling_sum_performance() -> Outcome {
    let arch = ModelArchitecture::default();
    let model = Model::new(arch.clone(), ModelParams::init(&arch, 0)).map_err(|e| e.to_string())?;
    let report = run_bench(&model, &[5, 50], 2000, 64, 5, 1).map_err(|e| e.to_string())?;
    let (small, large) = (report.rows[0].mean_frame_fps, report.rows[1].mean_frame_fps);
    let ratio = large / small;
    check(
        (ratio - 1.0).abs() < 0.2,
        format!("mean-frame fps N=5 {small:.0}, N=50 {large:.0}, ratio {ratio:.3}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("metric arithmetic", metric_arithmetic),
        ("sweep seconds-to-frames column", sweep_frames_column),
        ("published figures not asserted", non_reproducibility_note),
        ("rolling-mean oracle equivalence", rolling_mean_equivalence),
        ("compositing and warp oracles", warp_and_composite_oracles),
        ("gradient check", gradient_check),
        ("cross-entropy closed forms", cross_entropy_closed_forms),
        ("closed-loop end-to-end", closed_loop),
        ("protocol oracle closure", protocol_oracle_closure),
        ("determinism", determinism),
        ("rolling-sum performance", rolling_sum_performance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

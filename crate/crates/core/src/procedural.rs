//! Procedurally drawn stand-in assets: simple articulated figures with masks
//! and cluttered indoor scenes. They let the whole pipeline run (and be
//! tested) without any downloaded person or background corpus.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::dataset::{BackgroundAsset, PersonAsset};
use crate::error::{Error, Result};
use crate::imaging::{ImageBuffer, MaskBuffer};
use crate::seed;

fn random_color(rng: &mut impl Rng) -> [u8; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn skin_tone(rng: &mut impl Rng) -> [u8; 3] {
    let base: f64 = rng.random_range(0.35..1.0);
    [
        (235.0 * base) as u8,
        (190.0 * base) as u8,
        (150.0 * base) as u8,
    ]
}

fn jitter_color(rng: &mut impl Rng, c: [u8; 3], amount: i32) -> [u8; 3] {
    c.map(|v| (v as i32 + rng.random_range(-amount..=amount)).clamp(0, 255) as u8)
}

/// Axis-aligned ellipse test.
fn in_ellipse(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    let dx = (x - cx) / rx;
    let dy = (y - cy) / ry;
    dx * dx + dy * dy <= 1.0
}

/// Distance from `p` to segment `a-b` is at most `r`.
fn in_capsule(p: (f64, f64), a: (f64, f64), b: (f64, f64), r: f64) -> bool {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    let (dx, dy) = (p.0 - (a.0 + t * vx), p.1 - (a.1 + t * vy));
    dx * dx + dy * dy <= r * r
}

/// An upright figure (head, torso, arms, legs) on a noisy photo backdrop,
/// with the exact figure mask.
pub fn person(id: &str, width: usize, height: usize, rng_seed: u64) -> PersonAsset {
    let mut rng = seed::rng(rng_seed);
    let (w, h) = (width as f64, height as f64);
    let backdrop = random_color(&mut rng);
    let skin = skin_tone(&mut rng);
    let shirt = random_color(&mut rng);
    let pants = random_color(&mut rng);

    let cx = w / 2.0 + rng.random_range(-0.05..0.05) * w;
    let top = h * rng.random_range(0.02..0.06);
    let bottom = h * rng.random_range(0.95..0.99);
    let stature = bottom - top;
    let head_r = stature * rng.random_range(0.07..0.09);
    let head_c = (cx, top + head_r);
    let shoulder_y = top + 2.0 * head_r + stature * 0.02;
    let hip_y = shoulder_y + stature * rng.random_range(0.3..0.36);
    let torso_half = (w * rng.random_range(0.14..0.22)).min(stature * 0.14);
    let limb_r = (torso_half * rng.random_range(0.32..0.45)).max(1.0);
    let stride = torso_half * rng.random_range(0.2..1.0);
    let arm_spread = torso_half * rng.random_range(1.1..1.9);
    let hand_y = hip_y + stature * rng.random_range(-0.05..0.08);

    let mut img = ImageBuffer::filled(width, height, backdrop).expect("nonzero size");
    let mut mask = MaskBuffer::filled(width, height, false).expect("nonzero size");
    for y in 0..height {
        for x in 0..width {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let color = if in_ellipse(p.0, p.1, head_c.0, head_c.1, head_r * 0.85, head_r) {
                Some(skin)
            } else if p.1 >= shoulder_y
                && p.1 <= hip_y
                && (p.0 - cx).abs() <= torso_half * (1.0 - 0.15 * (p.1 - shoulder_y) / (hip_y - shoulder_y))
                || in_capsule(p, (cx - torso_half * 0.9, shoulder_y + limb_r), (cx - arm_spread, hand_y), limb_r * 0.8)
                || in_capsule(p, (cx + torso_half * 0.9, shoulder_y + limb_r), (cx + arm_spread, hand_y), limb_r * 0.8)
            {
                Some(shirt)
            } else if in_capsule(p, (cx - torso_half * 0.45, hip_y), (cx - stride, bottom - limb_r), limb_r)
                || in_capsule(p, (cx + torso_half * 0.45, hip_y), (cx + stride, bottom - limb_r), limb_r)
            {
                Some(pants)
            } else {
                None
            };
            match color {
                Some(c) => {
                    img.set_pixel(x, y, jitter_color(&mut rng, c, 10));
                    mask.set(x, y, true);
                }
                None => img.set_pixel(x, y, jitter_color(&mut rng, backdrop, 25)),
            }
        }
    }
    PersonAsset::new(id, img, mask).expect("figure mask is nonempty")
}

/// A person-free indoor scene: wall gradient, floor plane and a few boxes
/// kept away from the center.
pub fn background(id: &str, width: usize, height: usize, rng_seed: u64) -> BackgroundAsset {
    let mut rng = seed::rng(rng_seed);
    let wall_top = random_color(&mut rng);
    let wall_bottom = random_color(&mut rng);
    let floor = random_color(&mut rng);
    let horizon = height as f64 * rng.random_range(0.55..0.8);
    let mut img = ImageBuffer::filled(width, height, [0, 0, 0]).expect("nonzero size");
    for y in 0..height {
        let t = y as f64 / height as f64;
        for x in 0..width {
            let c = if (y as f64) < horizon {
                [0, 1, 2].map(|i| (wall_top[i] as f64 * (1.0 - t) + wall_bottom[i] as f64 * t) as u8)
            } else {
                floor
            };
            img.set_pixel(x, y, jitter_color(&mut rng, c, 6));
        }
    }
    let boxes = rng.random_range(1..=4);
    for _ in 0..boxes {
        let color = random_color(&mut rng);
        let bw = (width as f64 * rng.random_range(0.08..0.2)) as usize + 1;
        let bh = (height as f64 * rng.random_range(0.1..0.35)) as usize + 1;
        let left_side = rng.random_bool(0.5);
        let x0 = if left_side {
            rng.random_range(0..=(width / 4))
        } else {
            (3 * width / 4 + rng.random_range(0..=(width / 4))).saturating_sub(bw)
        }
        .min(width.saturating_sub(bw));
        let y0 = ((horizon as usize).saturating_sub(bh)).min(height.saturating_sub(bh));
        for y in y0..(y0 + bh).min(height) {
            for x in x0..(x0 + bw).min(width) {
                img.set_pixel(x, y, jitter_color(&mut rng, color, 8));
            }
        }
    }
    BackgroundAsset::new(id, img)
}

/// Writes `persons` figures as `<dir>/persons/<id>/{image,mask}.png` and
/// `backgrounds` scenes as `<dir>/backgrounds/<id>.png`.
pub fn write_assets(
    dir: &Path,
    persons: usize,
    backgrounds: usize,
    person_size: (usize, usize),
    background_size: (usize, usize),
    rng_seed: u64,
) -> Result<()> {
    let person_dir = dir.join("persons");
    let background_dir = dir.join("backgrounds");
    for d in [&person_dir, &background_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for i in 0..persons {
        let id = format!("person_{i:04}");
        let p = person(&id, person_size.0, person_size.1, seed::derive(rng_seed, i as u64));
        let pdir = person_dir.join(&id);
        fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
        p.image.save_png(pdir.join("image.png"))?;
        p.mask.save_png(pdir.join("mask.png"))?;
    }
    for i in 0..backgrounds {
        let id = format!("scene_{i:03}");
        let b = background(
            &id,
            background_size.0,
            background_size.1,
            seed::derive(rng_seed ^ 0x5eed_ba5e, i as u64),
        );
        b.image.save_png(background_dir.join(format!("{id}.png")))?;
    }
    Ok(())
}

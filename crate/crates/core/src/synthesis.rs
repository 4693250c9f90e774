//! Motion-image synthesis: jitter a person photo, cut it out, script a motion
//! as a sequence of affine poses, paste each pose into a background and emit
//! either the last frame (motionless actions) or the integer mean of all
//! frames (motional actions).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{BackgroundAsset, PersonAsset};
use crate::error::{Error, Result};
use crate::imaging::{
    affine_warp, alpha_composite, mean_stack, AffineTransform, ImageBuffer, MaskBuffer, Sprite,
    CHANNELS,
};
use crate::seed;

/// The four action classes, in label-index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Falling,
    Walking,
    Standing,
    LyingDown,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::Falling,
        ActionKind::Walking,
        ActionKind::Standing,
        ActionKind::LyingDown,
    ];

    pub fn index(self) -> usize {
        match self {
            ActionKind::Falling => 0,
            ActionKind::Walking => 1,
            ActionKind::Standing => 2,
            ActionKind::LyingDown => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<ActionKind> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Falling => "falling",
            ActionKind::Walking => "walking",
            ActionKind::Standing => "standing",
            ActionKind::LyingDown => "lying_down",
        }
    }

    /// Falling and walking are rendered as the mean of the pose sequence.
    pub fn is_motional(self) -> bool {
        matches!(self, ActionKind::Falling | ActionKind::Walking)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown action `{s}`")))
    }
}

/// One photometric effect: applied with `probability`, strength drawn from `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effect {
    pub probability: f64,
    pub min: f64,
    pub max: f64,
}

impl Effect {
    pub const fn new(probability: f64, min: f64, max: f64) -> Self {
        Self {
            probability,
            min,
            max,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) || !(self.min <= self.max) {
            return Err(Error::Config(format!(
                "jitter effect `{name}`: probability must be in [0,1] and min <= max"
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> Option<f64> {
        if self.probability > 0.0 && rng.random_bool(self.probability) {
            Some(if self.min < self.max {
                rng.random_range(self.min..=self.max)
            } else {
                self.min
            })
        } else {
            None
        }
    }
}

/// Randomized photometric jitter plus horizontal flip.
///
/// Brightness is an additive delta in fractions of full scale, contrast a
/// multiplicative factor about the image mean, hue a rotation in fractions of
/// the full circle, blur a Gaussian sigma in pixels and noise an additive
/// Gaussian sigma in sample units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JitterConfig {
    pub brightness: Effect,
    pub contrast: Effect,
    pub hue: Effect,
    pub blur: Effect,
    pub noise: Effect,
    pub flip_probability: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            brightness: Effect::new(0.5, -0.2, 0.2),
            contrast: Effect::new(0.5, 0.8, 1.25),
            hue: Effect::new(0.5, -0.05, 0.05),
            blur: Effect::new(0.3, 0.0, 1.5),
            noise: Effect::new(0.3, 0.0, 8.0),
            flip_probability: 0.5,
        }
    }
}

impl JitterConfig {
    /// Every effect disabled.
    pub fn identity() -> Self {
        let off = |e: Effect| Effect { probability: 0.0, ..e };
        let d = Self::default();
        Self {
            brightness: off(d.brightness),
            contrast: off(d.contrast),
            hue: off(d.hue),
            blur: off(d.blur),
            noise: off(d.noise),
            flip_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.brightness.validate("brightness")?;
        self.contrast.validate("contrast")?;
        self.hue.validate("hue")?;
        self.blur.validate("blur")?;
        self.noise.validate("noise")?;
        if self.blur.min < 0.0 || self.noise.min < 0.0 {
            return Err(Error::Config("blur and noise sigmas must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config("flip_probability must be in [0,1]".into()));
        }
        Ok(())
    }
}

fn map_samples(img: &mut ImageBuffer, f: impl Fn(f64) -> f64) {
    for v in img.data_mut() {
        *v = f(*v as f64).round().clamp(0.0, 255.0) as u8;
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    } / 6.0;
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

fn shift_hue(img: &mut ImageBuffer, shift: f64) {
    for px in img.data_mut().chunks_exact_mut(CHANNELS) {
        let (h, s, v) = rgb_to_hsv(px[0] as f64, px[1] as f64, px[2] as f64);
        let (r, g, b) = hsv_to_rgb(h + shift, s, v);
        px[0] = r.round().clamp(0.0, 255.0) as u8;
        px[1] = g.round().clamp(0.0, 255.0) as u8;
        px[2] = b.round().clamp(0.0, 255.0) as u8;
    }
}

fn gaussian_blur(img: &mut ImageBuffer, sigma: f64) {
    if sigma < 0.1 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (w, h) = img.dims();
    let src: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..CHANNELS {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sx = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                    acc += wgt * src[(y * w + sx) * CHANNELS + ch];
                }
                tmp[(y * w + x) * CHANNELS + ch] = acc / norm;
            }
        }
    }
    let out = img.data_mut();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..CHANNELS {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                    acc += wgt * tmp[(sy * w + x) * CHANNELS + ch];
                }
                out[(y * w + x) * CHANNELS + ch] = (acc / norm).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
}

/// Applies a seeded random subset of the configured effects.
///
/// Photometric effects only touch pixels; a drawn flip mirrors both image and mask.
pub fn jitter(
    x: &ImageBuffer,
    m: &MaskBuffer,
    cfg: &JitterConfig,
    rng_seed: u64,
) -> Result<(ImageBuffer, MaskBuffer)> {
    if x.dims() != m.dims() {
        return Err(Error::DimensionMismatch {
            expected: x.dims(),
            actual: m.dims(),
        });
    }
    cfg.validate()?;
    let mut rng = seed::rng(rng_seed);
    let (mut img, mut mask) = (x.clone(), m.clone());

    if cfg.flip_probability > 0.0 && rng.random_bool(cfg.flip_probability) {
        img = img.flip_horizontal();
        mask = mask.flip_horizontal();
    }
    if let Some(delta) = cfg.brightness.draw(&mut rng) {
        map_samples(&mut img, |v| v + delta * 255.0);
    }
    if let Some(factor) = cfg.contrast.draw(&mut rng) {
        let mean = img.data().iter().map(|&v| v as f64).sum::<f64>() / img.data().len() as f64;
        map_samples(&mut img, |v| (v - mean) * factor + mean);
    }
    if let Some(shift) = cfg.hue.draw(&mut rng) {
        shift_hue(&mut img, shift);
    }
    if let Some(sigma) = cfg.blur.draw(&mut rng) {
        gaussian_blur(&mut img, sigma);
    }
    if let Some(sigma) = cfg.noise.draw(&mut rng) {
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
            for v in img.data_mut() {
                let n: f64 = normal.sample(&mut rng);
                *v = (*v as f64 + n).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok((img, mask))
}

/// Crops to the mask's bounding box; the anchor is the box's bottom-center.
pub fn cutout(x: &ImageBuffer, m: &MaskBuffer) -> Result<Sprite> {
    if x.dims() != m.dims() {
        return Err(Error::DimensionMismatch {
            expected: x.dims(),
            actual: m.dims(),
        });
    }
    let (x0, y0, x1, y1) = m.bounding_box().ok_or(Error::EmptyMask)?;
    let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
    Sprite::new(
        x.crop(x0, y0, w, h)?,
        m.crop(x0, y0, w, h)?,
        (w as f64 / 2.0, h as f64),
    )
}

/// Placement and motion ranges for one acquisition environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlendSettings {
    /// Standing person height as a fraction of background height.
    pub person_scale: [f64; 2],
    /// Walking displacement per step as a fraction of background width.
    pub step_transition: [f64; 2],
    /// Feet line as a fraction of background height.
    pub floor_band: [f64; 2],
    /// Torso angle reached at the last falling pose, degrees from upright.
    pub fall_angle_deg: [f64; 2],
    /// Total downward anchor drift during a fall, fraction of background height.
    pub fall_drift: [f64; 2],
    /// Vertical walking bob as a fraction of the scaled person height.
    pub walk_bob: f64,
    pub n_steps: usize,
}

pub const DEFAULT_N_STEPS: usize = 10;

impl Default for BlendSettings {
    fn default() -> Self {
        Self::urfd_like()
    }
}

impl BlendSettings {
    pub const PRESETS: [&'static str; 2] = ["urfd-like", "aihub-like"];

    /// Close camera: large person, short steps.
    pub fn urfd_like() -> Self {
        Self {
            person_scale: [0.55, 0.8],
            step_transition: [0.01, 0.03],
            floor_band: [0.85, 0.95],
            fall_angle_deg: [70.0, 90.0],
            fall_drift: [0.0, 0.05],
            walk_bob: 0.02,
            n_steps: DEFAULT_N_STEPS,
        }
    }

    /// Wide surveillance view: small person, longer steps.
    pub fn aihub_like() -> Self {
        Self {
            person_scale: [0.25, 0.45],
            step_transition: [0.02, 0.05],
            floor_band: [0.6, 0.95],
            fall_angle_deg: [70.0, 90.0],
            fall_drift: [0.0, 0.03],
            walk_bob: 0.02,
            n_steps: DEFAULT_N_STEPS,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "urfd-like" => Ok(Self::urfd_like()),
            "aihub-like" => Ok(Self::aihub_like()),
            other => Err(Error::Config(format!(
                "unknown blend preset `{other}` (expected one of {:?})",
                Self::PRESETS
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: &[f64; 2]| r[0] <= r[1];
        let bad = |msg: &str| Err(Error::Config(format!("blend settings: {msg}")));
        if !ordered(&self.person_scale) || self.person_scale[0] <= 0.0 || self.person_scale[1] > 1.0 {
            return bad("person_scale must satisfy 0 < min <= max <= 1");
        }
        if !ordered(&self.step_transition) || self.step_transition[0] < 0.0 {
            return bad("step_transition must be nonnegative with min <= max");
        }
        if !ordered(&self.floor_band) || self.floor_band[0] < 0.0 || self.floor_band[1] > 1.0 {
            return bad("floor_band must lie within [0, 1]");
        }
        if !ordered(&self.fall_angle_deg) || self.fall_angle_deg[0] <= 0.0 || self.fall_angle_deg[1] > 90.0 {
            return bad("fall_angle_deg must lie within (0, 90]");
        }
        if !ordered(&self.fall_drift) || self.fall_drift[0] < 0.0 {
            return bad("fall_drift must be nonnegative with min <= max");
        }
        if !(0.0..=0.05).contains(&self.walk_bob) {
            return bad("walk_bob must lie within [0, 0.05]");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be >= 1");
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] < range[1] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

/// Uniform in `[lo, hi]`, or the midpoint of the band when it is empty.
fn place(rng: &mut impl Rng, lo: f64, hi: f64, fallback: f64) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else if lo == hi {
        lo
    } else {
        fallback
    }
}

/// One pose of a motion: where the sprite anchor lands, how it is scaled and
/// the torso angle (degrees from upright, signed by direction).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub angle_deg: f64,
    pub anchor: (f64, f64),
    pub scale: f64,
    pub transform: AffineTransform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionScript {
    pub action: ActionKind,
    pub poses: Vec<Pose>,
}

impl MotionScript {
    pub fn n_steps(&self) -> usize {
        self.poses.len()
    }

    pub fn transforms(&self) -> impl Iterator<Item = &AffineTransform> {
        self.poses.iter().map(|p| &p.transform)
    }
}

/// Builds the pose sequence for `action`.
///
/// Falling rotates about the feet from upright to the drawn final angle with
/// quadratic easing and a slight downward drift; walking translates by a fixed
/// per-step displacement with a small vertical bob; standing and lying down
/// repeat one pose (lying down is the upright pose turned 90° on the floor line).
pub fn script_for_action(
    action: ActionKind,
    settings: &BlendSettings,
    sprite_size: (usize, usize),
    background_size: (usize, usize),
    rng_seed: u64,
) -> Result<MotionScript> {
    settings.validate()?;
    let mut rng = seed::rng(rng_seed);
    let (sprite_w, sprite_h) = (sprite_size.0 as f64, sprite_size.1 as f64);
    let (bg_w, bg_h) = (background_size.0 as f64, background_size.1 as f64);
    let sprite_anchor = (sprite_w / 2.0, sprite_h);

    let scale = uniform(&mut rng, settings.person_scale) * bg_h / sprite_h;
    let (scaled_w, scaled_h) = (sprite_w * scale, sprite_h * scale);
    if scaled_w > bg_w + 1e-9 || scaled_h > bg_h + 1e-9 {
        return Err(Error::SpriteExceedsBackground);
    }
    let floor_y = uniform(&mut rng, settings.floor_band) * bg_h;
    let direction = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let n = settings.n_steps;

    let pose = |angle_deg: f64, anchor: (f64, f64)| Pose {
        angle_deg,
        anchor,
        scale,
        transform: AffineTransform::pinned(sprite_anchor, anchor, scale, angle_deg.to_radians()),
    };
    // Anchor x range keeping a body of horizontal extent `reach` (towards
    // `direction`) inside the background.
    let lying_x = |rng: &mut rand_chacha::ChaCha8Rng, reach: f64| {
        let (lo, hi) = if direction > 0.0 {
            (scaled_w / 2.0, bg_w - reach)
        } else {
            (reach, bg_w - scaled_w / 2.0)
        };
        place(rng, lo, hi, bg_w / 2.0 - direction * reach / 2.0)
    };

    let poses = match action {
        ActionKind::Standing => {
            let x = place(&mut rng, scaled_w / 2.0, bg_w - scaled_w / 2.0, bg_w / 2.0);
            vec![pose(0.0, (x, floor_y)); n]
        }
        ActionKind::LyingDown => {
            let x = lying_x(&mut rng, scaled_h);
            vec![pose(90.0 * direction, (x, floor_y)); n]
        }
        ActionKind::Falling => {
            let final_angle = uniform(&mut rng, settings.fall_angle_deg);
            let drift = uniform(&mut rng, settings.fall_drift) * bg_h;
            let x = lying_x(&mut rng, scaled_h * final_angle.to_radians().sin());
            (0..n)
                .map(|i| {
                    let ease = if n == 1 {
                        1.0
                    } else {
                        let t = i as f64 / (n - 1) as f64;
                        t * t
                    };
                    pose(
                        direction * final_angle * ease,
                        (x, floor_y - drift + drift * ease),
                    )
                })
                .collect()
        }
        ActionKind::Walking => {
            let step = uniform(&mut rng, settings.step_transition) * bg_w;
            let travel = step * (n.saturating_sub(1)) as f64;
            let (lo, hi) = if direction > 0.0 {
                (scaled_w / 2.0, bg_w - scaled_w / 2.0 - travel)
            } else {
                (scaled_w / 2.0 + travel, bg_w - scaled_w / 2.0)
            };
            let x0 = place(&mut rng, lo, hi, bg_w / 2.0 - direction * travel / 2.0);
            let bob = settings.walk_bob * scaled_h;
            (0..n)
                .map(|i| {
                    let lift = if i % 2 == 1 { bob } else { 0.0 };
                    pose(0.0, (x0 + direction * step * i as f64, floor_y - lift))
                })
                .collect()
        }
    };
    Ok(MotionScript { action, poses })
}

/// Pastes the sprite into `background` once per pose.
pub fn render_sequence(
    sprite: &Sprite,
    background: &ImageBuffer,
    script: &MotionScript,
) -> Result<Vec<ImageBuffer>> {
    let (w, h) = background.dims();
    script
        .transforms()
        .map(|t| alpha_composite(background, &affine_warp(sprite, t, w, h)?))
        .collect()
}

/// How a sample's image was produced from the rendered sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Composition {
    /// `r_N`, the final rendered frame.
    FinalFrame,
    /// Integer mean of all rendered frames.
    SequenceMean,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub person_id: String,
    pub background_id: String,
    pub seed: u64,
    pub settings_hash: String,
    pub composition: Composition,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub image: ImageBuffer,
    pub label: ActionKind,
    pub provenance: Provenance,
}

/// Everything produced on the way to one sample.
#[derive(Clone, Debug)]
pub struct SynthesisTrace {
    pub sample: TrainingSample,
    pub sprite: Sprite,
    pub script: MotionScript,
    pub frames: Vec<ImageBuffer>,
}

/// Short stable digest of the settings that shape a sample.
pub fn settings_hash(settings: &BlendSettings, cfg: &JitterConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(settings).expect("settings serialize"));
    hasher.update(b"\0");
    hasher.update(serde_json::to_vec(cfg).expect("jitter config serializes"));
    hasher
        .finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

const JITTER_STREAM: u64 = 0;
const SCRIPT_STREAM: u64 = 1;

pub fn synthesize_trace(
    person: &PersonAsset,
    background: &BackgroundAsset,
    action: ActionKind,
    settings: &BlendSettings,
    cfg: &JitterConfig,
    seed: u64,
) -> Result<SynthesisTrace> {
    let (x_hat, m_hat) = jitter(
        &person.image,
        &person.mask,
        cfg,
        seed::derive(seed, JITTER_STREAM),
    )?;
    let sprite = cutout(&x_hat, &m_hat)?;
    let script = script_for_action(
        action,
        settings,
        sprite.dims(),
        background.image.dims(),
        seed::derive(seed, SCRIPT_STREAM),
    )?;
    let frames = render_sequence(&sprite, &background.image, &script)?;
    let (image, composition) = if action.is_motional() {
        (mean_stack(&frames)?, Composition::SequenceMean)
    } else {
        let last = frames.last().cloned().ok_or(Error::EmptySequence("no poses"))?;
        (last, Composition::FinalFrame)
    };
    Ok(SynthesisTrace {
        sample: TrainingSample {
            image,
            label: action,
            provenance: Provenance {
                person_id: person.id.clone(),
                background_id: background.id.clone(),
                seed,
                settings_hash: settings_hash(settings, cfg),
                composition,
            },
        },
        sprite,
        script,
        frames,
    })
}

/// One labeled training image: `r_N` for standing / lying down, the mean of
/// the rendered sequence for falling / walking.
pub fn synthesize_sample(
    person: &PersonAsset,
    background: &BackgroundAsset,
    action: ActionKind,
    settings: &BlendSettings,
    cfg: &JitterConfig,
    seed: u64,
) -> Result<TrainingSample> {
    synthesize_trace(person, background, action, settings, cfg, seed).map(|t| t.sample)
}

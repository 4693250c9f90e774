//! Asset ingestion, on-disk dataset generation with a manifest, stratified
//! splits and normalized mini-batches.
//!
//! Dataset layout:
//!
//! ```text
//! <root>/manifest.tsv
//! <root>/<action>/<index>.png      e.g. falling/000003.png
//! ```
//!
//! `manifest.tsv` is UTF-8 with LF endings. Line 1 is the version line
//! `# motionforge manifest v1`, line 2 the column header
//! `path label action person background seed settings_hash` (tab separated),
//! then one tab-separated record per sample. `label` is the class index
//! (falling=0, walking=1, standing=2, lying_down=3).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::{resize_normalized, ImageBuffer, MaskBuffer, CHANNELS};
use crate::seed;
use crate::synthesis::{settings_hash, synthesize_sample, ActionKind, BlendSettings, JitterConfig};

/// A masked person photo.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonAsset {
    pub id: String,
    pub image_path: Option<PathBuf>,
    pub mask_path: Option<PathBuf>,
    pub image: ImageBuffer,
    pub mask: MaskBuffer,
}

impl PersonAsset {
    pub fn new(id: impl Into<String>, image: ImageBuffer, mask: MaskBuffer) -> Result<Self> {
        let id = id.into();
        validate_id(&id)?;
        if image.dims() != mask.dims() {
            return Err(Error::DimensionMismatch {
                expected: image.dims(),
                actual: mask.dims(),
            });
        }
        if mask.count_on() == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            id,
            image_path: None,
            mask_path: None,
            image,
            mask,
        })
    }

    pub fn load(id: impl Into<String>, image_path: &Path, mask_path: &Path) -> Result<Self> {
        let mut asset = Self::new(
            id,
            ImageBuffer::load_png(image_path)?,
            MaskBuffer::load_png(mask_path)?,
        )?;
        asset.image_path = Some(image_path.to_path_buf());
        asset.mask_path = Some(mask_path.to_path_buf());
        Ok(asset)
    }
}

/// A person-free scene.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundAsset {
    pub id: String,
    pub image_path: Option<PathBuf>,
    pub image: ImageBuffer,
}

impl BackgroundAsset {
    pub fn new(id: impl Into<String>, image: ImageBuffer) -> Self {
        Self {
            id: id.into(),
            image_path: None,
            image,
        }
    }
}

fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(|c| c == '\t' || c == '\n' || c == '\r') {
        return Err(Error::InvalidInput(format!("asset id {id:?} is empty or contains tab/newline")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedAsset {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct Assets {
    pub persons: Vec<PersonAsset>,
    pub backgrounds: Vec<BackgroundAsset>,
    pub skipped: Vec<SkippedAsset>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Candidate `(id, image, mask)` triples in a person directory: either
/// `<id>/image.png` + `<id>/mask.png` or `<id>.png` + `<id>_mask.png`.
/// Incomplete candidates are returned as skipped.
pub fn scan_person_dir(dir: &Path) -> Result<(Vec<(String, PathBuf, PathBuf)>, Vec<SkippedAsset>)> {
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for path in sorted_entries(dir)? {
        if path.is_dir() {
            let (image, mask) = (path.join("image.png"), path.join("mask.png"));
            if image.is_file() && mask.is_file() {
                let id = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                pairs.push((id, image, mask));
            } else {
                skipped.push(SkippedAsset {
                    path,
                    reason: "directory lacks image.png or mask.png".into(),
                });
            }
        } else if is_png(&path) {
            let stem = file_stem(&path);
            if stem.ends_with("_mask") {
                let base = path.with_file_name(format!("{}.png", &stem[..stem.len() - 5]));
                if !base.is_file() {
                    skipped.push(SkippedAsset {
                        path,
                        reason: "mask without matching image".into(),
                    });
                }
                continue;
            }
            let mask = path.with_file_name(format!("{stem}_mask.png"));
            if mask.is_file() {
                pairs.push((stem, path, mask));
            } else {
                skipped.push(SkippedAsset {
                    path,
                    reason: "image without matching _mask.png".into(),
                });
            }
        }
    }
    Ok((pairs, skipped))
}

/// Loads and validates person/mask pairs and backgrounds.
///
/// Pairs that fail to load or violate the asset invariants are skipped,
/// logged and reported in [`Assets::skipped`]. Fails when either directory
/// yields no usable asset.
pub fn ingest_assets(person_dir: &Path, background_dir: &Path) -> Result<Assets> {
    let (pairs, mut skipped) = scan_person_dir(person_dir)?;
    let mut persons = Vec::new();
    for (id, image, mask) in pairs {
        match PersonAsset::load(id, &image, &mask) {
            Ok(p) => persons.push(p),
            Err(e) => skipped.push(SkippedAsset {
                path: image,
                reason: e.to_string(),
            }),
        }
    }
    let mut backgrounds = Vec::new();
    for path in sorted_entries(background_dir)? {
        if !path.is_file() || !is_png(&path) {
            continue;
        }
        match ImageBuffer::load_png(&path) {
            Ok(image) => {
                let mut bg = BackgroundAsset::new(file_stem(&path), image);
                bg.image_path = Some(path);
                backgrounds.push(bg);
            }
            Err(e) => skipped.push(SkippedAsset {
                path,
                reason: e.to_string(),
            }),
        }
    }
    for s in &skipped {
        log::warn!("skipping asset {}: {}", s.path.display(), s.reason);
    }
    if persons.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no usable person/mask pairs in {} ({} skipped)",
            person_dir.display(),
            skipped.len()
        )));
    }
    if backgrounds.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no usable background images in {}",
            background_dir.display()
        )));
    }
    Ok(Assets {
        persons,
        backgrounds,
        skipped,
    })
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MANIFEST_VERSION_LINE: &str = "# motionforge manifest v1";
pub const MANIFEST_COLUMNS: [&str; 7] = [
    "path",
    "label",
    "action",
    "person",
    "background",
    "seed",
    "settings_hash",
];

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ManifestRecord {
    /// Path relative to the dataset root, `/`-separated.
    pub path: String,
    pub action: ActionKind,
    pub person_id: String,
    pub background_id: String,
    pub seed: u64,
    pub settings_hash: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_per_action(&self) -> BTreeMap<ActionKind, usize> {
        let mut counts: BTreeMap<ActionKind, usize> = ActionKind::ALL.iter().map(|&a| (a, 0)).collect();
        for r in &self.records {
            *counts.entry(r.action).or_default() += 1;
        }
        counts
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MANIFEST_VERSION_LINE);
        out.push('\n');
        out.push_str(&MANIFEST_COLUMNS.join("\t"));
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.path,
                r.action.index(),
                r.action.name(),
                r.person_id,
                r.background_id,
                r.seed,
                r.settings_hash
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        let bad = |line: usize, message: String| Error::Manifest { line, message };
        match lines.next() {
            Some((_, l)) if l == MANIFEST_VERSION_LINE => {}
            Some((_, l)) => return Err(bad(1, format!("expected `{MANIFEST_VERSION_LINE}`, found `{l}`"))),
            None => return Err(bad(1, "empty manifest".into())),
        }
        match lines.next() {
            Some((_, l)) if l == MANIFEST_COLUMNS.join("\t") => {}
            _ => return Err(bad(2, "missing or malformed column header".into())),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != MANIFEST_COLUMNS.len() {
                return Err(bad(line_no, format!("expected 7 fields, found {}", fields.len())));
            }
            let action: ActionKind = fields[2]
                .parse()
                .map_err(|_| bad(line_no, format!("unknown action `{}`", fields[2])))?;
            let label: usize = fields[1]
                .parse()
                .map_err(|_| bad(line_no, format!("bad label `{}`", fields[1])))?;
            if label != action.index() {
                return Err(bad(line_no, format!("label {label} does not match action {action}")));
            }
            let seed = fields[5]
                .parse()
                .map_err(|_| bad(line_no, format!("bad seed `{}`", fields[5])))?;
            if fields[0].is_empty() || fields[0].starts_with('/') || fields[0].split('/').any(|c| c == "..") {
                return Err(bad(line_no, format!("path `{}` must be relative to the dataset", fields[0])));
            }
            records.push(ManifestRecord {
                path: fields[0].to_string(),
                action,
                person_id: fields[3].to_string(),
                background_id: fields[4].to_string(),
                seed,
                settings_hash: fields[6].to_string(),
            });
        }
        Ok(Self { records })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Checks that every record's file exists and that no untracked PNG sits
    /// in a class directory.
    pub fn verify(&self, root: &Path) -> Result<()> {
        let mut tracked = BTreeSet::new();
        for r in &self.records {
            let p = root.join(&r.path);
            if !p.is_file() {
                return Err(Error::MissingRecordFile {
                    record: r.path.clone(),
                    path: p,
                });
            }
            tracked.insert(p);
        }
        for action in ActionKind::ALL {
            let dir = root.join(action.name());
            if !dir.is_dir() {
                continue;
            }
            for p in sorted_entries(&dir)? {
                if is_png(&p) && !tracked.contains(&p) {
                    return Err(Error::InvalidInput(format!(
                        "orphan sample file {} not in manifest",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A dataset directory and its manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest = Manifest::read(&root.join(MANIFEST_FILE))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }
}

const ASSET_STREAM: u64 = 0x000a_55e7;

/// Seed of sample `index` of class `action`.
pub fn sample_seed(global_seed: u64, action: ActionKind, index: usize) -> u64 {
    seed::derive(seed::derive(global_seed, action.index() as u64), index as u64)
}

/// `(person, background)` indices used for the sample with seed `sample_seed`.
pub fn pick_assets(sample_seed: u64, persons: usize, backgrounds: usize) -> (usize, usize) {
    let mut pick = seed::rng(seed::derive(sample_seed, ASSET_STREAM));
    let p = pick.random_range(0..persons);
    (p, pick.random_range(0..backgrounds))
}

/// Synthesizes `per_class_count` samples for every action into `out_dir`.
///
/// Each sample's seed depends only on `(global_seed, action, index)`; the
/// person and background are drawn uniformly from a stream of that seed.
/// Stale PNGs left in the class directories by earlier runs are removed.
pub fn generate_dataset(
    persons: &[PersonAsset],
    backgrounds: &[BackgroundAsset],
    settings: &BlendSettings,
    cfg: &JitterConfig,
    per_class_count: usize,
    global_seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    if per_class_count == 0 {
        return Err(Error::InvalidInput("per_class_count must be >= 1".into()));
    }
    if persons.is_empty() || backgrounds.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one person and one background asset".into(),
        ));
    }
    settings.validate()?;
    cfg.validate()?;
    let hash = settings_hash(settings, cfg);
    let mut manifest = Manifest::default();
    for action in ActionKind::ALL {
        let class_dir = out_dir.join(action.name());
        fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        for i in 0..per_class_count {
            let s = sample_seed(global_seed, action, i);
            let (pi, bi) = pick_assets(s, persons.len(), backgrounds.len());
            let (person, background) = (&persons[pi], &backgrounds[bi]);
            let sample = synthesize_sample(person, background, action, settings, cfg, s)?;
            let rel = format!("{}/{:06}.png", action.name(), i);
            sample.image.save_png(out_dir.join(&rel))?;
            manifest.records.push(ManifestRecord {
                path: rel,
                action,
                person_id: person.id.clone(),
                background_id: background.id.clone(),
                seed: s,
                settings_hash: hash.clone(),
            });
        }
    }
    remove_orphans(&manifest, out_dir)?;
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn remove_orphans(manifest: &Manifest, root: &Path) -> Result<()> {
    let tracked: BTreeSet<PathBuf> = manifest.records.iter().map(|r| root.join(&r.path)).collect();
    for action in ActionKind::ALL {
        for p in sorted_entries(&root.join(action.name()))? {
            if is_png(&p) && !tracked.contains(&p) {
                fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    Ok(())
}

/// Stratified train/validation split.
///
/// The validation total is `round(len × val_fraction)`; each class gets the
/// floor of its proportional share and leftover slots go to the classes with
/// the largest remainders (ties by class index). Record order is preserved.
pub fn split(manifest: &Manifest, val_fraction: f64, rng_seed: u64) -> Result<(Manifest, Manifest)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut by_class: BTreeMap<ActionKind, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        by_class.entry(r.action).or_default().push(i);
    }
    let total_val = (manifest.len() as f64 * val_fraction).round() as usize;
    let mut quotas: Vec<(ActionKind, usize, f64)> = by_class
        .iter()
        .map(|(&a, idx)| {
            let exact = idx.len() as f64 * val_fraction;
            (a, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &q in order.iter().take(total_val.saturating_sub(assigned)) {
        quotas[q].1 += 1;
    }

    let mut rng = seed::rng(rng_seed);
    let mut in_val = vec![false; manifest.len()];
    for (action, quota, _) in quotas {
        let mut idx = by_class[&action].clone();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(quota.min(idx.len())) {
            in_val[i] = true;
        }
    }
    let (mut train, mut val) = (Manifest::default(), Manifest::default());
    for (r, v) in manifest.records.iter().zip(in_val) {
        if v {
            val.records.push(r.clone());
        } else {
            train.records.push(r.clone());
        }
    }
    Ok((train, val))
}

/// Planar RGB images in `[0, 1]`, `n × 3 × size × size`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch<T> {
    pub n: usize,
    pub size: usize,
    pub data: Vec<T>,
}

impl<T: Copy> ImageBatch<T> {
    pub fn sample_len(&self) -> usize {
        CHANNELS * self.size * self.size
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }
}

/// Model input for one image: resized bilinearly to `size × size` and scaled to `[0, 1]`.
pub fn normalize_image(img: &ImageBuffer, size: usize) -> Vec<f32> {
    resize_normalized(img, size, size)
}

/// Loads `indices` of `manifest` (paths relative to `root`).
pub fn load_batch(
    manifest: &Manifest,
    root: &Path,
    indices: &[usize],
    target_size: usize,
) -> Result<(ImageBatch<f32>, Vec<usize>)> {
    let mut data = Vec::with_capacity(indices.len() * CHANNELS * target_size * target_size);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let r = manifest
            .records
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("batch index {i} out of range")))?;
        let path = root.join(&r.path);
        if !path.is_file() {
            return Err(Error::MissingRecordFile {
                record: r.path.clone(),
                path,
            });
        }
        let img = ImageBuffer::load_png(&path)?;
        data.extend(normalize_image(&img, target_size));
        labels.push(r.action.index());
    }
    Ok((
        ImageBatch {
            n: indices.len(),
            size: target_size,
            data,
        },
        labels,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procedural;

    fn record(i: usize, action: ActionKind) -> ManifestRecord {
        ManifestRecord {
            path: format!("{}/{i:06}.png", action.name()),
            action,
            person_id: "p".into(),
            background_id: "b".into(),
            seed: i as u64,
            settings_hash: "h".into(),
        }
    }

    fn balanced(per_class: usize) -> Manifest {
        Manifest {
            records: ActionKind::ALL
                .iter()
                .flat_map(|&a| (0..per_class).map(move |i| record(i, a)))
                .collect(),
        }
    }

    #[test]
    fn manifest_text_roundtrip_and_errors() {
        let m = balanced(2);
        let text = m.to_text();
        assert!(text.starts_with("# motionforge manifest v1\npath\tlabel\taction"));
        assert_eq!(Manifest::parse(&text).unwrap(), m);

        let broken = text.replacen("\t0\tfalling", "\t3\tfalling", 1);
        match Manifest::parse(&broken).unwrap_err() {
            Error::Manifest { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let short = format!("{text}oops\n");
        match Manifest::parse(&short).unwrap_err() {
            Error::Manifest { line, .. } => assert_eq!(line, 11),
            e => panic!("{e}"),
        }
        assert!(Manifest::parse("# motionforge manifest v2\n").is_err());
    }

    #[test]
    fn split_twenty_by_quarter() {
        let m = balanced(5);
        let (train, val) = split(&m, 0.25, 1).unwrap();
        assert_eq!((train.len(), val.len()), (15, 5));
        assert!(val.count_per_action().values().all(|&c| c >= 1));
        let mut union: Vec<_> = train.records.iter().chain(&val.records).cloned().collect();
        union.sort();
        let mut orig = m.records.clone();
        orig.sort();
        assert_eq!(union, orig);
        assert_eq!(split(&m, 0.25, 1).unwrap(), (train, val));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let m = balanced(2);
        assert!(split(&m, 0.0, 1).is_err());
        assert!(split(&m, 1.0, 1).is_err());
        assert!(split(&m, f64::NAN, 1).is_err());
    }

    #[test]
    fn split_stratification_error_at_most_one() {
        let mut m = balanced(7);
        m.records.extend((7..10).map(|i| record(i, ActionKind::Walking)));
        for seed in 0..20 {
            let frac = 0.1 + seed as f64 * 0.04;
            let (_, val) = split(&m, frac, seed).unwrap();
            for (a, n) in m.count_per_action() {
                let got = val.count_per_action()[&a] as f64;
                assert!((got - n as f64 * frac).abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn ingest_reports_bad_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let persons = dir.path().join("persons");
        let bgs = dir.path().join("bgs");
        fs::create_dir_all(&persons).unwrap();
        fs::create_dir_all(&bgs).unwrap();
        for i in 0..3 {
            let p = procedural::person("x", 20, 40, i);
            let d = persons.join(format!("p{i}"));
            fs::create_dir_all(&d).unwrap();
            p.image.save_png(d.join("image.png")).unwrap();
            p.mask.save_png(d.join("mask.png")).unwrap();
        }
        // flat layout pair
        let p = procedural::person("x", 20, 40, 9);
        p.image.save_png(persons.join("flat.png")).unwrap();
        p.mask.save_png(persons.join("flat_mask.png")).unwrap();
        // size mismatch
        p.image.save_png(persons.join("bad.png")).unwrap();
        MaskBuffer::filled(5, 5, true).unwrap().save_png(persons.join("bad_mask.png")).unwrap();
        // empty mask
        p.image.save_png(persons.join("empty.png")).unwrap();
        MaskBuffer::filled(20, 40, false).unwrap().save_png(persons.join("empty_mask.png")).unwrap();
        // unreadable
        fs::write(persons.join("junk.png"), b"not a png").unwrap();
        fs::write(persons.join("junk_mask.png"), b"nope").unwrap();
        procedural::background("s", 32, 32, 1).image.save_png(bgs.join("s.png")).unwrap();

        let assets = ingest_assets(&persons, &bgs).unwrap();
        let ids: Vec<_> = assets.persons.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["flat", "p0", "p1", "p2"]);
        assert_eq!(assets.skipped.len(), 3);
        assert_eq!(assets.backgrounds.len(), 1);

        let empty = dir.path().join("empty");
        fs::create_dir_all(&empty).unwrap();
        assert!(ingest_assets(&empty, &bgs).is_err());
        assert!(ingest_assets(&persons, &empty).is_err());
        assert!(ingest_assets(&dir.path().join("missing"), &bgs).is_err());
    }

    #[test]
    fn generate_counts_and_zero_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let persons = vec![procedural::person("p", 24, 48, 1)];
        let bgs = vec![procedural::background("b", 48, 48, 2)];
        let settings = BlendSettings::default();
        let cfg = JitterConfig::default();
        let m = generate_dataset(&persons, &bgs, &settings, &cfg, 5, 7, dir.path()).unwrap();
        assert_eq!(m.len(), 20);
        assert!(m.count_per_action().values().all(|&c| c == 5));
        m.verify(dir.path()).unwrap();
        assert_eq!(Dataset::open(dir.path()).unwrap().manifest, m);

        // A smaller rerun removes the stale files.
        let m2 = generate_dataset(&persons, &bgs, &settings, &cfg, 2, 7, dir.path()).unwrap();
        m2.verify(dir.path()).unwrap();
        assert_eq!(m2.records[..2], m.records[..2]);

        assert!(generate_dataset(&persons, &bgs, &settings, &cfg, 0, 7, dir.path()).is_err());
    }

    #[test]
    fn batch_normalization_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let img = procedural::background("b", 8, 8, 3).image;
        fs::create_dir_all(dir.path().join("standing")).unwrap();
        img.save_png(dir.path().join("standing/000000.png")).unwrap();
        let m = Manifest {
            records: vec![record(0, ActionKind::Standing), record(1, ActionKind::Standing)],
        };
        let (batch, labels) = load_batch(&m, dir.path(), &[0], 8).unwrap();
        assert_eq!(labels, vec![2]);
        for y in 0..8 {
            for x in 0..8 {
                for ch in 0..3 {
                    assert_eq!(batch.data[ch * 64 + y * 8 + x], img.pixel(x, y)[ch] as f32 / 255.0);
                }
            }
        }
        let err = load_batch(&m, dir.path(), &[1], 8).unwrap_err();
        assert!(err.to_string().contains("standing/000001.png"));
    }
}

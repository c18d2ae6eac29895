//! Datasets: a deterministic synthetic shapes benchmark with ground-truth
//! masks and scene descriptors, a manifest format, and ingestion of
//! VOC-style directory trees.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{load_index_mask, save_index_mask, RasterImage};

/// One color token the mock encoder can ground: token text -> RGB.
#[derive(Debug, Clone, Default)]
pub struct Palette {
    entries: std::collections::BTreeMap<String, [f64; 3]>,
}

impl Palette {
    pub fn insert(&mut self, token: impl Into<String>, rgb: [f64; 3]) {
        self.entries.insert(token.into(), rgb);
    }

    pub fn get(&self, token: &str) -> Option<[f64; 3]> {
        self.entries.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Square,
    Disk,
    Triangle,
    Ring,
    Cross,
    Diamond,
}

impl ShapeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Square => "square",
            ShapeKind::Disk => "disk",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Ring => "ring",
            ShapeKind::Cross => "cross",
            ShapeKind::Diamond => "diamond",
        }
    }

    fn contains(self, dy: i64, dx: i64, s: i64) -> bool {
        match self {
            ShapeKind::Square => dy.abs() <= s && dx.abs() <= s,
            ShapeKind::Disk => dy * dy + dx * dx <= s * s,
            ShapeKind::Triangle => {
                let t = dy + s; // 0 at the apex, 2s at the base
                t >= 0 && t <= 2 * s && 2 * dx.abs() <= t
            }
            ShapeKind::Ring => {
                let d2 = dy * dy + dx * dx;
                let inner = (s * 55 / 100).max(1);
                d2 <= s * s && d2 >= inner * inner
            }
            ShapeKind::Cross => {
                let arm = (s / 3).max(1);
                (dy.abs() <= arm && dx.abs() <= s) || (dx.abs() <= arm && dy.abs() <= s)
            }
            ShapeKind::Diamond => dy.abs() + dx.abs() <= s,
        }
    }
}

/// A class the synthetic generator can draw: a strongly colored shape with
/// an alias and two fine-grained shade variants.
#[derive(Debug, Clone, Copy)]
pub struct ClassSpec {
    pub label: &'static str,
    pub alias: &'static str,
    pub variants: [&'static str; 2],
    pub kind: ShapeKind,
    pub color: [f64; 3],
    pub variant_colors: [[f64; 3]; 2],
}

pub const MAX_SYNTH_CLASSES: usize = 16;

const CLASS_TABLE: [ClassSpec; MAX_SYNTH_CLASSES] = [
    ClassSpec {
        label: "ruby",
        alias: "garnet",
        variants: ["crimson", "scarlet"],
        kind: ShapeKind::Square,
        color: [0.95, 0.05, 0.10],
        variant_colors: [[0.78, 0.04, 0.22], [1.0, 0.22, 0.04]],
    },
    ClassSpec {
        label: "cyan",
        alias: "glacier",
        variants: ["frost", "lagoon"],
        kind: ShapeKind::Disk,
        color: [0.05, 0.85, 0.95],
        variant_colors: [[0.35, 0.92, 0.97], [0.02, 0.70, 0.80]],
    },
    ClassSpec {
        label: "plum",
        alias: "amethyst",
        variants: ["violet", "orchid"],
        kind: ShapeKind::Triangle,
        color: [0.55, 0.05, 0.85],
        variant_colors: [[0.45, 0.12, 0.95], [0.68, 0.15, 0.75]],
    },
    ClassSpec {
        label: "amber",
        alias: "topaz",
        variants: ["honey", "marigold"],
        kind: ShapeKind::Ring,
        color: [0.95, 0.60, 0.05],
        variant_colors: [[0.90, 0.68, 0.22], [0.98, 0.52, 0.02]],
    },
    ClassSpec {
        label: "jade",
        alias: "emerald",
        variants: ["mint", "fern"],
        kind: ShapeKind::Cross,
        color: [0.13, 0.77, 0.37],
        variant_colors: [[0.35, 0.88, 0.55], [0.18, 0.62, 0.27]],
    },
    ClassSpec {
        label: "coral",
        alias: "salmon",
        variants: ["blush", "punch"],
        kind: ShapeKind::Diamond,
        color: [0.96, 0.42, 0.46],
        variant_colors: [[0.94, 0.55, 0.58], [0.89, 0.30, 0.38]],
    },
    ClassSpec {
        label: "teal",
        alias: "spruce",
        variants: ["pine", "harbor"],
        kind: ShapeKind::Square,
        color: [0.05, 0.62, 0.62],
        variant_colors: [[0.10, 0.75, 0.78], [0.07, 0.48, 0.50]],
    },
    ClassSpec {
        label: "gold",
        alias: "brass",
        variants: ["lemon", "mustard"],
        kind: ShapeKind::Disk,
        color: [0.95, 0.83, 0.08],
        variant_colors: [[0.98, 0.91, 0.26], [0.82, 0.70, 0.05]],
    },
    ClassSpec {
        label: "rust",
        alias: "copper",
        variants: ["sienna", "cinnamon"],
        kind: ShapeKind::Triangle,
        color: [0.65, 0.28, 0.09],
        variant_colors: [[0.53, 0.23, 0.09], [0.74, 0.36, 0.14]],
    },
    ClassSpec {
        label: "lime",
        alias: "chartreuse",
        variants: ["pear", "olive"],
        kind: ShapeKind::Ring,
        color: [0.62, 0.89, 0.12],
        variant_colors: [[0.72, 0.88, 0.32], [0.52, 0.70, 0.09]],
    },
    ClassSpec {
        label: "navy",
        alias: "midnight",
        variants: ["denim", "ink"],
        kind: ShapeKind::Cross,
        color: [0.07, 0.10, 0.45],
        variant_colors: [[0.13, 0.22, 0.55], [0.05, 0.06, 0.32]],
    },
    ClassSpec {
        label: "magenta",
        alias: "fuchsia",
        variants: ["berry", "neon"],
        kind: ShapeKind::Diamond,
        color: [0.90, 0.08, 0.78],
        variant_colors: [[0.74, 0.06, 0.60], [0.98, 0.22, 0.88]],
    },
    ClassSpec {
        label: "cobalt",
        alias: "sapphire",
        variants: ["azure", "indigo"],
        kind: ShapeKind::Square,
        color: [0.12, 0.25, 0.86],
        variant_colors: [[0.18, 0.45, 0.95], [0.21, 0.14, 0.70]],
    },
    ClassSpec {
        label: "maroon",
        alias: "burgundy",
        variants: ["wine", "brick"],
        kind: ShapeKind::Disk,
        color: [0.48, 0.07, 0.16],
        variant_colors: [[0.38, 0.05, 0.14], [0.58, 0.13, 0.18]],
    },
    ClassSpec {
        label: "silver",
        alias: "chrome",
        variants: ["pearl", "steel"],
        kind: ShapeKind::Triangle,
        color: [0.78, 0.80, 0.84],
        variant_colors: [[0.88, 0.89, 0.92], [0.64, 0.67, 0.72]],
    },
    ClassSpec {
        label: "chocolate",
        alias: "cocoa",
        variants: ["fudge", "caramel"],
        kind: ShapeKind::Ring,
        color: [0.38, 0.22, 0.08],
        variant_colors: [[0.30, 0.17, 0.06], [0.52, 0.33, 0.12]],
    },
];

#[derive(Debug, Clone, Copy)]
pub struct BackgroundSpec {
    pub texture: &'static str,
    pub scene: &'static str,
    pub color: [f64; 3],
}

const BACKGROUNDS: [BackgroundSpec; 3] = [
    BackgroundSpec { texture: "asphalt", scene: "street", color: [0.30, 0.30, 0.34] },
    BackgroundSpec { texture: "sand", scene: "beach", color: [0.82, 0.72, 0.48] },
    BackgroundSpec { texture: "grass", scene: "meadow", color: [0.20, 0.35, 0.10] },
];

pub fn class_table(n_classes: usize) -> &'static [ClassSpec] {
    assert!(n_classes <= MAX_SYNTH_CLASSES);
    &CLASS_TABLE[..n_classes]
}

pub fn backgrounds() -> &'static [BackgroundSpec] {
    &BACKGROUNDS
}

/// Every color token the synthetic world can mention, for grounding the
/// mock encoders: class labels, aliases, shade variants, background
/// textures, and scene names.
pub fn palette_for(n_classes: usize) -> Palette {
    let mut p = Palette::default();
    for spec in class_table(n_classes) {
        p.insert(spec.label, spec.color);
        p.insert(spec.alias, spec.color);
        for (v, c) in spec.variants.iter().zip(spec.variant_colors.iter()) {
            p.insert(*v, *c);
        }
    }
    for bg in BACKGROUNDS.iter() {
        p.insert(bg.texture, bg.color);
        p.insert(bg.scene, bg.color);
    }
    p
}

/// One placed shape in a synthetic scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneShape {
    pub class_id: u32,
    pub label: String,
    pub variant: String,
    pub alias: String,
    pub kind: String,
    pub cy: usize,
    pub cx: usize,
    pub size: usize,
}

/// Ground-truth description of a synthetic image; the mock question
/// answerer reads these to answer truthfully.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDescriptor {
    pub image: String,
    pub content_hash: String,
    pub background: String,
    pub scene: String,
    pub shapes: Vec<SceneShape>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub labels: Vec<u32>,
    pub mask: Option<PathBuf>,
}

/// A dataset: a class-name table (index `i` is class id `i + 1`; id 0 is
/// background) and one entry per image.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    classes: Vec<String>,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn class_id(&self, name: &str) -> Option<u32> {
        self.classes.iter().position(|c| c == name).map(|i| i as u32 + 1)
    }

    pub fn class_name(&self, id: u32) -> Option<&str> {
        if id == 0 {
            return Some("background");
        }
        self.classes.get(id as usize - 1).map(|s| s.as_str())
    }

    /// Write with paths relative to the manifest location.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let relative = |p: &PathBuf| -> PathBuf {
            p.strip_prefix(dir).map(|r| r.to_path_buf()).unwrap_or_else(|_| p.clone())
        };
        let file = ManifestFile {
            classes: self.classes.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    id: e.id.clone(),
                    image: relative(&e.image),
                    labels: e.labels.clone(),
                    mask: e.mask.as_ref().map(relative),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text).map_err(Error::io(path))
    }

    /// Load and resolve paths against the manifest directory; every
    /// referenced path must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let file: ManifestFile = serde_json::from_str(&text)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let mut entries = Vec::with_capacity(file.entries.len());
        for e in file.entries {
            let image = dir.join(&e.image);
            if !image.exists() {
                return Err(Error::Dataset(format!("missing image {}", image.display())));
            }
            let mask = match e.mask {
                Some(m) => {
                    let m = dir.join(m);
                    if !m.exists() {
                        return Err(Error::Dataset(format!("missing mask {}", m.display())));
                    }
                    Some(m)
                }
                None => None,
            };
            for &l in &e.labels {
                if l == 0 || l as usize > file.classes.len() {
                    return Err(Error::Dataset(format!(
                        "entry {} has label {l} outside the class table",
                        e.id
                    )));
                }
            }
            entries.push(ManifestEntry { id: e.id, image, labels: e.labels, mask });
        }
        Ok(Self { classes: file.classes, entries })
    }
}

/// Configuration for the synthetic benchmark generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_images: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub img_size: usize,
    /// Probability of placing a second shape of a different class.
    pub two_shape_prob: f64,
    /// Probability that a class appears on its preferred background; the
    /// remaining mass is split over the other backgrounds. Values well
    /// above 1/3 induce the context correlations the contrastive stage is
    /// meant to break.
    pub bg_bias: f64,
    pub min_half: usize,
    pub max_half: usize,
    pub noise: f64,
}

impl SynthConfig {
    pub fn new(n_images: usize, n_classes: usize, seed: u64) -> Self {
        Self {
            n_images,
            n_classes,
            seed,
            img_size: 48,
            two_shape_prob: 0.35,
            bg_bias: 0.8,
            min_half: 5,
            max_half: 9,
            noise: 0.04,
        }
    }
}

/// Generate a synthetic dataset: images, index masks, scene descriptors,
/// and a manifest, all determined by the seed.
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if cfg.n_images < 1 {
        return Err(Error::Config("n_images must be >= 1".to_string()));
    }
    if cfg.n_classes < 2 || cfg.n_classes > MAX_SYNTH_CLASSES {
        return Err(Error::Config(format!(
            "n_classes must be in 2..={MAX_SYNTH_CLASSES}, got {}",
            cfg.n_classes
        )));
    }
    if cfg.max_half < cfg.min_half || cfg.img_size < 4 * cfg.max_half {
        return Err(Error::Config("shape sizes do not fit the canvas".to_string()));
    }
    let images_dir = out_dir.join("images");
    let masks_dir = out_dir.join("masks");
    let scenes_dir = out_dir.join("scenes");
    for d in [&images_dir, &masks_dir, &scenes_dir] {
        std::fs::create_dir_all(d).map_err(Error::io(d))?;
    }

    let classes = class_table(cfg.n_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entries = Vec::with_capacity(cfg.n_images);

    for i in 0..cfg.n_images {
        let id = format!("img_{i:05}");
        let (image, mask, descriptor) = render_scene(cfg, classes, &id, &mut rng);

        let image_path = images_dir.join(format!("{id}.png"));
        let mask_path = masks_dir.join(format!("{id}.png"));
        let scene_path = scenes_dir.join(format!("{id}.json"));
        image.save_png(&image_path)?;
        save_index_mask(&mask_path, cfg.img_size, cfg.img_size, &mask)?;
        std::fs::write(&scene_path, serde_json::to_string_pretty(&descriptor)?)
            .map_err(Error::io(&scene_path))?;

        let labels: BTreeSet<u32> = descriptor.shapes.iter().map(|s| s.class_id).collect();
        entries.push(ManifestEntry {
            id,
            image: image_path,
            labels: labels.into_iter().collect(),
            mask: Some(mask_path),
        });
    }

    let manifest = DatasetManifest {
        classes: classes.iter().map(|c| c.label.to_string()).collect(),
        entries,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn render_scene(
    cfg: &SynthConfig,
    classes: &[ClassSpec],
    id: &str,
    rng: &mut ChaCha8Rng,
) -> (RasterImage, Vec<u8>, SceneDescriptor) {
    let size = cfg.img_size;
    let first_class = rng.gen_range(0..classes.len());
    let bg = pick_background(first_class, cfg.bg_bias, rng);

    // Textured background: base color plus per-pixel noise.
    let mut image = RasterImage::filled(size, size, bg.color);
    for y in 0..size {
        for x in 0..size {
            let mut px = image.pixel(y, x);
            for c in px.iter_mut() {
                *c = (*c + rng.gen_range(-cfg.noise..=cfg.noise)).clamp(0.0, 1.0);
            }
            image.set_pixel(y, x, px);
        }
    }

    let mut mask = vec![0u8; size * size];
    let mut shapes: Vec<SceneShape> = Vec::new();
    let mut class_indices = vec![first_class];
    if classes.len() > 1 && rng.gen_bool(cfg.two_shape_prob) {
        let mut second = rng.gen_range(0..classes.len() - 1);
        if second >= first_class {
            second += 1;
        }
        class_indices.push(second);
    }

    for class_idx in class_indices {
        let spec = &classes[class_idx];
        let half = rng.gen_range(cfg.min_half..=cfg.max_half) as i64;
        let lo = half as usize + 1;
        let hi = size - half as usize - 2;
        // A few attempts to avoid overlapping an earlier shape.
        let mut placed = None;
        for _ in 0..20 {
            let cy = rng.gen_range(lo..=hi);
            let cx = rng.gen_range(lo..=hi);
            let clear = shapes.iter().all(|s| {
                let dy = s.cy as i64 - cy as i64;
                let dx = s.cx as i64 - cx as i64;
                dy.abs().max(dx.abs()) > half + s.size as i64 + 1
            });
            if clear {
                placed = Some((cy, cx));
                break;
            }
        }
        let Some((cy, cx)) = placed else { continue };

        let variant_idx = rng.gen_range(0..2usize);
        let fill = spec.variant_colors[variant_idx];
        for y in 0..size {
            for x in 0..size {
                let dy = y as i64 - cy as i64;
                let dx = x as i64 - cx as i64;
                if spec.kind.contains(dy, dx, half) {
                    let mut px = fill;
                    for c in px.iter_mut() {
                        *c = (*c + rng.gen_range(-cfg.noise * 0.75..=cfg.noise * 0.75))
                            .clamp(0.0, 1.0);
                    }
                    image.set_pixel(y, x, px);
                    mask[y * size + x] = class_idx as u8 + 1;
                }
            }
        }
        shapes.push(SceneShape {
            class_id: class_idx as u32 + 1,
            label: spec.label.to_string(),
            variant: spec.variants[variant_idx].to_string(),
            alias: spec.alias.to_string(),
            kind: spec.kind.as_str().to_string(),
            cy,
            cx,
            size: half as usize,
        });
    }

    let descriptor = SceneDescriptor {
        image: format!("{id}.png"),
        content_hash: image.content_hash(),
        background: bg.texture.to_string(),
        scene: bg.scene.to_string(),
        shapes,
    };
    (image, mask, descriptor)
}

fn pick_background(class_idx: usize, bias: f64, rng: &mut ChaCha8Rng) -> &'static BackgroundSpec {
    let preferred = class_idx % BACKGROUNDS.len();
    if rng.gen_bool(bias) {
        &BACKGROUNDS[preferred]
    } else {
        let mut other = rng.gen_range(0..BACKGROUNDS.len() - 1);
        if other >= preferred {
            other += 1;
        }
        &BACKGROUNDS[other]
    }
}

const VOC_CLASSES: [&str; 20] = [
    "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat", "chair", "cow",
    "diningtable", "dog", "horse", "motorbike", "person", "pottedplant", "sheep", "sofa",
    "train", "tvmonitor",
];

/// Ingest a VOC-style tree: `ImageSets/Segmentation/{split}.txt`,
/// `JPEGImages/`, `SegmentationClass/`. Image-level labels come from an
/// optional `labels.txt` (`id<TAB>name,name`), else from mask indices.
pub fn ingest_voc_style(root: &Path, split: &str) -> Result<DatasetManifest> {
    let split_path = root.join("ImageSets").join("Segmentation").join(format!("{split}.txt"));
    let split_text = std::fs::read_to_string(&split_path).map_err(Error::io(&split_path))?;

    let classes: Vec<String> = {
        let classes_path = root.join("classes.txt");
        if classes_path.exists() {
            std::fs::read_to_string(&classes_path)
                .map_err(Error::io(&classes_path))?
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect()
        } else {
            VOC_CLASSES.iter().map(|s| s.to_string()).collect()
        }
    };

    let mut label_file: std::collections::BTreeMap<String, Vec<String>> = Default::default();
    let labels_path = root.join("labels.txt");
    if labels_path.exists() {
        for line in std::fs::read_to_string(&labels_path)
            .map_err(Error::io(&labels_path))?
            .lines()
        {
            if let Some((id, names)) = line.split_once('\t') {
                label_file.insert(
                    id.trim().to_string(),
                    names.split(',').map(|n| n.trim().to_string()).collect(),
                );
            }
        }
    }

    let mut entries = Vec::new();
    for id in split_text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let image = ["png", "jpg", "jpeg"]
            .iter()
            .map(|ext| root.join("JPEGImages").join(format!("{id}.{ext}")))
            .find(|p| p.exists())
            .ok_or_else(|| Error::Dataset(format!("no image found for id `{id}`")))?;
        let mask_path = root.join("SegmentationClass").join(format!("{id}.png"));
        let mask = mask_path.exists().then_some(mask_path);

        let labels: Vec<u32> = if let Some(names) = label_file.get(id) {
            let mut ids = BTreeSet::new();
            for name in names {
                let pos = classes.iter().position(|c| c == name).ok_or_else(|| {
                    Error::Dataset(format!("label `{name}` not in the class table"))
                })?;
                ids.insert(pos as u32 + 1);
            }
            ids.into_iter().collect()
        } else if let Some(mask) = &mask {
            let (_, _, data) = load_index_mask(mask)?;
            let mut ids = BTreeSet::new();
            for &v in &data {
                if v != 0 && v != 255 {
                    if v as usize > classes.len() {
                        return Err(Error::Dataset(format!(
                            "mask of `{id}` contains index {v} beyond the class table"
                        )));
                    }
                    ids.insert(v as u32);
                }
            }
            ids.into_iter().collect()
        } else {
            return Err(Error::Dataset(format!(
                "id `{id}` has neither a labels.txt entry nor a mask"
            )));
        };

        entries.push(ManifestEntry { id: id.to_string(), image, labels, mask });
    }

    Ok(DatasetManifest { classes, entries })
}

//! The shipped synthetic benchmark: a fixed-seed, fully offline setup
//! small enough for a laptop CPU. The same definitions back the
//! acceptance suite and the `configs/` files used from the command line.

use std::path::Path;

use crate::corpus::store::CorpusStore;
use crate::corpus::{generate_store, GenerateOptions};
use crate::dataset::{generate_synthetic, palette_for, DatasetManifest, SynthConfig};
use crate::encoders::MockEncoder;
use crate::error::Result;
use crate::training::{load_dataset, BackboneConfig, ConvBackbone, LoadedDataset, TrainConfig};
use crate::{MockVqa, TemplateSet};

pub const N_CLASSES: usize = 3;
pub const TRAIN_IMAGES: usize = 64;
pub const EVAL_IMAGES: usize = 16;
pub const TRAIN_SEED: u64 = 20240501;
pub const EVAL_SEED: u64 = 777;
pub const IMG_SIZE: usize = 40;
/// Background threshold used when scoring benchmark pseudo-masks.
pub const BG_THRESHOLD: f64 = 0.25;
pub const ENCODER_DIM: usize = 32;
pub const ENCODER_GRID: usize = 8;
pub const ENCODER_SEED: u64 = 12345;

pub fn train_synth_config() -> SynthConfig {
    let mut cfg = SynthConfig::new(TRAIN_IMAGES, N_CLASSES, TRAIN_SEED);
    cfg.img_size = IMG_SIZE;
    cfg.min_half = IMG_SIZE / 8;
    cfg.max_half = IMG_SIZE / 5;
    cfg
}

pub fn eval_synth_config() -> SynthConfig {
    let mut cfg = train_synth_config();
    cfg.n_images = EVAL_IMAGES;
    cfg.seed = EVAL_SEED;
    cfg
}

/// Three blocks at output stride 4: the receptive field stays close to
/// the shape sizes, which keeps score maps local enough to sharpen.
pub fn backbone_config() -> BackboneConfig {
    BackboneConfig {
        channels: vec![12, 24, 32],
        strides: vec![1, 2, 2],
        ..BackboneConfig::default()
    }
}

pub fn pretrain_config() -> TrainConfig {
    TrainConfig { lr: 0.1, epochs: 20, seed: 11, ..TrainConfig::default() }
}

/// Desk-scale region-contrast schedule. Differs from the full-scale
/// defaults: a far higher learning rate over 40 short epochs, a softer
/// beta so the background contrast complements rather than overwhelms
/// the foreground one, and a stronger area term against the shallow
/// backbone's tendency to stay hot everywhere.
pub fn ritc_config() -> TrainConfig {
    TrainConfig {
        lr: 0.02,
        epochs: 40,
        poly_power: 1.5,
        beta: 2.0,
        gamma: 0.4,
        omega: 0.3,
        seed: 7,
        ..TrainConfig::default()
    }
}

/// The grounded dual encoder for the benchmark's palette.
pub fn encoder() -> MockEncoder {
    MockEncoder::palette_aligned(palette_for(N_CLASSES), ENCODER_DIM, ENCODER_GRID, ENCODER_SEED)
}

/// Everything the benchmark experiments need, generated under `dir`.
pub struct Prepared {
    pub train_manifest: DatasetManifest,
    pub eval_manifest: DatasetManifest,
    pub train_data: LoadedDataset,
    pub store: CorpusStore,
    pub encoder: MockEncoder,
    pub backbone: ConvBackbone,
    pub backbone_config: BackboneConfig,
}

/// Generate datasets, answer the question templates from the scene
/// descriptors, and assemble the corpus. Deterministic end to end.
pub fn prepare(dir: &Path) -> Result<Prepared> {
    let train_dir = dir.join("train");
    let eval_dir = dir.join("eval");
    let train_manifest = generate_synthetic(&train_synth_config(), &train_dir)?;
    let eval_manifest = generate_synthetic(&eval_synth_config(), &eval_dir)?;

    let mut vqa = MockVqa::new();
    vqa.load_scenes(&train_dir.join("scenes"))?;
    let store = generate_store(
        &vqa,
        &TemplateSet::builtin(),
        &train_manifest,
        GenerateOptions::default(),
    )?;

    let backbone_config = backbone_config();
    let backbone = ConvBackbone::new(backbone_config.clone())?;
    let train_data = load_dataset(&train_manifest)?;
    Ok(Prepared {
        train_manifest,
        eval_manifest,
        train_data,
        store,
        encoder: encoder(),
        backbone,
        backbone_config,
    })
}

//! Weakly-supervised activation-map refinement with question-answer text
//! corpora and region image-text contrastive training.
//!
//! The pipeline: generate per-image foreground/background prompt sets by
//! asking a visual question answering backend templated questions
//! ([`corpus`]); train a small convolutional backbone whose per-class
//! sigmoid score maps are split into region masks by adaptive
//! thresholding ([`activation`]) and matched against the prompt sets
//! with contrastive losses ([`losses`], [`training`]); score the
//! resulting maps against ground-truth masks ([`eval`]).
//!
//! Everything runs offline and deterministically: the question answerer
//! and the dual encoders ship as seeded mocks ([`corpus::backend`],
//! [`encoders`]), with process adapters for real models.

pub mod activation;
pub mod autodiff;
pub mod benchmark;
pub mod corpus;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod image_io;
pub mod losses;
pub mod tensor;
pub mod training;
pub mod viz;

pub use activation::{
    compute_cam, fat_threshold, mask_image, upsample_map, ActivationMap, ClassifierWeights,
    FeatureMap, RegionMaskPair,
};
pub use corpus::backend::{CachedVqa, ClosureBackend, MockVqa, ProcessVqa, VqaBackend};
pub use corpus::store::CorpusStore;
pub use corpus::templates::{QuestionTemplate, TemplateKind, TemplateSet};
pub use corpus::{
    build_baseline_corpus, fill_template, postprocess_bg, postprocess_fg, ClassCorpus,
    CorpusVariant,
};
pub use dataset::{generate_synthetic, ingest_voc_style, DatasetManifest, SynthConfig};
pub use encoders::{Embedding, EncoderPair, MockEncoder, ProcessEncoder, TraceEncoder};
pub use error::{Error, Result};
pub use eval::{cam_to_mask, miou, run_ablation, sweep_omega, EvalReport, SegMask};
pub use image_io::RasterImage;
pub use losses::{
    brc_loss, cosine_sim, frc_loss, mean_fg_text, reg_loss, step_losses, total_loss,
    LossBreakdown, LossWeights,
};
pub use tensor::Tensor;
pub use training::{
    pretrain_classifier, train_ritc, Backbone, BackboneConfig, Checkpoint, ConvBackbone,
    ModelState, TrainConfig,
};

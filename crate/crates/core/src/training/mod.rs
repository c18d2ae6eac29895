//! Classification pre-initialization and the region-contrast training
//! loop: SGD with momentum under a poly learning-rate schedule, driven by
//! a per-step tape over the shared kernels. Deterministic given the seed.

pub mod backbone;
pub mod checkpoint;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, VarId};
use crate::corpus::store::CorpusStore;
use crate::corpus::ClassCorpus;
use crate::dataset::DatasetManifest;
use crate::encoders::{TextEmbeddingCache, TraceEncoder};
use crate::error::{Error, Result};
use crate::image_io::RasterImage;
use crate::losses::{trace_step_losses, LossBreakdown, LossWeights};
use crate::tensor::Tensor;

pub use backbone::{forward_features, Activation, Backbone, BackboneConfig, ConvBackbone};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};


/// Flat training configuration; the file format is `key = value` lines
/// with exactly these keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub poly_power: f64,
    pub momentum: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub omega: f64,
    pub brc_tau_on_bf: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3.5e-4,
            epochs: 15,
            batch_size: 8,
            poly_power: 0.9,
            momentum: 0.9,
            alpha: 10.0,
            beta: 8.0,
            gamma: 0.2,
            tau: 0.7,
            omega: 0.1,
            brc_tau_on_bf: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            tau: self.tau,
            brc_tau_on_bf: self.brc_tau_on_bf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::Config("omega must lie in [0,1]".into()));
        }
        if self.poly_power < 0.0 {
            return Err(Error::Config("poly_power must be nonnegative".into()));
        }
        self.weights().validate()
    }

    /// Parse `key = value` lines; unknown keys are rejected, missing keys
    /// keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let bad = |what: &str| Error::Config(format!("line {}: bad {what} `{value}`", lineno + 1));
            match key {
                "lr" => cfg.lr = value.parse().map_err(|_| bad("lr"))?,
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("epochs"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
                "poly_power" => cfg.poly_power = value.parse().map_err(|_| bad("poly_power"))?,
                "momentum" => cfg.momentum = value.parse().map_err(|_| bad("momentum"))?,
                "alpha" => cfg.alpha = value.parse().map_err(|_| bad("alpha"))?,
                "beta" => cfg.beta = value.parse().map_err(|_| bad("beta"))?,
                "gamma" => cfg.gamma = value.parse().map_err(|_| bad("gamma"))?,
                "tau" => cfg.tau = value.parse().map_err(|_| bad("tau"))?,
                "omega" => cfg.omega = value.parse().map_err(|_| bad("omega"))?,
                "brc_tau_on_bf" => {
                    cfg.brc_tau_on_bf = value.parse().map_err(|_| bad("brc_tau_on_bf"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                other => {
                    return Err(Error::Config(format!("line {}: unknown key `{other}`", lineno + 1)))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        format!(
            "lr = {}\nepochs = {}\nbatch_size = {}\npoly_power = {}\nmomentum = {}\n\
             alpha = {}\nbeta = {}\ngamma = {}\ntau = {}\nomega = {}\nbrc_tau_on_bf = {}\nseed = {}\n",
            self.lr,
            self.epochs,
            self.batch_size,
            self.poly_power,
            self.momentum,
            self.alpha,
            self.beta,
            self.gamma,
            self.tau,
            self.omega,
            self.brc_tau_on_bf,
            self.seed
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(Error::io(path))
    }
}

/// `base_lr * (1 - step/total_steps)^power`.
pub fn poly_lr(base_lr: f64, step: usize, total_steps: usize, power: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Config("total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(Error::Config(format!("step {step} exceeds total {total_steps}")));
    }
    Ok(base_lr * (1.0 - step as f64 / total_steps as f64).powf(power))
}

/// One metrics-log record; written as one JSON object per line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub frc: f64,
    pub brc: f64,
    pub reg: f64,
    pub total: f64,
    pub lr: f64,
}

pub fn write_metrics(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(Error::io(path))
}

/// An image with its label set, loaded into memory for training.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub image: RasterImage,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub classes: Vec<String>,
    pub samples: Vec<TrainSample>,
}

impl LoadedDataset {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

pub fn load_dataset(manifest: &DatasetManifest) -> Result<LoadedDataset> {
    let mut samples = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        samples.push(TrainSample {
            id: entry.id.clone(),
            image: RasterImage::load_png(&entry.image)?,
            labels: entry.labels.clone(),
        });
    }
    Ok(LoadedDataset { classes: manifest.classes.clone(), samples })
}

/// Trainable parameters: backbone tensors plus the `[K, C]` classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub params: Vec<Tensor>,
    pub classifier: Tensor,
}

impl ModelState {
    pub fn init(backbone: &dyn Backbone, n_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = backbone.init_params(&mut rng);
        let c = backbone.feature_channels();
        // Modest spread; the classifier trains quickly either way.
        let amp = (1.0 / c as f64).sqrt();
        let data: Vec<f64> = (0..n_classes * c)
            .map(|_| rand::Rng::gen_range(&mut rng, -amp..=amp))
            .collect();
        Self { params, classifier: Tensor::new(vec![n_classes, c], data) }
    }

    fn classifier_kernel(&self) -> Tensor {
        let k = self.classifier.shape()[0];
        let c = self.classifier.shape()[1];
        Tensor::new(vec![k, c, 1, 1], self.classifier.data().to_vec())
    }
}

/// SGD-with-momentum state over one tensor list.
struct Sgd {
    velocity: Vec<Tensor>,
    momentum: f64,
}

impl Sgd {
    fn new(shapes: &[Tensor], momentum: f64) -> Self {
        Self {
            velocity: shapes.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
            momentum,
        }
    }

    fn from_saved(velocity: Vec<Tensor>, momentum: f64) -> Self {
        Self { velocity, momentum }
    }

    fn step(&mut self, params: &mut [Tensor], grads: &[Option<Tensor>], lr: f64) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            let Some(g) = g else { continue };
            for i in 0..p.numel() {
                let vi = self.momentum * v.data()[i] + g.data()[i];
                v.data_mut()[i] = vi;
                p.data_mut()[i] -= lr * vi;
            }
        }
    }
}

fn scores_graph(
    tape: &mut Tape,
    backbone: &dyn Backbone,
    param_vars: &[VarId],
    classifier_var: VarId,
    zero_bias: VarId,
    image: &RasterImage,
) -> VarId {
    let x = tape.constant(image.to_tensor());
    let features = backbone.forward_traced(tape, x, param_vars);
    tape.conv2d(features, classifier_var, zero_bias, 1, 0)
}

/// Multi-label classification pretraining: global average pooling over
/// per-class score maps, sigmoid, binary cross-entropy on image labels.
pub fn pretrain_classifier(
    backbone: &dyn Backbone,
    dataset: &LoadedDataset,
    config: &TrainConfig,
) -> Result<(ModelState, Vec<StepRecord>)> {
    config.validate()?;
    if dataset.samples.is_empty() {
        return Err(Error::Dataset("cannot pretrain on an empty dataset".into()));
    }
    let n_classes = dataset.n_classes();
    let mut state = ModelState::init(backbone, n_classes, config.seed);
    let mut records = Vec::new();
    if config.epochs == 0 {
        return Ok((state, records));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = dataset.samples.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.epochs * steps_per_epoch;
    let mut opt = Sgd::new(&state.params, config.momentum);
    let mut opt_cls = Sgd::new(std::slice::from_ref(&state.classifier), config.momentum);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let lr = poly_lr(config.lr, epoch * steps_per_epoch + step, total_steps, config.poly_power)?;
            let mut tape = Tape::new();
            let param_vars: Vec<VarId> =
                state.params.iter().map(|t| tape.param(t.clone())).collect();
            let classifier_var = tape.param(state.classifier_kernel());
            let zero_bias = tape.constant(Tensor::zeros(vec![n_classes]));

            let mut sample_losses = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let sample = &dataset.samples[idx];
                let scores =
                    scores_graph(&mut tape, backbone, &param_vars, classifier_var, zero_bias, &sample.image);
                let pooled = tape.gap_spatial(scores);
                let mut targets = vec![0.0; n_classes];
                for &l in &sample.labels {
                    targets[l as usize - 1] = 1.0;
                }
                let loss = tape.bce_with_logits(pooled, targets);
                sample_losses.push((loss, 1.0 / chunk.len() as f64));
            }
            let batch_loss = tape.lin_comb(&sample_losses);
            let loss_value = tape.value(batch_loss).item();
            tape.backward(batch_loss);

            let grads: Vec<Option<Tensor>> =
                param_vars.iter().map(|&v| tape.grad(v).cloned()).collect();
            opt.step(&mut state.params, &grads, lr);
            let cls_grad = tape.grad(classifier_var).map(|g| {
                Tensor::new(state.classifier.shape().to_vec(), g.data().to_vec())
            });
            opt_cls.step(std::slice::from_mut(&mut state.classifier), &[cls_grad], lr);

            records.push(StepRecord {
                epoch,
                step,
                frc: 0.0,
                brc: 0.0,
                reg: 0.0,
                total: loss_value,
                lr,
            });
        }
    }
    Ok((state, records))
}

/// Fraction of (image, class) decisions the pooled classifier gets right
/// at a 0.5 sigmoid threshold.
pub fn classification_accuracy(
    backbone: &dyn Backbone,
    state: &ModelState,
    dataset: &LoadedDataset,
) -> Result<f64> {
    let n_classes = dataset.n_classes();
    let mut correct = 0usize;
    let mut total = 0usize;
    for sample in &dataset.samples {
        let mut tape = Tape::new();
        let param_vars: Vec<VarId> =
            state.params.iter().map(|t| tape.constant(t.clone())).collect();
        let classifier_var = tape.constant(state.classifier_kernel());
        let zero_bias = tape.constant(Tensor::zeros(vec![n_classes]));
        let scores =
            scores_graph(&mut tape, backbone, &param_vars, classifier_var, zero_bias, &sample.image);
        let pooled = tape.gap_spatial(scores);
        for k in 0..n_classes {
            let predicted = tape.value(pooled).data()[k] > 0.0;
            let actual = sample.labels.contains(&(k as u32 + 1));
            if predicted == actual {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Look up the corpora for one sample, failing loudly on gaps.
fn corpora_for<'s>(
    store: &'s CorpusStore,
    sample: &TrainSample,
) -> Result<BTreeMap<u32, &'s ClassCorpus>> {
    let mut out = BTreeMap::new();
    for &class_id in &sample.labels {
        let corpus = store.get(&sample.id, class_id).ok_or(Error::MissingCorpus {
            image_id: sample.id.clone(),
            class_id,
        })?;
        out.insert(class_id, corpus);
    }
    Ok(out)
}

/// Append the full region-contrast objective for a batch; returns
/// (frc, brc, reg, total) variables averaged over the batch.
#[allow(clippy::too_many_arguments)]
fn ritc_batch_graph(
    tape: &mut Tape,
    backbone: &dyn Backbone,
    param_vars: &[VarId],
    classifier_var: VarId,
    zero_bias: VarId,
    samples: &[&TrainSample],
    store: &CorpusStore,
    weights: &LossWeights,
    omega: f64,
    fat_enabled: bool,
    encoder: &dyn TraceEncoder,
    texts: &mut TextEmbeddingCache,
) -> Result<(VarId, VarId, VarId, VarId)> {
    let inv_b = 1.0 / samples.len() as f64;
    let mut frc_terms = Vec::new();
    let mut brc_terms = Vec::new();
    let mut reg_terms = Vec::new();
    for sample in samples {
        if sample.labels.is_empty() {
            return Err(Error::Dataset(format!("image `{}` has no labels", sample.id)));
        }
        let corpora = corpora_for(store, sample)?;
        let scores =
            scores_graph(tape, backbone, param_vars, classifier_var, zero_bias, &sample.image);
        let mut planes = BTreeMap::new();
        for &class_id in &sample.labels {
            let plane = tape.slice_channel(scores, class_id as usize - 1);
            planes.insert(class_id, tape.sigmoid(plane));
        }
        let traced = trace_step_losses(
            tape,
            &planes,
            &sample.image,
            &corpora,
            omega,
            weights,
            fat_enabled,
            encoder,
            texts,
        )?;
        frc_terms.push((traced.frc, inv_b));
        brc_terms.push((traced.brc, inv_b));
        reg_terms.push((traced.reg, inv_b));
    }
    let frc = tape.lin_comb(&frc_terms);
    let brc = tape.lin_comb(&brc_terms);
    let reg = tape.lin_comb(&reg_terms);
    let total = tape.lin_comb(&[(frc, weights.alpha), (brc, weights.beta), (reg, weights.gamma)]);
    Ok((frc, brc, reg, total))
}

/// Knobs for a region-contrast run that are not part of the schedule.
#[derive(Default)]
pub struct RitcOptions<'a> {
    /// Disable to use the raw activation and its complement as regions.
    pub fat_disabled: bool,
    /// Continue a previous run; the schedule must match.
    pub resume: Option<&'a Checkpoint>,
    /// Stop after this many epochs while keeping the full schedule, so
    /// the returned checkpoint resumes into the identical trajectory.
    pub stop_after_epochs: Option<usize>,
}

/// Region-contrast training from a classification-pretrained state.
///
/// Deterministic given the config seed; resuming from a stopped run
/// reproduces the uninterrupted trajectory exactly.
#[allow(clippy::too_many_arguments)]
pub fn train_ritc(
    backbone: &dyn Backbone,
    init: &ModelState,
    store: &CorpusStore,
    dataset: &LoadedDataset,
    config: &TrainConfig,
    encoder: &dyn TraceEncoder,
    opts: &RitcOptions,
    backbone_config: &BackboneConfig,
) -> Result<(Checkpoint, Vec<StepRecord>)> {
    let fat_enabled = !opts.fat_disabled;
    let resume = opts.resume;
    config.validate()?;
    if dataset.samples.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".into()));
    }
    // Fail before training if any corpus record is missing.
    for sample in &dataset.samples {
        if sample.labels.is_empty() {
            return Err(Error::Dataset(format!("image `{}` has no labels", sample.id)));
        }
        corpora_for(store, sample)?;
    }

    let weights = config.weights();
    let n = dataset.samples.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = (config.epochs * steps_per_epoch).max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut state, mut opt, mut opt_cls, start_epoch) = match resume {
        Some(ckpt) => {
            if &ckpt.config != config {
                return Err(Error::Config("checkpoint config differs from requested config".into()));
            }
            rng.set_word_pos(ckpt.rng_word_pos()?);
            let state = ModelState { params: ckpt.params.clone(), classifier: ckpt.classifier.clone() };
            let opt = Sgd::from_saved(ckpt.velocity.clone(), config.momentum);
            let opt_cls =
                Sgd::from_saved(vec![ckpt.classifier_velocity.clone()], config.momentum);
            (state, opt, opt_cls, ckpt.epoch)
        }
        None => {
            let state = init.clone();
            let opt = Sgd::new(&state.params, config.momentum);
            let opt_cls = Sgd::new(std::slice::from_ref(&state.classifier), config.momentum);
            (state, opt, opt_cls, 0)
        }
    };

    let mut texts = TextEmbeddingCache::new();
    let mut records = Vec::new();
    let n_classes = dataset.n_classes();

    let end_epoch = opts.stop_after_epochs.map_or(config.epochs, |e| e.min(config.epochs));
    let mut completed = start_epoch;
    for epoch in start_epoch..end_epoch {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let lr = poly_lr(config.lr, epoch * steps_per_epoch + step, total_steps, config.poly_power)?;
            let mut tape = Tape::new();
            let param_vars: Vec<VarId> =
                state.params.iter().map(|t| tape.param(t.clone())).collect();
            let classifier_var = tape.param(state.classifier_kernel());
            let zero_bias = tape.constant(Tensor::zeros(vec![n_classes]));
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();

            let (frc, brc, reg, total) = ritc_batch_graph(
                &mut tape,
                backbone,
                &param_vars,
                classifier_var,
                zero_bias,
                &batch,
                store,
                &weights,
                config.omega,
                fat_enabled,
                encoder,
                &mut texts,
            )?;
            let record = StepRecord {
                epoch,
                step,
                frc: tape.value(frc).item(),
                brc: tape.value(brc).item(),
                reg: tape.value(reg).item(),
                total: tape.value(total).item(),
                lr,
            };
            tape.backward(total);

            let grads: Vec<Option<Tensor>> =
                param_vars.iter().map(|&v| tape.grad(v).cloned()).collect();
            opt.step(&mut state.params, &grads, lr);
            let cls_grad = tape.grad(classifier_var).map(|g| {
                Tensor::new(state.classifier.shape().to_vec(), g.data().to_vec())
            });
            opt_cls.step(std::slice::from_mut(&mut state.classifier), &[cls_grad], lr);
            records.push(record);
        }
        completed = epoch + 1;
    }

    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        epoch: completed,
        backbone: backbone_config.clone(),
        params: state.params,
        classifier: state.classifier,
        velocity: opt.velocity,
        classifier_velocity: opt_cls.velocity.into_iter().next().unwrap(),
        config: *config,
        rng_seed: config.seed,
        rng_word_pos: rng.get_word_pos().to_string(),
    };
    Ok((checkpoint, records))
}

/// Snapshot a pretrained state as an epoch-0 checkpoint so evaluation and
/// training share one artifact format.
pub fn state_checkpoint(
    state: &ModelState,
    backbone_config: &BackboneConfig,
    config: &TrainConfig,
) -> Checkpoint {
    Checkpoint {
        version: CHECKPOINT_VERSION,
        epoch: 0,
        backbone: backbone_config.clone(),
        params: state.params.clone(),
        classifier: state.classifier.clone(),
        velocity: state.params.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
        classifier_velocity: Tensor::zeros(state.classifier.shape().to_vec()),
        config: *config,
        rng_seed: config.seed,
        rng_word_pos: ChaCha8Rng::seed_from_u64(config.seed).get_word_pos().to_string(),
    }
}

/// Backbone-tensor gradients paired with the classifier gradient.
type Gradients = (Vec<Tensor>, Tensor);

/// The batch objective as a plain function of the parameters, for
/// gradient verification.
pub struct RitcObjective<'a> {
    pub backbone: &'a dyn Backbone,
    pub samples: Vec<&'a TrainSample>,
    pub store: &'a CorpusStore,
    pub weights: LossWeights,
    pub omega: f64,
    pub fat_enabled: bool,
    pub encoder: &'a dyn TraceEncoder,
}

impl RitcObjective<'_> {
    /// Forward value only.
    pub fn loss(&self, params: &[Tensor], classifier: &Tensor) -> Result<LossBreakdown> {
        self.eval(params, classifier, false).map(|(b, _)| b)
    }

    /// Forward value plus gradients for every backbone tensor and the
    /// classifier.
    pub fn loss_and_grad(
        &self,
        params: &[Tensor],
        classifier: &Tensor,
    ) -> Result<(LossBreakdown, Vec<Tensor>, Tensor)> {
        let (b, grads) = self.eval(params, classifier, true)?;
        let (g_params, g_cls) = grads.expect("gradients requested");
        Ok((b, g_params, g_cls))
    }

    fn eval(
        &self,
        params: &[Tensor],
        classifier: &Tensor,
        grad: bool,
    ) -> Result<(LossBreakdown, Option<Gradients>)> {
        let n_classes = classifier.shape()[0];
        let mut tape = Tape::new();
        let param_vars: Vec<VarId> = params.iter().map(|t| tape.param(t.clone())).collect();
        let kernel = Tensor::new(
            vec![n_classes, classifier.shape()[1], 1, 1],
            classifier.data().to_vec(),
        );
        let classifier_var = tape.param(kernel);
        let zero_bias = tape.constant(Tensor::zeros(vec![n_classes]));
        let mut texts = TextEmbeddingCache::new();
        let (frc, brc, reg, total) = ritc_batch_graph(
            &mut tape,
            self.backbone,
            &param_vars,
            classifier_var,
            zero_bias,
            &self.samples,
            self.store,
            &self.weights,
            self.omega,
            self.fat_enabled,
            self.encoder,
            &mut texts,
        )?;
        let breakdown = LossBreakdown {
            frc: tape.value(frc).item(),
            brc: tape.value(brc).item(),
            reg: tape.value(reg).item(),
            total: tape.value(total).item(),
        };
        if !grad {
            return Ok((breakdown, None));
        }
        tape.backward(total);
        let g_params: Vec<Tensor> = param_vars
            .iter()
            .zip(params)
            .map(|(&v, p)| {
                tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
            })
            .collect();
        let g_cls = tape
            .grad(classifier_var)
            .map(|g| Tensor::new(classifier.shape().to_vec(), g.data().to_vec()))
            .unwrap_or_else(|| Tensor::zeros(classifier.shape().to_vec()));
        Ok((breakdown, Some((g_params, g_cls))))
    }
}

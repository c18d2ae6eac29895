//! `ritc`: generate question-answer corpora, train the region-contrast
//! network, evaluate activation maps, and export overlays.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ritc_core::corpus::store::CorpusStore;
use ritc_core::corpus::{generate_store, CorpusVariant, GenerateOptions};
use ritc_core::dataset::{palette_for, DatasetManifest, SynthConfig, MAX_SYNTH_CLASSES};
use ritc_core::encoders::EncoderPair;
use ritc_core::eval::{
    evaluate_dataset, format_ablation_table, infer_upsampled, run_ablation, sweep_bg_threshold,
    sweep_omega, AblationSpec,
};
use ritc_core::fingerprint::fingerprint;
use ritc_core::training::{
    load_dataset, pretrain_classifier, state_checkpoint, train_ritc, write_metrics, Activation,
    BackboneConfig, Checkpoint, ConvBackbone, ModelState, RitcOptions, TrainConfig,
};
use ritc_core::{
    CachedVqa, MockEncoder, MockVqa, ProcessVqa, RasterImage, TemplateSet, VqaBackend,
};

/// Environment variable naming the external question-answering command.
const VQA_CMD_ENV: &str = "RITC_VQA_CMD";

#[derive(Parser)]
#[command(name = "ritc", version, about = "Region image-text contrastive CAM pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect question-answer text corpora.
    Corpus {
        #[command(subcommand)]
        command: CorpusCmd,
    },
    /// Create or ingest datasets.
    Dataset {
        #[command(subcommand)]
        command: DatasetCmd,
    },
    /// Train the classification initialization or the contrastive stage.
    Train {
        #[command(subcommand)]
        command: TrainCmd,
    },
    /// Evaluate activation maps against ground-truth masks.
    Eval {
        #[command(subcommand)]
        command: EvalCmd,
    },
    /// Visualization exports.
    Viz {
        #[command(subcommand)]
        command: VizCmd,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Ask the backend every template for every (image, label) pair.
    Generate(CorpusGenerate),
    /// Print records from a corpus file.
    Inspect(CorpusInspect),
}

#[derive(Args)]
struct CorpusGenerate {
    /// Directory holding the images referenced by the labels file.
    #[arg(long)]
    images: PathBuf,
    /// Dataset manifest naming images and their label sets.
    #[arg(long)]
    labels: PathBuf,
    /// Template file; omit for the built-in set.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// `mock`, `external` (reads RITC_VQA_CMD), or `auto` (external
    /// when RITC_VQA_CMD is set, mock otherwise).
    #[arg(long, default_value = "auto")]
    backend: String,
    #[arg(long)]
    out: PathBuf,
    /// Persist backend answers here and reuse them on re-runs.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Collapse repeated prompts inside each record.
    #[arg(long)]
    dedup: bool,
    /// Scene descriptor directory for the mock backend; defaults to
    /// `<images>/scenes` when present.
    #[arg(long)]
    scenes: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusInspect {
    #[arg(long = "in")]
    input: PathBuf,
    /// Only records for this class label.
    #[arg(long)]
    class: Option<String>,
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate the deterministic shapes benchmark.
    Synth(DatasetSynth),
    /// Ingest a VOC-style directory tree into a manifest.
    Ingest(DatasetIngest),
}

#[derive(Args)]
struct DatasetSynth {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    images: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    size: usize,
    /// Probability that a class appears on its preferred background.
    #[arg(long, default_value_t = 0.8)]
    bias: f64,
}

#[derive(Args)]
struct DatasetIngest {
    #[arg(long)]
    root: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Multi-label classification pretraining (the backbone init).
    Pretrain(TrainPretrain),
    /// Region image-text contrastive training.
    Ritc(TrainRitc),
}

#[derive(Args)]
struct TrainPretrain {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Backbone block widths.
    #[arg(long, default_value = "12,24,32", value_delimiter = ',')]
    channels: Vec<usize>,
    /// Backbone block strides.
    #[arg(long, default_value = "1,2,2", value_delimiter = ',')]
    strides: Vec<usize>,
    /// `relu` or `softplus`.
    #[arg(long, default_value = "relu")]
    activation: String,
}

#[derive(Args)]
struct TrainRitc {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint providing the initialization (from `train pretrain`).
    #[arg(long)]
    init: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Continue a stopped run from its checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Use the raw activation and its complement instead of thresholded
    /// region masks.
    #[arg(long)]
    no_fat: bool,
    /// Stop after this many epochs (checkpoint resumes the same run).
    #[arg(long)]
    stop_after: Option<usize>,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Args, Clone)]
struct EncoderArgs {
    /// `palette` grounds tokens of the synthetic world; `random` hashes
    /// every token.
    #[arg(long = "encoder", default_value = "palette")]
    kind: String,
    #[arg(long = "encoder-dim", default_value_t = 32)]
    dim: usize,
    #[arg(long = "encoder-grid", default_value_t = 8)]
    grid: usize,
    #[arg(long = "encoder-seed", default_value_t = 12345)]
    seed: u64,
}

impl EncoderArgs {
    fn build(&self, n_classes: usize) -> anyhow::Result<MockEncoder> {
        match self.kind.as_str() {
            "palette" => {
                let classes = n_classes.min(MAX_SYNTH_CLASSES);
                Ok(MockEncoder::palette_aligned(palette_for(classes), self.dim, self.grid, self.seed))
            }
            "random" => Ok(MockEncoder::random(self.dim, self.grid, self.seed)),
            other => bail!("unknown encoder `{other}` (expected palette|random)"),
        }
    }
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Score pseudo-masks from a checkpoint against a dataset.
    Run(EvalRun),
    /// Train-and-evaluate the loss/corpus/threshold ablation matrix.
    Ablate(EvalAblate),
    /// Train-and-evaluate across filter ratios.
    SweepOmega(EvalSweep),
}

#[derive(Args)]
struct EvalRun {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.15)]
    bg_threshold: f64,
    /// Write the machine-readable report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Additionally sweep the background threshold and report the best.
    #[arg(long)]
    sweep_threshold: bool,
}

#[derive(Args)]
struct EvalAblate {
    /// Training dataset manifest.
    #[arg(long)]
    train: PathBuf,
    /// Evaluation dataset manifest (with ground-truth masks).
    #[arg(long = "eval")]
    eval_set: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    init: PathBuf,
    #[arg(long, default_value_t = 0.15)]
    bg_threshold: f64,
    /// Which matrix to run: `loss`, `corpus`, `fat`, or `all`.
    #[arg(long, default_value = "loss")]
    matrix: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Args)]
struct EvalSweep {
    #[arg(long)]
    train: PathBuf,
    #[arg(long = "eval")]
    eval_set: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    init: PathBuf,
    #[arg(long, default_value_t = 0.15)]
    bg_threshold: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,0.5")]
    omegas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Subcommand)]
enum VizCmd {
    /// Heat overlays (one per class) plus legend strips.
    Overlay(VizOverlay),
}

#[derive(Args)]
struct VizOverlay {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Manifest used to resolve labels and class names for the image.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Corpus file; prompts are printed in the legend when present.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

fn main() -> ExitCode {
    // Die quietly when a pipe closes (e.g. piping into `head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first_line = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
            eprintln!("error: {first_line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn print_fingerprint<T: serde::Serialize>(value: &T) {
    println!("config fingerprint: {}", fingerprint(value));
}

fn load_backbone(ckpt: &Checkpoint) -> anyhow::Result<(ConvBackbone, ModelState)> {
    let backbone = ConvBackbone::new(ckpt.backbone.clone())?;
    let state = ModelState { params: ckpt.params.clone(), classifier: ckpt.classifier.clone() };
    Ok((backbone, state))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Corpus { command } => match command {
            CorpusCmd::Generate(args) => corpus_generate(args),
            CorpusCmd::Inspect(args) => corpus_inspect(args),
        },
        Command::Dataset { command } => match command {
            DatasetCmd::Synth(args) => dataset_synth(args),
            DatasetCmd::Ingest(args) => dataset_ingest(args),
        },
        Command::Train { command } => match command {
            TrainCmd::Pretrain(args) => train_pretrain(args),
            TrainCmd::Ritc(args) => train_ritc_cmd(args),
        },
        Command::Eval { command } => match command {
            EvalCmd::Run(args) => eval_run(args),
            EvalCmd::Ablate(args) => eval_ablate(args),
            EvalCmd::SweepOmega(args) => eval_sweep(args),
        },
        Command::Viz { command } => match command {
            VizCmd::Overlay(args) => viz_overlay(args),
        },
    }
}

fn corpus_generate(args: CorpusGenerate) -> anyhow::Result<()> {
    let templates = match &args.templates {
        Some(path) => TemplateSet::load(path)?,
        None => TemplateSet::builtin(),
    };
    let manifest = DatasetManifest::load(&args.labels)
        .with_context(|| format!("loading labels manifest {}", args.labels.display()))?;
    let backend_kind = match args.backend.as_str() {
        "auto" => {
            if std::env::var(VQA_CMD_ENV).is_ok() {
                "external"
            } else {
                "mock"
            }
        }
        other => other,
    };
    print_fingerprint(&(
        "corpus-generate",
        backend_kind,
        templates.version(),
        args.dedup,
        manifest.entries.len(),
    ));
    let backend: Box<dyn VqaBackend> = match backend_kind {
        "mock" => {
            let mut mock = MockVqa::with_templates(templates.clone());
            let scenes_dir =
                args.scenes.clone().unwrap_or_else(|| args.images.join("scenes"));
            if scenes_dir.is_dir() {
                let n = mock.load_scenes(&scenes_dir)?;
                log::info!("loaded {n} scene descriptors from {}", scenes_dir.display());
            }
            Box::new(mock)
        }
        "external" => {
            let cmd = std::env::var(VQA_CMD_ENV)
                .with_context(|| format!("{VQA_CMD_ENV} must name the adapter command"))?;
            Box::new(ProcessVqa::spawn(&cmd)?)
        }
        other => bail!("unknown backend `{other}` (expected mock|external|auto)"),
    };

    let opts = GenerateOptions { dedup: args.dedup };
    let store = match &args.cache {
        Some(cache) => {
            let cached = CachedVqa::with_disk_cache(BoxedBackend(backend), cache)?;
            let store = generate_store(&cached, &templates, &manifest, opts)?;
            cached.persist()?;
            store
        }
        None => generate_store(backend.as_ref(), &templates, &manifest, opts)?,
    };
    store.save(&args.out)?;
    println!("wrote {} corpus records to {}", store.len(), args.out.display());
    Ok(())
}

/// Lets a boxed backend satisfy the cache wrapper's type parameter.
struct BoxedBackend(Box<dyn VqaBackend>);

impl VqaBackend for BoxedBackend {
    fn id(&self) -> String {
        self.0.id()
    }
    fn answer(&self, image: &RasterImage, question: &str) -> ritc_core::Result<String> {
        self.0.answer(image, question)
    }
}

fn corpus_inspect(args: CorpusInspect) -> anyhow::Result<()> {
    let store = CorpusStore::load(&args.input)?;
    print_fingerprint(&("corpus-inspect", store.template_version(), store.backend_id()));
    println!(
        "{} records (templates {}, backend {})",
        store.len(),
        store.template_version(),
        store.backend_id()
    );
    let mut shown = 0;
    for ((image_id, _), corpus) in store.iter() {
        if let Some(class) = &args.class {
            if corpus.class_label() != class {
                continue;
            }
        }
        println!("{image_id} / {} (class {})", corpus.class_label(), corpus.class_id());
        for entry in corpus.fg() {
            println!("  fg [{:?}] {}", entry.source, entry.text);
        }
        for entry in corpus.bg() {
            println!("  bg [{:?}] {}", entry.source, entry.text);
        }
        shown += 1;
    }
    if shown == 0 {
        println!("no matching records");
    }
    Ok(())
}

fn dataset_synth(args: DatasetSynth) -> anyhow::Result<()> {
    let mut cfg = SynthConfig::new(args.images, args.classes, args.seed);
    cfg.img_size = args.size;
    cfg.min_half = (args.size / 8).max(3);
    cfg.max_half = (args.size / 5).max(4);
    cfg.bg_bias = args.bias;
    print_fingerprint(&cfg);
    let manifest = ritc_core::generate_synthetic(&cfg, &args.out)?;
    println!(
        "wrote {} images ({} classes) under {}",
        manifest.entries.len(),
        manifest.classes.len(),
        args.out.display()
    );
    Ok(())
}

fn dataset_ingest(args: DatasetIngest) -> anyhow::Result<()> {
    print_fingerprint(&("ingest", args.root.display().to_string(), &args.split));
    let manifest = ritc_core::ingest_voc_style(&args.root, &args.split)?;
    manifest.save(&args.out)?;
    println!("wrote manifest with {} entries to {}", manifest.entries.len(), args.out.display());
    Ok(())
}

fn parse_activation(s: &str) -> anyhow::Result<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "softplus" => Ok(Activation::Softplus),
        other => bail!("unknown activation `{other}`"),
    }
}

fn train_pretrain(args: TrainPretrain) -> anyhow::Result<()> {
    let config = TrainConfig::load(&args.config)?;
    let bb_cfg = BackboneConfig {
        channels: args.channels.clone(),
        strides: args.strides.clone(),
        activation: parse_activation(&args.activation)?,
    };
    print_fingerprint(&(&config, &bb_cfg, "pretrain"));
    let backbone = ConvBackbone::new(bb_cfg.clone())?;
    let manifest = DatasetManifest::load(&args.dataset)?;
    let data = load_dataset(&manifest)?;
    let (state, records) = pretrain_classifier(&backbone, &data, &config)?;
    if let Some(metrics) = &args.metrics {
        write_metrics(metrics, &records)?;
    }
    let ckpt = state_checkpoint(&state, &bb_cfg, &config);
    ckpt.save(&args.out)?;
    let last = records.last().map(|r| r.total).unwrap_or(f64::NAN);
    println!("pretrained {} steps, final bce {last:.6}; checkpoint {}", records.len(), args.out.display());
    Ok(())
}

fn train_ritc_cmd(args: TrainRitc) -> anyhow::Result<()> {
    let config = TrainConfig::load(&args.config)?;
    let init_ckpt = Checkpoint::load(&args.init)?;
    let (backbone, init) = load_backbone(&init_ckpt)?;
    let manifest = DatasetManifest::load(&args.dataset)?;
    let data = load_dataset(&manifest)?;
    let store = CorpusStore::load(&args.corpus)?;
    let encoder = args.encoder.build(manifest.classes.len())?;
    print_fingerprint(&(&config, &init_ckpt.backbone, "ritc", args.no_fat, encoder.id()));

    let resume = match &args.resume {
        Some(path) => Some(Checkpoint::load(path)?),
        None => None,
    };
    let opts = RitcOptions {
        fat_disabled: args.no_fat,
        resume: resume.as_ref(),
        stop_after_epochs: args.stop_after,
    };
    let (ckpt, records) = train_ritc(
        &backbone,
        &init,
        &store,
        &data,
        &config,
        &encoder,
        &opts,
        &init_ckpt.backbone,
    )?;
    if let Some(metrics) = &args.metrics {
        write_metrics(metrics, &records)?;
    }
    ckpt.save(&args.out)?;
    let last = records.last().map(|r| r.total).unwrap_or(f64::NAN);
    println!(
        "trained {} steps (epochs {}), final total {last:.6}; checkpoint {}",
        records.len(),
        ckpt.epoch,
        args.out.display()
    );
    Ok(())
}

fn eval_run(args: EvalRun) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (backbone, state) = load_backbone(&ckpt)?;
    let manifest = DatasetManifest::load(&args.dataset)?;
    let fp = fingerprint(&(&ckpt.config, &ckpt.backbone, args.bg_threshold, "eval"));
    println!("config fingerprint: {fp}");
    let report = evaluate_dataset(&backbone, &state, &manifest, args.bg_threshold, &fp)?;
    println!("mIoU {:.4} over {} pixels (bg threshold {})", report.miou, report.pixels, args.bg_threshold);
    for (idx, iou) in report.per_class_iou.iter().enumerate() {
        let name = if idx == 0 {
            "background".to_string()
        } else {
            manifest.class_name(idx as u32).unwrap_or("?").to_string()
        };
        match iou {
            Some(v) => println!("  {name:<12} {v:.4}"),
            None => println!("  {name:<12} (absent)"),
        }
    }
    if args.sweep_threshold {
        let grid: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
        let points = sweep_bg_threshold(&backbone, &state, &manifest, &grid, &fp)?;
        let best = points
            .iter()
            .max_by(|a, b| a.1.miou.total_cmp(&b.1.miou))
            .expect("non-empty grid");
        println!("threshold sweep:");
        for (t, r) in &points {
            println!("  {t:.2} -> {:.4}", r.miou);
        }
        println!("best threshold {:.2} with mIoU {:.4}", best.0, best.1.miou);
    }
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn ablation_matrix(kind: &str) -> anyhow::Result<Vec<AblationSpec>> {
    let full = CorpusVariant::full();
    let loss_rows = vec![
        AblationSpec { frc: true, brc: false, reg: false, corpus: full, fat: true },
        AblationSpec { frc: false, brc: true, reg: false, corpus: full, fat: true },
        AblationSpec { frc: true, brc: true, reg: false, corpus: full, fat: true },
        AblationSpec { frc: true, brc: true, reg: true, corpus: full, fat: true },
    ];
    let corpus_rows: Vec<AblationSpec> = [
        CorpusVariant::Baseline,
        CorpusVariant::Kinds { fine_grained: true, alias: false, object: false, scene: false },
        CorpusVariant::Kinds { fine_grained: false, alias: true, object: false, scene: false },
        CorpusVariant::Kinds { fine_grained: false, alias: false, object: true, scene: false },
        CorpusVariant::Kinds { fine_grained: false, alias: false, object: false, scene: true },
        CorpusVariant::full(),
    ]
    .into_iter()
    .map(|corpus| AblationSpec { frc: true, brc: true, reg: true, corpus, fat: true })
    .collect();
    let fat_rows = vec![
        AblationSpec { frc: true, brc: true, reg: true, corpus: full, fat: false },
        AblationSpec { frc: true, brc: true, reg: true, corpus: full, fat: true },
    ];
    Ok(match kind {
        "loss" => loss_rows,
        "corpus" => corpus_rows,
        "fat" => fat_rows,
        "all" => {
            let mut rows = loss_rows;
            rows.extend(corpus_rows);
            rows.extend(fat_rows);
            rows
        }
        other => bail!("unknown matrix `{other}` (expected loss|corpus|fat|all)"),
    })
}

fn eval_ablate(args: EvalAblate) -> anyhow::Result<()> {
    let config = TrainConfig::load(&args.config)?;
    let init_ckpt = Checkpoint::load(&args.init)?;
    let (backbone, init) = load_backbone(&init_ckpt)?;
    let train_manifest = DatasetManifest::load(&args.train)?;
    let eval_manifest = DatasetManifest::load(&args.eval_set)?;
    let train_data = load_dataset(&train_manifest)?;
    let store = CorpusStore::load(&args.corpus)?;
    let encoder = args.encoder.build(train_manifest.classes.len())?;
    let specs = ablation_matrix(&args.matrix)?;
    print_fingerprint(&(&config, &specs, args.bg_threshold, encoder.id()));

    let rows = run_ablation(
        &specs,
        &backbone,
        &init_ckpt.backbone,
        &init,
        &store,
        &train_data,
        &eval_manifest,
        &config,
        &encoder,
        args.bg_threshold,
    )?;
    print!("{}", format_ablation_table(&rows));
    if let Some(path) = &args.out {
        let mut text = String::new();
        for row in &rows {
            text.push_str(&serde_json::to_string(row)?);
            text.push('\n');
        }
        std::fs::write(path, text)?;
        println!("rows written to {}", path.display());
    }
    Ok(())
}

fn eval_sweep(args: EvalSweep) -> anyhow::Result<()> {
    let config = TrainConfig::load(&args.config)?;
    let init_ckpt = Checkpoint::load(&args.init)?;
    let (backbone, init) = load_backbone(&init_ckpt)?;
    let train_manifest = DatasetManifest::load(&args.train)?;
    let eval_manifest = DatasetManifest::load(&args.eval_set)?;
    let train_data = load_dataset(&train_manifest)?;
    let store = CorpusStore::load(&args.corpus)?;
    let encoder = args.encoder.build(train_manifest.classes.len())?;
    print_fingerprint(&(&config, &args.omegas, args.bg_threshold, encoder.id()));

    let points = sweep_omega(
        &args.omegas,
        &backbone,
        &init_ckpt.backbone,
        &init,
        &store,
        &train_data,
        &eval_manifest,
        &config,
        &encoder,
        args.bg_threshold,
    )?;
    println!("omega   miou");
    for (omega, miou) in &points {
        println!("{omega:<7} {miou:.4}");
    }
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&points)?)?;
        println!("curve written to {}", path.display());
    }
    Ok(())
}

fn viz_overlay(args: VizOverlay) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (backbone, state) = load_backbone(&ckpt)?;
    let image = RasterImage::load_png(&args.image)?;
    let image_id = args
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string());
    print_fingerprint(&(&ckpt.config, &image_id, "overlay"));

    let n_classes = ckpt.classifier.shape()[0];
    let mut names: BTreeMap<u32, String> = Default::default();
    let mut present: BTreeSet<u32> = (1..=n_classes as u32).collect();
    if let Some(manifest_path) = &args.dataset {
        let manifest = DatasetManifest::load(manifest_path)?;
        for (idx, name) in manifest.classes.iter().enumerate() {
            names.insert(idx as u32 + 1, name.clone());
        }
        if let Some(entry) = manifest.entries.iter().find(|e| e.id == image_id) {
            present = entry.labels.iter().copied().collect();
        }
    }

    let maps = infer_upsampled(&backbone, &state, &image, &present)?;
    let mut prompts: BTreeMap<u32, Vec<String>> = Default::default();
    if let Some(corpus_path) = &args.corpus {
        let store = CorpusStore::load(corpus_path)?;
        for &class_id in &present {
            if let Some(corpus) = store.get(&image_id, class_id) {
                let mut texts: Vec<String> =
                    corpus.fg_texts().iter().map(|s| format!("fg: {s}")).collect();
                texts.extend(corpus.bg_texts().iter().map(|s| format!("bg: {s}")));
                prompts.insert(class_id, texts);
            }
        }
    }
    let written =
        ritc_core::viz::export_overlay(&image, &maps, &names, &prompts, &image_id, &args.out)?;
    println!("wrote {} files under {}", written.len(), args.out.display());
    Ok(())
}

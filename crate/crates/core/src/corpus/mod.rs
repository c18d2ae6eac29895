//! Per-image, per-class text corpora: fill question templates, query a
//! backend, post-process the answers into foreground/background prompt
//! sets, and persist them.

pub mod backend;
pub mod store;
pub mod templates;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::image_io::RasterImage;

use backend::VqaBackend;
use store::CorpusStore;
use templates::{QuestionTemplate, TemplateKind, TemplateSet, PLACEHOLDER};

/// Where a corpus text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    SurroundingObject,
    Scene,
    FineGrained,
    Alias,
    /// The prompt built from the raw class label itself.
    Category,
    /// The "no {class}" prompt used when every background answer was dropped.
    Fallback,
}

impl From<TemplateKind> for TextSource {
    fn from(kind: TemplateKind) -> Self {
        match kind {
            TemplateKind::SurroundingObject => TextSource::SurroundingObject,
            TemplateKind::Scene => TextSource::Scene,
            TemplateKind::FineGrained => TextSource::FineGrained,
            TemplateKind::Alias => TextSource::Alias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub text: String,
    pub source: TextSource,
}

/// The foreground and background prompt sets for one (image, class) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCorpus {
    class_id: u32,
    class_label: String,
    fg: Vec<CorpusEntry>,
    bg: Vec<CorpusEntry>,
}

impl ClassCorpus {
    pub fn new(
        class_id: u32,
        class_label: impl Into<String>,
        fg: Vec<CorpusEntry>,
        bg: Vec<CorpusEntry>,
    ) -> Result<Self> {
        let class_label = class_label.into();
        if class_label.is_empty() {
            return Err(Error::Corpus("empty class label".to_string()));
        }
        if fg.is_empty() || bg.is_empty() {
            return Err(Error::Corpus("fg and bg prompt sets must be non-empty".to_string()));
        }
        if fg.iter().chain(&bg).any(|e| e.text.is_empty()) {
            return Err(Error::Corpus("corpus prompts must be non-empty".to_string()));
        }
        let category = prompt(&class_label);
        if !fg.iter().any(|e| e.text == category) {
            return Err(Error::Corpus(format!("fg set is missing the category prompt `{category}`")));
        }
        if bg.iter().any(|b| fg.iter().any(|f| f.text == b.text)) {
            return Err(Error::Corpus("bg prompts must not repeat fg prompts".to_string()));
        }
        Ok(Self { class_id, class_label, fg, bg })
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn fg(&self) -> &[CorpusEntry] {
        &self.fg
    }

    pub fn bg(&self) -> &[CorpusEntry] {
        &self.bg
    }

    pub fn fg_texts(&self) -> Vec<&str> {
        self.fg.iter().map(|e| e.text.as_str()).collect()
    }

    pub fn bg_texts(&self) -> Vec<&str> {
        self.bg.iter().map(|e| e.text.as_str()).collect()
    }

    /// Project the corpus onto a text-source subset.
    pub fn filtered(&self, variant: &CorpusVariant) -> Result<ClassCorpus> {
        match variant {
            CorpusVariant::Baseline => build_baseline_corpus(self.class_id, &self.class_label),
            CorpusVariant::Kinds { fine_grained, alias, object, scene } => {
                let fg: Vec<CorpusEntry> = self
                    .fg
                    .iter()
                    .filter(|e| match e.source {
                        TextSource::Category => true,
                        TextSource::FineGrained => *fine_grained,
                        TextSource::Alias => *alias,
                        _ => false,
                    })
                    .cloned()
                    .collect();
                let mut bg: Vec<CorpusEntry> = self
                    .bg
                    .iter()
                    .filter(|e| match e.source {
                        TextSource::SurroundingObject => *object,
                        TextSource::Scene => *scene,
                        TextSource::Fallback => false,
                        _ => false,
                    })
                    .cloned()
                    .collect();
                if bg.is_empty() {
                    bg.push(CorpusEntry {
                        text: prompt(&format!("no {}", self.class_label)),
                        source: TextSource::Fallback,
                    });
                }
                ClassCorpus::new(self.class_id, &self.class_label, fg, bg)
            }
        }
    }
}

/// Which text sources feed training; used by the corpus ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusVariant {
    /// Category prompt vs "no {class}" only.
    Baseline,
    Kinds { fine_grained: bool, alias: bool, object: bool, scene: bool },
}

impl CorpusVariant {
    pub fn full() -> Self {
        CorpusVariant::Kinds { fine_grained: true, alias: true, object: true, scene: true }
    }

    pub fn describe(&self) -> String {
        match self {
            CorpusVariant::Baseline => "baseline".to_string(),
            CorpusVariant::Kinds { fine_grained, alias, object, scene } => {
                let mut parts = vec!["category"];
                if *fine_grained {
                    parts.push("fine_grained");
                }
                if *alias {
                    parts.push("alias");
                }
                if *object {
                    parts.push("object");
                }
                if *scene {
                    parts.push("scene");
                }
                parts.join("+")
            }
        }
    }
}

/// Wrap an answer the standard way.
pub fn prompt(answer: &str) -> String {
    format!("a photo of {answer}")
}

/// Substitute the class label into a template.
pub fn fill_template(template: &QuestionTemplate, class_label: &str) -> Result<String> {
    if class_label.is_empty() {
        return Err(Error::Template("class label must be non-empty".to_string()));
    }
    if class_label.contains(PLACEHOLDER) {
        return Err(Error::Template("class label must not contain the placeholder".to_string()));
    }
    // The template type guarantees exactly one placeholder.
    Ok(template.pattern().replacen(PLACEHOLDER, class_label, 1))
}

/// One raw backend answer, still in template order.
#[derive(Debug, Clone)]
pub struct RawAnswer {
    pub kind: TemplateKind,
    pub question: String,
    pub answer: String,
}

/// Ask every template about one image. Backend failures are recorded as
/// empty answers rather than aborting the batch.
pub fn ask_all(
    backend: &dyn VqaBackend,
    image: &RasterImage,
    class_label: &str,
    templates: &[QuestionTemplate],
) -> Result<Vec<RawAnswer>> {
    if templates.is_empty() {
        return Err(Error::Template("no templates to ask".to_string()));
    }
    let mut out = Vec::with_capacity(templates.len());
    for template in templates {
        let question = fill_template(template, class_label)?;
        let answer = match backend.answer(image, &question) {
            Ok(a) => a,
            Err(e) => {
                log::debug!("backend failed on `{question}`: {e}");
                String::new()
            }
        };
        out.push(RawAnswer { kind: template.kind(), question, answer });
    }
    Ok(out)
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Case-insensitive check that `answer` already names the class, as a
/// contiguous word sequence ("freight train" contains "train";
/// "trainer" does not).
fn contains_label_words(answer: &str, class_label: &str) -> bool {
    let aw = words(answer);
    let lw = words(class_label);
    if lw.is_empty() || aw.len() < lw.len() {
        return false;
    }
    aw.windows(lw.len()).any(|win| win == lw.as_slice())
}

/// Post-process raw foreground answers with provenance and an optional
/// dedup pass: drop empties, suffix the class label onto answers that do
/// not already name it, append the bare category label, wrap as prompts.
pub fn postprocess_fg_entries(
    raw: &[(String, TemplateKind)],
    class_label: &str,
    dedup: bool,
) -> Vec<CorpusEntry> {
    let mut out: Vec<CorpusEntry> = Vec::with_capacity(raw.len() + 1);
    for (answer, kind) in raw {
        let answer = answer.trim();
        if answer.is_empty() {
            continue;
        }
        let named = if contains_label_words(answer, class_label) {
            answer.to_string()
        } else {
            format!("{answer} {class_label}")
        };
        out.push(CorpusEntry { text: prompt(&named), source: (*kind).into() });
    }
    out.push(CorpusEntry { text: prompt(class_label), source: TextSource::Category });
    if dedup {
        let mut seen = std::collections::BTreeSet::new();
        out.retain(|e| seen.insert(e.text.clone()));
    }
    out
}

/// The plain-text contract: length `L` raw answers in, between 1 and
/// `L + 1` prompts out, category prompt last.
pub fn postprocess_fg(raw_answers: &[String], class_label: &str) -> Vec<String> {
    let tagged: Vec<(String, TemplateKind)> = raw_answers
        .iter()
        .map(|a| (a.clone(), TemplateKind::FineGrained))
        .collect();
    postprocess_fg_entries(&tagged, class_label, false)
        .into_iter()
        .map(|e| e.text)
        .collect()
}

/// Post-process raw background answers: drop empties and answers equal to
/// the class label, wrap the rest; fall back to "no {class}" if nothing
/// survives.
pub fn postprocess_bg_entries(
    raw: &[(String, TemplateKind)],
    class_label: &str,
    dedup: bool,
) -> Vec<CorpusEntry> {
    let label_words = words(class_label);
    let mut out: Vec<CorpusEntry> = Vec::with_capacity(raw.len());
    for (answer, kind) in raw {
        let answer = answer.trim();
        if answer.is_empty() || words(answer) == label_words {
            continue;
        }
        out.push(CorpusEntry { text: prompt(answer), source: (*kind).into() });
    }
    if dedup {
        let mut seen = std::collections::BTreeSet::new();
        out.retain(|e| seen.insert(e.text.clone()));
    }
    if out.is_empty() {
        out.push(CorpusEntry {
            text: prompt(&format!("no {class_label}")),
            source: TextSource::Fallback,
        });
    }
    out
}

pub fn postprocess_bg(raw_answers: &[String], class_label: &str) -> Vec<String> {
    let tagged: Vec<(String, TemplateKind)> = raw_answers
        .iter()
        .map(|a| (a.clone(), TemplateKind::SurroundingObject))
        .collect();
    postprocess_bg_entries(&tagged, class_label, false)
        .into_iter()
        .map(|e| e.text)
        .collect()
}

/// The corpus used when question answering is disabled: category prompt
/// against "no {class}".
pub fn build_baseline_corpus(class_id: u32, class_label: &str) -> Result<ClassCorpus> {
    if class_label.is_empty() {
        return Err(Error::Corpus("empty class label".to_string()));
    }
    ClassCorpus::new(
        class_id,
        class_label,
        vec![CorpusEntry { text: prompt(class_label), source: TextSource::Category }],
        vec![CorpusEntry {
            text: prompt(&format!("no {class_label}")),
            source: TextSource::Fallback,
        }],
    )
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    /// Collapse repeated prompts inside each record (off by default to
    /// preserve the stated prompt counts).
    pub dedup: bool,
}

/// Build the corpus for one image and one present class.
pub fn generate_for_class(
    backend: &dyn VqaBackend,
    templates: &TemplateSet,
    image: &RasterImage,
    class_id: u32,
    class_label: &str,
    opts: GenerateOptions,
) -> Result<ClassCorpus> {
    let raw = ask_all(backend, image, class_label, templates.all())?;
    let fg_raw: Vec<(String, TemplateKind)> = raw
        .iter()
        .filter(|r| !r.kind.is_background())
        .map(|r| (r.answer.clone(), r.kind))
        .collect();
    let bg_raw: Vec<(String, TemplateKind)> = raw
        .iter()
        .filter(|r| r.kind.is_background())
        .map(|r| (r.answer.clone(), r.kind))
        .collect();

    let fg = postprocess_fg_entries(&fg_raw, class_label, opts.dedup);
    let mut bg = postprocess_bg_entries(&bg_raw, class_label, opts.dedup);
    // A negative identical to a positive corrupts the contrast.
    bg.retain(|b| fg.iter().all(|f| f.text != b.text));
    if bg.is_empty() {
        bg.push(CorpusEntry {
            text: prompt(&format!("no {class_label}")),
            source: TextSource::Fallback,
        });
    }
    ClassCorpus::new(class_id, class_label, fg, bg)
}

/// Generate corpora for every (image, present class) pair in a manifest.
pub fn generate_store(
    backend: &dyn VqaBackend,
    templates: &TemplateSet,
    manifest: &DatasetManifest,
    opts: GenerateOptions,
) -> Result<CorpusStore> {
    let mut store = CorpusStore::new(templates.version(), backend.id());
    for entry in &manifest.entries {
        let image = RasterImage::load_png(&entry.image)?;
        for &class_id in &entry.labels {
            let label = manifest
                .class_name(class_id)
                .ok_or_else(|| Error::Corpus(format!("class id {class_id} not in table")))?
                .to_string();
            let corpus =
                generate_for_class(backend, templates, &image, class_id, &label, opts)?;
            store.insert(&entry.id, corpus);
        }
    }
    Ok(store)
}

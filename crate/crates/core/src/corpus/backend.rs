//! Question-answering backends: the deterministic mock, a caching wrapper,
//! and a line-delimited JSON adapter for external processes.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::corpus::templates::{QuestionTemplate, TemplateKind, TemplateSet, PLACEHOLDER};
use crate::dataset::SceneDescriptor;
use crate::error::{Error, Result};
use crate::image_io::{fnv64, RasterImage};

/// A visual question answering backend.
///
/// Implementations must be deterministic for identical (image, question)
/// pairs within one run. An empty answer means "no answer".
pub trait VqaBackend {
    /// Stable identifier recorded in corpus files.
    fn id(&self) -> String;
    fn answer(&self, image: &RasterImage, question: &str) -> Result<String>;
}

/// Answers sourced from synthetic scene descriptors when available, and
/// from a fixed hashed vocabulary otherwise. Fully deterministic.
pub struct MockVqa {
    templates: TemplateSet,
    scenes: BTreeMap<String, SceneDescriptor>,
}

const FALLBACK_VOCAB: &[&str] = &[
    "table", "chair", "tree", "road", "wall", "sky", "floor", "window", "fence", "shelf",
    "field", "room", "street", "park", "yard", "kitchen", "garden", "beach", "forest", "hall",
];

impl MockVqa {
    pub fn new() -> Self {
        Self { templates: TemplateSet::builtin(), scenes: BTreeMap::new() }
    }

    /// Recognize questions produced by a non-default template set.
    pub fn with_templates(templates: TemplateSet) -> Self {
        Self { templates, scenes: BTreeMap::new() }
    }

    /// Load scene descriptors (one JSON file per image) so that questions
    /// about those images are answered from ground truth.
    pub fn load_scenes(&mut self, dir: &Path) -> Result<usize> {
        let mut loaded = 0;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(Error::io(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
            let desc: SceneDescriptor = serde_json::from_str(&text)?;
            self.scenes.insert(desc.content_hash.clone(), desc);
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn insert_scene(&mut self, desc: SceneDescriptor) {
        self.scenes.insert(desc.content_hash.clone(), desc);
    }

    /// Match a concrete question back to (template kind, class label).
    fn classify(&self, question: &str) -> Option<(TemplateKind, String)> {
        for template in self.templates.all() {
            if let Some(label) = match_template(template, question) {
                return Some((template.kind(), label));
            }
        }
        None
    }

    fn fallback(&self, image_hash: &str, kind: &str, label: &str, question: &str) -> String {
        let key = format!("{image_hash}|{kind}|{label}|{question}");
        let idx = fnv64(key.as_bytes()) as usize % FALLBACK_VOCAB.len();
        FALLBACK_VOCAB[idx].to_string()
    }
}

impl Default for MockVqa {
    fn default() -> Self {
        Self::new()
    }
}

/// Try to recover the filled-in class label from a question.
fn match_template(template: &QuestionTemplate, question: &str) -> Option<String> {
    let (prefix, suffix) = template.pattern().split_once(PLACEHOLDER)?;
    let rest = question.strip_prefix(prefix)?;
    let label = rest.strip_suffix(suffix)?;
    if label.is_empty() {
        None
    } else {
        Some(label.to_string())
    }
}

impl VqaBackend for MockVqa {
    fn id(&self) -> String {
        "mock".to_string()
    }

    fn answer(&self, image: &RasterImage, question: &str) -> Result<String> {
        let hash = image.content_hash();
        let Some((kind, label)) = self.classify(question) else {
            return Ok(self.fallback(&hash, "unknown", "", question));
        };
        let Some(scene) = self.scenes.get(&hash) else {
            return Ok(self.fallback(&hash, kind.as_str(), &label, question));
        };
        let answer = match kind {
            TemplateKind::SurroundingObject => {
                // Alternate between the background texture and a co-occurring
                // object, keyed by the question so different templates can
                // surface different distractors.
                let other = scene.shapes.iter().find(|s| s.label != label);
                if let Some(other) = other {
                    if fnv64(question.as_bytes()) % 2 == 1 {
                        other.label.clone()
                    } else {
                        scene.background.clone()
                    }
                } else {
                    scene.background.clone()
                }
            }
            TemplateKind::Scene => scene.scene.clone(),
            TemplateKind::FineGrained => match scene.shapes.iter().find(|s| s.label == label) {
                Some(shape) => shape.variant.clone(),
                None => self.fallback(&hash, kind.as_str(), &label, question),
            },
            TemplateKind::Alias => match scene.shapes.iter().find(|s| s.label == label) {
                Some(shape) => shape.alias.clone(),
                None => self.fallback(&hash, kind.as_str(), &label, question),
            },
        };
        Ok(answer)
    }
}

/// Backend built from a closure; handy for tests and scripted answers.
pub struct ClosureBackend<F> {
    id: String,
    f: F,
}

impl<F> ClosureBackend<F>
where
    F: Fn(&RasterImage, &str) -> Result<String>,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> VqaBackend for ClosureBackend<F>
where
    F: Fn(&RasterImage, &str) -> Result<String>,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn answer(&self, image: &RasterImage, question: &str) -> Result<String> {
        (self.f)(image, question)
    }
}

/// Caches answers keyed by (image content hash, question). The cache is
/// behavior-neutral because backends are deterministic per run.
pub struct CachedVqa<B> {
    inner: B,
    memory: Mutex<HashMap<(String, String), String>>,
    disk: Option<PathBuf>,
}

impl<B: VqaBackend> CachedVqa<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, memory: Mutex::new(HashMap::new()), disk: None }
    }

    /// Also read/write a JSON cache file so re-runs skip backend calls.
    pub fn with_disk_cache(inner: B, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut memory = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
            let entries: Vec<CacheEntry> = serde_json::from_str(&text)?;
            for e in entries {
                memory.insert((e.image_hash, e.question), e.answer);
            }
        }
        Ok(Self { inner, memory: Mutex::new(memory), disk: Some(path) })
    }

    /// Write the cache file (no-op without a disk path). Entries are
    /// sorted so the file is reproducible.
    pub fn persist(&self) -> Result<()> {
        let Some(path) = &self.disk else { return Ok(()) };
        let memory = self.memory.lock().unwrap();
        let mut entries: Vec<CacheEntry> = memory
            .iter()
            .map(|((h, q), a)| CacheEntry {
                image_hash: h.clone(),
                question: q.clone(),
                answer: a.clone(),
            })
            .collect();
        entries.sort_by(|a, b| (&a.image_hash, &a.question).cmp(&(&b.image_hash, &b.question)));
        let text = serde_json::to_string_pretty(&entries)?;
        std::fs::write(path, text).map_err(Error::io(path))
    }

    pub fn hits(&self) -> usize {
        self.memory.lock().unwrap().len()
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    image_hash: String,
    question: String,
    answer: String,
}

impl<B: VqaBackend> VqaBackend for CachedVqa<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn answer(&self, image: &RasterImage, question: &str) -> Result<String> {
        let key = (image.content_hash(), question.to_string());
        if let Some(hit) = self.memory.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let answer = self.inner.answer(image, question)?;
        self.memory.lock().unwrap().insert(key, answer.clone());
        Ok(answer)
    }
}

/// Adapter talking line-delimited JSON to a child process.
///
/// Request: `{"question": "...", "image_png_base64": "..."}`.
/// Response: `{"answer": "..."}`. One line each.
pub struct ProcessVqa {
    id: String,
    child: Mutex<ChildIo>,
}

struct ChildIo {
    child: Child,
    reader: BufReader<std::process::ChildStdout>,
}

impl ProcessVqa {
    /// Spawn `command` (split on whitespace) and keep its stdio open.
    pub fn spawn(command: &str) -> Result<Self> {
        let parts: Vec<&str> = command.split_whitespace().collect();
        if parts.is_empty() {
            return Err(Error::Backend("empty adapter command".to_string()));
        }
        let mut child = Command::new(parts[0])
            .args(&parts[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Backend(format!("failed to spawn `{command}`: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            id: format!("external:{}", parts[0]),
            child: Mutex::new(ChildIo { child, reader: BufReader::new(stdout) }),
        })
    }
}

impl VqaBackend for ProcessVqa {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn answer(&self, image: &RasterImage, question: &str) -> Result<String> {
        #[derive(Serialize)]
        struct Req<'a> {
            question: &'a str,
            image_png_base64: String,
        }
        #[derive(Deserialize)]
        struct Resp {
            answer: String,
        }
        let png = encode_png_bytes(image)?;
        let req = Req {
            question,
            image_png_base64: base64::engine::general_purpose::STANDARD.encode(png),
        };
        let line = serde_json::to_string(&req)?;
        let mut io = self.child.lock().unwrap();
        let stdin = io.child.stdin.as_mut().ok_or_else(|| {
            Error::Backend("adapter stdin closed".to_string())
        })?;
        writeln!(stdin, "{line}").map_err(|e| Error::Backend(format!("adapter write: {e}")))?;
        stdin.flush().map_err(|e| Error::Backend(format!("adapter flush: {e}")))?;
        let mut resp_line = String::new();
        io.reader
            .read_line(&mut resp_line)
            .map_err(|e| Error::Backend(format!("adapter read: {e}")))?;
        if resp_line.is_empty() {
            return Err(Error::Backend("adapter closed its output".to_string()));
        }
        let resp: Resp = serde_json::from_str(resp_line.trim())?;
        Ok(resp.answer)
    }
}

impl Drop for ProcessVqa {
    fn drop(&mut self) {
        if let Ok(mut io) = self.child.lock() {
            drop(io.child.stdin.take());
            let _ = io.child.wait();
        }
    }
}

pub(crate) fn encode_png_bytes(image: &RasterImage) -> Result<Vec<u8>> {
    let rgb = image::RgbImage::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.to_rgb8(),
    )
    .expect("buffer sized from own dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    rgb.write_to(&mut out, image::ImageOutputFormat::Png)?;
    Ok(out.into_inner())
}

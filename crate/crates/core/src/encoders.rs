//! Frozen dual encoders mapping region images and prompt texts into one
//! embedding space.
//!
//! The mock encoder is a fixed affine projection of coarse image
//! statistics. Its text side sums one fixed column per word; words found
//! in a color palette get the column the image side would produce for a
//! solid patch of that color, which grounds prompts like "a photo of
//! grass" in actual pixel statistics. Everything is deterministic given
//! the seed, and the image side is differentiable, so training can push
//! gradients through masked region images while the encoders stay frozen.

// Index loops mirror the subscript arithmetic of the kernels.
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::rc::Rc;
use std::sync::Mutex;

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::autodiff::{Tape, VarId};
use crate::dataset::Palette;
use crate::error::{Error, Result};
use crate::image_io::{fnv64, RasterImage};
use crate::tensor::Tensor;

pub type Embedding = Vec<f64>;

/// A frozen image/text encoder pair with a shared dimension.
pub trait EncoderPair {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn encode_image(&self, image: &RasterImage) -> Result<Embedding>;
    fn encode_text(&self, text: &str) -> Result<Embedding>;
}

/// An encoder whose image side can be traced for gradients.
pub trait TraceEncoder: EncoderPair {
    /// Append the image encoding to a tape; `image` is a `[3, H, W]` var.
    fn trace_image(&self, tape: &mut Tape, image: VarId) -> VarId;
}

const STOPWORDS: &[&str] =
    &["a", "an", "the", "of", "photo", "picture", "is", "this", "that", "in", "on", "at"];

const NEGATIONS: &[&str] = &["no", "not", "without"];

/// Deterministic mock encoder: average-pool the image to a small grid,
/// append a tiny constant feature, and apply a fixed projection.
pub struct MockEncoder {
    dim: usize,
    grid: usize,
    bias_feature: f64,
    projection: Rc<Tensor>,
    palette: Option<Palette>,
    seed: u64,
}

impl MockEncoder {
    /// Purely hashed columns; no grounding. Good enough for smoke tests.
    pub fn random(dim: usize, grid: usize, seed: u64) -> Self {
        Self::build(dim, grid, seed, None)
    }

    /// Ground palette tokens in pixel statistics (see module docs).
    pub fn palette_aligned(palette: Palette, dim: usize, grid: usize, seed: u64) -> Self {
        Self::build(dim, grid, seed, Some(palette))
    }

    fn build(dim: usize, grid: usize, seed: u64, palette: Option<Palette>) -> Self {
        assert!(dim >= 3 && grid >= 1);
        // Per cell: r, g, b plus their quadratic expansion. The quadratic
        // terms spread the nonnegative color cone apart so distinct hues
        // are not all near-parallel under the cosine.
        let n = 9 * grid * grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
        let amp = (3.0 / (n + 1) as f64).sqrt();
        // The last embedding axis is reserved for "emptiness": only the
        // constant appended feature reaches it, and no text embedding ever
        // uses it. An all-zero region image therefore embeds orthogonally
        // to every prompt, which makes both contrast losses maximal on
        // empty regions instead of rewarding map collapse.
        let mut data = vec![0.0; dim * (n + 1)];
        for row in 0..dim - 1 {
            for col in 0..n {
                data[row * (n + 1) + col] = rng.gen_range(-amp..=amp);
            }
        }
        data[(dim - 1) * (n + 1) + n] = 1.0;
        Self {
            dim,
            grid,
            bias_feature: 0.05,
            projection: Rc::new(Tensor::new(vec![dim, n + 1], data)),
            palette,
            seed,
        }
    }

    /// Override the emptiness-axis magnitude.
    pub fn with_bias_feature(mut self, bias_feature: f64) -> Self {
        assert!(bias_feature > 0.0);
        self.bias_feature = bias_feature;
        self
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// What the image side produces for a solid color patch, minus the
    /// emptiness coordinate; this is the text column for palette tokens.
    pub fn color_embedding(&self, rgb: [f64; 3]) -> Embedding {
        let [r, g, b] = rgb;
        let channels = [r, g, b, r * r, g * g, b * b, r * g, r * b, g * b];
        let cells = self.grid * self.grid;
        let mut feature = Vec::with_capacity(9 * cells + 1);
        for value in channels {
            feature.extend(std::iter::repeat_n(value, cells));
        }
        feature.push(0.0);
        self.project(&feature)
    }

    fn project(&self, feature: &[f64]) -> Embedding {
        let n = feature.len();
        let mut out = vec![0.0; self.dim];
        for row in 0..self.dim {
            let m = &self.projection.data()[row * n..(row + 1) * n];
            out[row] = m.iter().zip(feature).map(|(a, b)| a * b).sum();
        }
        out
    }

    fn token_column(&self, token: &str) -> Embedding {
        if let Some(palette) = &self.palette {
            if let Some(rgb) = palette.get(token) {
                return self.color_embedding(rgb);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv64(token.as_bytes()));
        let amp = (3.0 / self.dim as f64).sqrt();
        let mut col: Embedding = (0..self.dim - 1).map(|_| rng.gen_range(-amp..=amp)).collect();
        col.push(0.0); // texts never touch the emptiness axis
        col
    }
}

impl EncoderPair for MockEncoder {
    fn id(&self) -> String {
        let kind = if self.palette.is_some() { "palette" } else { "random" };
        format!("mock-{kind}-d{}-g{}-s{}", self.dim, self.grid, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_image(&self, image: &RasterImage) -> Result<Embedding> {
        if image.height() < self.grid || image.width() < self.grid {
            return Err(Error::Encoder(format!(
                "image {}x{} is smaller than the {}-cell pooling grid",
                image.height(),
                image.width(),
                self.grid
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(image.to_tensor());
        let out = self.trace_image(&mut tape, x);
        Ok(tape.value(out).data().to_vec())
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        let mut acc = vec![0.0; self.dim];
        let mut sign = 1.0;
        let mut used = 0usize;
        for word in text.split(|c: char| !c.is_alphanumeric()) {
            if word.is_empty() {
                continue;
            }
            let word = word.to_lowercase();
            if STOPWORDS.contains(&word.as_str()) {
                continue;
            }
            if NEGATIONS.contains(&word.as_str()) {
                sign = -sign;
                continue;
            }
            for (a, b) in acc.iter_mut().zip(self.token_column(&word)) {
                *a += sign * b;
            }
            used += 1;
        }
        if used == 0 {
            return Err(Error::Encoder(format!("text `{text}` has no content words")));
        }
        Ok(acc)
    }
}

impl TraceEncoder for MockEncoder {
    fn trace_image(&self, tape: &mut Tape, image: VarId) -> VarId {
        let pooled = tape.avgpool_to(image, self.grid, self.grid);
        let expanded = tape.color_expand(pooled);
        tape.fixed_affine(expanded, self.projection.clone(), self.bias_feature)
    }
}

/// Encoder that returns one fixed vector for every input. Collapses all
/// similarities; useful for symmetry tests.
pub struct ConstEncoder(pub Embedding);

impl EncoderPair for ConstEncoder {
    fn id(&self) -> String {
        "const".to_string()
    }

    fn dim(&self) -> usize {
        self.0.len()
    }

    fn encode_image(&self, _image: &RasterImage) -> Result<Embedding> {
        Ok(self.0.clone())
    }

    fn encode_text(&self, _text: &str) -> Result<Embedding> {
        Ok(self.0.clone())
    }
}

/// Adapter for an external dual encoder speaking line-delimited JSON.
///
/// Handshake: the child prints `{"dim": D}` on startup. Requests are
/// `{"image_png_base64": "..."}` or `{"text": "..."}`; responses are
/// `{"embedding": [..]}` with exactly `D` numbers.
pub struct ProcessEncoder {
    id: String,
    dim: usize,
    child: Mutex<ChildIo>,
}

struct ChildIo {
    child: Child,
    reader: BufReader<std::process::ChildStdout>,
}

impl ProcessEncoder {
    pub fn spawn(command: &str) -> Result<Self> {
        let parts: Vec<&str> = command.split_whitespace().collect();
        if parts.is_empty() {
            return Err(Error::Encoder("empty adapter command".to_string()));
        }
        let mut child = Command::new(parts[0])
            .args(&parts[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Encoder(format!("failed to spawn `{command}`: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let mut reader = BufReader::new(stdout);

        #[derive(Deserialize)]
        struct Handshake {
            dim: usize,
        }
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .map_err(|e| Error::Encoder(format!("adapter handshake: {e}")))?;
        let handshake: Handshake = serde_json::from_str(line.trim())?;
        if handshake.dim == 0 {
            return Err(Error::Encoder("adapter declared dimension 0".to_string()));
        }
        Ok(Self {
            id: format!("external:{}", parts[0]),
            dim: handshake.dim,
            child: Mutex::new(ChildIo { child, reader }),
        })
    }

    fn request(&self, line: &str) -> Result<Embedding> {
        #[derive(Deserialize)]
        struct Resp {
            embedding: Vec<f64>,
        }
        let mut io = self.child.lock().unwrap();
        let stdin = io
            .child
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Encoder("adapter stdin closed".to_string()))?;
        writeln!(stdin, "{line}").map_err(|e| Error::Encoder(format!("adapter write: {e}")))?;
        stdin.flush().map_err(|e| Error::Encoder(format!("adapter flush: {e}")))?;
        let mut resp_line = String::new();
        io.reader
            .read_line(&mut resp_line)
            .map_err(|e| Error::Encoder(format!("adapter read: {e}")))?;
        if resp_line.is_empty() {
            return Err(Error::Encoder("adapter closed its output".to_string()));
        }
        let resp: Resp = serde_json::from_str(resp_line.trim())?;
        if resp.embedding.len() != self.dim {
            return Err(Error::Encoder(format!(
                "adapter returned {} dims, declared {}",
                resp.embedding.len(),
                self.dim
            )));
        }
        Ok(resp.embedding)
    }
}

impl EncoderPair for ProcessEncoder {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_image(&self, image: &RasterImage) -> Result<Embedding> {
        let png = crate::corpus::backend::encode_png_bytes(image)?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(png);
        self.request(&serde_json::json!({ "image_png_base64": b64 }).to_string())
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        self.request(&serde_json::json!({ "text": text }).to_string())
    }
}

impl Drop for ProcessEncoder {
    fn drop(&mut self) {
        if let Ok(mut io) = self.child.lock() {
            drop(io.child.stdin.take());
            let _ = io.child.wait();
        }
    }
}

/// Per-run cache of text embeddings (texts are constant during training).
#[derive(Default)]
pub struct TextEmbeddingCache {
    cache: BTreeMap<String, Rc<Embedding>>,
}

impl TextEmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, encoder: &dyn EncoderPair, text: &str) -> Result<Rc<Embedding>> {
        if let Some(hit) = self.cache.get(text) {
            return Ok(hit.clone());
        }
        let emb = Rc::new(encoder.encode_text(text)?);
        self.cache.insert(text.to_string(), emb.clone());
        Ok(emb)
    }
}

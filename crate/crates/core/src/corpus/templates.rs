//! Question templates: four families of cloze questions with a single
//! `{class}` placeholder, plus a line-based file format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "{class}";

/// The four question families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    SurroundingObject,
    Scene,
    FineGrained,
    Alias,
}

impl TemplateKind {
    /// Background questions probe what the target is not; foreground
    /// questions enrich how the target itself can be named.
    pub fn is_background(self) -> bool {
        matches!(self, TemplateKind::SurroundingObject | TemplateKind::Scene)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::SurroundingObject => "surrounding_object",
            TemplateKind::Scene => "scene",
            TemplateKind::FineGrained => "fine_grained",
            TemplateKind::Alias => "alias",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "surrounding_object" => Ok(TemplateKind::SurroundingObject),
            "scene" => Ok(TemplateKind::Scene),
            "fine_grained" => Ok(TemplateKind::FineGrained),
            "alias" => Ok(TemplateKind::Alias),
            other => Err(Error::Template(format!("unknown template kind `{other}`"))),
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A cloze question with exactly one `{class}` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionTemplate {
    kind: TemplateKind,
    pattern: String,
}

impl QuestionTemplate {
    pub fn new(kind: TemplateKind, pattern: impl Into<String>) -> Result<Self> {
        let pattern = pattern.into();
        let occurrences = pattern.matches(PLACEHOLDER).count();
        if occurrences != 1 {
            return Err(Error::Template(format!(
                "pattern must contain `{PLACEHOLDER}` exactly once, found {occurrences}: `{pattern}`"
            )));
        }
        Ok(Self { kind, pattern })
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }
}

/// An ordered template collection with a version tag that travels with
/// every corpus generated from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    version: String,
    templates: Vec<QuestionTemplate>,
}

const BUILTIN: &[(TemplateKind, &str)] = &[
    (TemplateKind::SurroundingObject, "What is above the {class}?"),
    (TemplateKind::SurroundingObject, "What is under the {class}?"),
    (TemplateKind::SurroundingObject, "What is behind the {class}?"),
    (TemplateKind::SurroundingObject, "What is around the {class}?"),
    (TemplateKind::SurroundingObject, "What is next to the {class}?"),
    (TemplateKind::SurroundingObject, "What is the left side of {class}?"),
    (TemplateKind::SurroundingObject, "What is the right side of {class}?"),
    (TemplateKind::Scene, "What scene is the {class} in?"),
    // "enviroment" is intentional: it reproduces the shipped wording.
    (TemplateKind::Scene, "What enviroment is the {class} in?"),
    (TemplateKind::Scene, "What place is the {class} in?"),
    (TemplateKind::FineGrained, "What kind of {class} is in the photo?"),
    (TemplateKind::FineGrained, "What type of {class} is in the photo?"),
    (TemplateKind::Alias, "What is this {class} also called?"),
    (TemplateKind::Alias, "What is this {class} usually called?"),
    (TemplateKind::Alias, "What is another word for this {class}?"),
    (TemplateKind::Alias, "What is another name for this {class}?"),
];

impl TemplateSet {
    pub fn new(version: impl Into<String>, templates: Vec<QuestionTemplate>) -> Self {
        Self { version: version.into(), templates }
    }

    /// The shipped default: 10 background questions (7 surrounding-object,
    /// 3 scene) and 6 foreground questions (2 fine-grained, 4 alias).
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|&(kind, pattern)| QuestionTemplate::new(kind, pattern).expect("builtin template"))
            .collect();
        Self { version: "builtin-v1".to_string(), templates }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn all(&self) -> &[QuestionTemplate] {
        &self.templates
    }

    pub fn background(&self) -> Vec<&QuestionTemplate> {
        self.templates.iter().filter(|t| t.kind().is_background()).collect()
    }

    pub fn foreground(&self) -> Vec<&QuestionTemplate> {
        self.templates.iter().filter(|t| !t.kind().is_background()).collect()
    }

    /// Parse the line format: `version<TAB>name` on an optional first
    /// non-comment line, then one `kind<TAB>pattern` per line. `#` starts
    /// a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut version: Option<String> = None;
        let mut templates = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, rest) = line.split_once('\t').ok_or_else(|| {
                Error::Template(format!("line {}: expected `kind<TAB>pattern`", lineno + 1))
            })?;
            if head == "version" {
                if version.is_some() || !templates.is_empty() {
                    return Err(Error::Template(format!(
                        "line {}: version must be the first entry",
                        lineno + 1
                    )));
                }
                version = Some(rest.trim().to_string());
                continue;
            }
            let kind = TemplateKind::parse(head)?;
            templates.push(QuestionTemplate::new(kind, rest)?);
        }
        if templates.is_empty() {
            return Err(Error::Template("no templates in file".to_string()));
        }
        let version = version.unwrap_or_else(|| {
            format!("{:016x}", crate::image_io::fnv64(text.as_bytes()))
        });
        Ok(Self { version, templates })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("version\t{}\n", self.version);
        for t in &self.templates {
            out.push_str(t.kind().as_str());
            out.push('\t');
            out.push_str(t.pattern());
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(Error::io(path))
    }
}

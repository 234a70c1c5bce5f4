//! Prompt templates and placeholder binding.
//!
//! Templates are text files with a `---SYSTEM---` section followed by a
//! `---USER---` section. `{NAME}` marks a placeholder; each template kind
//! declares which names it accepts. `{SPORT}` is filled once when a template
//! set is loaded for a dataset, everything else at render time.

mod describe;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use describe::operation_description;

pub const SYSTEM_MARKER: &str = "---SYSTEM---";
pub const USER_MARKER: &str = "---USER---";
const SPORT: &str = "{SPORT}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Planning,
    Write,
    Generating,
    Ie,
    SinglePromptBaseline,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::Planning,
        TemplateId::Write,
        TemplateId::Generating,
        TemplateId::Ie,
        TemplateId::SinglePromptBaseline,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateId::Planning => "planning",
            TemplateId::Write => "write",
            TemplateId::Generating => "generating",
            TemplateId::Ie => "ie",
            TemplateId::SinglePromptBaseline => "single_prompt_baseline",
        }
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateId::Planning => &[
                "TABLE_FORMAT",
                "MAX_DEPTH",
                "MAX_DEGREE",
                "PLANNING_TOKENS",
                "TABLE_DESCRIPTION",
                "OPERATION_DESCRIPTION",
                "TABLES",
                "OPERATION_HISTORY",
                "OPERATION_POOL",
            ],
            TemplateId::Write => &["TABLE_FORMAT", "WRITE_TOKENS", "TABLE_DESCRIPTION", "TABLES"],
            TemplateId::Generating => &["GENERATING_TOKENS", "REPORTS"],
            TemplateId::Ie => &["TABLE_DESCRIPTION", "EXAMPLE", "REPORT", "TABLE_RELATION"],
            TemplateId::SinglePromptBaseline => &[
                "TABLE_FORMAT",
                "GENERATING_TOKENS",
                "TABLE_DESCRIPTION",
                "TABLES",
            ],
        }
    }

    fn builtin_source(self) -> &'static str {
        match self {
            TemplateId::Planning => include_str!("../../templates/planning.txt"),
            TemplateId::Write => include_str!("../../templates/write.txt"),
            TemplateId::Generating => include_str!("../../templates/generating.txt"),
            TemplateId::Ie => include_str!("../../templates/ie.txt"),
            TemplateId::SinglePromptBaseline => {
                include_str!("../../templates/single_prompt_baseline.txt")
            }
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("placeholder {{{0}}} has no binding")]
    UnboundPlaceholder(String),
    #[error("{0} is not a placeholder of this template")]
    UnknownPlaceholder(String),
    #[error("template {id}: {{{name}}} is not a declared placeholder")]
    UndeclaredPlaceholder { id: TemplateId, name: String },
    #[error("template {0}: expected a {SYSTEM_MARKER} line followed by a {USER_MARKER} line")]
    MissingSections(TemplateId),
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: TemplateId,
    system: String,
    user: String,
}

impl PromptTemplate {
    /// Parses template text, substituting the sport name into it.
    pub fn parse(id: TemplateId, source: &str, sport: &str) -> Result<Self, PromptError> {
        let source = source.replace(SPORT, sport);
        let mut system = None;
        let mut user = None;
        let mut current: Option<&mut Vec<&str>> = None;
        let mut sys_lines = Vec::new();
        let mut user_lines = Vec::new();
        for line in source.lines() {
            match line.trim_end() {
                SYSTEM_MARKER => {
                    system = Some(());
                    current = Some(&mut sys_lines);
                }
                USER_MARKER if system.is_some() => {
                    user = Some(());
                    current = Some(&mut user_lines);
                }
                _ => {
                    if let Some(buf) = current.as_mut() {
                        buf.push(line);
                    }
                }
            }
        }
        if system.is_none() || user.is_none() {
            return Err(PromptError::MissingSections(id));
        }
        let tpl = PromptTemplate {
            id,
            system: sys_lines.join("\n").trim_matches('\n').to_string(),
            user: user_lines.join("\n").trim_matches('\n').to_string(),
        };
        let declared = id.placeholders();
        for name in tpl.placeholders() {
            if !declared.contains(&name.as_str()) {
                return Err(PromptError::UndeclaredPlaceholder { id, name });
            }
        }
        Ok(tpl)
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    /// Placeholder names occurring in the template body.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        for text in [&self.system, &self.user] {
            scan(text, |piece| {
                if let Piece::Placeholder(n) = piece {
                    names.insert(n.to_string());
                }
            });
        }
        names
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn scan<'a>(text: &'a str, mut f: impl FnMut(Piece<'a>)) {
    let bytes = text.as_bytes();
    let mut lit_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_uppercase() || bytes[j] == b'_' || (j > i + 1 && bytes[j].is_ascii_digit())) {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                if lit_start < i {
                    f(Piece::Literal(&text[lit_start..i]));
                }
                f(Piece::Placeholder(&text[i + 1..j]));
                i = j + 1;
                lit_start = i;
                continue;
            }
        }
        i += 1;
    }
    if lit_start < text.len() {
        f(Piece::Literal(&text[lit_start..]));
    }
}

/// Values for template placeholders.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptBindings {
    values: BTreeMap<String, String>,
}

impl PromptBindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl fmt::Display) -> Self {
        self.values.insert(name.to_string(), value.to_string());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

/// Substitutes every placeholder in a single pass; bound values are never
/// re-scanned.
pub fn render_prompt(
    tpl: &PromptTemplate,
    bindings: &PromptBindings,
) -> Result<RenderedPrompt, PromptError> {
    let declared = tpl.id.placeholders();
    if let Some(unknown) = bindings
        .values
        .keys()
        .find(|k| !declared.contains(&k.as_str()))
    {
        return Err(PromptError::UnknownPlaceholder(unknown.clone()));
    }
    let fill = |text: &str| -> Result<String, PromptError> {
        let mut out = String::with_capacity(text.len() * 2);
        let mut missing = None;
        scan(text, |piece| match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::Placeholder(name) => match bindings.get(name) {
                Some(v) => out.push_str(v),
                None => {
                    missing.get_or_insert_with(|| name.to_string());
                }
            },
        });
        match missing {
            Some(name) => Err(PromptError::UnboundPlaceholder(name)),
            None => Ok(out),
        }
    };
    Ok(RenderedPrompt {
        system: fill(&tpl.system)?,
        user: fill(&tpl.user)?,
    })
}

/// The five templates used by a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub planning: PromptTemplate,
    pub write: PromptTemplate,
    pub generating: PromptTemplate,
    pub ie: PromptTemplate,
    pub single_prompt_baseline: PromptTemplate,
}

impl TemplateSet {
    /// The template files shipped with this crate.
    pub fn builtin(sport: &str) -> Self {
        Self::from_sources(sport, |id| Ok(id.builtin_source().to_string()))
            .expect("shipped templates are valid")
    }

    /// Loads `<dir>/<id>.txt` for every template; files that do not exist
    /// fall back to the shipped version.
    pub fn load_dir(dir: &Path, sport: &str) -> Result<Self, PromptError> {
        Self::from_sources(sport, |id| {
            let path = dir.join(format!("{}.txt", id.file_stem()));
            if !path.exists() {
                return Ok(id.builtin_source().to_string());
            }
            std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        })
    }

    fn from_sources(
        sport: &str,
        mut source: impl FnMut(TemplateId) -> Result<String, PromptError>,
    ) -> Result<Self, PromptError> {
        let mut load = |id| PromptTemplate::parse(id, &source(id)?, sport);
        Ok(TemplateSet {
            planning: load(TemplateId::Planning)?,
            write: load(TemplateId::Write)?,
            generating: load(TemplateId::Generating)?,
            ie: load(TemplateId::Ie)?,
            single_prompt_baseline: load(TemplateId::SinglePromptBaseline)?,
        })
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        match id {
            TemplateId::Planning => &self.planning,
            TemplateId::Write => &self.write,
            TemplateId::Generating => &self.generating,
            TemplateId::Ie => &self.ie,
            TemplateId::SinglePromptBaseline => &self.single_prompt_baseline,
        }
    }
}

/// Per-stage token limits, also sent as the request `max_tokens`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenBudgets {
    pub planning: u32,
    pub write: u32,
    pub generating: u32,
    pub ie: u32,
}

impl Default for TokenBudgets {
    fn default() -> Self {
        TokenBudgets {
            planning: 256,
            write: 512,
            generating: 1024,
            ie: 1024,
        }
    }
}

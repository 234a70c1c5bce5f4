//! Information-extraction metrics for generated reports.
//!
//! Facts are `(table|column|value)` triples. A report is reduced to the
//! sequence of triples it mentions, either by exact token matching against
//! the table's own triples or by asking an LLM, and scored with RG (facts
//! supported by the tables), CS (overlap with the gold report's facts) and
//! CO (ordering distance to the gold report's facts).

mod metrics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatBackend, ChatRequest, LlmError, Usage};
use crate::prompts::{render_prompt, PromptBindings, PromptError, PromptTemplate};
use crate::table::TableSet;

pub use metrics::{
    aggregate, co, cs, dld, metrics_csv, metrics_table, rg, score_sample, CorpusMetrics,
    SampleMetrics, SampleScore, METRIC_COLUMNS,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationTriple {
    pub table: String,
    pub column: String,
    pub value: String,
}

impl RelationTriple {
    pub fn new(
        table: impl Into<String>,
        column: impl Into<String>,
        value: impl Into<String>,
    ) -> Result<Self, EvalError> {
        let t = RelationTriple {
            table: table.into(),
            column: column.into(),
            value: value.into(),
        };
        for part in [&t.table, &t.column, &t.value] {
            if part.contains('|') {
                return Err(EvalError::PipeInComponent(part.clone()));
            }
        }
        Ok(t)
    }
}

impl fmt::Display for RelationTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}|{}|{})", self.table, self.column, self.value)
    }
}

impl FromStr for RelationTriple {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("not a parenthesized triple: {s:?}"))?;
        parse_components(inner).ok_or_else(|| format!("not a (table|column|value) triple: {s:?}"))
    }
}

impl Serialize for RelationTriple {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RelationTriple {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

fn parse_components(inner: &str) -> Option<RelationTriple> {
    let parts: Vec<&str> = inner.split('|').map(str::trim).collect();
    match parts.as_slice() {
        [t, c, v] if !t.is_empty() && !c.is_empty() && !v.is_empty() => Some(RelationTriple {
            table: t.to_string(),
            column: c.to_string(),
            value: v.to_string(),
        }),
        _ => None,
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("relation component {0:?} contains '|'")]
    PipeInComponent(String),
    #[error("cannot aggregate an empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Every distinct non-missing cell as a triple, in table order then
/// row-major order.
pub fn enumerate_relations(ts: &TableSet) -> Result<Vec<RelationTriple>, EvalError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for table in ts {
        for row in table.rows() {
            for (column, cell) in table.columns().iter().zip(row) {
                if cell.is_missing() {
                    continue;
                }
                let value = cell.render();
                let value = value.trim();
                if value.is_empty() {
                    continue;
                }
                let triple = RelationTriple::new(table.name(), column.as_str(), value)?;
                if seen.insert(triple.clone()) {
                    out.push(triple);
                }
            }
        }
    }
    Ok(out)
}

/// `[(t|c|v), (t|c|v), ...]`
pub fn render_relations<'a>(triples: impl IntoIterator<Item = &'a RelationTriple>) -> String {
    let parts: Vec<String> = triples.into_iter().map(ToString::to_string).collect();
    format!("[{}]", parts.join(", "))
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

/// Position of the first occurrence of `needle` in `hay` that is not glued
/// to an alphanumeric character on either side.
fn first_token_match(hay: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let mut from = 0;
    while let Some(off) = hay[from..].find(needle) {
        let start = from + off;
        let end = start + needle.len();
        let before_ok = hay[..start].chars().next_back().is_none_or(|c| !is_word(c));
        let after_ok = hay[end..].chars().next().is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            return Some(start);
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// Candidates whose value occurs in `report` as a whole token, ordered by
/// where they first occur; candidates at the same position keep their
/// input order.
pub fn extract_relations_lexical(
    report: &str,
    candidates: &[RelationTriple],
) -> Vec<RelationTriple> {
    let mut hits: Vec<(usize, usize, &RelationTriple)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| first_token_match(report, &c.value).map(|pos| (pos, i, c)))
        .collect();
    hits.sort_by_key(|&(pos, i, _)| (pos, i));
    hits.into_iter().map(|(_, _, c)| c.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedRelation {
    pub triple: RelationTriple,
    /// The triple is not one of the table's relations.
    pub hallucinated: bool,
}

/// Finds every `(a|b|c)` item in an extractor reply, in order. Items that
/// do not have exactly three non-empty components are skipped.
pub fn parse_relation_list(reply: &str) -> Vec<RelationTriple> {
    let mut out = Vec::new();
    let mut rest = reply;
    while let Some(open) = rest.find('(') {
        let after = &rest[open + 1..];
        // the closing parenthesis is the first one that leaves exactly two
        // separators inside and is followed by a list delimiter
        let mut found = None;
        for (j, ch) in after.char_indices() {
            match ch {
                '\n' => break,
                ')' => {
                    let inner = &after[..j];
                    let next = after[j + 1..].chars().next();
                    let delimited = next.is_none_or(|c| c == ',' || c == ']' || c.is_whitespace());
                    if inner.matches('|').count() == 2 && delimited {
                        found = Some(j);
                        break;
                    }
                }
                _ => {}
            }
        }
        match found.and_then(|j| parse_components(&after[..j]).map(|t| (j, t))) {
            Some((j, triple)) => {
                out.push(triple);
                rest = &after[j + 1..];
            }
            None => rest = after,
        }
    }
    out
}

/// Settings for LLM-based extraction.
pub struct LlmExtractor<'a> {
    pub backend: &'a dyn ChatBackend,
    pub template: &'a PromptTemplate,
    pub table_description: String,
    pub example: String,
    pub model: String,
    pub max_tokens: u32,
}

/// What an extraction returned and what it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub relations: Vec<ExtractedRelation>,
    pub usage: Usage,
}

impl Extraction {
    pub fn triples(&self) -> Vec<RelationTriple> {
        self.relations.iter().map(|r| r.triple.clone()).collect()
    }

    fn from_candidates(triples: Vec<RelationTriple>) -> Self {
        Extraction {
            relations: triples
                .into_iter()
                .map(|triple| ExtractedRelation {
                    triple,
                    hallucinated: false,
                })
                .collect(),
            usage: Usage::default(),
        }
    }
}

/// Asks the model which of `candidates` the report mentions. Returned
/// triples outside the candidates are kept and flagged.
pub fn extract_relations_llm(
    report: &str,
    candidates: &[RelationTriple],
    extractor: &LlmExtractor<'_>,
) -> Result<Extraction, EvalError> {
    if candidates.is_empty() || report.trim().is_empty() {
        return Ok(Extraction::from_candidates(Vec::new()));
    }
    let example = if extractor.example.trim().is_empty() {
        "None."
    } else {
        extractor.example.as_str()
    };
    let bindings = PromptBindings::new()
        .set("TABLE_DESCRIPTION", &extractor.table_description)
        .set("EXAMPLE", example)
        .set("REPORT", report.trim())
        .set("TABLE_RELATION", render_relations(candidates));
    let prompt = render_prompt(extractor.template, &bindings)?;
    let request = ChatRequest::new(
        prompt.system,
        prompt.user,
        extractor.max_tokens,
        &extractor.model,
    )?;
    let response = extractor.backend.complete(&request)?;
    let known: std::collections::HashSet<&RelationTriple> = candidates.iter().collect();
    let relations = parse_relation_list(&response.text)
        .into_iter()
        .map(|triple| ExtractedRelation {
            hallucinated: !known.contains(&triple),
            triple,
        })
        .collect();
    Ok(Extraction {
        relations,
        usage: response.usage,
    })
}

/// How report facts are extracted.
pub enum Extractor<'a> {
    Lexical,
    Llm(LlmExtractor<'a>),
}

impl Extractor<'_> {
    pub fn extract(
        &self,
        report: &str,
        candidates: &[RelationTriple],
    ) -> Result<Extraction, EvalError> {
        match self {
            Extractor::Lexical => Ok(Extraction::from_candidates(extract_relations_lexical(
                report, candidates,
            ))),
            Extractor::Llm(x) => extract_relations_llm(report, candidates, x),
        }
    }
}

#[cfg(test)]
mod tests;

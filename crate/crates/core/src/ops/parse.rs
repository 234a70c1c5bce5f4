//! Parser for planner replies of the form `[op(arg, ...), op(...)]`.
//!
//! Parsing never fails as a whole. The strict list grammar is tried first;
//! when it does not match, every `known_op(...)` substring is harvested
//! instead, and when nothing usable remains the plan is `[write()]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Comparator, FilterSpec, OperationCall, OperationKind, SortKey, SortOrder};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum CallError {
    #[error("unknown or non-executable operation {0:?}")]
    UnknownOperation(String),
    #[error("{op}: expected {expected}, found {found} arguments")]
    BadArity {
        op: String,
        expected: String,
        found: usize,
    },
    #[error("bad row index: {0}")]
    BadIndex(String),
    #[error("bad sort order {0:?} (expected asc or desc)")]
    BadOrder(String),
    #[error("bad comparator {0:?}")]
    BadComparator(String),
    #[error("{op}: repeated argument")]
    DuplicateArgument { op: String },
}

/// A dropped call and the reason it was dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub call: String,
    pub error: CallError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// The reply matched the bracketed list grammar.
    List,
    /// Calls were harvested from free text.
    Recovered,
    /// Nothing usable was found; the plan is `[write()]`.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParsedPlan {
    pub calls: Vec<OperationCall>,
    pub diagnostics: Vec<Diagnostic>,
    pub mode: ParseMode,
}

pub fn parse_plan(text: &str) -> ParsedPlan {
    let (raw_calls, mut mode) = match parse_list(text) {
        Some(calls) => (calls, ParseMode::List),
        None => (recover(text), ParseMode::Recovered),
    };
    let mut calls = Vec::new();
    let mut diagnostics = Vec::new();
    for raw in raw_calls {
        match build_call(&raw.name, &raw.args) {
            Ok(call) => calls.push(call),
            Err(error) => diagnostics.push(Diagnostic {
                call: raw.source,
                error,
            }),
        }
    }
    if calls.is_empty() {
        calls.push(OperationCall::Write);
        mode = ParseMode::Fallback;
    }
    ParsedPlan {
        calls,
        diagnostics,
        mode,
    }
}

#[derive(Debug)]
struct RawCall {
    name: String,
    args: Vec<String>,
    source: String,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, pos: usize) -> Self {
        Cursor { src, pos }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.peek()?;
        self.pos += ch.len_utf8();
        Some(ch)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn eat(&mut self, ch: char) -> bool {
        if self.peek() == Some(ch) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.bump();
        }
        Some(self.src[start..self.pos].to_string())
    }

    /// Parses `( arg, ... )`, starting at the opening parenthesis.
    fn args(&mut self) -> Option<Vec<String>> {
        if !self.eat('(') {
            return None;
        }
        let mut args = Vec::new();
        self.skip_ws();
        if self.eat(')') {
            return Some(args);
        }
        loop {
            self.skip_ws();
            args.push(self.arg()?);
            self.skip_ws();
            match self.bump()? {
                ',' => continue,
                ')' => return Some(args),
                _ => return None,
            }
        }
    }

    fn arg(&mut self) -> Option<String> {
        match self.peek()? {
            q @ ('"' | '\'') => {
                self.bump();
                let mut out = String::new();
                loop {
                    match self.bump()? {
                        '\\' => out.push(self.bump()?),
                        c if c == q => return Some(out),
                        c => out.push(c),
                    }
                }
            }
            _ => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c != ',' && c != ')') {
                    self.bump();
                }
                let token = self.src[start..self.pos].trim();
                (!token.is_empty()).then(|| token.to_string())
            }
        }
    }

    fn call(&mut self) -> Option<RawCall> {
        let start = self.pos;
        let name = self.ident()?;
        self.skip_ws();
        let args = self.args()?;
        Some(RawCall {
            name,
            args,
            source: self.src[start..self.pos].to_string(),
        })
    }
}

fn parse_list(text: &str) -> Option<Vec<RawCall>> {
    let mut cur = Cursor::new(text, 0);
    cur.skip_ws();
    if !cur.eat('[') {
        return None;
    }
    let mut calls = Vec::new();
    cur.skip_ws();
    if !cur.eat(']') {
        loop {
            cur.skip_ws();
            calls.push(cur.call()?);
            cur.skip_ws();
            match cur.bump()? {
                ',' => {
                    cur.skip_ws();
                    if cur.eat(']') {
                        break;
                    }
                }
                ']' => break,
                _ => return None,
            }
        }
    }
    cur.skip_ws();
    cur.at_end().then_some(calls)
}

fn recover(text: &str) -> Vec<RawCall> {
    let mut calls = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let prev_is_ident = text[..pos]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_');
        let mut cur = Cursor::new(text, pos);
        if !prev_is_ident {
            if let Some(name) = cur.ident() {
                if OperationKind::from_name(&name).is_some() {
                    let mut call_cur = Cursor::new(text, pos);
                    if let Some(call) = call_cur.call() {
                        calls.push(call);
                        pos = call_cur.pos;
                        continue;
                    }
                }
                pos = cur.pos;
                continue;
            }
        }
        pos += text[pos..].chars().next().map_or(1, char::len_utf8);
    }
    calls
}

fn build_call(name: &str, args: &[String]) -> Result<OperationCall, CallError> {
    let kind = OperationKind::from_name(name)
        .filter(|k| *k != OperationKind::Root)
        .ok_or_else(|| CallError::UnknownOperation(name.to_string()))?;
    let arity = |expected: &str| CallError::BadArity {
        op: kind.name().to_string(),
        expected: expected.to_string(),
        found: args.len(),
    };
    let call = match kind {
        OperationKind::Root => unreachable!("filtered above"),
        OperationKind::Write => {
            if !args.is_empty() {
                return Err(arity("no arguments"));
            }
            OperationCall::Write
        }
        OperationKind::SelectTable | OperationKind::SelectCol | OperationKind::Count => {
            if args.is_empty() {
                return Err(arity("at least one argument"));
            }
            let names = args.to_vec();
            match kind {
                OperationKind::SelectTable => OperationCall::SelectTable(names),
                OperationKind::SelectCol => OperationCall::SelectCol(names),
                _ => OperationCall::Count(names),
            }
        }
        OperationKind::SelectRow => {
            if args.is_empty() {
                return Err(arity("at least one row index"));
            }
            let indices = args
                .iter()
                .map(|a| {
                    if a.bytes().all(|b| b.is_ascii_digit()) {
                        a.parse::<usize>().ok()
                    } else {
                        None
                    }
                    .ok_or_else(|| CallError::BadIndex(a.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            OperationCall::SelectRow(indices)
        }
        OperationKind::Sort => {
            if args.is_empty() {
                return Err(arity("column/order pairs"));
            }
            let keys = args
                .chunks(2)
                .map(|pair| {
                    let order = match pair.get(1) {
                        Some(o) => SortOrder::parse(o).ok_or_else(|| CallError::BadOrder(o.clone()))?,
                        None => SortOrder::Asc,
                    };
                    Ok(SortKey::new(pair[0].clone(), order))
                })
                .collect::<Result<Vec<_>, _>>()?;
            OperationCall::Sort(keys)
        }
        OperationKind::Filter => {
            let [column, comparator, value] = args else {
                return Err(arity("3 arguments (column, comparator, value)"));
            };
            let comparator = Comparator::parse(comparator)
                .ok_or_else(|| CallError::BadComparator(comparator.clone()))?;
            OperationCall::Filter(FilterSpec {
                column: column.clone(),
                comparator,
                value: value.clone(),
            })
        }
    };
    call.validate()?;
    Ok(call)
}

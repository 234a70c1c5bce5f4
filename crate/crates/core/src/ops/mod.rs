//! The table-operation algebra the planner chooses from.
//!
//! Calls travel as text (`select_row(0, 2)`), so this module owns both the
//! wire syntax ([`parse_plan`], [`OperationCall::render`]) and the execution
//! semantics ([`apply`]).

mod exec;
mod parse;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use exec::{
    apply, apply_count, apply_filter, apply_select_col, apply_select_row, apply_select_table,
    apply_sort, OpError,
};
pub use parse::{parse_plan, CallError, Diagnostic, ParseMode, ParsedPlan};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum OperationKind {
    Root,
    SelectTable,
    SelectRow,
    SelectCol,
    Count,
    Sort,
    Filter,
    Write,
}

impl OperationKind {
    pub const ALL: [OperationKind; 8] = [
        OperationKind::Root,
        OperationKind::SelectTable,
        OperationKind::SelectRow,
        OperationKind::SelectCol,
        OperationKind::Count,
        OperationKind::Sort,
        OperationKind::Filter,
        OperationKind::Write,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperationKind::Root => "root",
            OperationKind::SelectTable => "select_table",
            OperationKind::SelectRow => "select_row",
            OperationKind::SelectCol => "select_col",
            OperationKind::Count => "count",
            OperationKind::Sort => "sort",
            OperationKind::Filter => "filter",
            OperationKind::Write => "write",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        OperationKind::ALL.into_iter().find(|k| k.name() == lower)
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperationKind::from_name(s.trim()).ok_or_else(|| format!("unknown operation {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Asc,
    Desc,
}

impl SortOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            SortOrder::Asc => "asc",
            SortOrder::Desc => "desc",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "asc" | "ascending" => Some(SortOrder::Asc),
            "desc" | "descending" => Some(SortOrder::Desc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "contains")]
    Contains,
}

impl Comparator {
    pub const ALL: [Comparator; 7] = [
        Comparator::Eq,
        Comparator::Ne,
        Comparator::Gt,
        Comparator::Ge,
        Comparator::Lt,
        Comparator::Le,
        Comparator::Contains,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Contains => "contains",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "==" | "=" => Some(Comparator::Eq),
            "!=" | "<>" => Some(Comparator::Ne),
            ">" => Some(Comparator::Gt),
            ">=" => Some(Comparator::Ge),
            "<" => Some(Comparator::Lt),
            "<=" => Some(Comparator::Le),
            "contains" => Some(Comparator::Contains),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SortKey {
    pub column: String,
    pub order: SortOrder,
}

impl SortKey {
    pub fn new(column: impl Into<String>, order: SortOrder) -> Self {
        SortKey {
            column: column.into(),
            order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FilterSpec {
    pub column: String,
    pub comparator: Comparator,
    pub value: String,
}

/// One planned operation with its arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OperationCall {
    Root,
    SelectTable(Vec<String>),
    SelectRow(Vec<usize>),
    SelectCol(Vec<String>),
    Count(Vec<String>),
    Sort(Vec<SortKey>),
    Filter(FilterSpec),
    Write,
}

impl OperationCall {
    pub fn filter(column: impl Into<String>, comparator: Comparator, value: impl Into<String>) -> Self {
        OperationCall::Filter(FilterSpec {
            column: column.into(),
            comparator,
            value: value.into(),
        })
    }

    pub fn kind(&self) -> OperationKind {
        match self {
            OperationCall::Root => OperationKind::Root,
            OperationCall::SelectTable(_) => OperationKind::SelectTable,
            OperationCall::SelectRow(_) => OperationKind::SelectRow,
            OperationCall::SelectCol(_) => OperationKind::SelectCol,
            OperationCall::Count(_) => OperationKind::Count,
            OperationCall::Sort(_) => OperationKind::Sort,
            OperationCall::Filter(_) => OperationKind::Filter,
            OperationCall::Write => OperationKind::Write,
        }
    }

    /// Checks the payload invariants: non-empty argument lists, no repeated
    /// indices or names.
    pub fn validate(&self) -> Result<(), CallError> {
        fn distinct<T: Eq + std::hash::Hash>(items: impl IntoIterator<Item = T>) -> bool {
            let mut seen = std::collections::HashSet::new();
            items.into_iter().all(|i| seen.insert(i))
        }
        let op = self.kind().name().to_string();
        let empty = |n: usize| CallError::BadArity {
            op: op.clone(),
            expected: "at least one argument".into(),
            found: n,
        };
        match self {
            OperationCall::Root | OperationCall::Write | OperationCall::Filter(_) => Ok(()),
            OperationCall::SelectRow(idx) => {
                if idx.is_empty() {
                    Err(empty(0))
                } else if !distinct(idx) {
                    Err(CallError::BadIndex("duplicate row index".into()))
                } else {
                    Ok(())
                }
            }
            OperationCall::SelectTable(names)
            | OperationCall::SelectCol(names)
            | OperationCall::Count(names) => {
                if names.is_empty() {
                    Err(empty(0))
                } else if !distinct(names) {
                    Err(CallError::DuplicateArgument { op })
                } else {
                    Ok(())
                }
            }
            OperationCall::Sort(keys) => {
                if keys.is_empty() {
                    Err(empty(0))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Canonical wire form, e.g. `filter(score, >, 10)`.
    pub fn render(&self) -> String {
        let args: Vec<String> = match self {
            OperationCall::Root | OperationCall::Write => Vec::new(),
            OperationCall::SelectTable(v) | OperationCall::SelectCol(v) | OperationCall::Count(v) => {
                v.iter().map(|s| render_arg(s)).collect()
            }
            OperationCall::SelectRow(v) => v.iter().map(usize::to_string).collect(),
            OperationCall::Sort(keys) => keys
                .iter()
                .flat_map(|k| [render_arg(&k.column), k.order.as_str().to_string()])
                .collect(),
            OperationCall::Filter(f) => vec![
                render_arg(&f.column),
                f.comparator.symbol().to_string(),
                render_arg(&f.value),
            ],
        };
        format!("{}({})", self.kind().name(), args.join(", "))
    }
}

impl fmt::Display for OperationCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for OperationCall {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for OperationCall {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for OperationCall {
    type Err = String;

    /// Parses exactly one call in canonical syntax, including `root()`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "root()" {
            return Ok(OperationCall::Root);
        }
        let plan = parse_plan(&format!("[{s}]"));
        match (plan.mode, plan.diagnostics.first(), plan.calls.as_slice()) {
            (_, Some(d), _) => Err(format!("{}: {}", d.call, d.error)),
            (ParseMode::List, None, [call]) => Ok(call.clone()),
            _ => Err(format!("not a single operation call: {s:?}")),
        }
    }
}

fn render_arg(s: &str) -> String {
    let needs_quotes = s.is_empty()
        || s.trim() != s
        || s.starts_with(['"', '\''])
        || s.contains([',', '(', ')', '[', ']', '"', '\\', '\n', '\r']);
    if !needs_quotes {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        if ch == '"' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('"');
    out
}

/// Renders calls as a bracketed list, the same syntax the planner replies in.
pub fn render_call_list<'a>(calls: impl IntoIterator<Item = &'a OperationCall>) -> String {
    let parts: Vec<String> = calls.into_iter().map(OperationCall::render).collect();
    format!("[{}]", parts.join(", "))
}

/// Executed calls from the root to a node; always starts with `root()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<OperationCall>", into = "Vec<OperationCall>")]
pub struct OperationHistory {
    calls: Vec<OperationCall>,
}

impl Default for OperationHistory {
    fn default() -> Self {
        OperationHistory {
            calls: vec![OperationCall::Root],
        }
    }
}

impl OperationHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> &[OperationCall] {
        &self.calls
    }

    pub fn extended(&self, call: OperationCall) -> Self {
        let mut calls = self.calls.clone();
        calls.push(call);
        OperationHistory { calls }
    }

    /// Number of executed operations after `root()`.
    pub fn depth(&self) -> usize {
        self.calls.len() - 1
    }

    pub fn render(&self) -> String {
        render_call_list(&self.calls)
    }
}

impl TryFrom<Vec<OperationCall>> for OperationHistory {
    type Error = String;

    fn try_from(calls: Vec<OperationCall>) -> Result<Self, Self::Error> {
        match calls.split_first() {
            Some((OperationCall::Root, rest)) if !rest.contains(&OperationCall::Root) => {
                Ok(OperationHistory { calls })
            }
            _ => Err("an operation history starts with root() and has no other root()".into()),
        }
    }
}

impl From<OperationHistory> for Vec<OperationCall> {
    fn from(history: OperationHistory) -> Self {
        history.calls
    }
}

/// Operation kinds still available to a subtree. Never contains `Root`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<OperationKind>", into = "Vec<OperationKind>")]
pub struct OperationPool {
    kinds: BTreeSet<OperationKind>,
}

impl OperationPool {
    /// Every operation except `root()`.
    pub fn full() -> Self {
        OperationPool {
            kinds: OperationKind::ALL
                .into_iter()
                .filter(|k| *k != OperationKind::Root)
                .collect(),
        }
    }

    pub fn empty() -> Self {
        OperationPool {
            kinds: BTreeSet::new(),
        }
    }

    pub fn from_kinds(kinds: impl IntoIterator<Item = OperationKind>) -> Self {
        OperationPool {
            kinds: kinds
                .into_iter()
                .filter(|k| *k != OperationKind::Root)
                .collect(),
        }
    }

    pub fn contains(&self, kind: OperationKind) -> bool {
        self.kinds.contains(&kind)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = OperationKind> + '_ {
        self.kinds.iter().copied()
    }

    pub fn is_subset(&self, other: &OperationPool) -> bool {
        self.kinds.is_subset(&other.kinds)
    }

    /// `[select_table(), ..., write()]`
    pub fn render(&self) -> String {
        let parts: Vec<String> = self.kinds.iter().map(|k| format!("{}()", k.name())).collect();
        format!("[{}]", parts.join(", "))
    }
}

/// The pool a child inherits after its parent edge used `used`.
pub fn shrink_pool(pool: &OperationPool, used: OperationKind) -> OperationPool {
    let mut kinds = pool.kinds.clone();
    kinds.remove(&used);
    OperationPool { kinds }
}

impl TryFrom<Vec<OperationKind>> for OperationPool {
    type Error = String;

    fn try_from(kinds: Vec<OperationKind>) -> Result<Self, Self::Error> {
        if kinds.contains(&OperationKind::Root) {
            return Err("root cannot be part of an operation pool".into());
        }
        Ok(OperationPool::from_kinds(kinds))
    }
}

impl From<OperationPool> for Vec<OperationKind> {
    fn from(pool: OperationPool) -> Self {
        pool.kinds.into_iter().collect()
    }
}

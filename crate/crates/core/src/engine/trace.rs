use std::collections::BTreeMap;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::llm::Usage;
use crate::ops::{Diagnostic, OperationCall, OperationHistory, OperationKind, OperationPool, ParseMode};
use crate::table::{CellValue, Table, TableError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Planning,
    Write,
    Generating,
}

/// One backend request made on behalf of a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub stage: Stage,
    pub usage: Usage,
    pub seconds: f64,
    /// Milli-USD, present when a pricing table was supplied.
    pub cost: Option<Decimal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    /// Asked the planner for child operations.
    Planned,
    /// Reached the depth limit and wrote without planning.
    ForcedWrite,
    /// A `write()` chosen by the parent's plan.
    WriteLeaf,
    /// The parent's operation failed; wrote over the parent's tables instead.
    DegradedWrite,
    /// Whole-table single-prompt generation, no tree.
    SinglePrompt,
}

impl NodeRole {
    pub fn is_leaf(self) -> bool {
        !matches!(self, NodeRole::Planned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeKind {
    /// One child text, returned unchanged.
    Passthrough,
    /// Child texts joined with newlines.
    Concatenate,
    /// Child texts rewritten by the generating prompt.
    Generate,
}

/// What the planner said and what survived of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub raw: String,
    pub mode: ParseMode,
    /// Calls that passed the parser, before pool and degree filtering.
    pub parsed: Vec<OperationCall>,
    pub diagnostics: Vec<Diagnostic>,
    pub pool_violations: Vec<OperationCall>,
    pub truncated: Vec<OperationCall>,
    /// No call survived and `write()` was substituted.
    pub fallback: bool,
    /// The calls the node executes, in plan order.
    pub calls: Vec<OperationCall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub depth: usize,
    pub history: OperationHistory,
    pub pool: OperationPool,
    pub role: NodeRole,
    /// The node's tables as CSV.
    pub tables: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanTrace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge: Option<MergeKind>,
    pub calls: Vec<CallRecord>,
    pub text: String,
}

impl NodeTrace {
    /// The operation on the edge from the parent, `None` at the root.
    pub fn incoming(&self) -> Option<&OperationCall> {
        match self.history.calls() {
            [_, .., last] => Some(last),
            _ => None,
        }
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&NodeTrace> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            let node = out[i];
            out.splice(i + 1..i + 1, node.children.iter());
            i += 1;
        }
        out
    }

    fn zero_timings(&mut self) {
        for c in &mut self.calls {
            c.seconds = 0.0;
        }
        for child in &mut self.children {
            child.zero_timings();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub usage: Usage,
    pub calls: usize,
    pub llm_seconds: f64,
    pub wall_seconds: f64,
    pub cost: Option<Decimal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub root: NodeTrace,
    pub totals: RunTotals,
}

impl RunTrace {
    pub(crate) fn new(root: NodeTrace, wall_seconds: f64) -> Self {
        let nodes = root.walk();
        let calls: Vec<&CallRecord> = nodes.iter().flat_map(|n| n.calls.iter()).collect();
        let cost = calls
            .iter()
            .map(|c| c.cost)
            .sum::<Option<Decimal>>()
            .map(|d| d.normalize());
        let totals = RunTotals {
            usage: calls.iter().map(|c| c.usage).sum(),
            calls: calls.len(),
            llm_seconds: calls.iter().map(|c| c.seconds).sum(),
            wall_seconds,
            cost,
        };
        RunTrace { root, totals }
    }

    pub fn report(&self) -> &str {
        &self.root.text
    }

    /// A copy with every duration zeroed, for byte comparison of runs.
    pub fn without_timings(&self) -> RunTrace {
        let mut t = self.clone();
        t.root.zero_timings();
        t.totals.llm_seconds = 0.0;
        t.totals.wall_seconds = 0.0;
        t
    }

    pub fn nodes(&self) -> Vec<&NodeTrace> {
        self.root.walk()
    }
}

/// Share of each operation kind among the calls executed at each depth,
/// pooled over all traces. Depth counts from 1 for the root's children.
pub fn operation_usage_by_depth<'a>(
    traces: impl IntoIterator<Item = &'a RunTrace>,
) -> Result<Table, TableError> {
    let mut counts: BTreeMap<usize, BTreeMap<OperationKind, u64>> = BTreeMap::new();
    for trace in traces {
        for node in trace.nodes() {
            if let Some(call) = node.incoming() {
                *counts
                    .entry(node.depth)
                    .or_default()
                    .entry(call.kind())
                    .or_default() += 1;
            }
        }
    }
    let mut rows = Vec::new();
    for (depth, kinds) in counts {
        let total: u64 = kinds.values().sum();
        for (kind, n) in kinds {
            let rate = Decimal::from(n) / Decimal::from(total);
            rows.push(vec![
                CellValue::number(depth as u64),
                CellValue::text(kind.name()),
                CellValue::number(rate.normalize()),
            ]);
        }
    }
    Table::new(
        "operation_usage",
        vec!["depth".into(), "kind".into(), "usage_rate".into()],
        rows,
    )
}

//! The recursive plan / execute / merge tree.
//!
//! Each node asks the planner for up to `max_degree` operations, applies each
//! one to its tables to get a child, and recurses until a child is a
//! `write()` or the depth limit is reached. Leaf texts are merged on the way
//! back up. Children may run concurrently; results are always assembled in
//! plan order.

mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::llm::{estimate_cost, ChatBackend, ChatRequest, LlmError, PricingTable};
use crate::ops::{
    apply, parse_plan, shrink_pool, OperationCall, OperationHistory, OperationKind, OperationPool,
};
use crate::prompts::{
    operation_description, render_prompt, PromptBindings, PromptError, PromptTemplate,
    TemplateSet, TokenBudgets,
};
use crate::table::{render_table_set, RenderError, TableFormat, TableSet};

pub use trace::{
    operation_usage_by_depth, CallRecord, MergeKind, NodeRole, NodeTrace, PlanTrace, RunTotals,
    RunTrace, Stage,
};

pub const DEFAULT_MODEL: &str = "gpt-4o-mini";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePolicy {
    /// Every node with several child texts rewrites them with the generating
    /// prompt.
    MergeEveryNode,
    /// Inner nodes concatenate; only the root rewrites.
    MergeRootOnly,
}

impl fmt::Display for MergePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergePolicy::MergeEveryNode => "merge_every_node",
            MergePolicy::MergeRootOnly => "merge_root_only",
        })
    }
}

impl FromStr for MergePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "merge_every_node" | "every_node" => Ok(MergePolicy::MergeEveryNode),
            "merge_root_only" | "root_only" => Ok(MergePolicy::MergeRootOnly),
            _ => Err(format!(
                "unknown merge policy {s:?} (expected merge_every_node or merge_root_only)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub max_depth: usize,
    pub max_degree: usize,
    pub table_format: TableFormat,
    pub merge_policy: MergePolicy,
    pub enabled_pool: OperationPool,
    pub model: String,
    pub budgets: TokenBudgets,
    /// Upper bound on concurrently running backend requests.
    pub parallelism: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_depth: 5,
            max_degree: 5,
            table_format: TableFormat::Csv,
            merge_policy: MergePolicy::MergeRootOnly,
            enabled_pool: OperationPool::full(),
            model: DEFAULT_MODEL.to_string(),
            budgets: TokenBudgets::default(),
            parallelism: 1,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: &str| Err(EngineError::InvalidConfig(msg.to_string()));
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if self.max_degree == 0 {
            return bad("max_degree must be positive");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be positive");
        }
        if !self.enabled_pool.contains(OperationKind::Write) {
            return bad("the operation pool must contain write");
        }
        if self.model.trim().is_empty() {
            return bad("model must be non-empty");
        }
        let b = &self.budgets;
        if b.planning == 0 || b.write == 0 || b.generating == 0 || b.ie == 0 {
            return bad("token budgets must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
    #[error("input has no tables")]
    EmptyInput,
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl EngineError {
    pub fn is_exhaustion(&self) -> bool {
        matches!(self, EngineError::Backend(e) if e.is_exhaustion())
    }
}

/// Runs the tree for one input. Reusable across inputs and threads.
pub struct Engine<'a> {
    config: EngineConfig,
    backend: &'a dyn ChatBackend,
    templates: &'a TemplateSet,
    table_description: String,
    operation_description: String,
    pricing: Option<PricingTable>,
    pool: rayon::ThreadPool,
}

struct Node<'t> {
    tables: &'t TableSet,
    history: OperationHistory,
    pool: OperationPool,
}

impl<'a> Engine<'a> {
    pub fn new(
        config: EngineConfig,
        backend: &'a dyn ChatBackend,
        templates: &'a TemplateSet,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .thread_name(|i| format!("tot-worker-{i}"))
            .build()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        Ok(Engine {
            operation_description: operation_description(&config.enabled_pool),
            config,
            backend,
            templates,
            table_description: String::new(),
            pricing: None,
            pool,
        })
    }

    pub fn with_table_description(mut self, text: impl Into<String>) -> Self {
        self.table_description = text.into();
        self
    }

    /// Attaches prices so that every call record carries a cost. The
    /// configured model must be priced.
    pub fn with_pricing(mut self, pricing: PricingTable) -> Result<Self, EngineError> {
        if pricing.get(&self.config.model).is_none() {
            return Err(EngineError::InvalidConfig(format!(
                "model {:?} has no price",
                self.config.model
            )));
        }
        self.pricing = Some(pricing);
        Ok(self)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Runs `f` on the engine's worker pool, so nested runs share its
    /// concurrency limit.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Generates a report for `tables`.
    pub fn run(&self, tables: &TableSet) -> Result<RunTrace, EngineError> {
        if tables.is_empty() {
            return Err(EngineError::EmptyInput);
        }
        let start = Instant::now();
        let root = Node {
            tables,
            history: OperationHistory::new(),
            pool: self.config.enabled_pool.clone(),
        };
        let root = self.install(|| self.visit(root))?;
        Ok(RunTrace::new(root, start.elapsed().as_secs_f64()))
    }

    /// One whole-table prompt and one reply, for comparison with the tree.
    pub fn run_single_prompt(&self, tables: &TableSet) -> Result<RunTrace, EngineError> {
        if tables.is_empty() {
            return Err(EngineError::EmptyInput);
        }
        let start = Instant::now();
        let bindings = PromptBindings::new()
            .set("TABLE_FORMAT", self.config.table_format.label())
            .set("GENERATING_TOKENS", self.config.budgets.generating)
            .set("TABLE_DESCRIPTION", &self.table_description)
            .set("TABLES", render_table_set(tables, self.config.table_format, false)?);
        let (text, record) = self.call(
            &self.templates.single_prompt_baseline,
            &bindings,
            self.config.budgets.generating,
            Stage::Write,
        )?;
        let root = NodeTrace {
            depth: 0,
            history: OperationHistory::new(),
            pool: OperationPool::empty(),
            role: NodeRole::SinglePrompt,
            tables: snapshot(tables),
            error: None,
            plan: None,
            children: Vec::new(),
            merge: None,
            calls: vec![record],
            text,
        };
        Ok(RunTrace::new(root, start.elapsed().as_secs_f64()))
    }

    fn visit(&self, node: Node<'_>) -> Result<NodeTrace, EngineError> {
        let depth = node.history.depth();
        if depth >= self.config.max_depth {
            return self.write_leaf(node, NodeRole::ForcedWrite, None);
        }
        let (plan, plan_record) = self.plan(&node)?;
        let children = plan
            .calls
            .par_iter()
            .map(|call| self.child(&node, call))
            .collect::<Result<Vec<_>, _>>()?;

        let texts: Vec<&str> = children.iter().map(|c| c.text.as_str()).collect();
        let (text, merge, merge_record) = self.merge(&texts, depth == 0)?;
        let mut records = vec![plan_record];
        records.extend(merge_record);
        Ok(NodeTrace {
            depth,
            history: node.history,
            pool: node.pool,
            role: NodeRole::Planned,
            tables: snapshot(node.tables),
            error: None,
            plan: Some(plan),
            children,
            merge: Some(merge),
            calls: records,
            text,
        })
    }

    fn child(&self, parent: &Node<'_>, call: &OperationCall) -> Result<NodeTrace, EngineError> {
        let history = parent.history.extended(call.clone());
        let pool = shrink_pool(&parent.pool, call.kind());
        if *call == OperationCall::Write {
            let node = Node {
                tables: parent.tables,
                history,
                pool,
            };
            return self.write_leaf(node, NodeRole::WriteLeaf, None);
        }
        match apply(call, parent.tables) {
            Ok(tables) => self.visit(Node {
                tables: &tables,
                history,
                pool,
            }),
            Err(e) => {
                warn!(call = %call, error = %e, "operation failed; writing over parent tables");
                let node = Node {
                    tables: parent.tables,
                    history,
                    pool,
                };
                self.write_leaf(node, NodeRole::DegradedWrite, Some(e.to_string()))
            }
        }
    }

    fn write_leaf(
        &self,
        node: Node<'_>,
        role: NodeRole,
        error: Option<String>,
    ) -> Result<NodeTrace, EngineError> {
        let bindings = PromptBindings::new()
            .set("TABLE_FORMAT", self.config.table_format.label())
            .set("WRITE_TOKENS", self.config.budgets.write)
            .set("TABLE_DESCRIPTION", &self.table_description)
            .set(
                "TABLES",
                render_table_set(node.tables, self.config.table_format, false)?,
            );
        let (text, record) = self.call(
            &self.templates.write,
            &bindings,
            self.config.budgets.write,
            Stage::Write,
        )?;
        Ok(NodeTrace {
            depth: node.history.depth(),
            history: node.history,
            pool: node.pool,
            role,
            tables: snapshot(node.tables),
            error,
            plan: None,
            children: Vec::new(),
            merge: None,
            calls: vec![record],
            text: text.trim().to_string(),
        })
    }

    /// One planning request; the reply is parsed, filtered to the node's
    /// pool and cut to `max_degree` calls.
    fn plan(&self, node: &Node<'_>) -> Result<(PlanTrace, CallRecord), EngineError> {
        let bindings = PromptBindings::new()
            .set("TABLE_FORMAT", self.config.table_format.label())
            .set("MAX_DEPTH", self.config.max_depth)
            .set("MAX_DEGREE", self.config.max_degree)
            .set("PLANNING_TOKENS", self.config.budgets.planning)
            .set("TABLE_DESCRIPTION", &self.table_description)
            .set("OPERATION_DESCRIPTION", &self.operation_description)
            .set(
                "TABLES",
                render_table_set(node.tables, self.config.table_format, true)?,
            )
            .set("OPERATION_HISTORY", node.history.render())
            .set("OPERATION_POOL", node.pool.render());
        let (raw, record) = self.call(
            &self.templates.planning,
            &bindings,
            self.config.budgets.planning,
            Stage::Planning,
        )?;
        let plan = filter_plan(raw, &node.pool, self.config.max_degree);
        debug!(
            depth = node.history.depth(),
            calls = plan.parsed.len(),
            fallback = plan.fallback,
            "planned"
        );
        Ok((plan, record))
    }

    fn merge(
        &self,
        texts: &[&str],
        at_root: bool,
    ) -> Result<(String, MergeKind, Option<CallRecord>), EngineError> {
        if texts.len() == 1 {
            return Ok((texts[0].to_string(), MergeKind::Passthrough, None));
        }
        if self.config.merge_policy == MergePolicy::MergeRootOnly && !at_root {
            return Ok((texts.join("\n"), MergeKind::Concatenate, None));
        }
        let bindings = PromptBindings::new()
            .set("GENERATING_TOKENS", self.config.budgets.generating)
            .set("REPORTS", format_reports(texts));
        let (text, record) = self.call(
            &self.templates.generating,
            &bindings,
            self.config.budgets.generating,
            Stage::Generating,
        )?;
        Ok((text.trim().to_string(), MergeKind::Generate, Some(record)))
    }

    fn call(
        &self,
        template: &PromptTemplate,
        bindings: &PromptBindings,
        max_tokens: u32,
        stage: Stage,
    ) -> Result<(String, CallRecord), EngineError> {
        let prompt = render_prompt(template, bindings)?;
        let request = ChatRequest::new(prompt.system, prompt.user, max_tokens, &self.config.model)?;
        let start = Instant::now();
        let response = self.backend.complete(&request)?;
        let seconds = start.elapsed().as_secs_f64();
        let cost = match &self.pricing {
            Some(p) => Some(estimate_cost(response.usage, &self.config.model, p)?),
            None => None,
        };
        let record = CallRecord {
            stage,
            usage: response.usage,
            seconds,
            cost,
        };
        Ok((response.text, record))
    }
}

/// Parses a planner reply and keeps the calls a node may execute: kinds
/// outside `pool` are dropped, then everything past `max_degree`. An empty
/// result becomes `[write()]`.
pub fn filter_plan(raw: String, pool: &OperationPool, max_degree: usize) -> PlanTrace {
    let parsed = parse_plan(&raw);
    let (mut allowed, pool_violations): (Vec<_>, Vec<_>) = parsed
        .calls
        .iter()
        .cloned()
        .partition(|c| pool.contains(c.kind()));
    let truncated = if allowed.len() > max_degree {
        allowed.split_off(max_degree)
    } else {
        Vec::new()
    };
    let fallback = allowed.is_empty();
    if fallback {
        allowed.push(OperationCall::Write);
    }
    PlanTrace {
        raw,
        mode: parsed.mode,
        parsed: parsed.calls,
        diagnostics: parsed.diagnostics,
        pool_violations,
        truncated,
        fallback,
        calls: allowed,
    }
}

/// The REPORTS block of the generating prompt, in child order.
pub fn format_reports(texts: &[&str]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("### Report {}\n\n{}", i + 1, t.trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn snapshot(tables: &TableSet) -> String {
    render_table_set(tables, TableFormat::Csv, false).unwrap_or_default()
}

#[cfg(test)]
mod tests;

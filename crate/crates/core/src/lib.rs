//! Tree-structured report generation from sports tables.
//!
//! An LLM plans table operations node by node ([`engine`]), the operations
//! run deterministically ([`ops`]) over [`table`] values, leaf texts are
//! merged bottom-up, and reports are scored with extraction-based metrics
//! ([`eval`]).

pub mod datasets;
pub mod engine;
pub mod eval;
pub mod llm;
pub mod ops;
pub mod prompts;
pub mod table;

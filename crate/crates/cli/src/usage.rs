use std::path::Path;

use anyhow::{bail, Context, Result};
use tot_core::engine::{operation_usage_by_depth, RunTrace};

use crate::run::TRACE_FILE;

/// Operation usage rates per depth over every trace file below `dir`, as
/// CSV with columns depth, kind, usage_rate.
pub fn usage_stats(dir: &Path) -> Result<String> {
    let mut traces = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("cannot walk {}", dir.display()))?;
        if !entry.file_type().is_file() || entry.file_name() != TRACE_FILE {
            continue;
        }
        let text = std::fs::read_to_string(entry.path())
            .with_context(|| format!("cannot read {}", entry.path().display()))?;
        let trace: RunTrace = serde_json::from_str(&text)
            .with_context(|| format!("invalid trace {}", entry.path().display()))?;
        traces.push(trace);
    }
    if traces.is_empty() {
        bail!("no {TRACE_FILE} files under {}", dir.display());
    }
    let table = operation_usage_by_depth(&traces)?;
    let mut out = table.columns().join(",");
    out.push('\n');
    for row in table.rows() {
        let cells: Vec<String> = row.iter().map(|c| c.render()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

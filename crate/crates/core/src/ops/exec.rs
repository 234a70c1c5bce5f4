//! Execution semantics of the table operations.
//!
//! Operations that name columns touch every table that has the column(s)
//! and pass the other tables through unchanged. An operation that touches no
//! table at all is an error.

use std::cmp::Ordering;
use std::collections::HashSet;

use thiserror::Error;

use super::{CallError, Comparator, OperationCall, OperationKind, SortKey, SortOrder};
use crate::table::{parse_decimal, CellValue, Table, TableError, TableSet, MISSING};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpError {
    #[error("no table named {0:?}")]
    NoSuchTable(String),
    #[error("row indices {0:?} are out of range for every table")]
    RowIndexOutOfRange(Vec<usize>),
    #[error("no table has column(s) {0:?}")]
    NoSuchColumn(Vec<String>),
    #[error("{0}() does not transform tables")]
    NotExecutable(OperationKind),
    #[error(transparent)]
    InvalidCall(#[from] CallError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Applies one table-transforming call.
pub fn apply(call: &OperationCall, ts: &TableSet) -> Result<TableSet, OpError> {
    call.validate()?;
    match call {
        OperationCall::Root | OperationCall::Write => Err(OpError::NotExecutable(call.kind())),
        OperationCall::SelectTable(names) => apply_select_table(names, ts),
        OperationCall::SelectRow(indices) => apply_select_row(indices, ts),
        OperationCall::SelectCol(cols) => apply_select_col(cols, ts),
        OperationCall::Count(cols) => apply_count(cols, ts),
        OperationCall::Sort(keys) => apply_sort(keys, ts),
        OperationCall::Filter(f) => apply_filter(&f.column, f.comparator, &f.value, ts),
    }
}

pub fn apply_select_table(names: &[String], ts: &TableSet) -> Result<TableSet, OpError> {
    if let Some(missing) = names.iter().find(|n| ts.get(n).is_none()) {
        return Err(OpError::NoSuchTable(missing.clone()));
    }
    let kept = ts
        .iter()
        .filter(|t| names.iter().any(|n| n == t.name()))
        .cloned()
        .collect();
    Ok(TableSet::new(kept)?)
}

pub fn apply_select_row(indices: &[usize], ts: &TableSet) -> Result<TableSet, OpError> {
    let Some(&max) = indices.iter().max() else {
        return Err(empty_args(OperationKind::SelectRow));
    };
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    transform_each(ts, OpError::RowIndexOutOfRange(indices.to_vec()), |t| {
        if t.num_rows() <= max {
            return Ok(None);
        }
        let rows = sorted.iter().map(|&i| t.rows()[i].clone()).collect();
        Ok(Some(t.with_rows(rows)?))
    })
}

pub fn apply_select_col(cols: &[String], ts: &TableSet) -> Result<TableSet, OpError> {
    transform_each(ts, OpError::NoSuchColumn(cols.to_vec()), |t| {
        let present = present_columns(t, cols);
        if present.is_empty() {
            return Ok(None);
        }
        Ok(Some(t.project(&present)?))
    })
}

/// Suffix of the summary table that replaces a counted table.
pub const COUNT_SUFFIX: &str = "__unique_counts";

pub fn apply_count(cols: &[String], ts: &TableSet) -> Result<TableSet, OpError> {
    transform_each(ts, OpError::NoSuchColumn(cols.to_vec()), |t| {
        let present = present_columns(t, cols);
        if present.is_empty() {
            return Ok(None);
        }
        let row = present
            .iter()
            .map(|c| {
                let distinct: HashSet<String> = t
                    .column_values(c)
                    .expect("present column")
                    .filter(|v| !v.is_missing())
                    .map(CellValue::render)
                    .collect();
                CellValue::number(distinct.len() as u64)
            })
            .collect();
        Ok(Some(Table::new(
            format!("{}{COUNT_SUFFIX}", t.name()),
            present,
            vec![row],
        )?))
    })
}

pub fn apply_sort(keys: &[SortKey], ts: &TableSet) -> Result<TableSet, OpError> {
    if keys.is_empty() {
        return Err(empty_args(OperationKind::Sort));
    }
    let key_names: Vec<String> = keys.iter().map(|k| k.column.clone()).collect();
    transform_each(ts, OpError::NoSuchColumn(key_names), |t| {
        let Some(resolved) = keys
            .iter()
            .map(|k| {
                let idx = t.column_index(&k.column)?;
                Some((idx, k.order, numeric_column(t, idx)))
            })
            .collect::<Option<Vec<_>>>()
        else {
            return Ok(None);
        };
        let mut rows = t.rows().to_vec();
        rows.sort_by(|a, b| {
            resolved
                .iter()
                .map(|&(idx, order, numeric)| compare_for_sort(&a[idx], &b[idx], order, numeric))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
        Ok(Some(t.with_rows(rows)?))
    })
}

pub fn apply_filter(
    column: &str,
    comparator: Comparator,
    value: &str,
    ts: &TableSet,
) -> Result<TableSet, OpError> {
    let target = parse_decimal(value.trim());
    transform_each(ts, OpError::NoSuchColumn(vec![column.to_string()]), |t| {
        let Some(idx) = t.column_index(column) else {
            return Ok(None);
        };
        let rows = t
            .rows()
            .iter()
            .filter(|r| matches_filter(&r[idx], comparator, value, target))
            .cloned()
            .collect();
        Ok(Some(t.with_rows(rows)?))
    })
}

/// Runs `f` on each table; `None` means the table is passed through. Fails
/// with `untouched` when no table was transformed.
fn transform_each(
    ts: &TableSet,
    untouched: OpError,
    mut f: impl FnMut(&Table) -> Result<Option<Table>, OpError>,
) -> Result<TableSet, OpError> {
    let mut any = false;
    let mut out = Vec::with_capacity(ts.len());
    for t in ts {
        match f(t)? {
            Some(new) => {
                any = true;
                out.push(new);
            }
            None => out.push(t.clone()),
        }
    }
    if !any {
        return Err(untouched);
    }
    Ok(TableSet::new(out)?)
}

fn present_columns(t: &Table, cols: &[String]) -> Vec<String> {
    cols.iter().filter(|c| t.has_column(c)).cloned().collect()
}

fn empty_args(kind: OperationKind) -> OpError {
    OpError::InvalidCall(CallError::BadArity {
        op: kind.name().to_string(),
        expected: "at least one argument".into(),
        found: 0,
    })
}

/// A sort column compares numerically only when every non-missing cell in
/// it is a number; mixing the two rules per pair would not be a total order.
fn numeric_column(t: &Table, idx: usize) -> bool {
    t.rows()
        .iter()
        .map(|r| &r[idx])
        .filter(|v| !v.is_missing())
        .all(|v| v.as_number().is_some())
}

fn compare_for_sort(a: &CellValue, b: &CellValue, order: SortOrder, numeric: bool) -> Ordering {
    match (a.is_missing(), b.is_missing()) {
        (true, true) => return Ordering::Equal,
        (true, false) => return Ordering::Greater,
        (false, true) => return Ordering::Less,
        (false, false) => {}
    }
    let ord = match (numeric, a.as_number(), b.as_number()) {
        (true, Some(x), Some(y)) => x.cmp(&y),
        _ => a.render().cmp(&b.render()),
    };
    match order {
        SortOrder::Asc => ord,
        SortOrder::Desc => ord.reverse(),
    }
}

fn matches_filter(
    cell: &CellValue,
    comparator: Comparator,
    value: &str,
    target: Option<rust_decimal::Decimal>,
) -> bool {
    if cell.is_missing() {
        return comparator == Comparator::Ne && value != MISSING;
    }
    let rendered = cell.render();
    if comparator == Comparator::Contains {
        return rendered.contains(value);
    }
    let ord = match (cell.as_number(), target) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => rendered.as_str().cmp(value),
    };
    match comparator {
        Comparator::Eq => ord.is_eq(),
        Comparator::Ne => ord.is_ne(),
        Comparator::Gt => ord.is_gt(),
        Comparator::Ge => ord.is_ge(),
        Comparator::Lt => ord.is_lt(),
        Comparator::Le => ord.is_le(),
        Comparator::Contains => unreachable!("handled above"),
    }
}

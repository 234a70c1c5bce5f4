use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::DatasetError;
use crate::table::{CellValue, Table, TableSet};

/// How raw stroke tables become one row per rally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShuttleSetConfig {
    /// Name of the stroke-level input table.
    pub stroke_table: String,
    /// Name of the output table.
    #[serde(default = "default_rally_table")]
    pub output_table: String,
    /// Columns identifying a rally, e.g. set and rally number.
    pub group_columns: Vec<String>,
    /// Source columns to keep, in output order before renaming.
    pub columns: Vec<String>,
    #[serde(default)]
    pub renames: IndexMap<String, String>,
}

fn default_rally_table() -> String {
    "rally".into()
}

/// MLB box-score rows are dropped when all of these are missing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlbConfig {
    pub stat_columns: Vec<String>,
}

/// Keeps the last stroke of every rally group, in first-appearance order of
/// the groups, projected and renamed per `cfg`. Other tables pass through.
pub fn preprocess_shuttleset(raw: &TableSet, cfg: &ShuttleSetConfig) -> Result<TableSet, DatasetError> {
    let strokes = raw
        .get(&cfg.stroke_table)
        .ok_or_else(|| DatasetError::MissingSection(cfg.stroke_table.clone()))?;
    let group_idx = cfg
        .group_columns
        .iter()
        .map(|c| {
            strokes
                .column_index(c)
                .ok_or_else(|| DatasetError::MissingGroupColumn(c.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut last: IndexMap<Vec<String>, usize> = IndexMap::new();
    for (i, row) in strokes.rows().iter().enumerate() {
        let key: Vec<String> = group_idx.iter().map(|&g| row[g].render()).collect();
        // insert keeps the first-appearance position, update keeps the last row
        *last.entry(key).or_insert(i) = i;
    }
    let rows: Vec<Vec<CellValue>> = last.values().map(|&i| strokes.rows()[i].clone()).collect();
    let grouped = strokes.with_rows(rows)?;
    let projected = grouped.project(&cfg.columns).map_err(|_| {
        let missing = cfg
            .columns
            .iter()
            .find(|c| !strokes.has_column(c))
            .cloned()
            .unwrap_or_default();
        DatasetError::MissingColumn {
            table: cfg.stroke_table.clone(),
            column: missing,
        }
    })?;
    let columns: Vec<String> = projected
        .columns()
        .iter()
        .map(|c| cfg.renames.get(c).cloned().unwrap_or_else(|| c.clone()))
        .collect();
    let rally = Table::new(cfg.output_table.clone(), columns, projected.rows().to_vec())?;

    let mut tables = Vec::new();
    for t in raw {
        if t.name() == cfg.stroke_table {
            tables.push(rally.clone());
        } else {
            tables.push(t.clone());
        }
    }
    Ok(TableSet::new(tables)?)
}

fn cell(v: &Value) -> CellValue {
    match v {
        Value::Null => CellValue::Missing,
        Value::String(s) => CellValue::infer(s),
        Value::Number(n) => CellValue::infer(&n.to_string()),
        Value::Bool(b) => CellValue::text(b.to_string()),
        other => CellValue::text(other.to_string()),
    }
}

/// Builds a table from records, with columns in first-seen key order and
/// absent keys as missing cells.
fn table_from_records(name: &str, records: &[&serde_json::Map<String, Value>]) -> Result<Table, DatasetError> {
    let mut columns: IndexMap<String, ()> = IndexMap::new();
    for r in records {
        for k in r.keys() {
            columns.entry(k.clone()).or_default();
        }
    }
    let columns: Vec<String> = columns.into_keys().collect();
    let rows = records
        .iter()
        .map(|r| columns.iter().map(|c| r.get(c).map_or(CellValue::Missing, cell)).collect())
        .collect();
    Ok(Table::new(name, columns, rows)?)
}

fn section<'a>(doc: &'a Value, name: &str) -> Result<&'a Value, DatasetError> {
    doc.get(name)
        .filter(|v| !v.is_null())
        .ok_or_else(|| DatasetError::MissingSection(name.to_string()))
}

/// A section holding either one record, a list of records, or a
/// column-major object (`{"column": {"0": value, "1": value}}`).
fn section_table(doc: &Value, name: &str) -> Result<Table, DatasetError> {
    let bad = || DatasetError::BadSection(name.to_string());
    match section(doc, name)? {
        Value::Array(items) => {
            let records = items
                .iter()
                .map(|v| v.as_object().ok_or_else(bad))
                .collect::<Result<Vec<_>, _>>()?;
            table_from_records(name, &records)
        }
        Value::Object(map) if !map.is_empty() && map.values().all(Value::is_object) => {
            column_major(name, map)
        }
        Value::Object(map) => table_from_records(name, &[map]),
        _ => Err(bad()),
    }
}

fn column_major(name: &str, map: &serde_json::Map<String, Value>) -> Result<Table, DatasetError> {
    let mut index: BTreeSet<(u64, String)> = BTreeSet::new();
    for col in map.values() {
        for k in col.as_object().into_iter().flat_map(|o| o.keys()) {
            let n = k
                .parse::<u64>()
                .map_err(|_| DatasetError::BadSection(name.to_string()))?;
            index.insert((n, k.clone()));
        }
    }
    let columns: Vec<String> = map.keys().cloned().collect();
    let rows = index
        .iter()
        .map(|(_, k)| {
            map.values()
                .map(|col| col.get(k).map_or(CellValue::Missing, cell))
                .collect()
        })
        .collect();
    Ok(Table::new(name, columns, rows)?)
}

/// `game`, `home_line`, `vis_line` and `box_score` tables from one
/// basketball record.
pub fn preprocess_rotowire(doc: &Value) -> Result<TableSet, DatasetError> {
    let tables = ["game", "home_line", "vis_line", "box_score"]
        .iter()
        .map(|name| section_table(doc, name))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TableSet::new(tables)?)
}

/// The basketball tables plus `play_by_play`, with box-score rows whose
/// stat columns are all missing removed.
pub fn preprocess_mlb(doc: &Value, cfg: &MlbConfig) -> Result<TableSet, DatasetError> {
    let mut tables = Vec::new();
    for name in ["game", "home_line", "vis_line", "box_score", "play_by_play"] {
        let t = section_table(doc, name)?;
        tables.push(if name == "box_score" {
            drop_empty_stat_rows(&t, &cfg.stat_columns)?
        } else {
            t
        });
    }
    Ok(TableSet::new(tables)?)
}

fn drop_empty_stat_rows(t: &Table, stat_columns: &[String]) -> Result<Table, DatasetError> {
    let idx: Vec<usize> = stat_columns.iter().filter_map(|c| t.column_index(c)).collect();
    if idx.is_empty() {
        return Ok(t.clone());
    }
    let rows = t
        .rows()
        .iter()
        .filter(|r| idx.iter().any(|&i| !r[i].is_missing()))
        .cloned()
        .collect();
    Ok(t.with_rows(rows)?)
}

/// Puts each table's columns in the profile order; columns the profile
/// does not list follow in their existing order.
pub fn reorder_columns(
    ts: &TableSet,
    order: &IndexMap<String, Vec<String>>,
) -> Result<TableSet, DatasetError> {
    let mut tables = Vec::new();
    for t in ts {
        let Some(wanted) = order.get(t.name()) else {
            tables.push(t.clone());
            continue;
        };
        if let Some(absent) = wanted.iter().find(|c| !t.has_column(c)) {
            return Err(DatasetError::MissingColumn {
                table: t.name().to_string(),
                column: absent.clone(),
            });
        }
        let listed: BTreeMap<&str, ()> = wanted.iter().map(|c| (c.as_str(), ())).collect();
        let mut columns = wanted.clone();
        columns.extend(
            t.columns()
                .iter()
                .filter(|c| !listed.contains_key(c.as_str()))
                .cloned(),
        );
        tables.push(t.project(&columns)?);
    }
    Ok(TableSet::new(tables)?)
}

//! Multi-table data model.
//!
//! A [`TableSet`] is the unit that flows down the generation tree. Every
//! value here is immutable once built; operations produce new sets.

mod csv_io;
mod render;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;
use thiserror::Error;

pub use csv_io::{parse_csv_table, CsvError};
pub use render::{
    render_table, render_table_set, RenderError, TableFormat, UnknownFormat, ROW_INDEX_COLUMN,
};

/// Literal used for missing cells in every serialization.
pub const MISSING: &str = "N/A";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CellValue {
    Text(String),
    Number(Decimal),
    Missing,
}

impl CellValue {
    /// Classifies a raw field: empty or `N/A` is missing, a plain decimal
    /// literal is a number, anything else is text.
    pub fn infer(raw: &str) -> Self {
        if raw.is_empty() || raw == MISSING {
            return CellValue::Missing;
        }
        parse_decimal(raw)
            .map(CellValue::Number)
            .unwrap_or_else(|| CellValue::Text(raw.to_string()))
    }

    pub fn text(s: impl Into<String>) -> Self {
        CellValue::Text(s.into())
    }

    pub fn number(d: impl Into<Decimal>) -> Self {
        CellValue::Number(d.into())
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, CellValue::Missing)
    }

    pub fn as_number(&self) -> Option<Decimal> {
        match self {
            CellValue::Number(d) => Some(*d),
            _ => None,
        }
    }

    /// Canonical text: numbers without trailing zeros, missing as `N/A`.
    pub fn render(&self) -> String {
        match self {
            CellValue::Text(s) => s.clone(),
            CellValue::Number(d) => render_decimal(*d),
            CellValue::Missing => MISSING.to_string(),
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn render_decimal(d: Decimal) -> String {
    d.normalize().to_string()
}

/// Parses `[+-]digits[.digits]` (or `.digits`) into a decimal. Exponents,
/// digit separators and surrounding whitespace are not numbers.
pub fn parse_decimal(raw: &str) -> Option<Decimal> {
    let body = raw.strip_prefix(['+', '-']).unwrap_or(raw);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    let digit_count = int.len() + frac.map_or(0, str::len);
    if digit_count == 0 || !all_digits(int) || !frac.is_none_or(all_digits) {
        return None;
    }
    Decimal::from_str(raw).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("table name must be non-empty")]
    EmptyTableName,
    #[error("table name {0:?} contains a line break or '|'")]
    InvalidTableName(String),
    #[error("table {table}: column names must be non-empty")]
    EmptyColumnName { table: String },
    #[error("table {table}: duplicate column {column:?}")]
    DuplicateColumn { table: String, column: String },
    #[error("table {table}: row {row} has {found} cells, expected {expected}")]
    RowLength {
        table: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate table name {0:?}")]
    DuplicateTable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    name: String,
    columns: Vec<String>,
    rows: Vec<Vec<CellValue>>,
}

impl Table {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<String>,
        rows: Vec<Vec<CellValue>>,
    ) -> Result<Self, TableError> {
        let name = name.into();
        if name.is_empty() {
            return Err(TableError::EmptyTableName);
        }
        if name.contains(['\n', '\r', '|']) {
            return Err(TableError::InvalidTableName(name));
        }
        let mut seen = HashSet::new();
        for column in &columns {
            if column.is_empty() {
                return Err(TableError::EmptyColumnName { table: name });
            }
            if !seen.insert(column.as_str()) {
                return Err(TableError::DuplicateColumn {
                    table: name,
                    column: column.clone(),
                });
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(TableError::RowLength {
                    table: name,
                    row: i,
                    expected: columns.len(),
                    found: row.len(),
                });
            }
        }
        Ok(Table {
            name,
            columns,
            rows,
        })
    }

    /// Builds a table from string cells, inferring each cell's type.
    pub fn from_strings<S: AsRef<str>>(
        name: impl Into<String>,
        columns: &[S],
        rows: &[Vec<S>],
    ) -> Result<Self, TableError> {
        Table::new(
            name,
            columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|c| CellValue::infer(c.as_ref())).collect())
                .collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<CellValue>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn has_column(&self, column: &str) -> bool {
        self.column_index(column).is_some()
    }

    /// Values of one column in row order.
    pub fn column_values(&self, column: &str) -> Option<impl Iterator<Item = &CellValue>> {
        let idx = self.column_index(column)?;
        Some(self.rows.iter().map(move |r| &r[idx]))
    }

    pub fn with_rows(&self, rows: Vec<Vec<CellValue>>) -> Result<Self, TableError> {
        Table::new(self.name.clone(), self.columns.clone(), rows)
    }

    pub fn renamed(&self, name: impl Into<String>) -> Result<Self, TableError> {
        Table::new(name, self.columns.clone(), self.rows.clone())
    }

    /// Projects onto `columns` (which must all exist), in the given order.
    pub fn project(&self, columns: &[String]) -> Result<Self, TableError> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| self.column_index(c).expect("projected column exists"))
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
            .collect();
        Table::new(self.name.clone(), columns.to_vec(), rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TableSet {
    tables: Vec<Table>,
}

impl TableSet {
    pub fn new(tables: Vec<Table>) -> Result<Self, TableError> {
        let mut seen = HashSet::new();
        for t in &tables {
            if !seen.insert(t.name()) {
                return Err(TableError::DuplicateTable(t.name().to_string()));
            }
        }
        Ok(TableSet { tables })
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Table> {
        self.tables.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name() == name)
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tables.iter().map(Table::name)
    }

    pub fn into_tables(self) -> Vec<Table> {
        self.tables
    }
}

impl<'a> IntoIterator for &'a TableSet {
    type Item = &'a Table;
    type IntoIter = std::slice::Iter<'a, Table>;

    fn into_iter(self) -> Self::IntoIter {
        self.tables.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn infer_classifies_cells() {
        assert_eq!(CellValue::infer("N/A"), CellValue::Missing);
        assert_eq!(CellValue::infer(""), CellValue::Missing);
        assert_eq!(CellValue::infer("12"), CellValue::number(12));
        assert_eq!(CellValue::infer("-1.50").render(), "-1.5");
        assert_eq!(CellValue::infer("1e5"), CellValue::text("1e5"));
        assert_eq!(CellValue::infer("1_000"), CellValue::text("1_000"));
        assert_eq!(CellValue::infer(" 5"), CellValue::text(" 5"));
        assert_eq!(CellValue::infer("."), CellValue::text("."));
        assert_eq!(CellValue::infer("net shot"), CellValue::text("net shot"));
    }

    #[test]
    fn table_invariants_are_checked() {
        let cols = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(
            Table::new("t", cols, vec![]),
            Err(TableError::DuplicateColumn { .. })
        ));
        assert!(matches!(
            Table::new("t", vec![String::new()], vec![]),
            Err(TableError::EmptyColumnName { .. })
        ));
        assert!(matches!(
            Table::new("t", vec!["a".into()], vec![vec![]]),
            Err(TableError::RowLength { row: 0, .. })
        ));
        assert_eq!(
            Table::new("", vec![], vec![]).unwrap_err(),
            TableError::EmptyTableName
        );
        let t = Table::new("t", vec!["a".into()], vec![]).unwrap();
        assert_eq!(
            TableSet::new(vec![t.clone(), t]).unwrap_err(),
            TableError::DuplicateTable("t".into())
        );
    }

    proptest! {
        #[test]
        fn number_round_trips_through_rendering(mantissa in any::<i64>(), scale in 0u32..10) {
            let d = Decimal::new(mantissa, scale);
            let rendered = CellValue::Number(d).render();
            prop_assert_eq!(CellValue::infer(&rendered), CellValue::Number(d));
        }
    }
}

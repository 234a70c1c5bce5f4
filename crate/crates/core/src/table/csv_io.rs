use thiserror::Error;

use super::{CellValue, Table, TableError};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv input has no header line")]
    EmptyHeader,
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("malformed csv: {0}")]
    Syntax(#[from] csv::Error),
}

/// Parses comma-separated text with a header line into a typed table.
pub fn parse_csv_table(text: &str, name: &str) -> Result<Table, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => return Err(CsvError::EmptyHeader),
    };
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CsvError::EmptyHeader);
    }
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        if rec.len() != columns.len() {
            return Err(CsvError::RaggedRow {
                line: rec.position().map_or(0, |p| p.line()),
                expected: columns.len(),
                found: rec.len(),
            });
        }
        rows.push(rec.iter().map(CellValue::infer).collect());
    }
    Ok(Table::new(name, columns, rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_cells() {
        let t = parse_csv_table("a,b\n1,x", "t").unwrap();
        assert_eq!(t.name(), "t");
        assert_eq!(t.columns(), ["a", "b"]);
        assert_eq!(t.rows(), [vec![CellValue::number(1), CellValue::text("x")]]);
        let t = parse_csv_table("a\nN/A", "t").unwrap();
        assert_eq!(t.rows(), [vec![CellValue::Missing]]);
    }

    #[test]
    fn ragged_row_reports_line() {
        match parse_csv_table("a,b\n1", "t") {
            Err(CsvError::RaggedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_has_no_header() {
        assert!(matches!(parse_csv_table("", "t"), Err(CsvError::EmptyHeader)));
    }

    #[test]
    fn quoted_fields_and_crlf() {
        let t = parse_csv_table("a,b\r\n\"x, \"\"y\"\"\",2\r\n", "t").unwrap();
        assert_eq!(t.rows()[0][0], CellValue::text("x, \"y\""));
        assert_eq!(t.rows()[0][1], CellValue::number(2));
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Table, TableSet};

/// Name of the synthetic index column shown to the model.
pub const ROW_INDEX_COLUMN: &str = "row";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableFormat {
    #[serde(rename = "csv", alias = "CSV")]
    Csv,
    #[serde(rename = "pipe", alias = "PIPE")]
    Pipe,
    #[serde(rename = "markdown", alias = "Markdown")]
    Markdown,
    #[serde(rename = "html", alias = "HTML")]
    Html,
}

impl TableFormat {
    pub const ALL: [TableFormat; 4] = [
        TableFormat::Csv,
        TableFormat::Pipe,
        TableFormat::Markdown,
        TableFormat::Html,
    ];

    /// Label used inside prompts ("The table format is CSV.").
    pub fn label(self) -> &'static str {
        match self {
            TableFormat::Csv => "CSV",
            TableFormat::Pipe => "PIPE",
            TableFormat::Markdown => "Markdown",
            TableFormat::Html => "HTML",
        }
    }
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown table format {0:?} (expected csv, pipe, markdown or html)")]
pub struct UnknownFormat(pub String);

impl FromStr for TableFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "pipe" => Ok(TableFormat::Pipe),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "html" => Ok(TableFormat::Html),
            _ => Err(UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("table {table}: cell {value:?} contains '|' which {format} cannot represent")]
    PipeInCell {
        table: String,
        value: String,
        format: TableFormat,
    },
    #[error("table {table}: cell {value:?} contains a line break which {format} cannot represent")]
    LineBreakInCell {
        table: String,
        value: String,
        format: TableFormat,
    },
}

/// Renders every table as a `## <name>` line followed by its body, with one
/// blank line between tables.
pub fn render_table_set(
    ts: &TableSet,
    fmt: TableFormat,
    with_row_index: bool,
) -> Result<String, RenderError> {
    let parts = ts
        .iter()
        .map(|t| render_table(t, fmt, with_row_index))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(parts.join("\n\n"))
}

pub fn render_table(
    table: &Table,
    fmt: TableFormat,
    with_row_index: bool,
) -> Result<String, RenderError> {
    let (header, rows) = grid(table, with_row_index);
    let body = match fmt {
        TableFormat::Csv => csv_body(&header, &rows),
        TableFormat::Pipe => {
            check_delimited(table, fmt, &header, &rows)?;
            let mut lines = vec![header.join("|")];
            lines.extend(rows.iter().map(|r| r.join("|")));
            lines.join("\n")
        }
        TableFormat::Markdown => {
            check_delimited(table, fmt, &header, &rows)?;
            let line = |cells: &[String]| format!("| {} |", cells.join(" | "));
            let mut lines = vec![line(&header)];
            lines.push(line(&vec!["---".to_string(); header.len()]));
            lines.extend(rows.iter().map(|r| line(r)));
            lines.join("\n")
        }
        TableFormat::Html => {
            let row = |tag: &str, cells: &[String]| {
                let inner: String = cells
                    .iter()
                    .map(|c| format!("<{tag}>{}</{tag}>", escape_html(c)))
                    .collect();
                format!("<tr>{inner}</tr>")
            };
            let mut lines = vec!["<table>".to_string(), row("th", &header)];
            lines.extend(rows.iter().map(|r| row("td", r)));
            lines.push("</table>".to_string());
            lines.join("\n")
        }
    };
    Ok(format!("## {}\n{}", table.name(), body))
}

fn grid(table: &Table, with_row_index: bool) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = Vec::with_capacity(table.columns().len() + 1);
    if with_row_index {
        header.push(ROW_INDEX_COLUMN.to_string());
    }
    header.extend(table.columns().iter().cloned());
    let rows = table
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut cells = Vec::with_capacity(header.len());
            if with_row_index {
                cells.push(i.to_string());
            }
            cells.extend(row.iter().map(|c| c.render()));
            cells
        })
        .collect();
    (header, rows)
}

fn csv_body(header: &[String], rows: &[Vec<String>]) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    writer.write_record(header).expect("in-memory csv write");
    for r in rows {
        writer.write_record(r).expect("in-memory csv write");
    }
    let bytes = writer.into_inner().expect("in-memory csv flush");
    let mut out = String::from_utf8(bytes).expect("csv output of utf-8 input");
    if out.ends_with('\n') {
        out.pop();
    }
    out
}

fn check_delimited(
    table: &Table,
    format: TableFormat,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), RenderError> {
    for cell in header.iter().chain(rows.iter().flatten()) {
        if cell.contains('|') {
            return Err(RenderError::PipeInCell {
                table: table.name().to_string(),
                value: cell.clone(),
                format,
            });
        }
        if cell.contains(['\n', '\r']) {
            return Err(RenderError::LineBreakInCell {
                table: table.name().to_string(),
                value: cell.clone(),
                format,
            });
        }
    }
    Ok(())
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::CellValue;

    fn rally() -> TableSet {
        TableSet::new(vec![Table::from_strings("rally", &["winner"], &[vec!["A"]]).unwrap()])
            .unwrap()
    }

    #[test]
    fn minimal_table_in_each_format() {
        let ts = rally();
        assert_eq!(
            render_table_set(&ts, TableFormat::Csv, false).unwrap(),
            "## rally\nwinner\nA"
        );
        assert_eq!(
            render_table_set(&ts, TableFormat::Csv, true).unwrap(),
            "## rally\nrow,winner\n0,A"
        );
        assert_eq!(
            render_table_set(&ts, TableFormat::Pipe, true).unwrap(),
            "## rally\nrow|winner\n0|A"
        );
        assert_eq!(
            render_table_set(&ts, TableFormat::Markdown, false).unwrap(),
            "## rally\n| winner |\n| --- |\n| A |"
        );
        assert_eq!(
            render_table_set(&ts, TableFormat::Html, false).unwrap(),
            "## rally\n<table>\n<tr><th>winner</th></tr>\n<tr><td>A</td></tr>\n</table>"
        );
    }

    #[test]
    fn tables_are_separated_by_a_blank_line() {
        let a = Table::from_strings("a", &["x"], &[vec!["1"]]).unwrap();
        let b = Table::from_strings("b", &["y"], &[vec!["N/A"]]).unwrap();
        let ts = TableSet::new(vec![a, b]).unwrap();
        assert_eq!(
            render_table_set(&ts, TableFormat::Csv, false).unwrap(),
            "## a\nx\n1\n\n## b\ny\nN/A"
        );
    }

    #[test]
    fn pipe_in_cell_is_rejected_for_delimited_formats() {
        let t = Table::new("t", vec!["a".into()], vec![vec![CellValue::text("x|y")]]).unwrap();
        let ts = TableSet::new(vec![t]).unwrap();
        assert!(matches!(
            render_table_set(&ts, TableFormat::Pipe, false),
            Err(RenderError::PipeInCell { .. })
        ));
        assert!(render_table_set(&ts, TableFormat::Markdown, false).is_err());
        assert_eq!(
            render_table_set(&ts, TableFormat::Csv, false).unwrap(),
            "## t\na\nx|y"
        );
    }

    #[test]
    fn csv_quotes_when_needed_and_html_escapes() {
        let t = Table::new(
            "t",
            vec!["a".into()],
            vec![vec![CellValue::text("x, \"y\"")], vec![CellValue::text("<b>")]],
        )
        .unwrap();
        let ts = TableSet::new(vec![t]).unwrap();
        assert_eq!(
            render_table_set(&ts, TableFormat::Csv, false).unwrap(),
            "## t\na\n\"x, \"\"y\"\"\"\n<b>"
        );
        assert!(render_table_set(&ts, TableFormat::Html, false)
            .unwrap()
            .contains("<td>&lt;b&gt;</td>"));
    }

    #[test]
    fn format_names_parse() {
        assert_eq!("CSV".parse::<TableFormat>().unwrap(), TableFormat::Csv);
        assert_eq!("markdown".parse::<TableFormat>().unwrap(), TableFormat::Markdown);
        assert!("xml".parse::<TableFormat>().is_err());
        assert!(serde_json::from_str::<TableFormat>("\"xml\"").is_err());
        assert_eq!(
            serde_json::from_str::<TableFormat>("\"HTML\"").unwrap(),
            TableFormat::Html
        );
    }
}

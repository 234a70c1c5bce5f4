use crate::ops::{Comparator, OperationCall, OperationKind, OperationPool, SortKey, SortOrder};
use crate::table::ROW_INDEX_COLUMN;

fn definition(kind: OperationKind) -> &'static str {
    match kind {
        OperationKind::Root => "Does nothing; represents the root node of the tree.",
        OperationKind::SelectTable => {
            "Selects tables by their table names. Arguments: one or more table names."
        }
        OperationKind::SelectRow => {
            "Selects rows based on their row indices. Arguments: one or more 0-based indices from the row column."
        }
        OperationKind::SelectCol => {
            "Selects columns based on their column names. Arguments: one or more column names."
        }
        OperationKind::Count => {
            "Counts the number of unique values in the specified columns of the tables. Arguments: one or more column names."
        }
        OperationKind::Sort => {
            "Sorts rows based on the specified column names and sorting orders. Arguments: pairs of column name and order (asc or desc)."
        }
        OperationKind::Filter => {
            "Filters rows based on column names, comparison symbols, and values. Arguments: column name, comparison symbol, value."
        }
        OperationKind::Write => {
            "Writes a short text based on the tables; represents the leaf node of the tree. Arguments: none."
        }
    }
}

fn example(kind: OperationKind) -> OperationCall {
    match kind {
        OperationKind::Root => OperationCall::Root,
        OperationKind::SelectTable => OperationCall::SelectTable(vec!["table_name".into()]),
        OperationKind::SelectRow => OperationCall::SelectRow(vec![0, 2]),
        OperationKind::SelectCol => {
            OperationCall::SelectCol(vec!["column_1".into(), "column_2".into()])
        }
        OperationKind::Count => OperationCall::Count(vec!["column_name".into()]),
        OperationKind::Sort => OperationCall::Sort(vec![SortKey::new("column_name", SortOrder::Desc)]),
        OperationKind::Filter => OperationCall::filter("column_name", Comparator::Gt, "10"),
        OperationKind::Write => OperationCall::Write,
    }
}

/// Describes the operations of a pool, one line each, with an example call
/// rendered in the exact syntax the plan parser accepts.
pub fn operation_description(pool: &OperationPool) -> String {
    let mut lines: Vec<String> = pool
        .iter()
        .map(|kind| {
            format!(
                "- {}(): {} Example: {}",
                kind.name(),
                definition(kind),
                example(kind).render()
            )
        })
        .collect();
    if pool.contains(OperationKind::Filter) {
        let symbols: Vec<&str> = Comparator::ALL.iter().map(|c| c.symbol()).collect();
        lines.push(format!("Comparison symbols: {}.", symbols.join(", ")));
    }
    if pool.contains(OperationKind::SelectRow) {
        lines.push(format!(
            "The {ROW_INDEX_COLUMN} column of each table holds its row indices."
        ));
    }
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::parse_plan;

    #[test]
    fn examples_parse_back() {
        for kind in OperationKind::ALL {
            if kind == OperationKind::Root {
                continue;
            }
            let call = example(kind);
            let plan = parse_plan(&format!("[{}]", call.render()));
            assert_eq!(plan.calls, vec![call]);
            assert!(plan.diagnostics.is_empty());
        }
    }

    #[test]
    fn describes_only_pool_members() {
        let pool = OperationPool::from_kinds([OperationKind::Sort, OperationKind::Write]);
        let text = operation_description(&pool);
        assert!(text.contains("sort(column_name, desc)"));
        assert!(text.contains("write()"));
        assert!(!text.contains("filter("));
        assert!(!text.contains("Comparison symbols"));
        assert_eq!(text.lines().count(), 2);
    }
}

#![allow(dead_code)]

use std::path::PathBuf;

use tot_core::llm::{Matcher, ScriptedBackend, Usage};
use tot_core::table::{Table, TableSet};

/// Set `TOT_BLESS=1` to rewrite golden files from the current output.
pub const BLESS_ENV: &str = "TOT_BLESS";

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

/// Compares `actual` with the committed golden file byte for byte.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os(BLESS_ENV).is_some() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
    }
    let expected = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read golden {}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!(
            "{name} differs from golden\n--- expected\n{expected}\n--- actual\n{actual}"
        ))
    }
}

/// Two tables exercising numbers, text needing quotes and missing cells.
pub fn fixture_tables() -> TableSet {
    TableSet::new(vec![
        Table::from_strings(
            "rally",
            &["rally", "winner", "reason", "score"],
            &[
                vec!["1", "Lee", "net", "1.50"],
                vec!["2", "Kim", "out, wide", "-2"],
                vec!["3", "Lee", "A & B <smash>", "N/A"],
            ],
        )
        .unwrap(),
        Table::from_strings(
            "match",
            &["player_a", "player_b", "venue"],
            &[vec!["Lee", "Kim", "Court \"1\""]],
        )
        .unwrap(),
    ])
    .unwrap()
}

/// Tables used by the two-level scripted run.
pub fn badminton_tables() -> TableSet {
    TableSet::new(vec![
        Table::from_strings(
            "rally",
            &["rally", "winner", "reason"],
            &[
                vec!["1", "Lee", "net"],
                vec!["2", "Kim", "out"],
                vec!["3", "Lee", "smash"],
            ],
        )
        .unwrap(),
        Table::from_strings("match", &["player_a", "player_b"], &[vec!["Lee", "Kim"]]).unwrap(),
    ])
    .unwrap()
}

pub const PLANNER: &str = "content planner";
pub const WRITER: &str = "content writer";
pub const GENERATOR: &str = "content generator";

/// Root plans `[select_table(rally), write()]`; the branch then writes.
pub fn two_level_backend() -> ScriptedBackend {
    ScriptedBackend::empty()
        .rule(
            Matcher::system_contains(PLANNER).and_user("## Operation History\n\n[root()]\n"),
            "[select_table(rally), write()]",
        )
        .rule(Matcher::system_contains(PLANNER), "[write()]")
        .rule(
            Matcher::system_contains(WRITER).and_user("## match"),
            "Lee and Kim met in the final.",
        )
        .rule(
            Matcher::system_contains(WRITER),
            "Lee won two of the three rallies.",
        )
        .rule(
            Matcher::system_contains(GENERATOR),
            "Lee beat Kim in the final, winning two of three rallies.",
        )
        .with_default_usage(Usage::new(1000, 500))
}

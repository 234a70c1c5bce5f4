use std::collections::HashSet;

use proptest::prelude::*;
use rust_decimal::Decimal;

use super::*;
use crate::llm::{Matcher, ScriptedBackend};
use crate::prompts::TemplateSet;
use crate::table::Table;

fn t(table: &str, column: &str, value: &str) -> RelationTriple {
    RelationTriple::new(table, column, value).unwrap()
}

fn d(s: &str) -> Decimal {
    s.parse().unwrap()
}

fn rally_tables() -> TableSet {
    TableSet::new(vec![Table::from_strings(
        "rally",
        &["winner"],
        &[vec!["A"], vec!["B"], vec!["A"]],
    )
    .unwrap()])
    .unwrap()
}

#[test]
fn enumerate_dedups_and_skips_missing() {
    assert_eq!(
        enumerate_relations(&rally_tables()).unwrap(),
        vec![t("rally", "winner", "A"), t("rally", "winner", "B")]
    );
    let ts = TableSet::new(vec![
        Table::from_strings("a", &["x"], &[vec!["N/A"], vec!["1.50"]]).unwrap(),
        Table::from_strings("b", &["x"], &[vec!["1.5"]]).unwrap(),
    ])
    .unwrap();
    assert_eq!(
        enumerate_relations(&ts).unwrap(),
        vec![t("a", "x", "1.5"), t("b", "x", "1.5")]
    );
    let piped = TableSet::new(vec![Table::from_strings("a", &["x"], &[vec!["p|q"]]).unwrap()]).unwrap();
    assert!(matches!(
        enumerate_relations(&piped),
        Err(EvalError::PipeInComponent(_))
    ));
}

#[test]
fn triple_text_form() {
    let x = t("rally", "winner", "A");
    assert_eq!(x.to_string(), "(rally|winner|A)");
    assert_eq!("( rally | winner | A )".parse::<RelationTriple>().unwrap(), x);
    assert!("(a|b)".parse::<RelationTriple>().is_err());
    assert_eq!(serde_json::to_string(&x).unwrap(), "\"(rally|winner|A)\"");
}

/// Every start offset where `needle` occurs with non-alphanumeric
/// neighbours, found by trying all offsets.
fn brute_first(hay: &str, needle: &str) -> Option<usize> {
    let chars: Vec<(usize, char)> = hay.char_indices().collect();
    for (k, &(start, _)) in chars.iter().enumerate() {
        if !hay[start..].starts_with(needle) {
            continue;
        }
        let end = start + needle.len();
        let before = k.checked_sub(1).map(|p| chars[p].1);
        let after = hay[end..].chars().next();
        if before.is_none_or(|c| !c.is_alphanumeric()) && after.is_none_or(|c| !c.is_alphanumeric())
        {
            return Some(start);
        }
    }
    None
}

#[test]
fn lexical_extraction_orders_by_position() {
    let cands: Vec<_> = ["A", "B", "21", "19", "30"]
        .iter()
        .map(|v| t("m", "c", v))
        .collect();
    let got = extract_relations_lexical("A beat B 21-19", &cands);
    let want: Vec<_> = {
        let mut hits: Vec<_> = cands
            .iter()
            .enumerate()
            .filter_map(|(i, c)| brute_first("A beat B 21-19", &c.value).map(|p| (p, i)))
            .collect();
        hits.sort();
        hits.into_iter().map(|(_, i)| cands[i].clone()).collect()
    };
    assert_eq!(got, want);
    assert_eq!(got.iter().map(|x| x.value.as_str()).collect::<Vec<_>>(), ["A", "B", "21", "19"]);

    assert!(extract_relations_lexical("21-19", &[t("m", "c", "1")]).is_empty());
    assert!(extract_relations_lexical("", &cands).is_empty());
}

proptest! {
    #[test]
    fn lexical_matches_brute_force(
        report in "[ab1 ,.-]{0,24}",
        values in proptest::collection::vec("[ab1]{1,3}", 1..6),
    ) {
        let cands: Vec<_> = values.iter().enumerate().map(|(i, v)| t("m", &format!("c{i}"), v)).collect();
        let got = extract_relations_lexical(&report, &cands);
        let mut hits: Vec<_> = cands
            .iter()
            .enumerate()
            .filter_map(|(i, c)| brute_first(&report, &c.value).map(|p| (p, i)))
            .collect();
        hits.sort();
        let want: Vec<_> = hits.into_iter().map(|(_, i)| cands[i].clone()).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn cs_swaps_precision_and_recall(
        a in proptest::collection::vec(0u8..6, 0..8),
        b in proptest::collection::vec(0u8..6, 0..8),
    ) {
        let to = |v: &[u8]| v.iter().map(|x| t("t", "c", &x.to_string())).collect::<Vec<_>>();
        let (p1, r1, f1) = cs(&to(&a), &to(&b));
        let (p2, r2, f2) = cs(&to(&b), &to(&a));
        prop_assert_eq!(p1, r2);
        prop_assert_eq!(r1, p2);
        prop_assert_eq!(f1, f2);
    }

    #[test]
    fn co_in_range_and_exact_on_equality(
        a in proptest::collection::vec(0u8..3, 0..7),
        b in proptest::collection::vec(0u8..3, 0..7),
    ) {
        let c = co(&a, &b);
        prop_assert!(c >= Decimal::ZERO && c <= Decimal::ONE_HUNDRED);
        prop_assert_eq!(c == Decimal::ONE_HUNDRED, a == b);
    }
}

#[test]
fn relation_list_parsing() {
    assert_eq!(
        parse_relation_list("[(rally|winner|A), (rally|winner|B)]"),
        vec![t("rally", "winner", "A"), t("rally", "winner", "B")]
    );
    assert!(parse_relation_list("none").is_empty());
    assert_eq!(
        parse_relation_list("[(a|b), (rally|reason|net (short)), (x|y|z)]"),
        vec![t("rally", "reason", "net (short)"), t("x", "y", "z")]
    );
}

#[test]
fn llm_extraction_flags_hallucinations() {
    let templates = TemplateSet::builtin("badminton");
    let b = ScriptedBackend::empty().rule(
        Matcher::system_contains("relation extractor"),
        "[(rally|winner|A), (rally|winner|Z)]",
    );
    let x = LlmExtractor {
        backend: &b,
        template: &templates.ie,
        table_description: "desc".into(),
        example: String::new(),
        model: "m".into(),
        max_tokens: 64,
    };
    let cands = enumerate_relations(&rally_tables()).unwrap();
    let out = extract_relations_llm("A won.", &cands, &x).unwrap();
    assert_eq!(out.relations.len(), 2);
    assert!(!out.relations[0].hallucinated);
    assert!(out.relations[1].hallucinated);
    let user = &b.requests()[0].user;
    assert!(user.contains("## Table Relation\n\n[(rally|winner|A), (rally|winner|B)]"));
    assert!(b.requests()[0].system.contains("# Example\n\nNone."));
}

#[test]
fn rg_cases() {
    let table: HashSet<_> = ["a", "b", "c"].iter().map(|v| t("t", "c", v)).collect();
    let ext: Vec<_> = ["a", "b", "c", "z"].iter().map(|v| t("t", "c", v)).collect();
    assert_eq!(rg(&ext, &table), (d("4"), d("75")));
    assert_eq!(rg(&ext[..3], &table), (d("3"), d("100")));
    assert_eq!(rg(&[], &table), (d("0"), d("0")));
}

#[test]
fn cs_cases() {
    let s = |v: &[&str]| v.iter().map(|x| t("t", "c", x)).collect::<Vec<_>>();
    let (p, r, f) = cs(&s(&["a", "b", "c"]), &s(&["b", "c", "d"]));
    assert_eq!((p.round_dp(2), r.round_dp(2), f.round_dp(2)), (d("66.67"), d("66.67"), d("66.67")));
    assert_eq!(cs(&s(&["a"]), &s(&["a"])), (d("100"), d("100"), d("100")));
    assert_eq!(cs(&s(&["a"]), &s(&["b"])), (d("0"), d("0"), d("0")));
}

#[test]
fn dld_cases() {
    assert_eq!(dld(&['x'], &['x']), 0);
    assert_eq!(dld(&['x', 'y'], &['y', 'x']), 1);
    let a: Vec<char> = "ca".chars().collect();
    let b: Vec<char> = "abc".chars().collect();
    assert_eq!(dld(&a, &b), 3);
    assert_eq!(co(&['x', 'y', 'z'], &['x', 'z', 'y']).round_dp(2), d("66.67"));
    assert_eq!(co::<char>(&[], &['a'; 5]), d("0"));
    assert_eq!(co::<char>(&[], &[]), d("100"));
}

#[test]
fn micro_case() {
    let ts = TableSet::new(vec![Table::from_strings("rally", &["winner"], &[vec!["A"], vec!["B"]]).unwrap()]).unwrap();
    let s = score_sample("Then B took it.", "A led, then B won.", &ts, &Extractor::Lexical, 1.5, None)
        .unwrap()
        .metrics;
    assert_eq!((s.rg_count, s.rg_precision), (d("1"), d("100")));
    assert_eq!((s.cs_precision, s.cs_recall, s.cs_f1.round_dp(2)), (d("100"), d("50"), d("66.67")));
    assert_eq!(s.co_dld, d("50"));
    assert_eq!(s.seconds, d("1.5"));
}

#[test]
fn aggregate_means() {
    let base = SampleMetrics {
        rg_count: d("10"),
        rg_precision: d("100"),
        cs_precision: d("50"),
        cs_recall: d("50"),
        cs_f1: d("50"),
        co_dld: d("40"),
        seconds: d("2"),
        cost_milli_usd: Some(d("0.4")),
    };
    let other = SampleMetrics {
        rg_count: d("20"),
        cost_milli_usd: None,
        ..base.clone()
    };
    let one = aggregate(std::slice::from_ref(&base)).unwrap();
    assert_eq!(one.mean, base);
    let two = aggregate(&[base.clone(), other]).unwrap();
    assert_eq!(two.mean.rg_count, d("15"));
    assert_eq!(two.mean.cost_milli_usd, None);
    assert!(matches!(aggregate(&[]), Err(EvalError::EmptyCorpus)));

    let rows = vec![("s1".to_string(), base)];
    let csv = metrics_csv(&rows, &one);
    assert_eq!(
        csv,
        "sample,RG #,RG P%,CS P%,CS R%,CS F%,CO DLD%,Time,Cost\n\
         s1,10.00,100.00,50.00,50.00,50.00,40.00,2.00,0.40\n\
         mean,10.00,100.00,50.00,50.00,50.00,40.00,2.00,0.40\n"
    );
    let table = metrics_table(&rows, &one);
    assert!(table.starts_with("sample") && table.contains("CO DLD%"));
    assert_eq!(table.lines().count(), 5);
}

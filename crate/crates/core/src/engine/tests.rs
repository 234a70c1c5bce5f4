use super::*;
use crate::llm::{Matcher, ScriptedBackend, Usage};
use crate::table::Table;

fn tables() -> TableSet {
    TableSet::new(vec![
        Table::from_strings(
            "rally",
            &["rally", "winner", "reason"],
            &[vec!["1", "A", "net"], vec!["2", "B", "out"], vec!["3", "A", "smash"]],
        )
        .unwrap(),
        Table::from_strings("match", &["player_a", "player_b"], &[vec!["Lee", "Kim"]]).unwrap(),
    ])
    .unwrap()
}

const PLANNER: &str = "content planner";
const WRITER: &str = "content writer";
const GENERATOR: &str = "content generator";

fn at_root() -> Matcher {
    Matcher::system_contains(PLANNER).and_user("## Operation History\n\n[root()]\n")
}

fn run(backend: &ScriptedBackend, config: EngineConfig) -> RunTrace {
    let templates = TemplateSet::builtin("badminton");
    Engine::new(config, backend, &templates)
        .unwrap()
        .run(&tables())
        .unwrap()
}

fn writer_backend() -> ScriptedBackend {
    ScriptedBackend::empty()
        .rule(Matcher::system_contains(WRITER).and_user("## match"), "Lee met Kim.")
        .rule(Matcher::system_contains(WRITER), "Rally text.")
        .rule(Matcher::system_contains(GENERATOR), "Merged.")
}

#[test]
fn two_level_example_call_sequence() {
    let b = ScriptedBackend::empty()
        .rule(at_root(), "[select_table(rally), write()]")
        .rule(Matcher::system_contains(PLANNER), "[write()]")
        .rule(Matcher::system_contains(WRITER).and_user("## match"), "Lee met Kim.")
        .rule(Matcher::system_contains(WRITER), "Rally text.")
        .rule(Matcher::system_contains(GENERATOR), "Merged.");
    let trace = run(&b, EngineConfig::default());
    assert_eq!(trace.report(), "Merged.");

    let reqs = b.requests();
    let stages: Vec<&str> = reqs
        .iter()
        .map(|r| r.system.lines().next().unwrap())
        .collect();
    assert_eq!(
        stages,
        [
            "You are a content planner for the badminton game report.",
            "You are a content planner for the badminton game report.",
            "You are a content writer for the badminton game report.",
            "You are a content writer for the badminton game report.",
            "You are a content generator for the badminton game report.",
        ]
    );
    assert!(reqs[1].user.contains("[root(), select_table(rally)]"));
    assert!(!reqs[1].user.contains("## match"));
    assert!(reqs[4]
        .user
        .contains("### Report 1\n\nRally text.\n\n### Report 2\n\nLee met Kim."));

    let root = &trace.root;
    assert_eq!(root.children.len(), 2);
    assert_eq!(root.merge, Some(MergeKind::Generate));
    let branch = &root.children[0];
    assert_eq!(branch.role, NodeRole::Planned);
    assert_eq!(branch.merge, Some(MergeKind::Passthrough));
    assert_eq!(branch.children[0].role, NodeRole::WriteLeaf);
    assert_eq!(branch.children[0].depth, 2);
    assert_eq!(root.children[1].role, NodeRole::WriteLeaf);
    assert_eq!(trace.totals.calls, 5);
}

#[test]
fn depth_limit_writes_without_planning() {
    let b = writer_backend().rule(Matcher::system_contains(PLANNER), "[sort(rally, desc)]");
    let config = EngineConfig {
        max_depth: 1,
        ..EngineConfig::default()
    };
    let trace = run(&b, config);
    let child = &trace.root.children[0];
    assert_eq!(child.role, NodeRole::ForcedWrite);
    assert_eq!(child.depth, 1);
    // one planning call at the root, one forced write
    assert_eq!(b.call_count(), 2);
    assert_eq!(trace.report(), "Lee met Kim.");
}

#[test]
fn degree_cap_truncates_plan() {
    let b = writer_backend().rule(
        at_root(),
        "[write(), write(), write(), write(), write(), write(), write()]",
    );
    let trace = run(&b, EngineConfig::default());
    assert_eq!(trace.root.children.len(), 5);
    assert_eq!(trace.root.plan.as_ref().unwrap().truncated.len(), 2);
    // 1 planning + 5 leaves + 1 root merge
    assert_eq!(b.call_count(), 7);
}

#[test]
fn pool_violation_falls_back_to_write() {
    let b = writer_backend().rule(at_root(), "[sort(rally, desc)]");
    let config = EngineConfig {
        enabled_pool: OperationPool::from_kinds([OperationKind::Filter, OperationKind::Write]),
        ..EngineConfig::default()
    };
    let trace = run(&b, config);
    let plan = trace.root.plan.as_ref().unwrap();
    assert_eq!(plan.pool_violations.len(), 1);
    assert!(plan.fallback);
    assert_eq!(plan.calls, vec![OperationCall::Write]);
    assert_eq!(trace.root.merge, Some(MergeKind::Passthrough));
    assert_eq!(b.call_count(), 2);
}

#[test]
fn merge_policies() {
    let plans = || {
        writer_backend()
            .rule(at_root(), "[select_table(rally), write()]")
            .rule(Matcher::system_contains(PLANNER), "[write(), write()]")
    };
    let b = plans();
    let trace = run(&b, EngineConfig::default());
    assert_eq!(trace.root.children[0].merge, Some(MergeKind::Concatenate));
    assert_eq!(trace.root.children[0].text, "Rally text.\nRally text.");
    // planning 2, leaves 3, root merge 1
    assert_eq!(b.call_count(), 6);

    let b = plans();
    let config = EngineConfig {
        merge_policy: MergePolicy::MergeEveryNode,
        ..EngineConfig::default()
    };
    let trace = run(&b, config);
    assert_eq!(trace.root.children[0].merge, Some(MergeKind::Generate));
    assert_eq!(b.call_count(), 7);
}

#[test]
fn failing_operation_degrades_to_write() {
    let b = writer_backend().rule(at_root(), "[select_col(zzz), write()]");
    let trace = run(&b, EngineConfig::default());
    let failed = &trace.root.children[0];
    assert_eq!(failed.role, NodeRole::DegradedWrite);
    assert!(failed.error.as_deref().unwrap().contains("zzz"));
    assert!(failed.tables.contains("## match"));
}

#[test]
fn backend_errors_propagate() {
    let b = ScriptedBackend::empty();
    let templates = TemplateSet::builtin("badminton");
    let err = Engine::new(EngineConfig::default(), &b, &templates)
        .unwrap()
        .run(&tables())
        .unwrap_err();
    assert!(matches!(err, EngineError::Backend(LlmError::NoScriptMatch { .. })));
}

#[test]
fn config_validation() {
    let no_write = EngineConfig {
        enabled_pool: OperationPool::from_kinds([OperationKind::Sort]),
        ..EngineConfig::default()
    };
    assert!(no_write.validate().is_err());
    assert!(EngineConfig {
        max_degree: 0,
        ..EngineConfig::default()
    }
    .validate()
    .is_err());
    let json = serde_json::to_string(&EngineConfig::default()).unwrap();
    assert_eq!(serde_json::from_str::<EngineConfig>(&json).unwrap(), EngineConfig::default());
    let partial: EngineConfig = serde_json::from_str(r#"{"max_depth": 2, "table_format": "HTML"}"#).unwrap();
    assert_eq!(partial.max_depth, 2);
    assert_eq!(partial.table_format, TableFormat::Html);
}

#[test]
fn totals_and_costs() {
    let b = writer_backend()
        .rule(at_root(), "[write(), write()]")
        .with_default_usage(Usage::new(1000, 500));
    let templates = TemplateSet::builtin("badminton");
    let pricing = PricingTable::new().with(
        DEFAULT_MODEL,
        crate::llm::ModelPrice::per_million("0.15".parse().unwrap(), "0.60".parse().unwrap())
            .unwrap(),
    );
    let trace = Engine::new(EngineConfig::default(), &b, &templates)
        .unwrap()
        .with_pricing(pricing)
        .unwrap()
        .run(&tables())
        .unwrap();
    assert_eq!(trace.totals.calls, 4);
    assert_eq!(trace.totals.usage, Usage::new(4000, 2000));
    assert_eq!(trace.totals.cost, Some("1.8".parse().unwrap()));
    let zeroed = trace.without_timings();
    assert_eq!(zeroed.totals.wall_seconds, 0.0);
    let json = serde_json::to_string(&trace).unwrap();
    assert_eq!(serde_json::from_str::<RunTrace>(&json).unwrap(), trace);
}

#[test]
fn single_prompt_uses_one_call() {
    let b = ScriptedBackend::empty().rule(Matcher::any(), "R");
    let templates = TemplateSet::builtin("badminton");
    let trace = Engine::new(EngineConfig::default(), &b, &templates)
        .unwrap()
        .run_single_prompt(&tables())
        .unwrap();
    assert_eq!(trace.report(), "R");
    assert_eq!(b.call_count(), 1);
    assert!(b.requests()[0].user.contains("## rally"));
}

#[test]
fn usage_by_depth_counts_incoming_calls() {
    let b = writer_backend()
        .rule(at_root(), "[select_table(rally), write()]")
        .rule(Matcher::system_contains(PLANNER), "[write()]");
    let trace = run(&b, EngineConfig::default());
    let table = operation_usage_by_depth([&trace]).unwrap();
    let csv = crate::table::render_table(&table, TableFormat::Csv, false).unwrap();
    assert_eq!(
        csv,
        "## operation_usage\ndepth,kind,usage_rate\n1,select_table,0.5\n1,write,0.5\n2,write,1"
    );
}

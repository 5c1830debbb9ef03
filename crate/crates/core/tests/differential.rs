use qpl::eval::{differential_test, differential_test_with, SqliteBackend};
use qpl::interpret::{Options, SetSemantics};
use qpl::plan::Operator;

#[test]
fn interpreter_agrees_with_sqlite_on_generated_cases() {
    let mut backend = SqliteBackend::in_memory().unwrap();
    let report = differential_test(1, 500, &mut backend).unwrap();
    for m in report.mismatches.iter().take(3) {
        eprintln!("trial {} seed {}\n{}\n{}\n{}\n", m.trial, m.case_seed, m.plan, m.sql, m.detail);
    }
    assert!(report.passed(), "{} mismatches", report.mismatches.len());
    assert!(report.covers_all_operators(), "{:?}", report.operators);
    assert!(report.max_depth <= 4 && report.max_rows <= 50);
}

#[test]
fn bag_semantics_for_set_operations_is_caught() {
    let mut backend = SqliteBackend::in_memory().unwrap();
    let broken = Options {
        set_semantics: SetSemantics::Bag,
    };
    let report = differential_test_with(1, 500, &mut backend, broken).unwrap();
    assert!(!report.passed());
    // every reported case involves a set operation
    for m in &report.mismatches {
        assert!(
            ["Except", "Intersect", "Union"].iter().any(|op| m.plan.contains(op)),
            "{}",
            m.plan
        );
    }
    assert!(report.mismatches.iter().any(|m| m.plan.contains(Operator::Except.keyword())));
}

#[test]
fn zero_trials_give_an_empty_report() {
    let mut backend = SqliteBackend::in_memory().unwrap();
    let report = differential_test(9, 0, &mut backend).unwrap();
    assert_eq!(report.trials, 0);
    assert!(report.mismatches.is_empty());
}

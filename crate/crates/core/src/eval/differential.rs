//! Differential testing of the interpreter against an SQL engine running the
//! compiled CTE programs.

use std::collections::BTreeMap;

use crate::cte::{compile, render};
use crate::gen::{generate_case, Case};
use crate::interpret::{interpret_with, Options};
use crate::parser::serialize;
use crate::plan::{Operator, Plan};

use super::backend::{load_into, BackendError, SqlExecutor};
use super::rows_match;

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub trial: u64,
    pub case_seed: u64,
    pub plan: String,
    pub sql: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct DifferentialReport {
    pub trials: u64,
    /// Number of trials whose plan contains each operator.
    pub operators: BTreeMap<Operator, usize>,
    pub max_depth: usize,
    pub max_rows: usize,
    pub mismatches: Vec<Mismatch>,
}

impl DifferentialReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn covers_all_operators(&self) -> bool {
        Operator::ALL.iter().all(|op| self.operators.contains_key(op))
    }
}

/// Seed of trial `trial` in a run started with `seed`.
pub fn case_seed(seed: u64, trial: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial)
}

pub fn differential_test(seed: u64, trials: u64, backend: &mut dyn SqlExecutor) -> Result<DifferentialReport, BackendError> {
    differential_test_with(seed, trials, backend, Options::default())
}

/// Like [`differential_test`], with interpreter options (used to show that a
/// deliberately wrong interpreter is caught).
pub fn differential_test_with(
    seed: u64,
    trials: u64,
    backend: &mut dyn SqlExecutor,
    options: Options,
) -> Result<DifferentialReport, BackendError> {
    let mut report = DifferentialReport {
        trials,
        ..DifferentialReport::default()
    };
    for trial in 0..trials {
        let case_seed = case_seed(seed, trial);
        let case = generate_case(case_seed);
        record_shape(&mut report, &case);
        load_into(backend, &case.database)?;
        if let Some(detail) = run_case(&case, backend, options) {
            report.mismatches.push(Mismatch {
                trial,
                case_seed,
                plan: serialize(&case.plan),
                sql: compile(&case.plan, &case.schema).map(|p| render(&p)).unwrap_or_default(),
                detail,
            });
        }
    }
    Ok(report)
}

fn record_shape(report: &mut DifferentialReport, case: &Case) {
    let mut seen: Vec<Operator> = case.plan.sub_plans().iter().map(|p| p.op()).collect();
    seen.sort();
    seen.dedup();
    for op in seen {
        *report.operators.entry(op).or_default() += 1;
    }
    report.max_depth = report.max_depth.max(case.plan.depth());
    for t in case.schema.tables() {
        report.max_rows = report.max_rows.max(case.database.rows(&t.name).len());
    }
}

/// Returns a description of the disagreement, if any.
fn run_case(case: &Case, backend: &mut dyn SqlExecutor, options: Options) -> Option<String> {
    let expected = match interpret_with(&case.plan, &case.database, options) {
        Ok(r) => r,
        Err(e) => return Some(format!("interpreter failed: {e}")),
    };
    let sql = match compile(&case.plan, &case.schema) {
        Ok(p) => render(&p),
        Err(e) => return Some(format!("compilation failed: {e}")),
    };
    let (columns, rows) = match backend.query(&sql) {
        Ok(r) => r,
        Err(e) => return Some(format!("backend failed: {e}")),
    };
    if columns.len() != expected.signature().len() {
        return Some(format!(
            "arity differs: interpreter {}, backend {}",
            expected.signature().len(),
            columns.len()
        ));
    }
    let ordered = sorted_root(&case.plan);
    if rows_match(expected.rows(), &rows, ordered) {
        None
    } else {
        Some(format!(
            "results differ (ordered: {ordered}): interpreter {} rows {:?}, backend {} rows {:?}",
            expected.len(),
            preview(expected.rows()),
            rows.len(),
            preview(&rows)
        ))
    }
}

fn sorted_root(plan: &Plan) -> bool {
    matches!(plan.root_operator(), Operator::Sort | Operator::TopSort)
}

fn preview(rows: &[Vec<crate::value::Value>]) -> Vec<String> {
    rows.iter()
        .take(8)
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("|"))
        .collect()
}

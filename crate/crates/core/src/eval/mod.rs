//! Execution-match comparison, dataset evaluation and reporting.

pub mod backend;
pub mod differential;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cte::compile;
use crate::interpret::{interpret, Relation};
use crate::parser::parse;
use crate::plan::{Operator, Plan};
use crate::schema::Database;
use crate::semantic::{analyze, validate, BoundNode};
use crate::value::Value;

pub use backend::{load_into, BackendError, SqlExecutor, SqliteBackend};
pub use differential::{differential_test, differential_test_with, DifferentialReport, Mismatch};

const REL_TOL: f64 = 1e-6;
const ABS_TOL: f64 = 1e-9;

/// A cell reduced to what execution match compares.
#[derive(Debug, Clone)]
enum Cell {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    fn of(v: &Value) -> Cell {
        match v {
            Value::Null => Cell::Null,
            Value::Integer(i) => Cell::Int(*i),
            Value::Real(r) => Cell::Real(*r),
            Value::Boolean(b) => Cell::Int(i64::from(*b)),
            Value::Text(s) => Cell::Text(s.clone()),
            Value::Date(_) => Cell::Text(v.to_string()),
        }
    }

    fn num(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Real(r) => Some(*r),
            _ => None,
        }
    }

    fn matches(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Null, Cell::Null) => true,
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Text(a), Cell::Text(b)) => a == b,
            _ => match (self.num(), other.num()) {
                (Some(a), Some(b)) => close(a, b),
                _ => false,
            },
        }
    }

    /// Total order used to line rows up before comparing them.
    fn order(&self, other: &Cell) -> Ordering {
        fn rank(c: &Cell) -> u8 {
            match c {
                Cell::Null => 0,
                Cell::Int(_) | Cell::Real(_) => 1,
                Cell::Text(_) => 2,
            }
        }
        match (self, other) {
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            _ => match (self.num(), other.num()) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                _ => rank(self).cmp(&rank(other)),
            },
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= ABS_TOL.max(REL_TOL * a.abs().max(b.abs()))
}

fn cells(rows: &[Vec<Value>]) -> Vec<Vec<Cell>> {
    rows.iter().map(|r| r.iter().map(Cell::of).collect()).collect()
}

fn row_matches(a: &[Cell], b: &[Cell]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.matches(y))
}

fn row_order(a: &[Cell], b: &[Cell]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.order(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Compares two row collections. Unordered mode compares multisets; ordered
/// mode also requires the same sequence. Reals match within a relative
/// tolerance of 1e-6 (absolute floor 1e-9); integers and reals compare by
/// value; booleans compare as 0/1 and dates as their canonical text.
pub fn rows_match(gold: &[Vec<Value>], pred: &[Vec<Value>], ordered: bool) -> bool {
    if gold.len() != pred.len() {
        return false;
    }
    let (mut g, mut p) = (cells(gold), cells(pred));
    if ordered {
        return g.iter().zip(&p).all(|(a, b)| row_matches(a, b));
    }
    g.sort_by(|a, b| row_order(a, b));
    p.sort_by(|a, b| row_order(a, b));
    if g.iter().zip(&p).all(|(a, b)| row_matches(a, b)) {
        return true;
    }
    // values within tolerance can sort differently; fall back to greedy pairing
    let mut used = vec![false; p.len()];
    g.iter().all(|a| {
        match (0..p.len()).find(|&j| !used[j] && row_matches(a, &p[j])) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        }
    })
}

/// Execution match of two relations; differing arity never matches.
pub fn execution_match(gold: &Relation, pred: &Relation, ordered: bool) -> bool {
    gold.signature().len() == pred.signature().len() && rows_match(gold.rows(), pred.rows(), ordered)
}

/// Why a prediction did not match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    /// The gold plan itself does not parse or validate.
    GoldInvalid,
    MissingPrediction,
    Parse,
    Validation,
    /// Valid plan that could not be converted to a CTE program.
    Conversion,
    Execution,
    Mismatch,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::GoldInvalid => "gold-invalid",
            FailureKind::MissingPrediction => "missing-prediction",
            FailureKind::Parse => "parse",
            FailureKind::Validation => "validation",
            FailureKind::Conversion => "conversion",
            FailureKind::Execution => "execution",
            FailureKind::Mismatch => "mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Match,
    Failed(FailureKind, String),
}

impl Outcome {
    pub fn is_match(&self) -> bool {
        *self == Outcome::Match
    }
}

/// Runs both plans and compares their results.
///
/// The comparison is ordered when the gold root is Sort or TopSort. If the
/// gold sort keys are among its outputs only the key columns' sequence is
/// enforced, with the rows compared as a multiset; otherwise the full row
/// sequence must agree.
pub fn compare_plans(gold: &Plan, pred: &Plan, db: &Database) -> Outcome {
    let gold_rel = match interpret(gold, db) {
        Ok(r) => r,
        Err(e) => return Outcome::Failed(FailureKind::GoldInvalid, e.to_string()),
    };
    let report = validate(pred, db.schema());
    if !report.ok {
        let msg = report.diagnostics.first().map(|d| d.to_string()).unwrap_or_default();
        return Outcome::Failed(FailureKind::Validation, msg);
    }
    if let Err(e) = compile(pred, db.schema()) {
        return Outcome::Failed(FailureKind::Conversion, e.to_string());
    }
    let pred_rel = match interpret(pred, db) {
        Ok(r) => r,
        Err(e) => return Outcome::Failed(FailureKind::Execution, e.to_string()),
    };
    if gold_rel.signature().len() != pred_rel.signature().len() {
        return Outcome::Failed(
            FailureKind::Mismatch,
            format!("gold has {} columns, prediction {}", gold_rel.signature().len(), pred_rel.signature().len()),
        );
    }
    let matched = match ordered_key_positions(gold, db) {
        None => rows_match(gold_rel.rows(), pred_rel.rows(), false),
        Some(None) => rows_match(gold_rel.rows(), pred_rel.rows(), true),
        Some(Some(keys)) => {
            let project = |rows: &[Vec<Value>]| -> Vec<Vec<Value>> {
                rows.iter().map(|r| keys.iter().map(|&k| r[k].clone()).collect()).collect()
            };
            rows_match(gold_rel.rows(), pred_rel.rows(), false)
                && rows_match(&project(gold_rel.rows()), &project(pred_rel.rows()), true)
        }
    };
    if matched {
        Outcome::Match
    } else {
        Outcome::Failed(
            FailureKind::Mismatch,
            format!("gold returned {} rows, prediction {} rows with different contents", gold_rel.len(), pred_rel.len()),
        )
    }
}

/// `None` for unordered roots; `Some(None)` when the sort keys are not all
/// among the outputs; otherwise the output positions of the keys.
fn ordered_key_positions(gold: &Plan, db: &Database) -> Option<Option<Vec<usize>>> {
    if !matches!(gold.root_operator(), Operator::Sort | Operator::TopSort) {
        return None;
    }
    let analysis = analyze(gold, db.schema());
    let Some(BoundNode::Sort { keys, columns, .. }) = analysis.nodes.last().and_then(|n| n.bound.as_ref()) else {
        return Some(None);
    };
    Some(
        keys.iter()
            .map(|(k, _)| columns.iter().position(|c| c == k))
            .collect::<Option<Vec<_>>>(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub db_id: String,
    #[serde(default)]
    pub question: String,
    pub qpl: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalformedLine {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

/// Parses JSON Lines; blank lines are ignored, malformed ones are returned separately.
pub fn parse_dataset(text: &str) -> (Vec<DatasetEntry>, Vec<MalformedLine>) {
    let mut entries = Vec::new();
    let mut malformed = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DatasetEntry>(line) {
            Ok(e) => entries.push(e),
            Err(e) => malformed.push(MalformedLine {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    (entries, malformed)
}

/// Databases by `db_id`, matched case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    databases: HashMap<String, Database>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    pub fn insert(&mut self, db: Database) {
        self.databases.insert(db.schema().db_id().to_ascii_lowercase(), db);
    }

    pub fn get(&self, db_id: &str) -> Option<&Database> {
        self.databases.get(&db_id.to_ascii_lowercase())
    }

    pub fn len(&self) -> usize {
        self.databases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.databases.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("entry {index} refers to unknown database `{db_id}`")]
    UnknownDatabase { index: usize, db_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub index: usize,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthRow {
    pub depth: usize,
    pub count: usize,
    pub matched: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRow {
    pub op: Operator,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Entries whose gold plan was usable.
    pub evaluated: usize,
    pub matched: usize,
    pub overall: f64,
    pub by_depth: Vec<DepthRow>,
    pub by_operator: Vec<OperatorRow>,
    /// Root operator accuracy over parseable predictions.
    pub root_accuracy: Option<f64>,
    pub failures: Vec<FailureRecord>,
}

struct EntryResult {
    depth: Option<usize>,
    roots: Option<(Operator, Operator)>,
    matched: bool,
    failure: Option<FailureRecord>,
}

/// Evaluates every entry's prediction against its gold plan, in parallel.
pub fn evaluate_dataset(entries: &[DatasetEntry], registry: &Registry) -> Result<EvalReport, EvalError> {
    for (index, e) in entries.iter().enumerate() {
        if registry.get(&e.db_id).is_none() {
            return Err(EvalError::UnknownDatabase {
                index,
                db_id: e.db_id.clone(),
            });
        }
    }
    let results: Vec<EntryResult> = entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| evaluate_entry(i, e, registry.get(&e.db_id).expect("checked above")))
        .collect();
    Ok(summarize(results))
}

fn evaluate_entry(index: usize, entry: &DatasetEntry, db: &Database) -> EntryResult {
    let fail = |kind: FailureKind, message: String| {
        Some(FailureRecord {
            index,
            kind,
            message,
        })
    };
    let gold = match parse(&entry.qpl) {
        Ok(g) if validate(&g, db.schema()).ok => g,
        Ok(_) => {
            return EntryResult {
                depth: None,
                roots: None,
                matched: false,
                failure: fail(FailureKind::GoldInvalid, "gold plan does not validate".into()),
            }
        }
        Err(d) => {
            return EntryResult {
                depth: None,
                roots: None,
                matched: false,
                failure: fail(FailureKind::GoldInvalid, d.first().map(|d| d.to_string()).unwrap_or_default()),
            }
        }
    };
    let depth = Some(gold.depth());
    let Some(text) = entry.prediction.as_deref() else {
        return EntryResult {
            depth,
            roots: None,
            matched: false,
            failure: fail(FailureKind::MissingPrediction, "no prediction".into()),
        };
    };
    let pred = match parse(text) {
        Ok(p) => p,
        Err(d) => {
            return EntryResult {
                depth,
                roots: None,
                matched: false,
                failure: fail(FailureKind::Parse, d.first().map(|d| d.to_string()).unwrap_or_default()),
            }
        }
    };
    let roots = Some((gold.root_operator(), pred.root_operator()));
    match compare_plans(&gold, &pred, db) {
        Outcome::Match => EntryResult {
            depth,
            roots,
            matched: true,
            failure: None,
        },
        Outcome::Failed(kind, message) => EntryResult {
            depth,
            roots,
            matched: false,
            failure: fail(kind, message),
        },
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn summarize(results: Vec<EntryResult>) -> EvalReport {
    let mut depths: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    let (mut evaluated, mut matched) = (0, 0);
    for r in results {
        if let Some(d) = r.depth {
            evaluated += 1;
            let slot = depths.entry(d).or_default();
            slot.0 += 1;
            if r.matched {
                matched += 1;
                slot.1 += 1;
            }
        }
        if let Some(p) = r.roots {
            pairs.push(p);
        }
        failures.extend(r.failure);
    }
    let by_depth = depths
        .into_iter()
        .map(|(depth, (count, m))| DepthRow {
            depth,
            count,
            matched: m,
            rate: ratio(m, count),
        })
        .collect();
    let by_operator = operator_metrics(&pairs);
    let root_accuracy = (!pairs.is_empty()).then(|| ratio(pairs.iter().filter(|(g, p)| g == p).count(), pairs.len()));
    EvalReport {
        evaluated,
        matched,
        overall: ratio(matched, evaluated),
        by_depth,
        by_operator,
        root_accuracy,
        failures,
    }
}

/// Per-operator precision, recall and F1 of root-operator prediction from
/// (gold, predicted) pairs. Operators that occur on neither side are omitted.
pub fn operator_metrics(pairs: &[(Operator, Operator)]) -> Vec<OperatorRow> {
    Operator::ALL
        .iter()
        .filter_map(|&op| {
            let tp = pairs.iter().filter(|(g, p)| *g == op && *p == op).count();
            let predicted = pairs.iter().filter(|(_, p)| *p == op).count();
            let support = pairs.iter().filter(|(g, _)| *g == op).count();
            if predicted == 0 && support == 0 {
                return None;
            }
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            Some(OperatorRow {
                op,
                precision,
                recall,
                f1,
                support,
            })
        })
        .collect()
}

impl EvalReport {
    /// `{overall, by_depth: [{depth, count, rate}], by_operator: [{op, precision, recall, f1, support}], failures: [{index, kind, message}]}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "overall": self.overall,
            "by_depth": self.by_depth.iter().map(|r| serde_json::json!({
                "depth": r.depth, "count": r.count, "rate": r.rate,
            })).collect::<Vec<_>>(),
            "by_operator": self.by_operator.iter().map(|r| serde_json::json!({
                "op": r.op.keyword(), "precision": r.precision, "recall": r.recall, "f1": r.f1, "support": r.support,
            })).collect::<Vec<_>>(),
            "failures": self.failures.iter().map(|f| serde_json::json!({
                "index": f.index, "kind": f.kind.as_str(), "message": f.message,
            })).collect::<Vec<_>>(),
        })
    }

    /// Aligned text tables: execution match by depth, then root-operator metrics.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "Execution match by depth").unwrap();
        writeln!(out, "{:<6} {:>6} {:>8} {:>10}", "Depth", "Count", "Matched", "Exec-match").unwrap();
        for r in &self.by_depth {
            writeln!(out, "{:<6} {:>6} {:>8} {:>9.1}%", r.depth, r.count, r.matched, 100.0 * r.rate).unwrap();
        }
        writeln!(out, "{:<6} {:>6} {:>8} {:>9.1}%", "All", self.evaluated, self.matched, 100.0 * self.overall).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "Root operator prediction").unwrap();
        writeln!(out, "{:<10} {:<4} {:<4} {:<4} Support", "Operator", "P", "R", "F1").unwrap();
        for r in &self.by_operator {
            writeln!(out, "{}", operator_line(r)).unwrap();
        }
        if let Some(acc) = self.root_accuracy {
            writeln!(out, "Root accuracy: {:.1}%", 100.0 * acc).unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "Overall execution match: {:.1}% ({}/{})", 100.0 * self.overall, self.matched, self.evaluated).unwrap();
        if !self.failures.is_empty() {
            let mut counts: BTreeMap<FailureKind, usize> = BTreeMap::new();
            for f in &self.failures {
                *counts.entry(f.kind).or_default() += 1;
            }
            let parts: Vec<String> = counts.iter().map(|(k, n)| format!("{} {n}", k.as_str())).collect();
            writeln!(out, "Failures: {}", parts.join(", ")).unwrap();
        }
        out
    }
}

/// `Join       0.50 1.00 0.67 1`
pub fn operator_line(r: &OperatorRow) -> String {
    format!("{:<10} {:.2} {:.2} {:.2} {}", r.op.keyword(), r.precision, r.recall, r.f1, r.support)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DatasetStats {
    /// Number of gold plans per depth.
    pub by_depth: BTreeMap<usize, usize>,
    pub max_steps: usize,
    pub total: usize,
}

#[derive(Debug, Error, PartialEq)]
#[error("entry {index}: gold plan does not parse: {message}")]
pub struct StatsError {
    pub index: usize,
    pub message: String,
}

pub fn dataset_stats(entries: &[DatasetEntry]) -> Result<DatasetStats, StatsError> {
    let mut stats = DatasetStats::default();
    for (index, e) in entries.iter().enumerate() {
        let plan = parse(&e.qpl).map_err(|d| StatsError {
            index,
            message: d.first().map(|d| d.to_string()).unwrap_or_default(),
        })?;
        *stats.by_depth.entry(plan.depth()).or_default() += 1;
        stats.max_steps = stats.max_steps.max(plan.step_count());
        stats.total += 1;
    }
    Ok(stats)
}

impl DatasetStats {
    /// Depth histogram with a total row.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<6} {:>6}", "Depth", "Count").unwrap();
        for (d, n) in &self.by_depth {
            writeln!(out, "{d:<6} {n:>6}").unwrap();
        }
        writeln!(out, "{:<6} {:>6}", "Total", self.total).unwrap();
        writeln!(out, "Max steps: {}", self.max_steps).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: &[f64]) -> Vec<Vec<Value>> {
        v.iter().map(|x| vec![Value::Real(*x)]).collect()
    }

    #[test]
    fn tolerance() {
        assert!(rows_match(&r(&[17.5]), &r(&[17.5000001]), false));
        assert!(!rows_match(&r(&[17.5]), &r(&[17.6]), false));
        assert!(rows_match(&r(&[0.0]), &r(&[1e-10]), false));
        assert!(rows_match(&[vec![Value::Integer(3)]], &r(&[3.0]), false));
        assert!(!rows_match(&[vec![Value::Integer(3)]], &[vec![Value::Integer(4)]], false));
    }

    #[test]
    fn order_sensitivity() {
        let a = vec![vec![Value::Integer(1), Value::Text("a".into())], vec![Value::Integer(2), Value::Text("b".into())]];
        let b: Vec<_> = a.iter().rev().cloned().collect();
        assert!(rows_match(&a, &b, false));
        assert!(!rows_match(&a, &b, true));
        assert!(rows_match(&a, &a, true));
    }

    #[test]
    fn normalization_of_booleans_dates_and_nulls() {
        let d = crate::value::parse_date("2020-01-02").unwrap();
        assert!(rows_match(
            &[vec![Value::Boolean(true), Value::Date(d), Value::Null]],
            &[vec![Value::Integer(1), Value::Text("2020-01-02".into()), Value::Null]],
            true
        ));
        assert!(!rows_match(&[vec![Value::Null]], &[vec![Value::Integer(0)]], false));
    }

    #[test]
    fn multiset_not_set() {
        let a = vec![vec![Value::Integer(1)], vec![Value::Integer(1)]];
        let b = vec![vec![Value::Integer(1)]];
        assert!(!rows_match(&a, &b, false));
    }

    #[test]
    fn confusion_fixture() {
        use Operator::*;
        let rows = operator_metrics(&[(Join, Join), (Scan, Scan), (Scan, Join)]);
        let join = rows.iter().find(|r| r.op == Join).unwrap();
        assert_eq!(operator_line(join), "Join       0.50 1.00 0.67 1");
        let scan = rows.iter().find(|r| r.op == Scan).unwrap();
        assert_eq!((scan.precision, scan.recall, scan.support), (1.0, 0.5, 2));
    }

    #[test]
    fn stats_of_empty_dataset() {
        let s = dataset_stats(&[]).unwrap();
        assert!(s.by_depth.is_empty());
        assert_eq!(s.total, 0);
    }

    #[test]
    fn dataset_lines() {
        let (entries, bad) = parse_dataset(
            "{\"db_id\": \"a\", \"question\": \"q\", \"qpl\": \"Scan Table [t] Output [x]\"}\n\nnot json\n",
        );
        assert_eq!(entries.len(), 1);
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].line, 3);
    }
}

//! Reference interpreter: evaluates a validated plan over an in-memory database.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::diagnostic::Diagnostic;
use crate::plan::{AggFunc, CompareOp, Direction, Plan};
use crate::schema::Database;
use crate::semantic::{analyze, BoundAggregate, BoundNode, BoundOperand, BoundPredicate, ColumnSignature, SetKind};
use crate::value::Value;

/// A typed, ordered bag of rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Relation {
    signature: ColumnSignature,
    rows: Vec<Vec<Value>>,
    /// Set when the rows come straight out of a Sort or TopSort.
    ordered: bool,
}

impl Relation {
    pub fn new(signature: ColumnSignature, rows: Vec<Vec<Value>>) -> Relation {
        Relation {
            signature,
            rows,
            ordered: false,
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.ordered
    }

    pub fn signature(&self) -> &ColumnSignature {
        &self.signature
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<Value>> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with a header of column display names; nulls print as `NULL`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.signature.names()).expect("writing to memory");
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.to_string())
                .collect();
            w.write_record(&cells).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
    }

    /// `{"columns": [...], "rows": [[...], ...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "columns": self.signature.names(),
            "rows": self.rows,
        })
    }
}

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("plan is not valid for this schema: {}", first_message(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("database has no data for table `{0}`")]
    MissingTable(String),
}

fn first_message(d: &[Diagnostic]) -> String {
    d.first().map(|d| d.to_string()).unwrap_or_default()
}

/// How Union, Intersect and Except treat duplicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SetSemantics {
    /// Duplicates are removed, as in SQL without `ALL`.
    #[default]
    Distinct,
    /// Duplicates are kept (`UNION ALL` style, and `Except` removes one
    /// occurrence per matching right row).
    Bag,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    pub set_semantics: SetSemantics,
}

pub fn interpret(plan: &Plan, db: &Database) -> Result<Relation, InterpretError> {
    interpret_with(plan, db, Options::default())
}

pub fn interpret_with(plan: &Plan, db: &Database, options: Options) -> Result<Relation, InterpretError> {
    let mut steps = interpret_all_steps_with(plan, db, options)?;
    Ok(steps.pop().expect("plans have at least one step"))
}

/// The result of every step, in bottom-up order (`Step_1` first).
pub fn interpret_all_steps(plan: &Plan, db: &Database) -> Result<Vec<Relation>, InterpretError> {
    interpret_all_steps_with(plan, db, Options::default())
}

pub fn interpret_all_steps_with(plan: &Plan, db: &Database, options: Options) -> Result<Vec<Relation>, InterpretError> {
    let analysis = analyze(plan, db.schema());
    if !analysis.ok() {
        return Err(InterpretError::Invalid(analysis.diagnostics));
    }
    let mut results: Vec<Relation> = Vec::with_capacity(analysis.nodes.len());
    run(plan, db, &analysis.nodes, options, &mut results)?;
    Ok(results)
}

fn run(
    plan: &Plan,
    db: &Database,
    nodes: &[crate::semantic::NodeInfo],
    options: Options,
    results: &mut Vec<Relation>,
) -> Result<usize, InterpretError> {
    let children = plan
        .children()
        .iter()
        .map(|c| run(c, db, nodes, options, results))
        .collect::<Result<Vec<_>, _>>()?;
    let id = results.len();
    let info = &nodes[id];
    let bound = info.bound.as_ref().expect("valid plans are bound");
    let signature = info.signature.clone().expect("valid plans have signatures");
    let rows = match bound {
        BoundNode::Scan {
            table,
            predicate,
            distinct,
            columns,
        } => {
            let rel = db.relation(table).ok_or_else(|| InterpretError::MissingTable(table.clone()))?;
            select(rel.rows().iter(), predicate.as_ref(), columns, *distinct)
        }
        BoundNode::Filter {
            predicate,
            distinct,
            columns,
        } => select(results[children[0]].rows.iter(), Some(predicate), columns, *distinct),
        BoundNode::Join { predicate, columns } => {
            let (left, right) = (&results[children[0]].rows, &results[children[1]].rows);
            let mut out = Vec::new();
            for l in left {
                for r in right {
                    let row: Vec<Value> = l.iter().chain(r).cloned().collect();
                    if eval_predicate(predicate, &row) == Some(true) {
                        out.push(project(&row, columns));
                    }
                }
            }
            out
        }
        BoundNode::Aggregate { groups, outputs } => aggregate(&results[children[0]].rows, groups, outputs),
        BoundNode::SetOp { kind, columns } => {
            let dtypes = signature.dtypes();
            let side = |i: usize| -> Vec<Vec<Value>> {
                results[children[i]]
                    .rows
                    .iter()
                    .map(|row| {
                        columns
                            .iter()
                            .zip(&dtypes)
                            .map(|(&c, &t)| row[c].clone().coerce_to(t))
                            .collect()
                    })
                    .collect()
            };
            set_operation(*kind, side(0), side(1), options.set_semantics)
        }
        BoundNode::Sort { keys, limit, columns } => {
            let mut rows = results[children[0]].rows.clone();
            rows.sort_by(|a, b| sort_rows(a, b, keys));
            if let Some(n) = limit {
                rows.truncate(usize::try_from(*n).unwrap_or(usize::MAX));
            }
            rows.iter().map(|r| project(r, columns)).collect()
        }
    };
    let mut rel = Relation::new(signature, rows);
    rel.ordered = matches!(bound, BoundNode::Sort { .. });
    results.push(rel);
    Ok(id)
}

/// Orders by the keys, then by the whole input row ascending so that ties
/// have one deterministic order.
pub(crate) fn sort_rows(a: &[Value], b: &[Value], keys: &[(usize, Direction)]) -> Ordering {
    for &(i, dir) in keys {
        let ord = a[i].sort_cmp(&b[i]);
        let ord = match dir {
            Direction::Asc => ord,
            Direction::Desc => ord.reverse(),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| x.sort_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

fn project(row: &[Value], columns: &[usize]) -> Vec<Value> {
    columns.iter().map(|&i| row[i].clone()).collect()
}

fn select<'r>(
    rows: impl Iterator<Item = &'r Vec<Value>>,
    predicate: Option<&BoundPredicate>,
    columns: &[usize],
    distinct: bool,
) -> Vec<Vec<Value>> {
    let out = rows
        .filter(|row| predicate.is_none_or(|p| eval_predicate(p, row) == Some(true)))
        .map(|row| project(row, columns));
    if distinct {
        dedup(out)
    } else {
        out.collect()
    }
}

/// Keeps the first occurrence of every row.
fn dedup(rows: impl IntoIterator<Item = Vec<Value>>) -> Vec<Vec<Value>> {
    let mut seen = HashSet::new();
    rows.into_iter().filter(|r| seen.insert(r.clone())).collect()
}

fn aggregate(rows: &[Vec<Value>], groups: &[usize], outputs: &[BoundAggregate]) -> Vec<Vec<Value>> {
    let mut order: Vec<Vec<Value>> = Vec::new();
    let mut members: HashMap<Vec<Value>, Vec<&Vec<Value>>> = HashMap::new();
    for row in rows {
        let key = project(row, groups);
        members
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(row);
    }
    if groups.is_empty() && order.is_empty() {
        // a global aggregate yields one row even over no input
        order.push(Vec::new());
        members.insert(Vec::new(), Vec::new());
    }
    order
        .into_iter()
        .map(|key| {
            let group = &members[&key];
            outputs
                .iter()
                .map(|o| match *o {
                    BoundAggregate::Group(i) => group.first().map_or(Value::Null, |r| r[i].clone()),
                    BoundAggregate::CountStar => Value::Integer(group.len() as i64),
                    BoundAggregate::Agg(func, i) => aggregate_column(func, group.iter().map(|r| &r[i])),
                })
                .collect()
        })
        .collect()
}

fn aggregate_column<'v>(func: AggFunc, values: impl Iterator<Item = &'v Value>) -> Value {
    let present: Vec<&Value> = values.filter(|v| !v.is_null()).collect();
    match func {
        AggFunc::Count => Value::Integer(present.len() as i64),
        _ if present.is_empty() => Value::Null,
        AggFunc::Sum => Value::Real(present.iter().filter_map(|v| v.as_f64()).sum()),
        AggFunc::Avg => {
            let sum: f64 = present.iter().filter_map(|v| v.as_f64()).sum();
            Value::Real(sum / present.len() as f64)
        }
        AggFunc::Min => (*present.iter().min_by(|a, b| a.sort_cmp(b)).expect("non-empty")).clone(),
        AggFunc::Max => (*present.iter().max_by(|a, b| a.sort_cmp(b)).expect("non-empty")).clone(),
    }
}

fn set_operation(kind: SetKind, left: Vec<Vec<Value>>, right: Vec<Vec<Value>>, semantics: SetSemantics) -> Vec<Vec<Value>> {
    match (kind, semantics) {
        (SetKind::Union, SetSemantics::Distinct) => dedup(left.into_iter().chain(right)),
        (SetKind::Union, SetSemantics::Bag) => left.into_iter().chain(right).collect(),
        (SetKind::Intersect, SetSemantics::Distinct) => {
            let right: HashSet<_> = right.into_iter().collect();
            dedup(left.into_iter().filter(|r| right.contains(r)))
        }
        (SetKind::Except, SetSemantics::Distinct) => {
            let right: HashSet<_> = right.into_iter().collect();
            dedup(left.into_iter().filter(|r| !right.contains(r)))
        }
        (SetKind::Intersect | SetKind::Except, SetSemantics::Bag) => {
            let mut counts: HashMap<Vec<Value>, usize> = HashMap::new();
            for r in right {
                *counts.entry(r).or_default() += 1;
            }
            let keep_matches = kind == SetKind::Intersect;
            left.into_iter()
                .filter(|r| {
                    let matched = match counts.get_mut(r) {
                        Some(n) if *n > 0 => {
                            *n -= 1;
                            true
                        }
                        _ => false,
                    };
                    matched == keep_matches
                })
                .collect()
        }
    }
}

/// Three-valued evaluation: `None` is SQL's unknown.
pub(crate) fn eval_predicate(p: &BoundPredicate, row: &[Value]) -> Option<bool> {
    match p {
        BoundPredicate::Compare(l, op, r) => {
            let ord = operand(l, row).sql_cmp(operand(r, row))?;
            Some(match op {
                CompareOp::Eq => ord == Ordering::Equal,
                CompareOp::Ne => ord != Ordering::Equal,
                CompareOp::Lt => ord == Ordering::Less,
                CompareOp::Le => ord != Ordering::Greater,
                CompareOp::Gt => ord == Ordering::Greater,
                CompareOp::Ge => ord != Ordering::Less,
            })
        }
        BoundPredicate::Like(o, pattern) => match operand(o, row) {
            Value::Null => None,
            Value::Text(s) => Some(like(s, pattern)),
            other => Some(like(&other.to_string(), pattern)),
        },
        BoundPredicate::IsNull(o, negated) => Some(operand(o, row).is_null() != *negated),
        BoundPredicate::In(o, list) => {
            let v = operand(o, row);
            if v.is_null() {
                return None;
            }
            let mut unknown = false;
            for item in list {
                match v.sql_cmp(item) {
                    Some(Ordering::Equal) => return Some(true),
                    None => unknown |= item.is_null(),
                    Some(_) => {}
                }
            }
            if unknown {
                None
            } else {
                Some(false)
            }
        }
        BoundPredicate::And(a, b) => match (eval_predicate(a, row), eval_predicate(b, row)) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(true), Some(true)) => Some(true),
            _ => None,
        },
        BoundPredicate::Or(a, b) => match (eval_predicate(a, row), eval_predicate(b, row)) {
            (Some(true), _) | (_, Some(true)) => Some(true),
            (Some(false), Some(false)) => Some(false),
            _ => None,
        },
        BoundPredicate::Not(a) => eval_predicate(a, row).map(|b| !b),
    }
}

fn operand<'v>(o: &'v BoundOperand, row: &'v [Value]) -> &'v Value {
    match o {
        BoundOperand::Column(i) => &row[*i],
        BoundOperand::Literal(v) => v,
    }
}

/// SQL LIKE with `%` and `_`; ASCII letters match case-insensitively.
pub fn like(text: &str, pattern: &str) -> bool {
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    // dp[j]: pattern prefix of length j matches the text prefix so far
    let mut dp = vec![false; p.len() + 1];
    dp[0] = true;
    for j in 1..=p.len() {
        dp[j] = dp[j - 1] && p[j - 1] == '%';
    }
    for &c in &t {
        let mut next = vec![false; p.len() + 1];
        for j in 1..=p.len() {
            next[j] = match p[j - 1] {
                '%' => next[j - 1] || dp[j],
                '_' => dp[j - 1],
                pc => dp[j - 1] && pc.eq_ignore_ascii_case(&c),
            };
        }
        dp = next;
    }
    dp[p.len()]
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn like_patterns() {
        assert!(like("Gonzalo", "g%"));
        assert!(like("abc", "a_c"));
        assert!(like("", "%"));
        assert!(!like("abc", "a_"));
        assert!(like("a%b", "a%b"));
        assert!(!like("ab", "abc%"));
    }

    #[test]
    fn set_operations_distinct_and_bag() {
        let v = |i: i64| vec![Value::Integer(i)];
        let left = vec![v(1), v(1), v(2), v(3)];
        let right = vec![v(1), v(3), v(3)];
        assert_eq!(set_operation(SetKind::Except, left.clone(), right.clone(), SetSemantics::Distinct), vec![v(2)]);
        assert_eq!(
            set_operation(SetKind::Except, left.clone(), right.clone(), SetSemantics::Bag),
            vec![v(1), v(2)]
        );
        assert_eq!(
            set_operation(SetKind::Intersect, left.clone(), right.clone(), SetSemantics::Distinct),
            vec![v(1), v(3)]
        );
        assert_eq!(set_operation(SetKind::Union, left, right, SetSemantics::Distinct), vec![v(1), v(2), v(3)]);
    }

    #[test]
    fn global_aggregate_over_empty_input() {
        let out = aggregate(&[], &[], &[BoundAggregate::CountStar, BoundAggregate::Agg(AggFunc::Sum, 0)]);
        assert_eq!(out, vec![vec![Value::Integer(0), Value::Null]]);
        assert!(aggregate(&[], &[0], &[BoundAggregate::CountStar]).is_empty());
    }

    #[test]
    fn three_valued_logic() {
        let null_eq = BoundPredicate::Compare(BoundOperand::Column(0), CompareOp::Eq, BoundOperand::Literal(Value::Integer(1)));
        let row = [Value::Null];
        assert_eq!(eval_predicate(&null_eq, &row), None);
        assert_eq!(eval_predicate(&BoundPredicate::Not(Box::new(null_eq.clone())), &row), None);
        let always_false = BoundPredicate::IsNull(BoundOperand::Literal(Value::Integer(1)), false);
        assert_eq!(
            eval_predicate(&BoundPredicate::And(Box::new(null_eq.clone()), Box::new(always_false)), &row),
            Some(false)
        );
        let in_list = BoundPredicate::In(BoundOperand::Literal(Value::Integer(2)), vec![Value::Integer(1), Value::Null]);
        assert_eq!(eval_predicate(&in_list, &row), None);
    }
}

//! Compiles a validated plan into a SQL program with one `WITH` clause per node.
//!
//! Clauses are named `Step_1..Step_n` bottom-up. Output columns get stable
//! names: `table_column` for qualified columns, the alias when one is given,
//! and `agg_<position>` for unaliased aggregates.

use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostic::Diagnostic;
use crate::plan::{AggFunc, CompareOp, Direction, Plan};
use crate::schema::Schema;
use crate::semantic::{analyze, BoundAggregate, BoundNode, BoundOperand, BoundPredicate, NodeInfo, SetKind};
use crate::value::Value;

/// How TopSort's row limit is spelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dialect {
    /// `LIMIT n`
    #[default]
    Limit,
    /// `FETCH FIRST n ROWS ONLY`
    FetchFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CteClause {
    pub name: String,
    pub sql: String,
    /// Output column names, in order.
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CteProgram {
    pub clauses: Vec<CteClause>,
    pub final_select: String,
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("plan does not validate: {}", .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Invalid(Vec<Diagnostic>),
}

pub fn compile(plan: &Plan, schema: &Schema) -> Result<CteProgram, CompileError> {
    compile_with(plan, schema, Dialect::default())
}

pub fn compile_with(plan: &Plan, schema: &Schema, dialect: Dialect) -> Result<CteProgram, CompileError> {
    let analysis = analyze(plan, schema);
    if !analysis.ok() {
        return Err(CompileError::Invalid(analysis.diagnostics));
    }
    let mut cx = Compiler {
        schema,
        nodes: &analysis.nodes,
        dialect,
        clauses: Vec::with_capacity(analysis.nodes.len()),
    };
    cx.node(plan);
    let last = cx.clauses.last().expect("plans have a root").name.clone();
    Ok(CteProgram {
        final_select: format!("SELECT * FROM {last}"),
        clauses: cx.clauses,
    })
}

/// `WITH Step_1 AS (...), ... SELECT * FROM Step_n`
pub fn render(program: &CteProgram) -> String {
    let mut out = String::from("WITH ");
    for (i, c) in program.clauses.iter().enumerate() {
        if i > 0 {
            out.push_str(",\n     ");
        }
        write!(out, "{} AS ({})", c.name, c.sql).unwrap();
    }
    out.push('\n');
    out.push_str(&program.final_select);
    out
}

struct Compiler<'a> {
    schema: &'a Schema,
    nodes: &'a [NodeInfo],
    dialect: Dialect,
    clauses: Vec<CteClause>,
}

impl Compiler<'_> {
    fn node(&mut self, plan: &Plan) -> usize {
        let children: Vec<usize> = plan.children().iter().map(|c| self.node(c)).collect();
        let id = self.clauses.len();
        let name = format!("Step_{}", id + 1);
        let info = &self.nodes[id];
        let sig = info.signature.as_ref().expect("validated");
        let columns = unique(
            sig.columns()
                .iter()
                .zip(plan.outputs())
                .enumerate()
                .map(|(i, (c, o))| match (&o.alias, o.is_aggregate(), &c.qualifier) {
                    (Some(alias), _, _) => alias.clone(),
                    (None, true, _) => format!("agg_{}", i + 1),
                    (None, false, Some(q)) => format!("{q}_{}", c.name),
                    (None, false, None) => c.name.clone(),
                })
                .collect(),
        );
        // SQL spelling of every input position
        let input: Vec<String> = match info.bound.as_ref().expect("validated") {
            BoundNode::Scan { table, .. } => {
                let t = self.schema.table(table).expect("validated");
                t.columns.iter().map(|c| format!("{}.{}", quote(&t.name), quote(&c.name))).collect()
            }
            _ => children
                .iter()
                .flat_map(|&c| {
                    let clause = &self.clauses[c];
                    clause.columns.iter().map(move |col| format!("{}.{}", clause.name, quote(col)))
                })
                .collect(),
        };
        let select_list = |positions: &[usize]| -> String {
            positions
                .iter()
                .zip(&columns)
                .map(|(&p, n)| format!("{} AS {}", input[p], quote(n)))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let child = |i: usize| self.clauses[children[i]].name.clone();
        let sql = match info.bound.as_ref().expect("validated") {
            BoundNode::Scan {
                table,
                predicate,
                distinct,
                columns: pos,
            } => {
                let mut s = format!("SELECT {}{} FROM {}", distinct_kw(*distinct), select_list(pos), quote(table));
                if let Some(p) = predicate {
                    write!(s, " WHERE {}", predicate_sql(p, &input)).unwrap();
                }
                s
            }
            BoundNode::Filter {
                predicate,
                distinct,
                columns: pos,
            } => format!(
                "SELECT {}{} FROM {} WHERE {}",
                distinct_kw(*distinct),
                select_list(pos),
                child(0),
                predicate_sql(predicate, &input)
            ),
            BoundNode::Join { predicate, columns: pos } => format!(
                "SELECT {} FROM {} JOIN {} ON {}",
                select_list(pos),
                child(0),
                child(1),
                predicate_sql(predicate, &input)
            ),
            BoundNode::Aggregate { groups, outputs } => {
                let items: Vec<String> = outputs
                    .iter()
                    .zip(&columns)
                    .map(|(o, n)| {
                        let expr = match *o {
                            BoundAggregate::Group(p) => input[p].clone(),
                            BoundAggregate::CountStar => "COUNT(*)".to_string(),
                            BoundAggregate::Agg(f, p) => format!("{}({})", agg_sql(f), input[p]),
                        };
                        format!("{expr} AS {}", quote(n))
                    })
                    .collect();
                let mut s = format!("SELECT {} FROM {}", items.join(", "), child(0));
                if !groups.is_empty() {
                    let keys: Vec<&str> = groups.iter().map(|&g| input[g].as_str()).collect();
                    write!(s, " GROUP BY {}", keys.join(", ")).unwrap();
                }
                s
            }
            BoundNode::SetOp { kind, columns: pos } => {
                let left = &self.clauses[children[0]];
                let right = &self.clauses[children[1]];
                let l: Vec<String> = pos
                    .iter()
                    .zip(&columns)
                    .map(|(&p, n)| format!("{}.{} AS {}", left.name, quote(&left.columns[p]), quote(n)))
                    .collect();
                let r: Vec<String> = pos
                    .iter()
                    .map(|&p| format!("{}.{}", right.name, quote(&right.columns[p])))
                    .collect();
                let op = match kind {
                    SetKind::Except => "EXCEPT",
                    SetKind::Intersect => "INTERSECT",
                    SetKind::Union => "UNION",
                };
                format!(
                    "SELECT {} FROM {} {op} SELECT {} FROM {}",
                    l.join(", "),
                    left.name,
                    r.join(", "),
                    right.name
                )
            }
            BoundNode::Sort {
                keys,
                limit,
                columns: pos,
            } => {
                // ties are broken by the whole input row, ascending
                let order: Vec<String> = keys
                    .iter()
                    .map(|&(p, d)| match d {
                        Direction::Asc => format!("{} ASC", input[p]),
                        Direction::Desc => format!("{} DESC", input[p]),
                    })
                    .chain(input.iter().map(|c| format!("{c} ASC")))
                    .collect();
                let mut s = format!("SELECT {} FROM {} ORDER BY {}", select_list(pos), child(0), order.join(", "));
                if let Some(n) = limit {
                    match self.dialect {
                        Dialect::Limit => write!(s, " LIMIT {n}").unwrap(),
                        Dialect::FetchFirst => write!(s, " FETCH FIRST {n} ROWS ONLY").unwrap(),
                    }
                }
                s
            }
        };
        self.clauses.push(CteClause { name, sql, columns });
        id
    }
}

fn distinct_kw(distinct: bool) -> &'static str {
    if distinct {
        "DISTINCT "
    } else {
        ""
    }
}

fn agg_sql(f: AggFunc) -> &'static str {
    f.keyword()
}

/// Appends `_2`, `_3`, ... to names already taken (case-insensitively).
fn unique(names: Vec<String>) -> Vec<String> {
    let mut taken: Vec<String> = Vec::with_capacity(names.len());
    for n in names {
        let mut candidate = n.clone();
        let mut k = 2;
        while taken.iter().any(|t| t.eq_ignore_ascii_case(&candidate)) {
            candidate = format!("{n}_{k}");
            k += 1;
        }
        taken.push(candidate);
    }
    taken
}

pub fn quote(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

fn predicate_sql(p: &BoundPredicate, input: &[String]) -> String {
    let operand = |o: &BoundOperand| match o {
        BoundOperand::Column(i) => input[*i].clone(),
        BoundOperand::Literal(v) => literal_sql(v),
    };
    match p {
        BoundPredicate::Compare(l, op, r) => {
            let sym = match op {
                CompareOp::Eq => "=",
                CompareOp::Ne => "<>",
                CompareOp::Lt => "<",
                CompareOp::Le => "<=",
                CompareOp::Gt => ">",
                CompareOp::Ge => ">=",
            };
            format!("{} {sym} {}", operand(l), operand(r))
        }
        BoundPredicate::Like(o, pattern) => format!("{} LIKE {}", operand(o), literal_sql(&Value::Text(pattern.clone()))),
        BoundPredicate::IsNull(o, false) => format!("{} IS NULL", operand(o)),
        BoundPredicate::IsNull(o, true) => format!("{} IS NOT NULL", operand(o)),
        BoundPredicate::In(o, list) => {
            let items: Vec<String> = list.iter().map(literal_sql).collect();
            format!("{} IN ({})", operand(o), items.join(", "))
        }
        BoundPredicate::And(a, b) => format!("({} AND {})", predicate_sql(a, input), predicate_sql(b, input)),
        BoundPredicate::Or(a, b) => format!("({} OR {})", predicate_sql(a, input), predicate_sql(b, input)),
        BoundPredicate::Not(a) => format!("(NOT {})", predicate_sql(a, input)),
    }
}

fn literal_sql(v: &Value) -> String {
    match v {
        Value::Null => "NULL".to_string(),
        Value::Integer(i) => i.to_string(),
        Value::Real(r) => format!("{r:?}"),
        Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Boolean(b) => if *b { "1" } else { "0" }.to_string(),
        Value::Date(_) => format!("'{v}'"),
    }
}

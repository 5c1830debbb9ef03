//! Schema-aware validation and name binding.
//!
//! Signatures are synthesized bottom-up: a Scan sees every column of its
//! table, every other node sees only what its children output. The same
//! pass produces [`BoundNode`]s with references resolved to positions, which
//! the interpreter and the CTE compiler consume.

use std::fmt;

use serde::Serialize;

use crate::diagnostic::{Code, Diagnostic};
use crate::plan::{
    AggFunc, ColumnRef, CompareOp, Direction, Literal, Operand, OperatorArgs, OutputExpr, OutputKind, Plan,
    Predicate,
};
use crate::schema::Schema;
use crate::value::{parse_date, DataType, Value};

/// One column of a tuple stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignatureColumn {
    /// Table the column came from; `None` for aliases and aggregate results.
    pub qualifier: Option<String>,
    pub name: String,
    pub dtype: DataType,
}

impl SignatureColumn {
    pub fn qualified(table: &str, column: &str, dtype: DataType) -> SignatureColumn {
        SignatureColumn {
            qualifier: Some(table.to_string()),
            name: column.to_string(),
            dtype,
        }
    }

    pub fn named(name: &str, dtype: DataType) -> SignatureColumn {
        SignatureColumn {
            qualifier: None,
            name: name.to_string(),
            dtype,
        }
    }

    /// `table.column`, or the bare alias / aggregate text.
    pub fn display_name(&self) -> String {
        match &self.qualifier {
            Some(q) => format!("{q}.{}", self.name),
            None => self.name.clone(),
        }
    }

    fn same_name(&self, other: &SignatureColumn) -> bool {
        self.name.eq_ignore_ascii_case(&other.name)
            && match (&self.qualifier, &other.qualifier) {
                (Some(a), Some(b)) => a.eq_ignore_ascii_case(b),
                (None, None) => true,
                _ => false,
            }
    }
}

/// The ordered column shape of a tuple stream.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ColumnSignature(Vec<SignatureColumn>);

impl ColumnSignature {
    pub fn new(columns: Vec<SignatureColumn>) -> ColumnSignature {
        ColumnSignature(columns)
    }

    pub fn columns(&self) -> &[SignatureColumn] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(SignatureColumn::display_name).collect()
    }

    pub fn dtypes(&self) -> Vec<DataType> {
        self.0.iter().map(|c| c.dtype).collect()
    }

    fn concat(&self, other: &ColumnSignature) -> ColumnSignature {
        ColumnSignature(self.0.iter().chain(&other.0).cloned().collect())
    }
}

impl fmt::Display for ColumnSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self.0.iter().map(|c| format!("{}: {}", c.display_name(), c.dtype)).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
    /// Output signature of every node, in bottom-up step order; `None`
    /// where the node or one of its inputs failed.
    pub signatures: Vec<Option<ColumnSignature>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundOperand {
    Column(usize),
    Literal(Value),
}

/// A predicate with column references replaced by input positions.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundPredicate {
    Compare(BoundOperand, CompareOp, BoundOperand),
    Like(BoundOperand, String),
    IsNull(BoundOperand, bool),
    In(BoundOperand, Vec<Value>),
    And(Box<BoundPredicate>, Box<BoundPredicate>),
    Or(Box<BoundPredicate>, Box<BoundPredicate>),
    Not(Box<BoundPredicate>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundAggregate {
    Group(usize),
    Agg(AggFunc, usize),
    CountStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    Except,
    Intersect,
    Union,
}

/// A node with every name resolved against its input signature.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundNode {
    Scan {
        table: String,
        predicate: Option<BoundPredicate>,
        distinct: bool,
        columns: Vec<usize>,
    },
    Filter {
        predicate: BoundPredicate,
        distinct: bool,
        columns: Vec<usize>,
    },
    /// Positions refer to the left columns followed by the right columns.
    Join {
        predicate: BoundPredicate,
        columns: Vec<usize>,
    },
    Aggregate {
        groups: Vec<usize>,
        outputs: Vec<BoundAggregate>,
    },
    SetOp {
        kind: SetKind,
        columns: Vec<usize>,
    },
    Sort {
        keys: Vec<(usize, Direction)>,
        limit: Option<u64>,
        columns: Vec<usize>,
    },
}

/// Per-step analysis result, in bottom-up order.
#[derive(Debug, Clone)]
pub struct NodeInfo {
    pub signature: Option<ColumnSignature>,
    pub bound: Option<BoundNode>,
    /// Signature of the stream the node reads (the table for a Scan, the
    /// concatenated inputs for a Join).
    pub input: Option<ColumnSignature>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub nodes: Vec<NodeInfo>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Analysis {
    pub fn ok(&self) -> bool {
        !self.diagnostics.iter().any(Diagnostic::is_error)
    }

    pub fn root_signature(&self) -> Option<&ColumnSignature> {
        self.nodes.last().and_then(|n| n.signature.as_ref())
    }
}

pub fn validate(plan: &Plan, schema: &Schema) -> ValidationReport {
    let analysis = analyze(plan, schema);
    ValidationReport {
        ok: analysis.ok(),
        signatures: analysis.nodes.into_iter().map(|n| n.signature).collect(),
        diagnostics: analysis.diagnostics,
    }
}

/// The root node's signature, or the diagnostics explaining why the plan is invalid.
pub fn output_signature(plan: &Plan, schema: &Schema) -> Result<ColumnSignature, Vec<Diagnostic>> {
    let analysis = analyze(plan, schema);
    if !analysis.ok() {
        return Err(analysis.diagnostics);
    }
    Ok(analysis.root_signature().cloned().expect("valid plans have signatures"))
}

pub fn analyze(plan: &Plan, schema: &Schema) -> Analysis {
    let mut cx = Analyzer {
        schema,
        nodes: Vec::with_capacity(plan.step_count()),
        diagnostics: Vec::new(),
    };
    cx.node(plan);
    Analysis {
        nodes: cx.nodes,
        diagnostics: cx.diagnostics,
    }
}

struct Analyzer<'a> {
    schema: &'a Schema,
    nodes: Vec<NodeInfo>,
    diagnostics: Vec<Diagnostic>,
}

/// Where names are looked up.
struct Scope<'s> {
    sig: &'s ColumnSignature,
    /// Set inside a Scan: bare names are columns of this table.
    table: Option<&'s str>,
}

type Step<T> = Result<T, Diagnostic>;

impl<'a> Analyzer<'a> {
    /// Analyzes `plan` and returns the index of its entry in `self.nodes`.
    fn node(&mut self, plan: &Plan) -> usize {
        let child_ids: Vec<usize> = plan.children().iter().map(|c| self.node(c)).collect();
        let step = self.nodes.len() + 1;
        let child_sigs: Option<Vec<ColumnSignature>> =
            child_ids.iter().map(|&i| self.nodes[i].signature.clone()).collect();
        let info = match child_sigs {
            // an input already failed; its diagnostics are recorded
            None => NodeInfo {
                signature: None,
                bound: None,
                input: None,
            },
            Some(sigs) => {
                let mut errors = Vec::new();
                let info = self.bind(plan, &sigs, step, &mut errors);
                self.diagnostics.extend(errors);
                info
            }
        };
        self.nodes.push(info);
        self.nodes.len() - 1
    }

    fn bind(&self, plan: &Plan, inputs: &[ColumnSignature], step: usize, errors: &mut Vec<Diagnostic>) -> NodeInfo {
        let failed = NodeInfo {
            signature: None,
            bound: None,
            input: None,
        };
        let (input, table) = match plan.args() {
            OperatorArgs::Scan { table, .. } => match self.schema.table(table) {
                Some(t) => (t.signature(), Some(t.name.as_str())),
                None => {
                    errors.push(Diagnostic::at_step(Code::UnknownTable, step, format!("unknown table `{table}`")));
                    return failed;
                }
            },
            OperatorArgs::Join { .. } => {
                let (l, r) = (&inputs[0], &inputs[1]);
                let before = errors.len();
                for c in l.columns() {
                    if r.columns().iter().any(|d| c.same_name(d)) {
                        errors.push(Diagnostic::at_step(
                            Code::NameCollision,
                            step,
                            format!("both Join inputs output `{}`; alias one of them", c.display_name()),
                        ));
                    }
                }
                if errors.len() > before {
                    return failed;
                }
                (l.concat(r), None)
            }
            _ => (inputs[0].clone(), None),
        };
        let scope = Scope { sig: &input, table };
        let result = match plan.args() {
            OperatorArgs::Scan {
                table,
                predicate,
                distinct,
                outputs,
            } => self.bind_columns(&scope, outputs, step).and_then(|(columns, sig)| {
                let predicate = predicate.as_ref().map(|p| self.bind_predicate(&scope, p, step)).transpose()?;
                Ok((
                    BoundNode::Scan {
                        table: self.schema.table(table).map(|t| t.name.clone()).unwrap_or_default(),
                        predicate,
                        distinct: *distinct,
                        columns,
                    },
                    sig,
                ))
            }),
            OperatorArgs::Filter {
                predicate,
                distinct,
                outputs,
            } => self.bind_predicate(&scope, predicate, step).and_then(|predicate| {
                let (columns, sig) = self.bind_columns(&scope, outputs, step)?;
                Ok((
                    BoundNode::Filter {
                        predicate,
                        distinct: *distinct,
                        columns,
                    },
                    sig,
                ))
            }),
            OperatorArgs::Join { predicate, outputs } => {
                self.bind_predicate(&scope, predicate, step).and_then(|predicate| {
                    let (columns, sig) = self.bind_columns(&scope, outputs, step)?;
                    Ok((BoundNode::Join { predicate, columns }, sig))
                })
            }
            OperatorArgs::Aggregate { group_by, outputs } => self.bind_aggregate(&scope, group_by, outputs, step),
            OperatorArgs::Except { outputs } | OperatorArgs::Intersect { outputs } | OperatorArgs::Union { outputs } => {
                let kind = match plan.args() {
                    OperatorArgs::Except { .. } => SetKind::Except,
                    OperatorArgs::Intersect { .. } => SetKind::Intersect,
                    _ => SetKind::Union,
                };
                self.bind_set_op(kind, &inputs[0], &inputs[1], outputs, step)
            }
            OperatorArgs::Sort { order_by, outputs } | OperatorArgs::TopSort { order_by, outputs, .. } => {
                let limit = match plan.args() {
                    OperatorArgs::TopSort { rows, .. } => Some(*rows),
                    _ => None,
                };
                order_by
                    .iter()
                    .map(|k| self.resolve(&scope, &k.column, step).map(|i| (i, k.direction)))
                    .collect::<Step<Vec<_>>>()
                    .and_then(|keys| {
                        let (columns, sig) = self.bind_columns(&scope, outputs, step)?;
                        Ok((BoundNode::Sort { keys, limit, columns }, sig))
                    })
            }
        };
        match result.and_then(|(bound, sig)| check_unique(sig, step).map(|sig| (bound, sig))) {
            Ok((bound, signature)) => NodeInfo {
                signature: Some(signature),
                bound: Some(bound),
                input: Some(input),
            },
            Err(d) => {
                errors.push(d);
                failed
            }
        }
    }

    fn resolve(&self, scope: &Scope<'_>, r: &ColumnRef, step: usize) -> Step<usize> {
        let qualifier = r.table.as_deref().or(scope.table);
        let matches: Vec<usize> = scope
            .sig
            .columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.name.eq_ignore_ascii_case(&r.column)
                    && match (qualifier, &c.qualifier) {
                        (Some(q), Some(cq)) => q.eq_ignore_ascii_case(cq),
                        (None, None) => true,
                        _ => false,
                    }
            })
            .map(|(i, _)| i)
            .collect();
        match matches.as_slice() {
            [i] => Ok(*i),
            [] => Err(self.unresolved(scope, r, step)),
            _ => Err(Diagnostic::at_step(
                Code::AmbiguousColumn,
                step,
                format!("`{r}` matches more than one input column"),
            )),
        }
    }

    fn unresolved(&self, scope: &Scope<'_>, r: &ColumnRef, step: usize) -> Diagnostic {
        if let Some(table) = scope.table {
            return Diagnostic::at_step(
                Code::UnknownColumn,
                step,
                format!("table `{table}` has no column `{}`", r.column),
            );
        }
        match &r.table {
            Some(t) => match self.schema.resolve_parts(t, &r.column) {
                Ok(_) => Diagnostic::at_step(
                    Code::ColumnNotVisible,
                    step,
                    format!("`{r}` is not output by any input of this step"),
                ),
                Err(crate::schema::ResolveError::UnknownTable(_)) => {
                    Diagnostic::at_step(Code::UnknownTable, step, format!("unknown table `{t}` in `{r}`"))
                }
                Err(_) => Diagnostic::at_step(Code::UnknownColumn, step, format!("table `{t}` has no column `{}`", r.column)),
            },
            None => {
                let qualified_exists = scope.sig.columns().iter().any(|c| c.name.eq_ignore_ascii_case(&r.column));
                if qualified_exists {
                    Diagnostic::at_step(
                        Code::MissingQualifier,
                        step,
                        format!("`{}` must be qualified with its table name", r.column),
                    )
                } else {
                    Diagnostic::at_step(Code::UnknownColumn, step, format!("no input column or alias named `{}`", r.column))
                }
            }
        }
    }

    fn bind_columns(&self, scope: &Scope<'_>, outputs: &[OutputExpr], step: usize) -> Step<(Vec<usize>, ColumnSignature)> {
        let mut columns = Vec::with_capacity(outputs.len());
        let mut sig = Vec::with_capacity(outputs.len());
        for o in outputs {
            let OutputKind::Column(r) = &o.kind else {
                return Err(Diagnostic::at_step(
                    Code::MalformedClause,
                    step,
                    format!("aggregate `{}` outside an Aggregate", o.expr_text()),
                ));
            };
            let i = self.resolve(scope, r, step)?;
            columns.push(i);
            sig.push(output_column(&scope.sig.columns()[i], o));
        }
        Ok((columns, ColumnSignature(sig)))
    }

    fn bind_aggregate(
        &self,
        scope: &Scope<'_>,
        group_by: &[ColumnRef],
        outputs: &[OutputExpr],
        step: usize,
    ) -> Step<(BoundNode, ColumnSignature)> {
        let groups = group_by
            .iter()
            .map(|g| self.resolve(scope, g, step))
            .collect::<Step<Vec<_>>>()?;
        let mut bound = Vec::with_capacity(outputs.len());
        let mut sig = Vec::with_capacity(outputs.len());
        for o in outputs {
            let (b, col) = match &o.kind {
                OutputKind::Column(r) => {
                    let i = self.resolve(scope, r, step)?;
                    if !groups.contains(&i) {
                        return Err(Diagnostic::at_step(
                            Code::UngroupedColumn,
                            step,
                            format!("`{r}` is neither aggregated nor listed in GroupBy"),
                        ));
                    }
                    (BoundAggregate::Group(i), output_column(&scope.sig.columns()[i], o))
                }
                OutputKind::Agg { func, arg } => {
                    let i = self.resolve(scope, arg, step)?;
                    let input = scope.sig.columns()[i].dtype;
                    let dtype = match func {
                        AggFunc::Sum | AggFunc::Avg if !input.is_numeric() => {
                            return Err(Diagnostic::at_step(
                                Code::TypeMismatch,
                                step,
                                format!("{} needs a numeric column, `{arg}` is {input}", func.keyword()),
                            ))
                        }
                        AggFunc::Sum | AggFunc::Avg => DataType::Real,
                        AggFunc::Min | AggFunc::Max => input,
                        AggFunc::Count => DataType::Integer,
                    };
                    (BoundAggregate::Agg(*func, i), aggregate_column(o, dtype))
                }
                OutputKind::CountStar => (BoundAggregate::CountStar, aggregate_column(o, DataType::Integer)),
            };
            bound.push(b);
            sig.push(col);
        }
        Ok((BoundNode::Aggregate { groups, outputs: bound }, ColumnSignature(sig)))
    }

    fn bind_set_op(
        &self,
        kind: SetKind,
        left: &ColumnSignature,
        right: &ColumnSignature,
        outputs: &[OutputExpr],
        step: usize,
    ) -> Step<(BoundNode, ColumnSignature)> {
        if left.len() != right.len() {
            return Err(Diagnostic::at_step(
                Code::SetArityMismatch,
                step,
                format!("inputs have {} and {} columns", left.len(), right.len()),
            ));
        }
        let mut unified = Vec::with_capacity(left.len());
        for (i, (l, r)) in left.columns().iter().zip(right.columns()).enumerate() {
            match l.dtype.unify(r.dtype) {
                Some(t) => unified.push(t),
                None => {
                    return Err(Diagnostic::at_step(
                        Code::TypeMismatch,
                        step,
                        format!("column {} is {} on the left and {} on the right", i + 1, l.dtype, r.dtype),
                    ))
                }
            }
        }
        let scope = Scope { sig: left, table: None };
        let (columns, mut sig) = self.bind_columns(&scope, outputs, step)?;
        for (c, &i) in sig.0.iter_mut().zip(&columns) {
            c.dtype = unified[i];
        }
        Ok((BoundNode::SetOp { kind, columns }, sig))
    }

    fn bind_predicate(&self, scope: &Scope<'_>, p: &Predicate, step: usize) -> Step<BoundPredicate> {
        Ok(match p {
            Predicate::Compare { left, op, right } => {
                let (l, lt) = self.bind_operand(scope, left, step)?;
                let (r, rt) = self.bind_operand(scope, right, step)?;
                if !compatible(&lt, &rt) {
                    return Err(Diagnostic::at_step(
                        Code::TypeMismatch,
                        step,
                        format!("cannot compare {left} ({lt}) with {right} ({rt})"),
                    ));
                }
                BoundPredicate::Compare(l, *op, r)
            }
            Predicate::Like { operand, pattern } => {
                let (o, t) = self.bind_operand(scope, operand, step)?;
                if !compatible(&t, &OperandType::Literal(Literal::Text(pattern.clone()))) || matches!(t, OperandType::Column(DataType::Date)) {
                    return Err(Diagnostic::at_step(Code::TypeMismatch, step, format!("LIKE needs text, `{operand}` is {t}")));
                }
                BoundPredicate::Like(o, pattern.clone())
            }
            Predicate::IsNull { operand, negated } => BoundPredicate::IsNull(self.bind_operand(scope, operand, step)?.0, *negated),
            Predicate::In { operand, list } => {
                let (o, t) = self.bind_operand(scope, operand, step)?;
                for lit in list {
                    if !compatible(&t, &OperandType::Literal(lit.clone())) {
                        return Err(Diagnostic::at_step(
                            Code::TypeMismatch,
                            step,
                            format!("IN list item {lit} does not match `{operand}` ({t})"),
                        ));
                    }
                }
                BoundPredicate::In(o, list.iter().map(literal_value).collect())
            }
            Predicate::And(a, b) => BoundPredicate::And(
                Box::new(self.bind_predicate(scope, a, step)?),
                Box::new(self.bind_predicate(scope, b, step)?),
            ),
            Predicate::Or(a, b) => BoundPredicate::Or(
                Box::new(self.bind_predicate(scope, a, step)?),
                Box::new(self.bind_predicate(scope, b, step)?),
            ),
            Predicate::Not(a) => BoundPredicate::Not(Box::new(self.bind_predicate(scope, a, step)?)),
        })
    }

    fn bind_operand(&self, scope: &Scope<'_>, o: &Operand, step: usize) -> Step<(BoundOperand, OperandType)> {
        Ok(match o {
            Operand::Column(r) => {
                let i = self.resolve(scope, r, step)?;
                (BoundOperand::Column(i), OperandType::Column(scope.sig.columns()[i].dtype))
            }
            Operand::Literal(l) => (BoundOperand::Literal(literal_value(l)), OperandType::Literal(l.clone())),
        })
    }
}

fn output_column(input: &SignatureColumn, o: &OutputExpr) -> SignatureColumn {
    match &o.alias {
        Some(a) => SignatureColumn::named(a, input.dtype),
        None => input.clone(),
    }
}

fn aggregate_column(o: &OutputExpr, dtype: DataType) -> SignatureColumn {
    let name = o.alias.clone().unwrap_or_else(|| o.expr_text());
    SignatureColumn::named(&name, dtype)
}

fn check_unique(sig: ColumnSignature, step: usize) -> Step<ColumnSignature> {
    for (i, c) in sig.columns().iter().enumerate() {
        if sig.columns()[..i].iter().any(|d| d.same_name(c)) {
            return Err(Diagnostic::at_step(
                Code::DuplicateOutput,
                step,
                format!("`{}` is output twice", c.display_name()),
            ));
        }
    }
    Ok(sig)
}

pub fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::Null => Value::Null,
        Literal::Integer(i) => Value::Integer(*i),
        Literal::Real(r) => Value::Real(*r),
        Literal::Text(s) => Value::Text(s.clone()),
        Literal::Boolean(b) => Value::Boolean(*b),
    }
}

enum OperandType {
    Column(DataType),
    Literal(Literal),
}

impl fmt::Display for OperandType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperandType::Column(t) => t.fmt(f),
            OperandType::Literal(Literal::Null) => f.write_str("null"),
            OperandType::Literal(Literal::Integer(_)) => f.write_str("integer"),
            OperandType::Literal(Literal::Real(_)) => f.write_str("real"),
            OperandType::Literal(Literal::Text(_)) => f.write_str("text"),
            OperandType::Literal(Literal::Boolean(_)) => f.write_str("boolean"),
        }
    }
}

fn compatible(a: &OperandType, b: &OperandType) -> bool {
    use OperandType::*;
    match (a, b) {
        (Literal(crate::plan::Literal::Null), _) | (_, Literal(crate::plan::Literal::Null)) => true,
        (Column(x), Column(y)) => x.comparable_with(*y),
        (Column(t), Literal(l)) | (Literal(l), Column(t)) => literal_fits(l, *t),
        (Literal(x), Literal(y)) => {
            let tx = literal_type(x);
            let ty = literal_type(y);
            tx.zip(ty).is_some_and(|(x, y)| x.comparable_with(y))
        }
    }
}

fn literal_type(l: &Literal) -> Option<DataType> {
    match l {
        Literal::Null => None,
        Literal::Integer(_) => Some(DataType::Integer),
        Literal::Real(_) => Some(DataType::Real),
        Literal::Text(_) => Some(DataType::Text),
        Literal::Boolean(_) => Some(DataType::Boolean),
    }
}

fn literal_fits(l: &Literal, t: DataType) -> bool {
    match (l, t) {
        (Literal::Null, _) => true,
        (Literal::Integer(_) | Literal::Real(_), t) => t.is_numeric(),
        (Literal::Text(_), DataType::Text) => true,
        // dates are written as canonical 'YYYY-MM-DD' text
        (Literal::Text(s), DataType::Date) => parse_date(s).is_some(),
        (Literal::Boolean(_), DataType::Boolean) => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::schema::load_schema;

    const MUSEUM: &str = r#"{"db_id": "museum_visit", "tables": [
        {"name": "visitor", "columns": [{"name": "ID", "type": "integer"}, {"name": "Level_of_membership", "type": "integer"}, {"name": "Name", "type": "text"}], "primary_key": ["ID"], "foreign_keys": []},
        {"name": "visit", "columns": [{"name": "visitor_ID", "type": "integer"}, {"name": "Total_spent", "type": "real"}, {"name": "day", "type": "date"}], "primary_key": [], "foreign_keys": [["visitor_ID", "visitor", "ID"]]}]}"#;

    fn schema() -> Schema {
        // the museum schema, plus a text and a date column for type checks
        load_schema(MUSEUM).unwrap()
    }

    fn museum_schema() -> Schema {
        load_schema(
            r#"{"db_id": "museum_visit", "tables": [
            {"name": "visitor", "columns": [{"name": "ID", "type": "integer"}, {"name": "Level_of_membership", "type": "integer"}], "primary_key": ["ID"], "foreign_keys": []},
            {"name": "visit", "columns": [{"name": "visitor_ID", "type": "integer"}, {"name": "Total_spent", "type": "real"}], "primary_key": [], "foreign_keys": [["visitor_ID", "visitor", "ID"]]}]}"#,
        )
        .unwrap()
    }

    fn codes(text: &str) -> Vec<Code> {
        let r = validate(&parse(text).unwrap(), &schema());
        assert_eq!(r.ok, r.diagnostics.is_empty());
        r.diagnostics.into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn museum_plan_validates() {
        let p = parse(crate::parser::tests::MUSEUM_PLAN).unwrap();
        let r = validate(&p, &museum_schema());
        assert!(r.ok, "{:?}", r.diagnostics);
        assert_eq!(r.signatures.len(), 4);
        let root = r.signatures[3].as_ref().unwrap();
        assert_eq!(root.names(), ["SUM(visit.Total_spent)"]);
        assert_eq!(root.dtypes(), [DataType::Real]);
        let join = output_signature(&p.children()[0], &museum_schema()).unwrap();
        assert_eq!(join.names(), ["visit.Total_spent"]);
        assert_eq!(join.dtypes(), [DataType::Real]);
    }

    #[test]
    fn signatures_of_leaves_and_count_star() {
        let s = museum_schema();
        let leaf = parse("Scan Table [visit] Output [visitor_ID, Total_spent]").unwrap();
        assert_eq!(output_signature(&leaf, &s).unwrap().len(), 2);
        let count = parse("[ Scan Table [visit] Output [visitor_ID] ] Into: Aggregate Output [COUNT(*)]").unwrap();
        let sig = output_signature(&count, &s).unwrap();
        assert_eq!(sig.names(), ["COUNT(*)"]);
        assert_eq!(sig.dtypes(), [DataType::Integer]);
    }

    #[test]
    fn unknown_column_in_leaf() {
        let text = crate::parser::tests::MUSEUM_PLAN.replace("Output [ID]", "Output [Name]");
        let r = validate(&parse(&text).unwrap(), &museum_schema());
        assert!(!r.ok);
        assert_eq!(r.diagnostics[0].code, Code::UnknownColumn);
        assert_eq!(r.diagnostics[0].step, Some(1));
    }

    #[test]
    fn column_not_visible_above_scan() {
        let text = crate::parser::tests::MUSEUM_PLAN.replace("Output [visitor_ID, Total_spent]", "Output [visitor_ID]");
        let r = validate(&parse(&text).unwrap(), &museum_schema());
        assert!(!r.ok);
        assert_eq!(r.diagnostics[0].code, Code::ColumnNotVisible);
        assert!(r.signatures[0].is_some() && r.signatures[2].is_none());
    }

    #[test]
    fn type_rules() {
        assert_eq!(codes("Scan Table [visitor] Predicate [visitor.Name = 1] Output [ID]"), [Code::TypeMismatch]);
        assert!(codes("Scan Table [visitor] Predicate [visitor.ID = 1.5 AND Name LIKE 'a%'] Output [ID]").is_empty());
        assert_eq!(codes("Scan Table [visitor] Predicate [ID LIKE 'a%'] Output [ID]"), [Code::TypeMismatch]);
        assert!(codes("Scan Table [visit] Predicate [visit.day >= '2020-01-01'] Output [day]").is_empty());
        assert_eq!(codes("Scan Table [visit] Predicate [visit.day >= '2020-1-1'] Output [day]"), [Code::TypeMismatch]);
        assert_eq!(codes("Scan Table [visitor] Predicate [ID IN (1, 'x')] Output [ID]"), [Code::TypeMismatch]);
        assert_eq!(
            codes("[ Scan Table [visitor] Output [Name] ] Into: Aggregate Output [SUM(visitor.Name)]"),
            [Code::TypeMismatch]
        );
    }

    #[test]
    fn set_operation_rules() {
        let ok = "[ Scan Table [visitor] Output [ID], Scan Table [visit] Output [Total_spent] ] Into: Union Output [visitor.ID]";
        let r = validate(&parse(ok).unwrap(), &schema());
        assert!(r.ok);
        assert_eq!(r.signatures[2].as_ref().unwrap().dtypes(), [DataType::Real]);
        assert_eq!(
            codes("[ Scan Table [visitor] Output [ID, Name], Scan Table [visit] Output [Total_spent] ] Into: Except Output [visitor.ID]"),
            [Code::SetArityMismatch]
        );
        assert_eq!(
            codes("[ Scan Table [visitor] Output [Name], Scan Table [visit] Output [Total_spent] ] Into: Intersect Output [visitor.Name]"),
            [Code::TypeMismatch]
        );
    }

    #[test]
    fn naming_rules() {
        assert_eq!(
            codes("[ Scan Table [visitor] Output [ID], Scan Table [visitor] Output [ID] ] Into: Join Predicate [visitor.ID = visitor.ID] Output [visitor.ID]"),
            [Code::NameCollision]
        );
        assert!(codes(
            "[ Scan Table [visitor] Output [ID], Scan Table [visitor] Output [ID AS other] ] Into: Join Predicate [visitor.ID = other] Output [visitor.ID, other]"
        )
        .is_empty());
        assert_eq!(
            codes("[ Scan Table [visitor] Output [ID] ] Into: Filter Predicate [ID = 1] Output [visitor.ID]"),
            [Code::MissingQualifier]
        );
        assert_eq!(codes("Scan Table [visitor] Output [ID, id]"), [Code::DuplicateOutput]);
        assert_eq!(codes("Scan Table [people] Output [ID]"), [Code::UnknownTable]);
        assert_eq!(
            codes("[ Scan Table [visitor] Output [ID] ] Into: Filter Predicate [nobody.ID = 1] Output [visitor.ID]"),
            [Code::UnknownTable]
        );
    }

    #[test]
    fn aggregate_aliases_flow_upward() {
        let text = "[ [ Scan Table [visit] Output [visitor_ID] ] Into: Aggregate GroupBy [visit.visitor_ID] \
                    Output [visit.visitor_ID AS vid, COUNT(*) AS n] ] Into: Sort OrderBy [n DESC] Output [vid, n]";
        let r = validate(&parse(text).unwrap(), &schema());
        assert!(r.ok, "{:?}", r.diagnostics);
        assert_eq!(r.signatures[2].as_ref().unwrap().names(), ["vid", "n"]);
    }

    #[test]
    fn sub_plans_of_valid_plans_validate() {
        let p = parse(crate::parser::tests::MUSEUM_PLAN).unwrap();
        for sub in p.sub_plans() {
            assert!(validate(sub, &museum_schema()).ok);
        }
    }
}

//! The QPL tree: nine operators, their arguments, and structural metrics.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    Aggregate,
    Except,
    Filter,
    Intersect,
    Join,
    Scan,
    Sort,
    TopSort,
    Union,
}

impl Operator {
    pub const ALL: [Operator; 9] = [
        Operator::Aggregate,
        Operator::Except,
        Operator::Filter,
        Operator::Intersect,
        Operator::Join,
        Operator::Scan,
        Operator::Sort,
        Operator::TopSort,
        Operator::Union,
    ];

    pub fn arity(self) -> usize {
        match self {
            Operator::Scan => 0,
            Operator::Aggregate | Operator::Filter | Operator::Sort | Operator::TopSort => 1,
            Operator::Join | Operator::Except | Operator::Intersect | Operator::Union => 2,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Operator::Aggregate => "Aggregate",
            Operator::Except => "Except",
            Operator::Filter => "Filter",
            Operator::Intersect => "Intersect",
            Operator::Join => "Join",
            Operator::Scan => "Scan",
            Operator::Sort => "Sort",
            Operator::TopSort => "TopSort",
            Operator::Union => "Union",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|op| op.keyword() == word)
    }

    pub fn is_set_op(self) -> bool {
        matches!(self, Operator::Except | Operator::Intersect | Operator::Union)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A column reference, `table.column` or a bare name.
///
/// Bare names resolve against the scanned table inside a Scan and against
/// output aliases everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn qualified(table: impl Into<String>, column: impl Into<String>) -> ColumnRef {
        ColumnRef {
            table: Some(table.into()),
            column: column.into(),
        }
    }

    pub fn bare(column: impl Into<String>) -> ColumnRef {
        ColumnRef {
            table: None,
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Boolean(bool),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Null => f.write_str("NULL"),
            Literal::Integer(i) => write!(f, "{i}"),
            Literal::Real(r) => write!(f, "{r:?}"),
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Boolean(true) => f.write_str("TRUE"),
            Literal::Boolean(false) => f.write_str("FALSE"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Column(ColumnRef),
    Literal(Literal),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Column(c) => c.fmt(f),
            Operand::Literal(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub const ALL: [CompareOp; 6] = [
        CompareOp::Eq,
        CompareOp::Ne,
        CompareOp::Lt,
        CompareOp::Le,
        CompareOp::Gt,
        CompareOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "<>",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

/// Boolean expression over comparisons, evaluated with SQL three-valued logic.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Compare {
        left: Operand,
        op: CompareOp,
        right: Operand,
    },
    Like {
        operand: Operand,
        pattern: String,
    },
    IsNull {
        operand: Operand,
        negated: bool,
    },
    In {
        operand: Operand,
        list: Vec<Literal>,
    },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn compare(left: Operand, op: CompareOp, right: Operand) -> Predicate {
        Predicate::Compare { left, op, right }
    }

    pub fn and(self, other: Predicate) -> Predicate {
        Predicate::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Predicate) -> Predicate {
        Predicate::Or(Box::new(self), Box::new(other))
    }

    pub fn negate(self) -> Predicate {
        Predicate::Not(Box::new(self))
    }

    /// Every operand in the expression, left to right.
    pub fn operands(&self) -> Vec<&Operand> {
        let mut out = Vec::new();
        self.collect_operands(&mut out);
        out
    }

    fn collect_operands<'a>(&'a self, out: &mut Vec<&'a Operand>) {
        match self {
            Predicate::Compare { left, right, .. } => {
                out.push(left);
                out.push(right);
            }
            Predicate::Like { operand, .. }
            | Predicate::IsNull { operand, .. }
            | Predicate::In { operand, .. } => out.push(operand),
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.collect_operands(out);
                b.collect_operands(out);
            }
            Predicate::Not(p) => p.collect_operands(out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggFunc {
    Sum,
    Count,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub const ALL: [AggFunc; 5] = [AggFunc::Sum, AggFunc::Count, AggFunc::Avg, AggFunc::Min, AggFunc::Max];

    pub fn keyword(self) -> &'static str {
        match self {
            AggFunc::Sum => "SUM",
            AggFunc::Count => "COUNT",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }

    pub fn from_keyword(word: &str) -> Option<AggFunc> {
        AggFunc::ALL.into_iter().find(|f| f.keyword() == word)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutputKind {
    Column(ColumnRef),
    Agg { func: AggFunc, arg: ColumnRef },
    CountStar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputExpr {
    pub kind: OutputKind,
    pub alias: Option<String>,
}

impl OutputExpr {
    pub fn column(c: ColumnRef) -> OutputExpr {
        OutputExpr {
            kind: OutputKind::Column(c),
            alias: None,
        }
    }

    pub fn agg(func: AggFunc, arg: ColumnRef) -> OutputExpr {
        OutputExpr {
            kind: OutputKind::Agg { func, arg },
            alias: None,
        }
    }

    pub fn count_star() -> OutputExpr {
        OutputExpr {
            kind: OutputKind::CountStar,
            alias: None,
        }
    }

    pub fn with_alias(mut self, alias: impl Into<String>) -> OutputExpr {
        self.alias = Some(alias.into());
        self
    }

    pub fn is_aggregate(&self) -> bool {
        !matches!(self.kind, OutputKind::Column(_))
    }

    /// The expression as written, without its alias, e.g. `SUM(visit.Total_spent)`.
    pub fn expr_text(&self) -> String {
        match &self.kind {
            OutputKind::Column(c) => c.to_string(),
            OutputKind::Agg { func, arg } => format!("{}({arg})", func.keyword()),
            OutputKind::CountStar => "COUNT(*)".to_string(),
        }
    }
}

impl fmt::Display for OutputExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expr_text())?;
        if let Some(a) = &self.alias {
            write!(f, " AS {a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub column: ColumnRef,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorArgs {
    Scan {
        table: String,
        predicate: Option<Predicate>,
        distinct: bool,
        outputs: Vec<OutputExpr>,
    },
    Aggregate {
        group_by: Vec<ColumnRef>,
        outputs: Vec<OutputExpr>,
    },
    Filter {
        predicate: Predicate,
        distinct: bool,
        outputs: Vec<OutputExpr>,
    },
    Join {
        predicate: Predicate,
        outputs: Vec<OutputExpr>,
    },
    Except {
        outputs: Vec<OutputExpr>,
    },
    Intersect {
        outputs: Vec<OutputExpr>,
    },
    Union {
        outputs: Vec<OutputExpr>,
    },
    Sort {
        order_by: Vec<SortKey>,
        outputs: Vec<OutputExpr>,
    },
    TopSort {
        rows: u64,
        order_by: Vec<SortKey>,
        outputs: Vec<OutputExpr>,
    },
}

impl OperatorArgs {
    pub fn operator(&self) -> Operator {
        match self {
            OperatorArgs::Scan { .. } => Operator::Scan,
            OperatorArgs::Aggregate { .. } => Operator::Aggregate,
            OperatorArgs::Filter { .. } => Operator::Filter,
            OperatorArgs::Join { .. } => Operator::Join,
            OperatorArgs::Except { .. } => Operator::Except,
            OperatorArgs::Intersect { .. } => Operator::Intersect,
            OperatorArgs::Union { .. } => Operator::Union,
            OperatorArgs::Sort { .. } => Operator::Sort,
            OperatorArgs::TopSort { .. } => Operator::TopSort,
        }
    }

    pub fn outputs(&self) -> &[OutputExpr] {
        match self {
            OperatorArgs::Scan { outputs, .. }
            | OperatorArgs::Aggregate { outputs, .. }
            | OperatorArgs::Filter { outputs, .. }
            | OperatorArgs::Join { outputs, .. }
            | OperatorArgs::Except { outputs }
            | OperatorArgs::Intersect { outputs }
            | OperatorArgs::Union { outputs }
            | OperatorArgs::Sort { outputs, .. }
            | OperatorArgs::TopSort { outputs, .. } => outputs,
        }
    }

    pub fn predicate(&self) -> Option<&Predicate> {
        match self {
            OperatorArgs::Scan { predicate, .. } => predicate.as_ref(),
            OperatorArgs::Filter { predicate, .. } | OperatorArgs::Join { predicate, .. } => Some(predicate),
            _ => None,
        }
    }

    pub fn order_by(&self) -> &[SortKey] {
        match self {
            OperatorArgs::Sort { order_by, .. } | OperatorArgs::TopSort { order_by, .. } => order_by,
            _ => &[],
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("{op} takes {expected} input(s), got {found}")]
    Arity {
        op: Operator,
        expected: usize,
        found: usize,
    },
    #[error("{0} has an empty output list")]
    EmptyOutput(Operator),
    #[error("Scan table name is empty")]
    EmptyTable,
    #[error("TopSort row count must be at least 1")]
    ZeroRows,
    #[error("{0} needs at least one order-by key")]
    EmptyOrderBy(Operator),
    #[error("aggregate `{expr}` is only allowed in an Aggregate output")]
    MisplacedAggregate { expr: String },
    #[error("output `{expr}` is neither aggregated nor listed in GroupBy")]
    UngroupedColumn { expr: String },
}

/// A QPL plan node with its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    args: OperatorArgs,
    children: Vec<Plan>,
}

impl Plan {
    /// Builds a node, checking arity and argument invariants of this node.
    pub fn new(args: OperatorArgs, children: Vec<Plan>) -> Result<Plan, PlanError> {
        check_node(&args, children.len())?;
        Ok(Plan { args, children })
    }

    pub fn scan(table: impl Into<String>, predicate: Option<Predicate>, outputs: Vec<OutputExpr>) -> Result<Plan, PlanError> {
        Plan::new(
            OperatorArgs::Scan {
                table: table.into(),
                predicate,
                distinct: false,
                outputs,
            },
            Vec::new(),
        )
    }

    pub fn op(&self) -> Operator {
        self.args.operator()
    }

    pub fn args(&self) -> &OperatorArgs {
        &self.args
    }

    pub fn children(&self) -> &[Plan] {
        &self.children
    }

    pub fn outputs(&self) -> &[OutputExpr] {
        self.args.outputs()
    }

    /// 0 for a leaf, otherwise one more than the deepest child.
    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }

    /// Number of nodes, i.e. executable steps.
    pub fn step_count(&self) -> usize {
        1 + self.children.iter().map(Plan::step_count).sum::<usize>()
    }

    pub fn root_operator(&self) -> Operator {
        self.op()
    }

    /// Every node as the root of its own plan, children before parents,
    /// left before right. This is the step numbering used everywhere.
    pub fn sub_plans(&self) -> Vec<&Plan> {
        let mut out = Vec::with_capacity(self.step_count());
        self.post_order(&mut out);
        out
    }

    fn post_order<'a>(&'a self, out: &mut Vec<&'a Plan>) {
        for c in &self.children {
            c.post_order(out);
        }
        out.push(self);
    }

    /// Re-checks every node's structural invariants.
    pub fn check(&self) -> Result<(), PlanError> {
        check_node(&self.args, self.children.len())?;
        self.children.iter().try_for_each(Plan::check)
    }
}

fn check_node(args: &OperatorArgs, children: usize) -> Result<(), PlanError> {
    let op = args.operator();
    if op.arity() != children {
        return Err(PlanError::Arity {
            op,
            expected: op.arity(),
            found: children,
        });
    }
    let outputs = args.outputs();
    if outputs.is_empty() {
        return Err(PlanError::EmptyOutput(op));
    }
    match args {
        OperatorArgs::Scan { table, .. } if table.is_empty() => return Err(PlanError::EmptyTable),
        OperatorArgs::TopSort { rows: 0, .. } => return Err(PlanError::ZeroRows),
        OperatorArgs::Sort { order_by, .. } | OperatorArgs::TopSort { order_by, .. } if order_by.is_empty() => {
            return Err(PlanError::EmptyOrderBy(op))
        }
        _ => {}
    }
    if let OperatorArgs::Aggregate { group_by, outputs } = args {
        for o in outputs {
            if let OutputKind::Column(c) = &o.kind {
                if !group_by.iter().any(|g| same_ref(g, c)) {
                    return Err(PlanError::UngroupedColumn { expr: o.expr_text() });
                }
            }
        }
    } else if let Some(o) = outputs.iter().find(|o| o.is_aggregate()) {
        return Err(PlanError::MisplacedAggregate { expr: o.expr_text() });
    }
    Ok(())
}

/// Case-insensitive equality of two column references as written.
pub fn same_ref(a: &ColumnRef, b: &ColumnRef) -> bool {
    a.column.eq_ignore_ascii_case(&b.column)
        && match (&a.table, &b.table) {
            (Some(x), Some(y)) => x.eq_ignore_ascii_case(y),
            (None, None) => true,
            _ => false,
        }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn museum_plan() -> Plan {
        let visitor = Plan::scan(
            "visitor",
            Some(Predicate::compare(
                Operand::Column(ColumnRef::qualified("visitor", "Level_of_membership")),
                CompareOp::Eq,
                Operand::Literal(Literal::Integer(1)),
            )),
            vec![OutputExpr::column(ColumnRef::bare("ID"))],
        )
        .unwrap();
        let visit = Plan::scan(
            "visit",
            None,
            vec![
                OutputExpr::column(ColumnRef::bare("visitor_ID")),
                OutputExpr::column(ColumnRef::bare("Total_spent")),
            ],
        )
        .unwrap();
        let join = Plan::new(
            OperatorArgs::Join {
                predicate: Predicate::compare(
                    Operand::Column(ColumnRef::qualified("visitor", "ID")),
                    CompareOp::Eq,
                    Operand::Column(ColumnRef::qualified("visit", "visitor_ID")),
                ),
                outputs: vec![OutputExpr::column(ColumnRef::qualified("visit", "Total_spent"))],
            },
            vec![visitor, visit],
        )
        .unwrap();
        Plan::new(
            OperatorArgs::Aggregate {
                group_by: vec![],
                outputs: vec![OutputExpr::agg(AggFunc::Sum, ColumnRef::qualified("visit", "Total_spent"))],
            },
            vec![join],
        )
        .unwrap()
    }

    fn leaf() -> Plan {
        Plan::scan("visitor", None, vec![OutputExpr::column(ColumnRef::bare("ID"))]).unwrap()
    }

    #[test]
    fn museum_plan_metrics() {
        let p = museum_plan();
        assert_eq!(p.depth(), 2);
        assert_eq!(p.step_count(), 4);
        assert_eq!(p.sub_plans().len(), 4);
        assert_eq!(p.root_operator(), Operator::Aggregate);
        let ops: Vec<_> = p.sub_plans().iter().map(|s| s.op()).collect();
        assert_eq!(ops, [Operator::Scan, Operator::Scan, Operator::Join, Operator::Aggregate]);
    }

    #[test]
    fn leaf_metrics() {
        let p = leaf();
        assert_eq!(p.depth(), 0);
        assert_eq!(p.step_count(), 1);
        assert_eq!(p.sub_plans(), vec![&p]);
        assert_eq!(p.root_operator(), Operator::Scan);
    }

    #[test]
    fn derived_metrics() {
        let key = SortKey {
            column: ColumnRef::bare("x"),
            direction: Direction::Asc,
        };
        let sorted = Plan::new(
            OperatorArgs::Sort {
                order_by: vec![key],
                outputs: vec![OutputExpr::column(ColumnRef::bare("x"))],
            },
            vec![museum_plan()],
        )
        .unwrap();
        assert_eq!(sorted.depth(), 3);
        let union = Plan::new(
            OperatorArgs::Union {
                outputs: vec![OutputExpr::column(ColumnRef::bare("x"))],
            },
            vec![museum_plan(), leaf()],
        )
        .unwrap();
        assert_eq!(union.step_count(), 6);
        let join = Plan::new(
            OperatorArgs::Join {
                predicate: Predicate::IsNull {
                    operand: Operand::Literal(Literal::Null),
                    negated: false,
                },
                outputs: vec![OutputExpr::column(ColumnRef::bare("x"))],
            },
            vec![leaf(), leaf()],
        )
        .unwrap();
        assert_eq!(join.sub_plans().len(), 3);
        let top = Plan::new(
            OperatorArgs::TopSort {
                rows: 3,
                order_by: vec![SortKey {
                    column: ColumnRef::bare("x"),
                    direction: Direction::Desc,
                }],
                outputs: vec![OutputExpr::column(ColumnRef::bare("x"))],
            },
            vec![join],
        )
        .unwrap();
        assert_eq!(top.root_operator(), Operator::TopSort);
    }

    #[test]
    fn structural_invariants() {
        let join = OperatorArgs::Join {
            predicate: Predicate::IsNull {
                operand: Operand::Literal(Literal::Null),
                negated: false,
            },
            outputs: vec![OutputExpr::column(ColumnRef::bare("x"))],
        };
        assert!(matches!(Plan::new(join, vec![leaf()]), Err(PlanError::Arity { .. })));
        assert_eq!(
            Plan::scan("t", None, vec![]).unwrap_err(),
            PlanError::EmptyOutput(Operator::Scan)
        );
        let top = OperatorArgs::TopSort {
            rows: 0,
            order_by: vec![SortKey {
                column: ColumnRef::bare("x"),
                direction: Direction::Asc,
            }],
            outputs: vec![OutputExpr::column(ColumnRef::bare("x"))],
        };
        assert_eq!(Plan::new(top, vec![leaf()]).unwrap_err(), PlanError::ZeroRows);
        let scan_agg = Plan::scan("t", None, vec![OutputExpr::count_star()]);
        assert!(matches!(scan_agg, Err(PlanError::MisplacedAggregate { .. })));
        let ungrouped = OperatorArgs::Aggregate {
            group_by: vec![],
            outputs: vec![OutputExpr::column(ColumnRef::qualified("t", "a")), OutputExpr::count_star()],
        };
        assert!(matches!(Plan::new(ungrouped, vec![leaf()]), Err(PlanError::UngroupedColumn { .. })));
        assert!(museum_plan().check().is_ok());
    }
}

//! QPL concrete syntax: batch parsing, canonical serialization and the
//! incremental prefix acceptor used for constrained decoding.
//!
//! ```text
//! plan     := leaf | "[" plan ("," plan)* "]" "Into" ":" clause
//! leaf     := "Scan" "Table" "[" ident "]" ["Predicate" "[" pred "]"]
//!             ["Distinct" "[" bool "]"] "Output" "[" outputs "]"
//! clause   := "Aggregate" ["GroupBy" "[" cols "]"] "Output" "[" outputs "]"
//!           | "Filter" "Predicate" "[" pred "]" ["Distinct" "[" bool "]"] "Output" "[" outputs "]"
//!           | "Join" "Predicate" "[" pred "]" "Output" "[" outputs "]"
//!           | ("Except" | "Intersect" | "Union") "Output" "[" outputs "]"
//!           | "Sort" "OrderBy" "[" keys "]" "Output" "[" outputs "]"
//!           | "TopSort" "Rows" "[" int "]" "OrderBy" "[" keys "]" "Output" "[" outputs "]"
//! ```
//!
//! One parser serves both entry points. When it runs out of input it stops
//! with [`Halt::Incomplete`] instead of an error, which is exactly the
//! distinction the prefix acceptor needs.

mod lexer;
mod serialize;

pub use serialize::{serialize, serialize_pretty};

use crate::diagnostic::{Code, Diagnostic};
use crate::plan::{
    same_ref, AggFunc, ColumnRef, CompareOp, Direction, Literal, Operand, Operator, OperatorArgs, OutputExpr,
    OutputKind, Plan, Predicate, SortKey,
};
use crate::schema::Schema;
use lexer::{tokenize, Token, TokenKind};

/// Outcome of checking a candidate prefix.
#[derive(Debug, Clone, PartialEq)]
pub enum PrefixVerdict {
    ValidPrefix,
    Complete,
    Invalid { offset: usize, reason: String },
}

impl PrefixVerdict {
    pub fn is_invalid(&self) -> bool {
        matches!(self, PrefixVerdict::Invalid { .. })
    }
}

/// Parses QPL text into a plan.
pub fn parse(text: &str) -> Result<Plan, Vec<Diagnostic>> {
    match Parser::new(text, None).run() {
        Ok(plan) => Ok(plan),
        Err(Halt::Incomplete) => Err(vec![Diagnostic::error(
            Code::UnexpectedEnd,
            text.len()..text.len(),
            "unexpected end of input",
        )]),
        Err(Halt::Invalid(d)) => Err(vec![d]),
    }
}

/// Classifies a character prefix of a QPL plan.
pub fn check_prefix(prefix: &str) -> PrefixVerdict {
    verdict(Parser::new(prefix, None).run())
}

/// Like [`check_prefix`], and additionally rejects table and column names
/// that do not exist in `schema` once they are followed by another token.
pub fn check_prefix_with_schema(prefix: &str, schema: &Schema) -> PrefixVerdict {
    verdict(Parser::new(prefix, Some(schema)).run())
}

/// Parses with schema-aware identifier checks.
pub fn parse_with_schema(text: &str, schema: &Schema) -> Result<Plan, Vec<Diagnostic>> {
    match Parser::new(text, Some(schema)).run() {
        Ok(plan) => Ok(plan),
        Err(Halt::Incomplete) => parse(text),
        Err(Halt::Invalid(d)) => Err(vec![d]),
    }
}

fn verdict(r: Result<Plan, Halt>) -> PrefixVerdict {
    match r {
        Ok(_) => PrefixVerdict::Complete,
        Err(Halt::Incomplete) => PrefixVerdict::ValidPrefix,
        Err(Halt::Invalid(d)) => PrefixVerdict::Invalid {
            offset: d.span.start,
            reason: d.message,
        },
    }
}

#[derive(Debug)]
enum Halt {
    Incomplete,
    Invalid(Diagnostic),
}

type PResult<T> = Result<T, Halt>;

const UNARY: [Operator; 4] = [Operator::Aggregate, Operator::Filter, Operator::Sort, Operator::TopSort];
const BINARY: [Operator; 4] = [Operator::Join, Operator::Except, Operator::Intersect, Operator::Union];

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    schema: Option<&'a Schema>,
    /// Table of the Scan being parsed; bare names resolve against it.
    scan_table: Option<String>,
    code: Code,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, schema: Option<&'a Schema>) -> Parser<'a> {
        Parser {
            src,
            tokens: tokenize(src),
            pos: 0,
            schema,
            scan_table: None,
            code: Code::Syntax,
        }
    }

    fn run(mut self) -> PResult<Plan> {
        let plan = self.plan()?;
        let t = self.peek();
        if t.kind != TokenKind::Eof {
            return Err(self.invalid_at(t.start, "unexpected input after the end of the plan"));
        }
        Ok(plan)
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn text(&self, t: &Token) -> &'a str {
        &self.src[t.start..t.end]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn invalid_at(&self, offset: usize, msg: impl Into<String>) -> Halt {
        self.invalid_code(self.code, offset, msg)
    }

    fn invalid_code(&self, code: Code, offset: usize, msg: impl Into<String>) -> Halt {
        let end = self.tokens.iter().find(|t| t.start == offset).map_or(offset, |t| t.end);
        Halt::Invalid(Diagnostic::error(code, offset..end.max(offset), msg))
    }

    /// The next token, or `Incomplete` at end of input.
    fn need(&self) -> PResult<Token> {
        let t = self.peek();
        match &t.kind {
            TokenKind::Eof => Err(Halt::Incomplete),
            TokenKind::Bad(msg) => Err(self.invalid_code(Code::Syntax, t.start, *msg)),
            _ => Ok(t.clone()),
        }
    }

    /// Identifiers are only checked against the schema once they cannot grow.
    fn settled(&self, t: &Token) -> PResult<()> {
        if t.open {
            Err(Halt::Incomplete)
        } else {
            Ok(())
        }
    }

    fn unexpected(&self, t: &Token, expected: &str) -> Halt {
        if t.kind == TokenKind::Fragment {
            return self.invalid_at(t.start, format!("expected {expected}"));
        }
        self.invalid_at(t.start, format!("expected {expected}, found `{}`", self.text(t)))
    }

    fn expect_symbol(&mut self, sym: &'static str) -> PResult<Token> {
        let t = self.need()?;
        match &t.kind {
            TokenKind::Symbol(s) if *s == sym => Ok(self.bump()),
            TokenKind::Symbol(s) if t.open && sym.starts_with(s) => Err(Halt::Incomplete),
            _ => Err(self.unexpected(&t, &format!("`{sym}`"))),
        }
    }

    fn expect_keyword(&mut self, kw: &'static str) -> PResult<Token> {
        match self.keyword_choice(&[kw])? {
            Some(_) => Ok(self.tokens[self.pos - 1].clone()),
            None => {
                let t = self.need()?;
                Err(self.unexpected(&t, &format!("`{kw}`")))
            }
        }
    }

    /// Consumes the next word if it is one of `kws`. An open word that is a
    /// proper prefix of a candidate halts as incomplete.
    fn keyword_choice(&mut self, kws: &[&'static str]) -> PResult<Option<&'static str>> {
        let t = self.need()?;
        if t.kind != TokenKind::Word {
            return Ok(None);
        }
        let w = self.text(&t);
        if let Some(kw) = kws.iter().find(|k| **k == w) {
            self.bump();
            return Ok(Some(kw));
        }
        if t.open && kws.iter().any(|k| k.starts_with(w)) {
            return Err(Halt::Incomplete);
        }
        Ok(None)
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Token)> {
        let t = self.need()?;
        if t.kind == TokenKind::Word {
            self.bump();
            Ok((self.text(&t).to_string(), t))
        } else {
            Err(self.unexpected(&t, what))
        }
    }

    fn plan(&mut self) -> PResult<Plan> {
        let t = self.need()?;
        if t.kind == TokenKind::Symbol("[") {
            return self.nested();
        }
        if self.keyword_choice(&["Scan"])?.is_some() {
            return self.scan(t.start);
        }
        Err(self.unexpected(&t, "`[` or `Scan`"))
    }

    fn nested(&mut self) -> PResult<Plan> {
        self.expect_symbol("[")?;
        let mut children = vec![self.plan()?];
        loop {
            let t = self.need()?;
            match t.kind {
                TokenKind::Symbol(",") => {
                    if children.len() == 2 {
                        return Err(self.invalid_code(
                            Code::ArityViolation,
                            t.start,
                            "no operator takes more than two inputs",
                        ));
                    }
                    self.bump();
                    children.push(self.plan()?);
                }
                TokenKind::Symbol("]") => {
                    self.bump();
                    break;
                }
                _ => return Err(self.unexpected(&t, "`,` or `]`")),
            }
        }
        self.expect_keyword("Into")?;
        self.expect_symbol(":")?;
        let t = self.need()?;
        let allowed: &[Operator] = if children.len() == 1 { &UNARY } else { &BINARY };
        let names: Vec<&'static str> = allowed.iter().map(|o| o.keyword()).collect();
        let op = match self.keyword_choice(&names)? {
            Some(kw) => Operator::from_keyword(kw).expect("operator keyword"),
            None => {
                let w = if t.kind == TokenKind::Word { self.text(&t) } else { "" };
                if let Some(op) = Operator::from_keyword(w) {
                    return Err(self.invalid_code(
                        Code::ArityViolation,
                        t.start,
                        format!("{op} takes {} input(s), got {}", op.arity(), children.len()),
                    ));
                }
                return Err(self.unexpected(&t, &format!("one of {}", names.join(", "))));
            }
        };
        let args = self.clause(op)?;
        self.build(args, children, t.start)
    }

    fn build(&self, args: OperatorArgs, children: Vec<Plan>, at: usize) -> PResult<Plan> {
        Plan::new(args, children).map_err(|e| self.invalid_code(Code::MalformedClause, at, e.to_string()))
    }

    fn scan(&mut self, start: usize) -> PResult<Plan> {
        self.expect_keyword("Table")?;
        self.expect_symbol("[")?;
        let (table, tok) = self.ident("a table name")?;
        self.settled(&tok)?;
        if let Some(schema) = self.schema {
            if schema.table(&table).is_none() {
                return Err(self.invalid_code(Code::UnknownTable, tok.start, format!("unknown table `{table}`")));
            }
        }
        self.expect_symbol("]")?;
        self.scan_table = Some(table.clone());
        let mut predicate = None;
        let mut distinct = false;
        let mut next = self.keyword_choice(&["Predicate", "Distinct", "Output"])?;
        if next == Some("Predicate") {
            predicate = Some(self.bracketed_predicate()?);
            next = self.keyword_choice(&["Distinct", "Output"])?;
        }
        if next == Some("Distinct") {
            distinct = self.bracketed_bool()?;
            next = self.keyword_choice(&["Output"])?;
        }
        if next != Some("Output") {
            let t = self.need()?;
            return Err(self.unexpected(&t, "`Predicate`, `Distinct` or `Output`"));
        }
        let outputs = self.bracketed_outputs(None)?;
        self.scan_table = None;
        self.build(
            OperatorArgs::Scan {
                table,
                predicate,
                distinct,
                outputs,
            },
            Vec::new(),
            start,
        )
    }

    fn clause(&mut self, op: Operator) -> PResult<OperatorArgs> {
        Ok(match op {
            Operator::Aggregate => {
                let mut group_by = Vec::new();
                if self.keyword_choice(&["GroupBy", "Output"])? == Some("GroupBy") {
                    self.expect_symbol("[")?;
                    group_by.push(self.column_ref()?);
                    while self.list_continues()? {
                        group_by.push(self.column_ref()?);
                    }
                    self.expect_keyword("Output")?;
                }
                let outputs = self.bracketed_outputs(Some(&group_by))?;
                OperatorArgs::Aggregate { group_by, outputs }
            }
            Operator::Filter => {
                self.expect_keyword("Predicate")?;
                let predicate = self.bracketed_predicate()?;
                let distinct = match self.keyword_choice(&["Distinct", "Output"])? {
                    Some("Distinct") => {
                        let d = self.bracketed_bool()?;
                        self.expect_keyword("Output")?;
                        d
                    }
                    Some(_) => false,
                    None => {
                        let t = self.need()?;
                        return Err(self.unexpected(&t, "`Distinct` or `Output`"));
                    }
                };
                let outputs = self.bracketed_outputs(None)?;
                OperatorArgs::Filter {
                    predicate,
                    distinct,
                    outputs,
                }
            }
            Operator::Join => {
                self.expect_keyword("Predicate")?;
                let predicate = self.bracketed_predicate()?;
                self.expect_keyword("Output")?;
                let outputs = self.bracketed_outputs(None)?;
                OperatorArgs::Join { predicate, outputs }
            }
            Operator::Except | Operator::Intersect | Operator::Union => {
                self.expect_keyword("Output")?;
                let outputs = self.bracketed_outputs(None)?;
                match op {
                    Operator::Except => OperatorArgs::Except { outputs },
                    Operator::Intersect => OperatorArgs::Intersect { outputs },
                    _ => OperatorArgs::Union { outputs },
                }
            }
            Operator::Sort => {
                let order_by = self.order_by()?;
                self.expect_keyword("Output")?;
                let outputs = self.bracketed_outputs(None)?;
                OperatorArgs::Sort { order_by, outputs }
            }
            Operator::TopSort => {
                self.expect_keyword("Rows")?;
                self.expect_symbol("[")?;
                let rows = self.row_count()?;
                self.expect_symbol("]")?;
                let order_by = self.order_by()?;
                self.expect_keyword("Output")?;
                let outputs = self.bracketed_outputs(None)?;
                OperatorArgs::TopSort {
                    rows,
                    order_by,
                    outputs,
                }
            }
            Operator::Scan => unreachable!("Scan is parsed as a leaf"),
        })
    }

    fn row_count(&mut self) -> PResult<u64> {
        let t = self.need()?;
        match t.kind {
            TokenKind::Integer(n) if n >= 1 => {
                self.bump();
                Ok(n as u64)
            }
            // `0` may still grow into `05`
            TokenKind::Integer(0) if t.open => Err(Halt::Incomplete),
            _ => Err(self.invalid_code(Code::MalformedClause, t.start, "Rows needs a positive integer")),
        }
    }

    /// After a list item: consumes `,` and returns true, or `]` and returns false.
    fn list_continues(&mut self) -> PResult<bool> {
        let t = self.need()?;
        match t.kind {
            TokenKind::Symbol(",") => {
                self.bump();
                Ok(true)
            }
            TokenKind::Symbol("]") => {
                self.bump();
                Ok(false)
            }
            _ => Err(self.unexpected(&t, "`,` or `]`")),
        }
    }

    fn order_by(&mut self) -> PResult<Vec<SortKey>> {
        self.expect_keyword("OrderBy")?;
        self.expect_symbol("[")?;
        let mut keys = Vec::new();
        loop {
            let column = self.column_ref()?;
            let direction = match self.keyword_choice(&["ASC", "DESC"])? {
                Some("DESC") => Direction::Desc,
                _ => Direction::Asc,
            };
            keys.push(SortKey { column, direction });
            if !self.list_continues()? {
                return Ok(keys);
            }
        }
    }

    fn bracketed_bool(&mut self) -> PResult<bool> {
        self.expect_symbol("[")?;
        let v = match self.keyword_choice(&["true", "false"])? {
            Some(w) => w == "true",
            None => {
                let t = self.need()?;
                return Err(self.unexpected(&t, "`true` or `false`"));
            }
        };
        self.expect_symbol("]")?;
        Ok(v)
    }

    fn bracketed_predicate(&mut self) -> PResult<Predicate> {
        self.expect_symbol("[")?;
        let saved = std::mem::replace(&mut self.code, Code::MalformedClause);
        let p = self.or_expr()?;
        self.code = saved;
        self.expect_symbol("]")?;
        Ok(p)
    }

    /// `group_by` is `Some` inside an Aggregate, where aggregate calls are allowed.
    fn bracketed_outputs(&mut self, group_by: Option<&[ColumnRef]>) -> PResult<Vec<OutputExpr>> {
        self.expect_symbol("[")?;
        let saved = std::mem::replace(&mut self.code, Code::MalformedClause);
        let mut outputs = Vec::new();
        loop {
            let start = self.need()?.start;
            let mut out = self.output_expr(group_by.is_some())?;
            if self.keyword_choice(&["AS"])?.is_some() {
                let (alias, _) = self.ident("an alias")?;
                out.alias = Some(alias);
            }
            // the item is terminated once the next token exists
            self.need()?;
            if let (Some(groups), OutputKind::Column(c)) = (group_by, &out.kind) {
                if !groups.iter().any(|g| same_ref(g, c)) {
                    return Err(self.invalid_code(
                        Code::UngroupedColumn,
                        start,
                        format!("`{c}` is neither aggregated nor listed in GroupBy"),
                    ));
                }
            }
            outputs.push(out);
            if !self.list_continues()? {
                break;
            }
        }
        self.code = saved;
        Ok(outputs)
    }

    fn output_expr(&mut self, aggregates: bool) -> PResult<OutputExpr> {
        let t = self.need()?;
        if t.kind != TokenKind::Word {
            return Err(self.unexpected(&t, "an output column"));
        }
        let next = &self.tokens[self.pos + 1];
        if next.kind == TokenKind::Symbol("(") {
            let word = self.text(&t);
            let func = AggFunc::from_keyword(word).filter(|_| aggregates).ok_or_else(|| {
                let msg = if aggregates {
                    format!("unknown aggregate function `{word}`")
                } else {
                    "aggregate functions are only allowed in Aggregate outputs".to_string()
                };
                self.invalid_at(next.start, msg)
            })?;
            self.bump();
            self.bump();
            let star = self.need()?;
            let out = if func == AggFunc::Count && star.kind == TokenKind::Symbol("*") {
                self.bump();
                OutputExpr::count_star()
            } else {
                OutputExpr::agg(func, self.column_ref()?)
            };
            self.expect_symbol(")")?;
            return Ok(out);
        }
        if aggregates && AggFunc::from_keyword(self.text(&t)).is_some() && next.kind == TokenKind::Eof {
            return Err(Halt::Incomplete);
        }
        Ok(OutputExpr::column(self.column_ref()?))
    }

    fn column_ref(&mut self) -> PResult<ColumnRef> {
        let (first, first_tok) = self.ident("a column name")?;
        let t = self.need()?;
        if t.kind != TokenKind::Symbol(".") {
            self.check_bare(&first, &first_tok)?;
            return Ok(ColumnRef::bare(first));
        }
        if let Some(schema) = self.schema {
            if schema.table(&first).is_none() {
                return Err(self.invalid_code(Code::UnknownTable, first_tok.start, format!("unknown table `{first}`")));
            }
        }
        self.bump();
        let (column, tok) = self.ident("a column name")?;
        self.settled(&tok)?;
        if let Some(schema) = self.schema {
            if schema.resolve_parts(&first, &column).is_err() {
                return Err(self.invalid_code(
                    Code::UnknownColumn,
                    tok.start,
                    format!("table `{first}` has no column `{column}`"),
                ));
            }
        }
        Ok(ColumnRef::qualified(first, column))
    }

    fn check_bare(&self, name: &str, tok: &Token) -> PResult<()> {
        if let (Some(schema), Some(table)) = (self.schema, &self.scan_table) {
            if let Some(t) = schema.table(table) {
                if t.column(name).is_none() {
                    return Err(self.invalid_code(
                        Code::UnknownColumn,
                        tok.start,
                        format!("table `{}` has no column `{name}`", t.name),
                    ));
                }
            }
        }
        Ok(())
    }

    fn or_expr(&mut self) -> PResult<Predicate> {
        let mut left = self.and_expr()?;
        while self.keyword_choice(&["OR"])?.is_some() {
            left = left.or(self.and_expr()?);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> PResult<Predicate> {
        let mut left = self.not_expr()?;
        while self.keyword_choice(&["AND"])?.is_some() {
            left = left.and(self.not_expr()?);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> PResult<Predicate> {
        let t = self.need()?;
        if t.kind == TokenKind::Word && self.text(&t) == "NOT" {
            self.bump();
            return Ok(self.not_expr()?.negate());
        }
        if t.kind == TokenKind::Symbol("(") {
            self.bump();
            let p = self.or_expr()?;
            self.expect_symbol(")")?;
            return Ok(p);
        }
        let operand = self.operand()?;
        self.comparison_tail(operand)
    }

    fn comparison_tail(&mut self, operand: Operand) -> PResult<Predicate> {
        let t = self.need()?;
        if let TokenKind::Symbol(s) = t.kind {
            if let Some(op) = CompareOp::ALL.into_iter().find(|o| o.symbol() == s) {
                self.bump();
                let right = self.operand()?;
                return Ok(Predicate::compare(operand, op, right));
            }
        }
        match self.keyword_choice(&["IS", "IN", "LIKE"])? {
            Some("IS") => {
                let negated = match self.keyword_choice(&["NOT", "NULL"])? {
                    Some("NOT") => {
                        self.expect_keyword("NULL")?;
                        true
                    }
                    Some(_) => false,
                    None => {
                        let t = self.need()?;
                        return Err(self.unexpected(&t, "`NULL` or `NOT NULL`"));
                    }
                };
                Ok(Predicate::IsNull { operand, negated })
            }
            Some("IN") => {
                self.expect_symbol("(")?;
                let mut list = vec![self.literal()?];
                loop {
                    let t = self.need()?;
                    match t.kind {
                        TokenKind::Symbol(",") => {
                            self.bump();
                            list.push(self.literal()?);
                        }
                        TokenKind::Symbol(")") => {
                            self.bump();
                            break;
                        }
                        _ => return Err(self.unexpected(&t, "`,` or `)`")),
                    }
                }
                Ok(Predicate::In { operand, list })
            }
            Some(_) => {
                let t = self.need()?;
                match t.kind {
                    TokenKind::Str(s) => {
                        self.bump();
                        Ok(Predicate::Like { operand, pattern: s })
                    }
                    TokenKind::Fragment if self.text(&t).starts_with('\'') => Err(Halt::Incomplete),
                    _ => Err(self.unexpected(&t, "a quoted pattern")),
                }
            }
            None => Err(self.unexpected(&t, "a comparison, IS, IN or LIKE")),
        }
    }

    fn operand(&mut self) -> PResult<Operand> {
        let t = self.need()?;
        if t.kind == TokenKind::Word && !matches!(self.text(&t), "NULL" | "TRUE" | "FALSE") {
            return Ok(Operand::Column(self.column_ref()?));
        }
        Ok(Operand::Literal(self.literal()?))
    }

    fn literal(&mut self) -> PResult<Literal> {
        let t = self.need()?;
        let lit = match &t.kind {
            TokenKind::Integer(i) => Literal::Integer(*i),
            TokenKind::Real(r) => Literal::Real(*r),
            TokenKind::Str(s) => Literal::Text(s.clone()),
            TokenKind::Fragment => return Err(Halt::Incomplete),
            TokenKind::Word => match self.keyword_choice(&["NULL", "TRUE", "FALSE"])? {
                Some("NULL") => return Ok(Literal::Null),
                Some("TRUE") => return Ok(Literal::Boolean(true)),
                Some(_) => return Ok(Literal::Boolean(false)),
                None => return Err(self.unexpected(&t, "a literal")),
            },
            _ => return Err(self.unexpected(&t, "a literal")),
        };
        self.bump();
        Ok(lit)
    }
}

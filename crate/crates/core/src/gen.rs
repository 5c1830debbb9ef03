//! Seeded generator of (schema, database, plan) cases for property and
//! differential testing.
//!
//! Schemas have 1 to 3 tables of 2 to 5 columns and exactly one foreign key.
//! Tables hold at most 50 rows. Plans are valid by construction, reach depth
//! at most 4 and draw from all nine operators.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::interpret::Relation;
use crate::plan::{
    AggFunc, ColumnRef, CompareOp, Direction, Literal, Operand, Operator, OperatorArgs, OutputExpr, Plan, Predicate,
    SortKey,
};
use crate::schema::{Column, Database, ForeignKey, Schema, Table};
use crate::semantic::{output_signature, ColumnSignature};
use crate::value::{DataType, Value};

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_depth: usize,
    pub max_rows: usize,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            max_depth: 4,
            max_rows: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub schema: Schema,
    pub database: Database,
    pub plan: Plan,
}

pub fn generate_case(seed: u64) -> Case {
    generate_case_with(seed, &GenConfig::default())
}

pub fn generate_case_with(seed: u64, config: &GenConfig) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = generate_schema(&mut rng);
    let database = generate_database(&mut rng, &schema, config.max_rows);
    let depth = rng.gen_range(0..=config.max_depth);
    let plan = generate_plan(&mut rng, &schema, depth);
    Case { schema, database, plan }
}

const TABLE_NAMES: [&str; 6] = ["people", "orders", "items", "cities", "teams", "games"];
const COLUMN_NAMES: [&str; 10] = ["name", "score", "price", "qty", "born", "active", "label", "Rating", "day", "code"];
const WORDS: [&str; 10] = ["alpha", "Beta", "gamma", "delta", "Echo", "fox", "golf", "hotel", "india", "o'neil"];
const TYPES: [DataType; 5] = [DataType::Integer, DataType::Real, DataType::Text, DataType::Boolean, DataType::Date];

pub fn generate_schema<R: Rng>(rng: &mut R) -> Schema {
    let count = rng.gen_range(1..=3);
    let names: Vec<&str> = TABLE_NAMES.choose_multiple(rng, count).copied().collect();
    let mut tables = Vec::with_capacity(count);
    for (i, name) in names.iter().enumerate() {
        let mut columns = vec![Column {
            name: "id".into(),
            dtype: DataType::Integer,
        }];
        let mut foreign_keys = Vec::new();
        // table 1 references table 0; a lone table references itself
        if (count == 1 && i == 0) || i == 1 {
            let fk = format!("{}_id", names[0]);
            columns.push(Column {
                name: fk.clone(),
                dtype: DataType::Integer,
            });
            foreign_keys.push(ForeignKey {
                column: fk,
                remote_table: names[0].to_string(),
                remote_column: "id".into(),
            });
        }
        let extra = rng.gen_range(1..=5 - columns.len());
        for col in COLUMN_NAMES.choose_multiple(rng, extra) {
            columns.push(Column {
                name: col.to_string(),
                dtype: *TYPES.choose(rng).expect("non-empty"),
            });
        }
        tables.push(Table {
            name: name.to_string(),
            columns,
            primary_key: vec!["id".into()],
            foreign_keys,
        });
    }
    Schema::new("generated", tables).expect("generated schemas are well formed")
}

pub fn generate_database<R: Rng>(rng: &mut R, schema: &Schema, max_rows: usize) -> Database {
    let parent_rows = rng.gen_range(0..=max_rows.min(12));
    let relations = schema
        .tables()
        .iter()
        .map(|t| {
            // mostly small tables, sometimes up to the limit
            let n = if rng.gen_bool(0.1) {
                rng.gen_range(0..=max_rows)
            } else {
                rng.gen_range(0..=max_rows.min(12))
            };
            let rows = (0..n)
                .map(|r| {
                    t.columns
                        .iter()
                        .map(|c| {
                            if c.name == "id" {
                                Value::Integer(r as i64 + 1)
                            } else if t.foreign_keys.iter().any(|fk| fk.column == c.name) {
                                if parent_rows == 0 || rng.gen_bool(0.1) {
                                    Value::Null
                                } else {
                                    Value::Integer(rng.gen_range(1..=parent_rows as i64 + 1))
                                }
                            } else {
                                random_value(rng, c.dtype, 0.1)
                            }
                        })
                        .collect()
                })
                .collect();
            (t.name.clone(), Relation::new(t.signature(), rows))
        })
        .collect();
    Database::new(schema.clone(), relations).expect("generated rows conform")
}

fn random_value<R: Rng>(rng: &mut R, dtype: DataType, null_rate: f64) -> Value {
    if rng.gen_bool(null_rate) {
        return Value::Null;
    }
    match dtype {
        DataType::Integer => Value::Integer(rng.gen_range(-3..=15)),
        // quarters keep sums exact in binary floating point
        DataType::Real => Value::Real(f64::from(rng.gen_range(-8..=60)) * 0.25),
        DataType::Text => Value::Text(WORDS.choose(rng).expect("non-empty").to_string()),
        DataType::Boolean => Value::Boolean(rng.gen()),
        DataType::Date => {
            let base = chrono::NaiveDate::from_ymd_opt(2021, 12, 20).expect("valid date");
            Value::Date(base + chrono::Duration::days(rng.gen_range(0..40)))
        }
    }
}

fn random_literal<R: Rng>(rng: &mut R, dtype: DataType) -> Literal {
    match random_value(rng, dtype, 0.0) {
        Value::Integer(i) if rng.gen_bool(0.2) => Literal::Real(i as f64 + 0.5),
        Value::Integer(i) => Literal::Integer(i),
        Value::Real(r) => Literal::Real(r),
        Value::Text(s) => Literal::Text(s),
        Value::Boolean(b) => Literal::Boolean(b),
        v @ Value::Date(_) => Literal::Text(v.to_string()),
        Value::Null => Literal::Null,
    }
}

/// Generates a valid plan of depth at most `max_depth`.
pub fn generate_plan<R: Rng>(rng: &mut R, schema: &Schema, max_depth: usize) -> Plan {
    let mut g = PlanGen {
        rng,
        schema,
        next_alias: 0,
    };
    g.plan(max_depth, false)
}

/// A column a parent node can name.
#[derive(Debug, Clone)]
struct Ref {
    column: ColumnRef,
    dtype: DataType,
}

fn refs(sig: &ColumnSignature) -> Vec<Ref> {
    sig.columns()
        .iter()
        .filter_map(|c| {
            let column = match &c.qualifier {
                Some(q) => ColumnRef::qualified(q.clone(), c.name.clone()),
                // unaliased aggregates such as `COUNT(*)` cannot be named
                None if is_ident(&c.name) => ColumnRef::bare(c.name.clone()),
                None => return None,
            };
            Some(Ref { column, dtype: c.dtype })
        })
        .collect()
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct PlanGen<'a, R> {
    rng: &'a mut R,
    schema: &'a Schema,
    next_alias: usize,
}

impl<R: Rng> PlanGen<'_, R> {
    fn sig(&self, plan: &Plan) -> ColumnSignature {
        output_signature(plan, self.schema).unwrap_or_else(|d| {
            panic!("generator built an invalid plan: {d:?}\n{}", crate::parser::serialize(plan))
        })
    }

    fn alias(&mut self) -> String {
        self.next_alias += 1;
        format!("x{}", self.next_alias)
    }

    fn plan(&mut self, depth: usize, force_alias: bool) -> Plan {
        if depth == 0 {
            return self.scan(force_alias);
        }
        loop {
            let op = *[
                Operator::Scan,
                Operator::Aggregate,
                Operator::Filter,
                Operator::Join,
                Operator::Join,
                Operator::Except,
                Operator::Intersect,
                Operator::Union,
                Operator::Sort,
                Operator::TopSort,
            ]
            .choose(self.rng)
            .expect("non-empty");
            let built = match op {
                Operator::Scan => Some(self.scan(force_alias)),
                Operator::Filter => self.filter(depth, force_alias),
                Operator::Join => self.join(depth, force_alias),
                Operator::Aggregate => self.aggregate(depth, force_alias),
                Operator::Except | Operator::Intersect | Operator::Union => self.set_op(op, depth, force_alias),
                Operator::Sort | Operator::TopSort => self.sort(op, depth, force_alias),
            };
            if let Some(p) = built {
                return p;
            }
        }
    }

    fn outputs(&mut self, pool: &[Ref], force_alias: bool) -> Vec<OutputExpr> {
        let k = self.rng.gen_range(1..=pool.len().min(4));
        pool.choose_multiple(self.rng, k)
            .cloned()
            .collect::<Vec<_>>()
            .into_iter()
            .map(|r| {
                let o = OutputExpr::column(r.column);
                if force_alias || self.rng.gen_bool(0.15) {
                    let a = self.alias();
                    o.with_alias(a)
                } else {
                    o
                }
            })
            .collect()
    }

    fn scan(&mut self, force_alias: bool) -> Plan {
        let table = self.schema.tables().choose(self.rng).expect("non-empty").clone();
        let qualify = self.rng.gen_bool(0.3);
        let pool: Vec<Ref> = table
            .columns
            .iter()
            .map(|c| Ref {
                column: if qualify {
                    ColumnRef::qualified(table.name.clone(), c.name.clone())
                } else {
                    ColumnRef::bare(c.name.clone())
                },
                dtype: c.dtype,
            })
            .collect();
        let predicate = self.rng.gen_bool(0.5).then(|| self.predicate(&pool, 2));
        let outputs = self.outputs(&pool, force_alias);
        let distinct = self.rng.gen_bool(0.15);
        Plan::new(
            OperatorArgs::Scan {
                table: table.name,
                predicate,
                distinct,
                outputs,
            },
            vec![],
        )
        .expect("well-formed scan")
    }

    fn filter(&mut self, depth: usize, force_alias: bool) -> Option<Plan> {
        let child = self.plan(depth - 1, false);
        let pool = refs(&self.sig(&child));
        if pool.is_empty() {
            return None;
        }
        let predicate = self.predicate(&pool, 2);
        let outputs = self.outputs(&pool, force_alias);
        let distinct = self.rng.gen_bool(0.15);
        Plan::new(
            OperatorArgs::Filter {
                predicate,
                distinct,
                outputs,
            },
            vec![child],
        )
        .ok()
    }

    fn join(&mut self, depth: usize, force_alias: bool) -> Option<Plan> {
        let left = self.plan(depth - 1, false);
        let left_sig = self.sig(&left);
        let mut right = self.plan(depth - 1, false);
        let collides = |a: &ColumnSignature, b: &ColumnSignature| {
            let bn: Vec<String> = b.names().iter().map(|n| n.to_ascii_lowercase()).collect();
            a.names().iter().any(|n| bn.contains(&n.to_ascii_lowercase()))
        };
        if collides(&left_sig, &self.sig(&right)) {
            right = self.plan(depth - 1, true);
        }
        let right_sig = self.sig(&right);
        if collides(&left_sig, &right_sig) {
            return None;
        }
        let (l, r) = (refs(&left_sig), refs(&right_sig));
        if l.is_empty() || r.is_empty() {
            return None;
        }
        let pairs: Vec<(&Ref, &Ref)> = l
            .iter()
            .flat_map(|a| r.iter().map(move |b| (a, b)))
            .filter(|(a, b)| a.dtype.comparable_with(b.dtype))
            .collect();
        let both: Vec<Ref> = l.iter().chain(&r).cloned().collect();
        let mut predicate = match pairs.choose(self.rng) {
            Some((a, b)) => {
                let op = if self.rng.gen_bool(0.8) {
                    CompareOp::Eq
                } else {
                    *CompareOp::ALL.choose(self.rng).expect("non-empty")
                };
                Predicate::compare(Operand::Column(a.column.clone()), op, Operand::Column(b.column.clone()))
            }
            None => self.predicate(&both, 1),
        };
        if self.rng.gen_bool(0.2) {
            predicate = predicate.and(self.predicate(&both, 1));
        }
        let outputs = self.outputs(&both, force_alias);
        Plan::new(OperatorArgs::Join { predicate, outputs }, vec![left, right]).ok()
    }

    fn aggregate(&mut self, depth: usize, force_alias: bool) -> Option<Plan> {
        let child = self.plan(depth - 1, false);
        let pool = refs(&self.sig(&child));
        if pool.is_empty() {
            return None;
        }
        let n_groups = self.rng.gen_range(0..=pool.len().min(2));
        let groups: Vec<Ref> = pool.choose_multiple(self.rng, n_groups).cloned().collect();
        let mut outputs = Vec::new();
        for g in &groups {
            if self.rng.gen_bool(0.7) {
                let mut o = OutputExpr::column(g.column.clone());
                if force_alias || self.rng.gen_bool(0.3) {
                    o = o.with_alias(self.alias());
                }
                outputs.push(o);
            }
        }
        let n_aggs = self.rng.gen_range(1..=2);
        let mut texts = Vec::new();
        for _ in 0..n_aggs {
            let target = pool.choose(self.rng).expect("non-empty").clone();
            let mut funcs = vec![AggFunc::Count, AggFunc::Min, AggFunc::Max];
            if target.dtype.is_numeric() {
                funcs.extend([AggFunc::Sum, AggFunc::Avg, AggFunc::Sum]);
            }
            let mut o = if self.rng.gen_bool(0.25) {
                OutputExpr::count_star()
            } else {
                OutputExpr::agg(*funcs.choose(self.rng).expect("non-empty"), target.column)
            };
            if texts.contains(&o.expr_text()) {
                continue;
            }
            texts.push(o.expr_text());
            if force_alias || self.rng.gen_bool(0.6) {
                o = o.with_alias(self.alias());
            }
            outputs.push(o);
        }
        let group_by = groups.into_iter().map(|g| g.column).collect();
        Plan::new(OperatorArgs::Aggregate { group_by, outputs }, vec![child]).ok()
    }

    fn set_op(&mut self, op: Operator, depth: usize, force_alias: bool) -> Option<Plan> {
        let left = self.plan(depth - 1, false);
        let left_sig = self.sig(&left);
        let pool = refs(&left_sig);
        if pool.is_empty() {
            return None;
        }
        let shape = left_sig.dtypes();
        let fits = |sig: &ColumnSignature| {
            sig.len() == shape.len() && sig.dtypes().iter().zip(&shape).all(|(a, b)| a.unify(*b).is_some())
        };
        let mut right = None;
        for _ in 0..6 {
            let candidate = if self.rng.gen_bool(0.5) {
                self.shaped_scan(&shape)
            } else {
                Some(self.plan(depth - 1, false))
            };
            if let Some(c) = candidate {
                if fits(&self.sig(&c)) {
                    right = Some(c);
                    break;
                }
            }
        }
        // the left input itself always fits
        let right = right.unwrap_or_else(|| left.clone());
        let outputs = self.outputs(&pool, force_alias);
        let args = match op {
            Operator::Except => OperatorArgs::Except { outputs },
            Operator::Intersect => OperatorArgs::Intersect { outputs },
            _ => OperatorArgs::Union { outputs },
        };
        Plan::new(args, vec![left, right]).ok()
    }

    /// A Scan whose output types line up with `shape`, if some table allows it.
    fn shaped_scan(&mut self, shape: &[DataType]) -> Option<Plan> {
        let mut tables: Vec<Table> = self.schema.tables().to_vec();
        tables.shuffle(self.rng);
        for t in tables {
            let mut used: Vec<usize> = Vec::new();
            for dtype in shape {
                let options: Vec<usize> = (0..t.columns.len())
                    .filter(|i| !used.contains(i) && t.columns[*i].dtype.unify(*dtype).is_some())
                    .collect();
                match options.choose(self.rng) {
                    Some(&i) => used.push(i),
                    None => break,
                }
            }
            if used.len() == shape.len() {
                let outputs = used
                    .iter()
                    .map(|&i| OutputExpr::column(ColumnRef::bare(t.columns[i].name.clone())))
                    .collect();
                let pool: Vec<Ref> = t
                    .columns
                    .iter()
                    .map(|c| Ref {
                        column: ColumnRef::bare(c.name.clone()),
                        dtype: c.dtype,
                    })
                    .collect();
                let predicate = self.rng.gen_bool(0.5).then(|| self.predicate(&pool, 1));
                return Plan::new(
                    OperatorArgs::Scan {
                        table: t.name.clone(),
                        predicate,
                        distinct: false,
                        outputs,
                    },
                    vec![],
                )
                .ok();
            }
        }
        None
    }

    fn sort(&mut self, op: Operator, depth: usize, force_alias: bool) -> Option<Plan> {
        let child = self.plan(depth - 1, false);
        let pool = refs(&self.sig(&child));
        if pool.is_empty() {
            return None;
        }
        let k = self.rng.gen_range(1..=pool.len().min(2));
        let order_by: Vec<SortKey> = pool
            .choose_multiple(self.rng, k)
            .cloned()
            .collect::<Vec<_>>()
            .into_iter()
            .map(|r| SortKey {
                column: r.column,
                direction: if self.rng.gen_bool(0.5) { Direction::Asc } else { Direction::Desc },
            })
            .collect();
        let outputs = self.outputs(&pool, force_alias);
        let args = if op == Operator::TopSort {
            OperatorArgs::TopSort {
                rows: self.rng.gen_range(1..=5),
                order_by,
                outputs,
            }
        } else {
            OperatorArgs::Sort { order_by, outputs }
        };
        Plan::new(args, vec![child]).ok()
    }

    fn predicate(&mut self, pool: &[Ref], depth: usize) -> Predicate {
        if depth > 0 {
            match self.rng.gen_range(0..10) {
                0 | 1 => return self.predicate(pool, depth - 1).and(self.predicate(pool, depth - 1)),
                2 => return self.predicate(pool, depth - 1).or(self.predicate(pool, depth - 1)),
                3 => return self.predicate(pool, depth - 1).negate(),
                _ => {}
            }
        }
        let col = pool.choose(self.rng).expect("non-empty").clone();
        let operand = Operand::Column(col.column.clone());
        match self.rng.gen_range(0..10) {
            0 => Predicate::IsNull {
                operand,
                negated: self.rng.gen(),
            },
            1 => {
                let n = self.rng.gen_range(1..=3);
                let mut list: Vec<Literal> = (0..n).map(|_| random_literal(self.rng, col.dtype)).collect();
                if self.rng.gen_bool(0.2) {
                    list.push(Literal::Null);
                }
                Predicate::In { operand, list }
            }
            2 | 3 if col.dtype == DataType::Text => {
                let word = WORDS.choose(self.rng).expect("non-empty");
                let pattern = match self.rng.gen_range(0..3) {
                    0 => format!("{}%", word[..2].to_ascii_uppercase()),
                    1 => format!("%{}", &word[word.len() - 2..]),
                    _ => format!("_{}%", &word[1..3]),
                };
                Predicate::Like { operand, pattern }
            }
            4 => {
                let others: Vec<&Ref> = pool
                    .iter()
                    .filter(|r| r.dtype.comparable_with(col.dtype))
                    .collect();
                let other = others.choose(self.rng).expect("col itself qualifies");
                let op = *CompareOp::ALL.choose(self.rng).expect("non-empty");
                Predicate::compare(operand, op, Operand::Column(other.column.clone()))
            }
            _ => {
                let op = *CompareOp::ALL.choose(self.rng).expect("non-empty");
                let lit = if self.rng.gen_bool(0.03) {
                    Literal::Null
                } else {
                    random_literal(self.rng, col.dtype)
                };
                Predicate::compare(operand, op, Operand::Literal(lit))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::validate;

    #[test]
    fn generated_cases_are_valid_and_bounded() {
        for seed in 0..200 {
            let case = generate_case(seed);
            assert!(validate(&case.plan, &case.schema).ok, "seed {seed}");
            assert!(case.plan.depth() <= 4);
            for t in case.schema.tables() {
                assert!((2..=5).contains(&t.columns.len()));
                assert!(case.database.rows(&t.name).len() <= 50);
            }
            let fks: usize = case.schema.tables().iter().map(|t| t.foreign_keys.len()).sum();
            assert_eq!(fks, 1);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_case(7);
        let b = generate_case(7);
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.schema, b.schema);
    }
}

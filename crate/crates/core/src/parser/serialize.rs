use std::fmt::Write;

use crate::plan::{Direction, OperatorArgs, OutputExpr, Plan, Predicate, SortKey};

/// Canonical flat rendering: single spaces, `, ` between siblings.
pub fn serialize(plan: &Plan) -> String {
    let mut out = String::new();
    write_plan(plan, &mut out, None);
    out
}

/// Indented multi-line rendering for display. Parses to the same plan.
pub fn serialize_pretty(plan: &Plan) -> String {
    let mut out = String::new();
    write_plan(plan, &mut out, Some(0));
    out
}

fn write_plan(plan: &Plan, out: &mut String, indent: Option<usize>) {
    if plan.children().is_empty() {
        write_clause(plan.args(), out);
        return;
    }
    match indent {
        None => {
            out.push_str("[ ");
            for (i, c) in plan.children().iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_plan(c, out, None);
            }
            out.push_str(" ] Into: ");
        }
        Some(level) => {
            let pad = "  ".repeat(level + 1);
            out.push_str("[\n");
            for (i, c) in plan.children().iter().enumerate() {
                if i > 0 {
                    out.push_str(",\n");
                }
                out.push_str(&pad);
                write_plan(c, out, Some(level + 1));
            }
            out.push('\n');
            out.push_str(&"  ".repeat(level));
            out.push_str("] Into: ");
        }
    }
    write_clause(plan.args(), out);
}

fn write_clause(args: &OperatorArgs, out: &mut String) {
    out.push_str(args.operator().keyword());
    match args {
        OperatorArgs::Scan {
            table,
            predicate,
            distinct,
            ..
        } => {
            write!(out, " Table [{table}]").unwrap();
            if let Some(p) = predicate {
                write_bracket(out, "Predicate", &predicate_text(p));
            }
            if *distinct {
                out.push_str(" Distinct [true]");
            }
        }
        OperatorArgs::Aggregate { group_by, .. } => {
            if !group_by.is_empty() {
                let cols: Vec<_> = group_by.iter().map(|c| c.to_string()).collect();
                write_bracket(out, "GroupBy", &cols.join(", "));
            }
        }
        OperatorArgs::Filter {
            predicate, distinct, ..
        } => {
            write_bracket(out, "Predicate", &predicate_text(predicate));
            if *distinct {
                out.push_str(" Distinct [true]");
            }
        }
        OperatorArgs::Join { predicate, .. } => write_bracket(out, "Predicate", &predicate_text(predicate)),
        OperatorArgs::Except { .. } | OperatorArgs::Intersect { .. } | OperatorArgs::Union { .. } => {}
        OperatorArgs::Sort { order_by, .. } => write_bracket(out, "OrderBy", &keys_text(order_by)),
        OperatorArgs::TopSort { rows, order_by, .. } => {
            write!(out, " Rows [{rows}]").unwrap();
            write_bracket(out, "OrderBy", &keys_text(order_by));
        }
    }
    write_bracket(out, "Output", &outputs_text(args.outputs()));
}

fn write_bracket(out: &mut String, keyword: &str, body: &str) {
    write!(out, " {keyword} [{body}]").unwrap();
}

fn outputs_text(outputs: &[OutputExpr]) -> String {
    outputs.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(", ")
}

fn keys_text(keys: &[SortKey]) -> String {
    keys.iter()
        .map(|k| {
            let dir = match k.direction {
                Direction::Asc => "ASC",
                Direction::Desc => "DESC",
            };
            format!("{} {dir}", k.column)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Renders a predicate with just enough parentheses to re-parse to the same
/// tree (AND binds tighter than OR, both associate left).
pub fn predicate_text(p: &Predicate) -> String {
    match p {
        Predicate::Compare { left, op, right } => format!("{left} {} {right}", op.symbol()),
        Predicate::Like { operand, pattern } => format!("{operand} LIKE '{}'", pattern.replace('\'', "''")),
        Predicate::IsNull { operand, negated } => {
            format!("{operand} IS {}NULL", if *negated { "NOT " } else { "" })
        }
        Predicate::In { operand, list } => {
            let items: Vec<_> = list.iter().map(|l| l.to_string()).collect();
            format!("{operand} IN ({})", items.join(", "))
        }
        Predicate::Or(a, b) => {
            let right = match **b {
                Predicate::Or(..) => format!("({})", predicate_text(b)),
                _ => predicate_text(b),
            };
            format!("{} OR {right}", predicate_text(a))
        }
        Predicate::And(a, b) => {
            let left = match **a {
                Predicate::Or(..) => format!("({})", predicate_text(a)),
                _ => predicate_text(a),
            };
            let right = match **b {
                Predicate::Or(..) | Predicate::And(..) => format!("({})", predicate_text(b)),
                _ => predicate_text(b),
            };
            format!("{left} AND {right}")
        }
        Predicate::Not(inner) => match **inner {
            Predicate::Or(..) | Predicate::And(..) => format!("NOT ({})", predicate_text(inner)),
            _ => format!("NOT {}", predicate_text(inner)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn leaf_with_predicate() {
        let text = "Scan Table [visitor] Predicate [visitor.Level_of_membership = 1] Output [ID]";
        assert_eq!(serialize(&parse(text).unwrap()), text);
    }

    #[test]
    fn museum_plan_canonical_form() {
        let p = parse(super::super::tests::MUSEUM_PLAN).unwrap();
        let text = serialize(&p);
        assert_eq!(
            text,
            "[ [ Scan Table [visitor] Predicate [visitor.Level_of_membership = 1] Output [ID], \
             Scan Table [visit] Output [visitor_ID, Total_spent] ] Into: Join Predicate [visitor.ID = visit.visitor_ID] \
             Output [visit.Total_spent] ] Into: Aggregate Output [SUM(visit.Total_spent)]"
        );
        assert_eq!(parse(&text).unwrap(), p);
        assert_eq!(parse(&serialize_pretty(&p)).unwrap(), p);
    }

    #[test]
    fn topsort_clause() {
        let text = "[ Scan Table [t] Output [a] ] Into: TopSort Rows [3] OrderBy [t.a DESC] Output [t.a]";
        let p = parse(text).unwrap();
        let s = serialize(&p);
        assert!(s.contains("Rows [3]") && s.contains("OrderBy [t.a DESC]"));
        assert_eq!(parse(&s).unwrap(), p);
    }

    #[test]
    fn predicate_parenthesization_round_trips() {
        for pred in [
            "t.a = 1 OR t.b = 2 AND t.c = 3",
            "(t.a = 1 OR t.b = 2) AND t.c = 3",
            "t.a = 1 OR (t.b = 2 OR t.c = 3)",
            "t.a = 1 AND (t.b = 2 AND t.c = 3)",
            "NOT NOT t.a IS NULL",
            "NOT (t.a = 1 AND t.b <> 'it''s')",
            "t.a >= -1.5e-7",
        ] {
            let text = format!("Scan Table [t] Predicate [{pred}] Output [a]");
            let p = parse(&text).unwrap();
            assert_eq!(parse(&serialize(&p)).unwrap(), p, "{pred}");
        }
    }
}

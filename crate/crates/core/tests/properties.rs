use proptest::prelude::*;
use proptest::sample::Index;

use qpl::cte::compile;
use qpl::eval::rows_match;
use qpl::gen::{generate_case, Case};
use qpl::interpret::{interpret, Relation};
use qpl::parser::{check_prefix, check_prefix_with_schema, parse, serialize, PrefixVerdict};
use qpl::value::Value;

fn case() -> impl Strategy<Value = Case> {
    any::<u64>().prop_map(generate_case)
}

fn run(case: &Case, text: &str) -> Relation {
    let plan = parse(text).unwrap_or_else(|e| panic!("{text}: {e:?}"));
    interpret(&plan, &case.database).unwrap_or_else(|e| panic!("{text}: {e}"))
}

/// A table of the case and its column names.
fn table(case: &Case, pick: Index) -> (String, Vec<String>) {
    let t = pick.get(case.schema.tables());
    (t.name.clone(), t.columns.iter().map(|c| c.name.clone()).collect())
}

fn scan(t: &str, cols: &[String], predicate: Option<&str>) -> String {
    let pred = predicate.map(|p| format!(" Predicate [{p}]")).unwrap_or_default();
    format!("Scan Table [{t}]{pred} Output [{}]", cols.join(", "))
}

fn set_op(op: &str, l: &str, r: &str, t: &str, cols: &[String]) -> String {
    let outs: Vec<String> = cols.iter().map(|c| format!("{t}.{c}")).collect();
    format!("[ {l}, {r} ] Into: {op} Output [{}]", outs.join(", "))
}

fn multiset_contains(big: &[Vec<Value>], small: &[Vec<Value>]) -> bool {
    let mut pool: Vec<&Vec<Value>> = big.iter().collect();
    small.iter().all(|row| match pool.iter().position(|b| rows_match(&[(*b).clone()], std::slice::from_ref(row), true)) {
        Some(i) => {
            pool.swap_remove(i);
            true
        }
        None => false,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn serialize_then_parse_is_identity(case in case()) {
        let text = serialize(&case.plan);
        prop_assert_eq!(parse(&text).unwrap(), case.plan.clone());
        prop_assert_eq!(serialize(&parse(&text).unwrap()), text);
    }

    #[test]
    fn prefixes_of_valid_plans_are_never_invalid(case in case()) {
        let text = serialize(&case.plan);
        for (i, _) in text.char_indices() {
            let v = check_prefix(&text[..i]);
            prop_assert!(!v.is_invalid(), "prefix {:?} -> {:?}", &text[..i], v);
            let v = check_prefix_with_schema(&text[..i], &case.schema);
            prop_assert!(!v.is_invalid(), "schema prefix {:?} -> {:?}", &text[..i], v);
        }
        prop_assert_eq!(check_prefix(&text), PrefixVerdict::Complete);
    }

    #[test]
    fn complete_iff_parse_succeeds(case in case(), cut in any::<Index>(), junk in "[\\[\\], a-zA-Z0-9.=<>']{0,6}") {
        let text = serialize(&case.plan);
        let at = cut.index(text.len() + 1);
        let candidate = format!("{}{junk}", &text[..at]);
        let complete = check_prefix(&candidate) == PrefixVerdict::Complete;
        prop_assert_eq!(complete, parse(&candidate).is_ok(), "{:?}", candidate);
    }

    #[test]
    fn invalid_stays_invalid(case in case(), cut in any::<Index>(), bad in "[^ ]", tail in "[\\[\\], a-zA-Z0-9.=]{0,12}") {
        let text = serialize(&case.plan);
        let at = cut.index(text.len());
        let corrupted = format!("{}{bad}", &text[..at]);
        if check_prefix(&corrupted).is_invalid() {
            let extended = corrupted.clone() + &tail;
            prop_assert!(check_prefix(&extended).is_invalid(), "{:?}", extended);
        }
    }

    #[test]
    fn schema_verdicts_are_no_more_permissive(case in case(), cut in any::<Index>()) {
        let text = serialize(&case.plan);
        let prefix = &text[..cut.index(text.len() + 1)];
        if check_prefix(prefix).is_invalid() {
            prop_assert!(check_prefix_with_schema(prefix, &case.schema).is_invalid());
        }
    }

    #[test]
    fn depth_and_step_bounds(case in case()) {
        let d = case.plan.depth() as u32;
        let s = case.plan.step_count();
        prop_assert!(d < s as u32);
        prop_assert!(s < 2usize.pow(d + 1));
        prop_assert_eq!(compile(&case.plan, &case.schema).unwrap().clauses.len(), s);
    }

    #[test]
    fn execution_match_is_reflexive_symmetric_and_order_blind(case in case(), seed in any::<u64>()) {
        let a = interpret(&case.plan, &case.database).unwrap().into_rows();
        prop_assert!(rows_match(&a, &a, true));
        let mut b = a.clone();
        let n = b.len();
        if n > 1 {
            for i in 0..n {
                b.swap(i, (seed as usize).wrapping_add(i * 7) % n);
            }
        }
        prop_assert!(rows_match(&a, &b, false));
        prop_assert!(rows_match(&b, &a, false));
        prop_assert_eq!(rows_match(&a, &b, true), rows_match(&b, &a, true));
    }

    #[test]
    fn set_operation_algebra(case in case(), pick in any::<Index>(), lo in -5i64..60, hi in -5i64..60) {
        let (t, cols) = table(&case, pick);
        let l = scan(&t, &cols, Some(&format!("{t}.id > {lo}")));
        let r = scan(&t, &cols, Some(&format!("{t}.id < {hi}")));
        let distinct_l = format!("Scan Table [{t}] Predicate [{t}.id > {lo}] Distinct [true] Output [{}]", cols.join(", "));
        let dl = run(&case, &distinct_l).into_rows();

        let u1 = run(&case, &set_op("Union", &l, &r, &t, &cols)).into_rows();
        let u2 = run(&case, &set_op("Union", &r, &l, &t, &cols)).into_rows();
        prop_assert!(rows_match(&u1, &u2, false));

        let uu = run(&case, &set_op("Union", &l, &l, &t, &cols)).into_rows();
        prop_assert!(rows_match(&uu, &dl, false));

        let ee = run(&case, &set_op("Except", &l, &l, &t, &cols));
        prop_assert!(ee.is_empty());

        let i = run(&case, &set_op("Intersect", &l, &r, &t, &cols)).into_rows();
        let e = run(&case, &set_op("Except", &l, &r, &t, &cols)).into_rows();
        prop_assert!(multiset_contains(&dl, &i));
        prop_assert!(multiset_contains(&u1, &i));
        prop_assert_eq!(i.len() + e.len(), dl.len());
        prop_assert!(rows_match(&[i, e].concat(), &dl, false));
    }

    #[test]
    fn top_sort_returns_min_of_k_and_input(case in case(), pick in any::<Index>(), k in 1u64..80) {
        let (t, cols) = table(&case, pick);
        let input = scan(&t, &cols, None);
        let outs: Vec<String> = cols.iter().map(|c| format!("{t}.{c}")).collect();
        let text = format!("[ {input} ] Into: TopSort Rows [{k}] OrderBy [{t}.id DESC] Output [{}]", outs.join(", "));
        let n = case.database.rows(&t).len();
        let top = run(&case, &text);
        prop_assert_eq!(top.len(), n.min(k as usize));
        prop_assert!(top.is_ordered());
    }

    #[test]
    fn scan_predicates_only_remove_rows(case in case(), pick in any::<Index>(), bound in -5i64..60) {
        let (t, cols) = table(&case, pick);
        let all = run(&case, &scan(&t, &cols, None)).into_rows();
        let p = format!("{t}.id >= {bound}");
        let kept = run(&case, &scan(&t, &cols, Some(&p))).into_rows();
        let dropped = run(&case, &scan(&t, &cols, Some(&format!("NOT {p}")))).into_rows();
        prop_assert!(multiset_contains(&all, &kept));
        prop_assert!(kept.len() + dropped.len() <= all.len());
        let filtered = run(&case, &format!("[ {} ] Into: Filter Predicate [{p}] Output [{}]",
            scan(&t, &cols, None),
            cols.iter().map(|c| format!("{t}.{c}")).collect::<Vec<_>>().join(", ")));
        prop_assert!(rows_match(filtered.rows(), &kept, false));
    }

    #[test]
    fn every_sub_plan_runs(case in case()) {
        for sub in case.plan.sub_plans() {
            prop_assert!(qpl::validate(sub, &case.schema).ok, "{}", serialize(sub));
            prop_assert!(interpret(sub, &case.database).is_ok(), "{}", serialize(sub));
        }
    }
}

//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one `PASS` or `FAIL` line per criterion; exits non-zero if any fail.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpl::eval::{
    dataset_stats, differential_test, evaluate_dataset, parse_dataset, DatasetEntry, Registry, SqliteBackend,
};
use qpl::gen::{generate_case, Case};
use qpl::schema::load_schema_file;
use qpl::{
    check_prefix, compile, interpret, interpret_all_steps, load_database, parse, serialize, validate, Operator,
    PrefixVerdict, Value,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn museum() -> qpl::Database {
    let schema = load_schema_file(&fixtures().join("schemas/museum_visit.json")).unwrap();
    load_database(&schema, &fixtures().join("data/museum_visit")).unwrap()
}

fn museum_registry() -> Registry {
    let mut r = Registry::new();
    r.insert(museum());
    r
}

fn corpus(n: u64) -> Vec<Case> {
    (0..n).map(generate_case).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * b.abs().max(1.0)
}

fn museum_pipeline() -> Outcome {
    let start = Instant::now();
    let text = std::fs::read_to_string(fixtures().join("museum.qpl")).unwrap();
    let plan = parse(&text).map_err(|d| format!("parse failed: {d:?}"))?;
    ensure(plan.depth() == 2, || format!("depth {}", plan.depth()))?;
    ensure(plan.step_count() == 4, || format!("steps {}", plan.step_count()))?;
    let db = museum();
    let report = validate(&plan, db.schema());
    ensure(report.ok, || format!("validation: {:?}", report.diagnostics))?;
    let program = compile(&plan, db.schema()).map_err(|e| e.to_string())?;
    ensure(program.clauses.len() == 4, || format!("{} clauses", program.clauses.len()))?;
    let rel = interpret(&plan, &db).map_err(|e| e.to_string())?;
    let got = rel.rows().first().and_then(|r| r.first()).and_then(Value::as_f64);
    ensure(rel.len() == 1 && got.is_some_and(|v| close(v, 17.5)), || format!("result {:?}", rel.rows()))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("depth 2, 4 steps, 4 clauses, SUM = 17.5 in {elapsed:.2?}"))
}

fn differential() -> Outcome {
    let start = Instant::now();
    let mut backend = SqliteBackend::in_memory().map_err(|e| e.to_string())?;
    let report = differential_test(1, 500, &mut backend).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(report.covers_all_operators(), || format!("operators seen: {:?}", report.operators))?;
    ensure(report.max_depth <= 4 && report.max_rows <= 50, || {
        format!("depth {} rows {}", report.max_depth, report.max_rows)
    })?;
    ensure(report.passed(), || {
        let m = &report.mismatches[0];
        format!("{} mismatches; first: {} -> {}", report.mismatches.len(), m.plan, m.detail)
    })?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("500/500 trials agree, all 9 operators, in {elapsed:.1?}"))
}

fn prefix_properties() -> Outcome {
    let cases = corpus(1000);
    let mut prefixes = 0usize;
    for case in &cases {
        let text = serialize(&case.plan);
        for (i, _) in text.char_indices() {
            prefixes += 1;
            if let v @ PrefixVerdict::Invalid { .. } = check_prefix(&text[..i]) {
                return Err(format!("closure: {:?} -> {v:?}", &text[..i]));
            }
        }
        ensure(check_prefix(&text) == PrefixVerdict::Complete, || format!("not complete: {text}"))?;
    }

    let alphabet: Vec<char> = "[]():,.=<>!'\" aZ9_-*".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut corruptions, mut attempts, mut extensions) = (0usize, 0usize, 0usize);
    while corruptions < 1000 {
        attempts += 1;
        let text = serialize(&cases[rng.gen_range(0..cases.len())].plan);
        let at = rng.gen_range(0..text.len());
        let bad = alphabet[rng.gen_range(0..alphabet.len())];
        let corrupted = format!("{}{bad}", &text[..at]);
        if !check_prefix(&corrupted).is_invalid() {
            continue;
        }
        corruptions += 1;
        for k in 0..10 {
            let tail: String = if k == 0 {
                text[at + 1..].to_owned()
            } else {
                (0..rng.gen_range(1..24)).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
            };
            extensions += 1;
            let extended = format!("{corrupted}{tail}");
            ensure(check_prefix(&extended).is_invalid(), || format!("monotonicity: {extended:?}"))?;
        }
    }
    Ok(format!(
        "{prefixes} prefixes of 1000 plans never invalid; {corruptions} invalid corruptions ({attempts} tried) stay invalid under {extensions} extensions"
    ))
}

fn sub_plan_closure() -> Outcome {
    let cases = corpus(1000);
    let mut checked = 0usize;
    for case in &cases {
        let steps = interpret_all_steps(&case.plan, &case.database).map_err(|e| e.to_string())?;
        ensure(steps.len() == case.plan.step_count(), || "step count".into())?;
        for sub in case.plan.sub_plans() {
            checked += 1;
            let report = validate(sub, &case.schema);
            ensure(report.ok, || format!("{}: {:?}", serialize(sub), report.diagnostics))?;
            interpret(sub, &case.database).map_err(|e| format!("{}: {e}", serialize(sub)))?;
        }
    }
    Ok(format!("{checked} sub-plans of 1000 plans validate and execute"))
}

fn round_trip() -> Outcome {
    let first: Vec<String> = corpus(1000).iter().map(|c| serialize(&c.plan)).collect();
    let second: Vec<String> = corpus(1000).iter().map(|c| serialize(&c.plan)).collect();
    ensure(first == second, || "serialization differs between runs".into())?;
    for (case, text) in corpus(1000).iter().zip(&first) {
        let back = parse(text).map_err(|d| format!("{text}: {d:?}"))?;
        ensure(back == case.plan, || format!("structure differs: {text}"))?;
        ensure(&serialize(&back) == text, || format!("bytes differ: {text}"))?;
    }
    Ok("1000 plans round-trip structurally; output byte-identical across runs".into())
}

fn evaluation_arithmetic() -> Outcome {
    let (entries, bad) = parse_dataset(&std::fs::read_to_string(fixtures().join("confusion.jsonl")).unwrap());
    ensure(bad.is_empty() && entries.len() == 3, || "fixture".into())?;
    let registry = museum_registry();
    let report = evaluate_dataset(&entries, &registry).map_err(|e| e.to_string())?;
    let expect = [(Operator::Join, 0.5, 1.0, 2.0 / 3.0, 1), (Operator::Scan, 1.0, 0.5, 2.0 / 3.0, 2)];
    ensure(report.by_operator.len() == expect.len(), || format!("{:?}", report.by_operator))?;
    for (row, (op, p, r, f1, support)) in report.by_operator.iter().zip(expect) {
        ensure(
            row.op == op && row.precision == p && row.recall == r && close(row.f1, f1) && row.support == support,
            || format!("{row:?}"),
        )?;
    }
    ensure(report.root_accuracy.is_some_and(|a| close(a, 2.0 / 3.0)), || "root accuracy".into())?;

    let gold_as_pred: Vec<DatasetEntry> = entries
        .iter()
        .map(|e| DatasetEntry {
            prediction: Some(e.qpl.clone()),
            ..e.clone()
        })
        .collect();
    let report = evaluate_dataset(&gold_as_pred, &registry).map_err(|e| e.to_string())?;
    ensure(report.overall == 1.0, || format!("gold-as-pred overall {}", report.overall))?;

    let text = report.render_text();
    let stats = dataset_stats(&entries).map_err(|e| e.to_string())?.render_text();
    for needle in ["Depth", "Count", "Exec-match", "Operator", "P", "R", "F1", "Support"] {
        ensure(text.contains(needle), || format!("report lacks {needle}"))?;
    }
    ensure(stats.starts_with("Depth") && stats.contains("Total"), || "stats layout".into())?;
    let json = report.to_json();
    for key in ["overall", "by_depth", "by_operator", "failures"] {
        ensure(json.get(key).is_some(), || format!("json lacks {key}"))?;
    }
    Ok("Join 0.50/1.00/0.67, Scan 1.00/0.50/0.67; gold-as-prediction 1.0; layouts present".into())
}

/// A plan of exactly `depth`: a chain of Filters over a Scan.
fn chain(depth: usize) -> String {
    let mut text = "Scan Table [visit] Output [visitor_ID, Total_spent]".to_owned();
    for i in 0..depth {
        text = format!(
            "[ {text} ] Into: Filter Predicate [visit.Total_spent > {i}] Output [visit.visitor_ID, visit.Total_spent]"
        );
    }
    text
}

fn synthetic(histogram: &[usize]) -> Vec<DatasetEntry> {
    histogram
        .iter()
        .enumerate()
        .flat_map(|(d, &n)| {
            (0..n).map(move |_| DatasetEntry {
                db_id: "museum_visit".into(),
                question: String::new(),
                qpl: chain(d),
                prediction: None,
            })
        })
        .collect()
}

fn dataset_statistics() -> Outcome {
    let dev = [139, 397, 214, 143, 30, 6, 0, 0];
    let train = [909, 2790, 1531, 735, 117, 23, 8, 2];
    for hist in [dev, train] {
        let stats = dataset_stats(&synthetic(&hist)).map_err(|e| e.to_string())?;
        let got: Vec<usize> = (0..8).map(|d| stats.by_depth.get(&d).copied().unwrap_or(0)).collect();
        ensure(got == hist, || format!("histogram {got:?}"))?;
        ensure(stats.total == hist.iter().sum::<usize>(), || "total".into())?;
    }
    Ok("synthetic corpora reproduce 139/397/214/143/30/6 and 909/2790/1531/735/117/23/8/2 (source dataset not bundled)".into())
}

fn harness_from_predictions() -> Outcome {
    let registry = museum_registry();
    let golds = [
        "Scan Table [visitor] Output [ID]",
        "[ Scan Table [visitor] Output [ID] ] Into: Aggregate Output [COUNT(*) AS n]",
        &chain(2),
        "[ Scan Table [visit] Output [Total_spent] ] Into: TopSort Rows [2] OrderBy [visit.Total_spent DESC] Output [visit.Total_spent]",
    ];
    let predictions = [
        Some("Scan Table [visitor] Output [ID]"),
        Some("Scan Table [visitor] Output [ID"),
        Some("Scan Table [visitor] Output [Nope]"),
        None,
    ];
    let entries: Vec<DatasetEntry> = golds
        .iter()
        .zip(predictions)
        .map(|(g, p)| DatasetEntry {
            db_id: "museum_visit".into(),
            question: String::new(),
            qpl: g.to_string(),
            prediction: p.map(str::to_owned),
        })
        .collect();
    let report = evaluate_dataset(&entries, &registry).map_err(|e| e.to_string())?;
    ensure(report.evaluated == 4 && report.matched == 1, || {
        format!("{} of {} matched", report.matched, report.evaluated)
    })?;
    let kinds: Vec<&str> = report.failures.iter().map(|f| f.kind.as_str()).collect();
    ensure(kinds == ["parse", "validation", "missing-prediction"], || format!("failures {kinds:?}"))?;
    let text = report.render_text();
    ensure(text.contains("Execution match by depth") && text.contains("Root operator prediction"), || text.clone())?;
    ensure(report.by_depth.iter().map(|r| r.count).sum::<usize>() == 4, || "depth buckets".into())?;
    Ok("arbitrary predictions (valid, unparseable, invalid, missing) yield depth and operator tables".into())
}

fn prefix_throughput() -> Outcome {
    let text = serialize(&parse(&std::fs::read_to_string(fixtures().join("museum.qpl")).unwrap()).unwrap());
    let prefixes: Vec<&str> = text.char_indices().map(|(i, _)| &text[..i]).chain([text.as_str()]).collect();
    let start = Instant::now();
    let mut verdicts = 0usize;
    while start.elapsed() < Duration::from_millis(500) {
        for p in &prefixes {
            std::hint::black_box(check_prefix(std::hint::black_box(p)));
        }
        verdicts += prefixes.len();
    }
    let rate = verdicts as f64 / start.elapsed().as_secs_f64();
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    ensure(rate >= 10_000.0, || format!("{rate:.0} verdicts/s ({profile} build)"))?;
    Ok(format!("{rate:.0} verdicts/s on museum-plan prefixes ({profile} build)"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("pipeline round trip on the museum example", museum_pipeline),
        ("differential equivalence with SQLite", differential),
        ("incremental parser closure and monotonicity", prefix_properties),
        ("sub-plan closure", sub_plan_closure),
        ("serialization round trip and determinism", round_trip),
        ("evaluation arithmetic and report layout", evaluation_arithmetic),
        ("dataset depth statistics", dataset_statistics),
        ("harness tables from external predictions", harness_from_predictions),
        ("prefix-check throughput", prefix_throughput),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

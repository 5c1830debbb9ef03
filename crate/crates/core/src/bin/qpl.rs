use std::fs;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qpl::cte::{compile_with, render, Dialect};
use qpl::diagnostic::Diagnostic;
use qpl::eval::{compare_plans, dataset_stats, evaluate_dataset, parse_dataset, Outcome, Registry};
use qpl::interpret::{interpret, interpret_all_steps, Relation};
use qpl::parser::{check_prefix, check_prefix_with_schema, parse, serialize, PrefixVerdict};
use qpl::plan::Plan;
use qpl::schema::{load_database, load_schema_file, Database, Schema};
use qpl::semantic::validate;

#[derive(Parser)]
#[command(name = "qpl", version, about = "Query Plan Language toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a plan and print its canonical form and metrics.
    Parse {
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Plan file; standard input when omitted or `-`.
        input: Option<PathBuf>,
    },
    /// Check a plan against a schema.
    Validate {
        #[arg(long)]
        schema: PathBuf,
        input: Option<PathBuf>,
    },
    /// Print the CTE program for a plan.
    Compile {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, value_enum, default_value_t = DialectArg::Limit)]
        dialect: DialectArg,
        input: Option<PathBuf>,
    },
    /// Run a plan with the reference interpreter.
    Run {
        #[arg(long)]
        schema: PathBuf,
        /// Directory holding one `<table>.csv` per table.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Print the result of every step, bottom-up.
        #[arg(long)]
        steps: bool,
        input: Option<PathBuf>,
    },
    /// Run the sub-plan rooted at one step.
    Step {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// 1-based bottom-up step number.
        #[arg(long)]
        step: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        input: Option<PathBuf>,
    },
    /// Execution-match a predicted plan against a gold plan.
    Compare {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        data: PathBuf,
        gold: PathBuf,
        pred: PathBuf,
    },
    /// Evaluate predictions over a dataset.
    Eval {
        /// Directory of schema JSON files.
        #[arg(long)]
        schemas: PathBuf,
        /// Directory with one sub-directory of CSV files per database.
        #[arg(long)]
        data: PathBuf,
        /// JSON Lines dataset.
        #[arg(long)]
        dataset: PathBuf,
        /// One predicted plan per line, aligned with the dataset; `\n` escapes
        /// newlines inside a plan and an empty line means no prediction.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Where to write the JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Depth histogram of a dataset's gold plans.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Read one escaped prefix per line and print a verdict per line.
    CheckPrefix {
        #[arg(long)]
        schema: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum DialectArg {
    Limit,
    FetchFirst,
}

/// Exit 1 for operational errors, 2 for semantic failures.
enum Failure {
    Operational(String),
    Semantic(String),
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Operational(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Semantic(msg)) => {
            if !msg.is_empty() {
                eprintln!("{msg}");
            }
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Parse { schema, input } => cmd_parse(schema.as_deref(), input.as_deref()),
        Command::Validate { schema, input } => cmd_validate(&schema, input.as_deref()),
        Command::Compile {
            schema,
            dialect,
            input,
        } => cmd_compile(&schema, dialect, input.as_deref()),
        Command::Run {
            schema,
            data,
            format,
            steps,
            input,
        } => cmd_run(&schema, &data, format, steps, input.as_deref()),
        Command::Step {
            schema,
            data,
            step,
            format,
            input,
        } => cmd_step(&schema, &data, step, format, input.as_deref()),
        Command::Compare {
            schema,
            data,
            gold,
            pred,
        } => cmd_compare(&schema, &data, &gold, &pred),
        Command::Eval {
            schemas,
            data,
            dataset,
            pred,
            report,
        } => cmd_eval(&schemas, &data, &dataset, pred.as_deref(), report.as_deref()),
        Command::Stats { dataset } => cmd_stats(&dataset),
        Command::CheckPrefix { schema } => cmd_check_prefix(schema.as_deref()),
    }
}

fn read_input(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        None => read_stdin(),
        Some(p) if p.as_os_str() == "-" => read_stdin(),
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Operational(format!("{}: {e}", p.display()))),
    }
}

fn read_stdin() -> Result<String, Failure> {
    let mut s = String::new();
    io::stdin()
        .read_to_string(&mut s)
        .map_err(|e| Failure::Operational(format!("standard input: {e}")))?;
    Ok(s)
}

fn load_schema_arg(path: &Path) -> Result<Schema, Failure> {
    load_schema_file(path).map_err(|e| Failure::Operational(format!("{}: {e}", path.display())))
}

fn load_db(schema: Schema, dir: &Path) -> Result<Database, Failure> {
    load_database(&schema, dir).map_err(|e| Failure::Operational(e.to_string()))
}

/// `line:col` (1-based) of a byte offset.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn describe(text: &str, diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| {
            if d.step.is_some() {
                d.to_string()
            } else {
                let (line, col) = position(text, d.span.start);
                format!("{d} (line {line}, column {col})")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_text(text: &str) -> Result<Plan, Failure> {
    parse(text).map_err(|d| Failure::Semantic(describe(text, &d)))
}

fn parse_valid(text: &str, schema: &Schema) -> Result<Plan, Failure> {
    let plan = parse_text(text)?;
    let report = validate(&plan, schema);
    if !report.ok {
        return Err(Failure::Semantic(describe(text, &report.diagnostics)));
    }
    Ok(plan)
}

fn cmd_parse(schema: Option<&Path>, input: Option<&Path>) -> CmdResult {
    let text = read_input(input)?;
    let plan = match schema {
        Some(path) => {
            let schema = load_schema_arg(path)?;
            qpl::parser::parse_with_schema(&text, &schema).map_err(|d| Failure::Semantic(describe(&text, &d)))?
        }
        None => parse_text(&text)?,
    };
    println!("{}", serialize(&plan));
    println!("depth: {}", plan.depth());
    println!("steps: {}", plan.step_count());
    println!("root: {}", plan.root_operator());
    Ok(())
}

fn cmd_validate(schema: &Path, input: Option<&Path>) -> CmdResult {
    let schema = load_schema_arg(schema)?;
    let text = read_input(input)?;
    let plan = parse_text(&text)?;
    let report = validate(&plan, &schema);
    if !report.ok {
        return Err(Failure::Semantic(describe(&text, &report.diagnostics)));
    }
    for (i, sig) in report.signatures.iter().enumerate() {
        if let Some(sig) = sig {
            println!("Step_{}: {sig}", i + 1);
        }
    }
    println!("ok");
    Ok(())
}

fn cmd_compile(schema: &Path, dialect: DialectArg, input: Option<&Path>) -> CmdResult {
    let schema = load_schema_arg(schema)?;
    let text = read_input(input)?;
    let plan = parse_valid(&text, &schema)?;
    let dialect = match dialect {
        DialectArg::Limit => Dialect::Limit,
        DialectArg::FetchFirst => Dialect::FetchFirst,
    };
    let program = compile_with(&plan, &schema, dialect).map_err(|e| Failure::Semantic(e.to_string()))?;
    println!("{}", render(&program));
    Ok(())
}

fn print_relation(rel: &Relation, format: Format) {
    match format {
        Format::Csv => print!("{}", rel.to_csv()),
        Format::Json => println!("{}", rel.to_json()),
    }
}

fn cmd_run(schema: &Path, data: &Path, format: Format, steps: bool, input: Option<&Path>) -> CmdResult {
    let schema = load_schema_arg(schema)?;
    let text = read_input(input)?;
    let plan = parse_valid(&text, &schema)?;
    let db = load_db(schema, data)?;
    if steps {
        let results = interpret_all_steps(&plan, &db).map_err(|e| Failure::Semantic(e.to_string()))?;
        for (i, rel) in results.iter().enumerate() {
            if i > 0 {
                println!();
            }
            println!("-- Step_{}", i + 1);
            print_relation(rel, format);
        }
    } else {
        let rel = interpret(&plan, &db).map_err(|e| Failure::Semantic(e.to_string()))?;
        print_relation(&rel, format);
    }
    Ok(())
}

fn cmd_step(schema: &Path, data: &Path, step: usize, format: Format, input: Option<&Path>) -> CmdResult {
    let schema = load_schema_arg(schema)?;
    let text = read_input(input)?;
    let plan = parse_valid(&text, &schema)?;
    let subs = plan.sub_plans();
    let Some(sub) = step.checked_sub(1).and_then(|i| subs.get(i)) else {
        return Err(Failure::Semantic(format!("plan has steps 1..={}, not {step}", subs.len())));
    };
    let db = load_db(schema, data)?;
    println!("-- Step_{step}: {}", serialize(sub));
    let rel = interpret(sub, &db).map_err(|e| Failure::Semantic(e.to_string()))?;
    print_relation(&rel, format);
    Ok(())
}

fn cmd_compare(schema: &Path, data: &Path, gold: &Path, pred: &Path) -> CmdResult {
    let schema = load_schema_arg(schema)?;
    let gold_text = read_input(Some(gold))?;
    let pred_text = read_input(Some(pred))?;
    let gold = parse_valid(&gold_text, &schema)?;
    let pred = parse_text(&pred_text)?;
    let db = load_db(schema, data)?;
    match compare_plans(&gold, &pred, &db) {
        Outcome::Match => {
            println!("match");
            Ok(())
        }
        Outcome::Failed(kind, msg) => {
            println!("no match ({}): {msg}", kind.as_str());
            Err(Failure::Semantic(String::new()))
        }
    }
}

/// Loads every `*.json` schema in `schemas` and its CSV directory under `data`.
fn load_registry(schemas: &Path, data: &Path) -> Result<Registry, Failure> {
    let op = |e: io::Error, p: &Path| Failure::Operational(format!("{}: {e}", p.display()));
    let mut paths: Vec<PathBuf> = fs::read_dir(schemas)
        .map_err(|e| op(e, schemas))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut registry = Registry::new();
    for path in paths {
        let schema = load_schema_arg(&path)?;
        let dir = data.join(schema.db_id());
        registry.insert(load_db(schema, &dir)?);
    }
    Ok(registry)
}

/// Undoes the `\n` and `\\` escapes of the line protocols.
fn unescape(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn cmd_eval(schemas: &Path, data: &Path, dataset: &Path, pred: Option<&Path>, report: Option<&Path>) -> CmdResult {
    let text = read_input(Some(dataset))?;
    let (mut entries, malformed) = parse_dataset(&text);
    for m in &malformed {
        eprintln!("skipping malformed line {}: {}", m.line, m.message);
    }
    if !malformed.is_empty() {
        eprintln!("skipped {} malformed line(s)", malformed.len());
    }
    if let Some(path) = pred {
        let preds = read_input(Some(path))?;
        let lines: Vec<&str> = preds.lines().collect();
        for (i, e) in entries.iter_mut().enumerate() {
            e.prediction = lines.get(i).filter(|l| !l.trim().is_empty()).map(|l| unescape(l));
        }
    }
    let stats = dataset_stats(&entries).map_err(|e| Failure::Semantic(e.to_string()))?;
    println!("Gold plans by depth");
    print!("{}", stats.render_text());
    if entries.iter().all(|e| e.prediction.is_none()) {
        return Ok(());
    }
    let registry = load_registry(schemas, data)?;
    let result = evaluate_dataset(&entries, &registry).map_err(|e| Failure::Operational(e.to_string()))?;
    println!();
    print!("{}", result.render_text());
    if let Some(path) = report {
        let json = serde_json::to_string_pretty(&result.to_json()).expect("report serializes");
        fs::write(path, json + "\n").map_err(|e| Failure::Operational(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_stats(dataset: &Path) -> CmdResult {
    let text = read_input(Some(dataset))?;
    let (entries, malformed) = parse_dataset(&text);
    if !malformed.is_empty() {
        eprintln!("skipped {} malformed line(s)", malformed.len());
    }
    let stats = dataset_stats(&entries).map_err(|e| Failure::Semantic(e.to_string()))?;
    print!("{}", stats.render_text());
    Ok(())
}

fn cmd_check_prefix(schema: Option<&Path>) -> CmdResult {
    let schema = schema.map(load_schema_arg).transpose()?;
    let stdin = io::stdin();
    let mut out = BufWriter::new(io::stdout().lock());
    let io_err = |e: io::Error| Failure::Operational(e.to_string());
    for line in stdin.lock().lines() {
        let prefix = unescape(&line.map_err(io_err)?);
        let verdict = match &schema {
            Some(s) => check_prefix_with_schema(&prefix, s),
            None => check_prefix(&prefix),
        };
        match verdict {
            PrefixVerdict::ValidPrefix => writeln!(out, "VALID"),
            PrefixVerdict::Complete => writeln!(out, "COMPLETE"),
            PrefixVerdict::Invalid { offset, reason } => writeln!(out, "INVALID {offset} {reason}"),
        }
        .map_err(io_err)?;
        out.flush().map_err(io_err)?;
    }
    Ok(())
}

mod config;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use apac_core::access_analysis::{report, AnalysisOptions};
use apac_core::diag::{Diagnostic, Severity};
use apac_core::pipeline::{prepare, Prepared};
use apac_sim::{
    check_stf, extract_task_graph, simulate_makespan, Ablation, CostModel, Program, SimConfig, SimError,
};
use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;

use config::{Cli, Command, ConfigFile, RunConfig};

const EXIT_DIAGNOSTICS: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Failure with a specific exit status.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let rc = cli
        .config
        .as_deref()
        .map(ConfigFile::load)
        .unwrap_or_else(|| Ok(ConfigFile::default()))
        .and_then(|file| RunConfig::resolve(&cli, &file));
    let rc = match rc {
        Ok(rc) => rc,
        Err(e) => {
            eprintln!("apac: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(&cli.command, &rc) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<Exit>() {
            Some(Exit(code)) => ExitCode::from(*code),
            None => {
                eprintln!("apac: {e:#}");
                ExitCode::from(EXIT_DIAGNOSTICS)
            }
        },
    }
}

fn run(command: &Command, rc: &RunConfig) -> Result<()> {
    match command {
        Command::Transform { inputs, .. } => transform(inputs, rc),
        Command::Analyze { input, .. } => analyze(input, rc),
        Command::Graph { input, .. } => graph(input, rc),
        Command::Check { input, .. } => check(input, rc),
    }
}

fn options(rc: &RunConfig) -> AnalysisOptions {
    AnalysisOptions {
        exclude: rc.exclude.clone(),
    }
}

fn print_diagnostics(file: &Path, diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{}", d.render(&file.display().to_string()));
    }
}

/// Reads and analyzes `path`, printing diagnostics on failure.
fn load(path: &Path, rc: &RunConfig) -> Result<Prepared> {
    let src = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    match prepare(&src, &options(rc)) {
        Ok(p) => {
            print_diagnostics(path, &p.plan.warnings);
            Ok(p)
        }
        Err(diags) => {
            print_diagnostics(path, &diags);
            Err(Exit(EXIT_DIAGNOSTICS).into())
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("cannot write into {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn transform(inputs: &[PathBuf], rc: &RunConfig) -> Result<()> {
    let targets: Vec<Option<PathBuf>> = match (&rc.output, inputs.len()) {
        (None, _) => vec![None; inputs.len()],
        (Some(out), 1) => vec![Some(out.clone())],
        (Some(dir), _) => {
            if !dir.is_dir() {
                eprintln!("apac: with several inputs, -o must name an existing directory");
                bail!(Exit(EXIT_USAGE));
            }
            inputs.iter().map(|i| Some(dir.join(i.file_name().unwrap_or_default()))).collect()
        }
    };
    for (i, t) in inputs.iter().zip(&targets) {
        if t.as_deref().is_some_and(|t| same_file(i, t)) {
            eprintln!("apac: refusing to overwrite input {}", i.display());
            bail!(Exit(EXIT_USAGE));
        }
    }
    let results: Vec<Result<String>> = inputs
        .par_iter()
        .map(|path| {
            let p = load(path, rc)?;
            p.emit(rc.strategy).map_err(|diags| {
                print_diagnostics(path, &diags);
                Exit(EXIT_DIAGNOSTICS).into()
            })
        })
        .collect();
    let mut failed = false;
    let mut summary = Vec::new();
    for ((path, target), res) in inputs.iter().zip(&targets).zip(results) {
        match res {
            Ok(text) => {
                match target {
                    Some(t) => write_atomic(t, text.as_bytes())?,
                    None if !rc.json => print!("{text}"),
                    None => {}
                }
                summary.push(serde_json::json!({"input": path, "output": target, "ok": true}));
            }
            Err(e) => {
                if e.downcast_ref::<Exit>().is_none() {
                    eprintln!("apac: {e:#}");
                }
                failed = true;
                summary.push(serde_json::json!({"input": path, "ok": false}));
            }
        }
    }
    if rc.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    if failed {
        bail!(Exit(EXIT_DIAGNOSTICS));
    }
    Ok(())
}

fn analyze(input: &Path, rc: &RunConfig) -> Result<()> {
    let p = load(input, rc)?;
    let functions = report(&p.model1, &p.plan);
    if rc.json {
        println!("{}", serde_json::to_string_pretty(&functions)?);
        return Ok(());
    }
    for f in &functions {
        let mut tags = Vec::new();
        if f.taskgroup {
            tags.push("taskgroup");
        }
        if f.excluded {
            tags.push("excluded");
        }
        if f.touches_globals {
            tags.push("touches globals");
        }
        println!("{}{}", f.name, if tags.is_empty() { String::new() } else { format!(" [{}]", tags.join(", ")) });
        for c in &f.calls {
            if c.taskified {
                println!("  line {}: task {} in({}) inout({})", c.line, c.callee, c.in_vars.join(", "), c.inout_vars.join(", "));
            } else {
                println!("  line {}: inline {} ({})", c.line, c.callee, c.reason.as_deref().unwrap_or("not taskifiable"));
            }
        }
        for s in &f.syncs {
            println!("  line {}:{}: taskwait ({:?})", s.line, s.column, s.reason);
        }
        for pr in &f.promotions {
            println!("  line {}: promote {}{}", pr.line, pr.var, if pr.is_alias { " (alias)" } else { "" });
        }
    }
    Ok(())
}

fn sim_config(rc: &RunConfig) -> SimConfig {
    let mut cost = CostModel::default();
    for (f, i) in &rc.cost_args {
        cost = cost.with_arg_cost(f, *i);
    }
    SimConfig::default().with_entry(&rc.entry).with_strategy(rc.strategy).with_cost(cost)
}

fn sim_failure(input: &Path, e: SimError) -> anyhow::Error {
    let d = Diagnostic {
        severity: Severity::Error,
        span: Default::default(),
        message: e.to_string(),
    };
    eprintln!("{}", d.render(&input.display().to_string()));
    Exit(EXIT_DIAGNOSTICS).into()
}

#[derive(Serialize)]
struct GraphSummary {
    nodes: usize,
    tasks: usize,
    edges: usize,
    max_depth: u32,
    total_cost: u64,
    critical_path: u64,
    workers: usize,
    makespan: u64,
    speedup: f64,
}

fn graph(input: &Path, rc: &RunConfig) -> Result<()> {
    let p = load(input, rc)?;
    let cfg = sim_config(rc);
    let program = Program::tasked(&p, &Ablation::default()).map_err(|e| sim_failure(input, e))?;
    let ex = extract_task_graph(&program, &cfg).map_err(|e| sim_failure(input, e))?;
    if let Some(dot) = &rc.dot {
        write_atomic(dot, ex.graph.to_dot().as_bytes())?;
    }
    let m = simulate_makespan(&ex.graph, rc.workers);
    let s = GraphSummary {
        nodes: ex.graph.len(),
        tasks: ex.graph.task_count() - 1,
        edges: ex.graph.edges.len(),
        max_depth: ex.graph.max_depth(),
        total_cost: m.total_cost,
        critical_path: m.critical_path,
        workers: m.workers,
        makespan: m.makespan,
        speedup: m.speedup(),
    };
    if rc.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
    } else {
        println!("nodes {} (tasks {}), edges {}, max depth {}", s.nodes, s.tasks, s.edges, s.max_depth);
        println!(
            "cost {}, critical path {}, makespan on {} workers {}, speedup {:.3}",
            s.total_cost, s.critical_path, s.workers, s.makespan, s.speedup
        );
    }
    Ok(())
}

fn ablation(rc: &RunConfig) -> Ablation {
    let mut a = Ablation {
        inline_cleanup: rc.early_free,
        ..Ablation::default()
    };
    for (f, i) in &rc.drop_syncs {
        match i {
            Some(i) => a.drop_syncs.push((f.clone(), *i)),
            None => a.drop_all_syncs_in.push(f.clone()),
        }
    }
    a
}

#[derive(Serialize)]
struct CheckLine<'a> {
    schedule: usize,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    divergence: Option<&'a str>,
}

#[derive(Serialize)]
struct CheckSummary<'a> {
    nodes: usize,
    exhaustive: bool,
    schedules: usize,
    divergent: usize,
    results: Vec<CheckLine<'a>>,
}

fn check(input: &Path, rc: &RunConfig) -> Result<()> {
    let p = load(input, rc)?;
    let cfg = sim_config(rc);
    let report = check_stf(&p, &ablation(rc), &cfg, rc.schedules, rc.seed).map_err(|e| sim_failure(input, e))?;
    let lines: Vec<CheckLine> = report
        .verdicts
        .iter()
        .map(|v| CheckLine {
            schedule: v.index,
            pass: v.divergence.is_none(),
            divergence: v.divergence.as_deref(),
        })
        .collect();
    if rc.json {
        let s = CheckSummary {
            nodes: report.graph.len(),
            exhaustive: report.exhaustive,
            schedules: lines.len(),
            divergent: report.divergences(),
            results: lines,
        };
        println!("{}", serde_json::to_string_pretty(&s)?);
    } else {
        let mut out = std::io::stdout().lock();
        for l in &lines {
            match l.divergence {
                None => writeln!(out, "PASS schedule {}", l.schedule)?,
                Some(d) => writeln!(out, "FAIL schedule {}: {d}", l.schedule)?,
            }
        }
        writeln!(
            out,
            "{}: {} of {} {} schedules diverged ({} graph nodes)",
            if report.passed() { "PASS" } else { "FAIL" },
            report.divergences(),
            lines.len(),
            if report.exhaustive { "enumerated" } else { "sampled" },
            report.graph.len()
        )?;
    }
    if !report.passed() {
        bail!(Exit(EXIT_CHECK_FAILED));
    }
    Ok(())
}

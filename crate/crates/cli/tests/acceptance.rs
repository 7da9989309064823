//! One line per acceptance criterion. Run with `--nocapture` to see them.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use apac_core::access_analysis::{classify_parameter, AccessMode, AnalysisOptions};
use apac_core::frontend::lexer::token_stream;
use apac_core::frontend::sema::{DeclaratorKind, ParamInfo};
use apac_core::pipeline::{prepare, transform_source, Prepared};
use apac_core::throttle::ThrottleStrategy;
use apac_sim::{check_stf, extract_task_graph, run_deferred, simulate_makespan, Ablation, CostModel, Program, ScheduleRequest, SimConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const GOLDEN_TIME_LIMIT: Duration = Duration::from_secs(1);
const CLASSIFICATION_CASES: u32 = 10_000;
const MIN_STF_PROGRAMS: usize = 10;
const STF_SEED: u64 = 42;
const DEPTH_LIMIT: u32 = 5;
const COUNT_LIMITS: &[u32] = &[1, 2, 4, 8];
const PERF_WORKERS: usize = 4;
const SPEEDUP_RANGE: (f64, f64) = (1.5, 4.0);
const PERF_TIME_LIMIT: Duration = Duration::from_secs(10);

const STF_PROGRAMS: &[&str] = &[
    "aliases", "arrays", "bank", "code3_main", "code4_main", "fib", "loops", "mergesort", "molecular", "quicksort", "reduction", "returns", "scopes",
];

fn corpus(rel: &str) -> String {
    let path = format!("{}/../../corpus/{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn prepared(rel: &str) -> Prepared {
    prepare(&corpus(rel), &AnalysisOptions::default()).unwrap_or_else(|d| panic!("{rel}: {d:?}"))
}

/// Tokens with numeric suffixes of generated names removed.
fn tokens(src: &str) -> Vec<String> {
    token_stream(src)
        .unwrap()
        .into_iter()
        .map(|t| match t.strip_prefix("apac_") {
            Some(rest) => {
                let trimmed = rest.trim_end_matches(|c: char| c.is_ascii_digit());
                format!("apac_{}", trimmed.strip_suffix('_').unwrap_or(trimmed))
            }
            None => t,
        })
        .collect()
}

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn golden() -> Verdict {
    let mut worst = Duration::ZERO;
    for i in 1..=5 {
        let original = corpus(&format!("golden/code{i}.cpp"));
        let expected = corpus(&format!("golden/code{i}.expected.cpp"));
        let start = Instant::now();
        let out = match transform_source(&original, &AnalysisOptions::default(), ThrottleStrategy::Unlimited) {
            Ok(out) => out,
            Err(d) => return Verdict::Fail(format!("code{i} rejected: {d:?}")),
        };
        let took = start.elapsed();
        worst = worst.max(took);
        if took >= GOLDEN_TIME_LIMIT {
            return Verdict::Fail(format!("code{i} took {took:?}"));
        }
        if tokens(&out) != tokens(&expected) {
            return Verdict::Fail(format!("code{i} tokens differ"));
        }
    }
    Verdict::Pass(format!("5 listings token-equal, slowest {worst:?}"))
}

fn classification() -> Verdict {
    let strategy = (
        "[a-z][a-z0-9_]{0,6}",
        prop::sample::select(vec!["int", "long", "double", "bool", "char", "Cell", "Vec3"]),
        prop::sample::select(vec![DeclaratorKind::ByValue, DeclaratorKind::Reference, DeclaratorKind::Pointer]),
        any::<bool>(),
    );
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: CLASSIFICATION_CASES,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let result = runner.run(&strategy, |(name, base, declarator, is_const_qualified)| {
        let p = ParamInfo {
            name,
            base_type: base.to_string(),
            declarator,
            is_const_qualified,
        };
        let read_only = matches!(p.declarator, DeclaratorKind::ByValue) || p.is_const_qualified;
        let expected = if read_only { AccessMode::In } else { AccessMode::InOut };
        prop_assert_eq!(classify_parameter(&p), expected);
        Ok(())
    });
    match result {
        Ok(()) => Verdict::Pass(format!("{CLASSIFICATION_CASES} parameters")),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn zero_edits() -> Verdict {
    let mut files: Vec<String> = (1..=5).map(|i| format!("golden/code{i}.cpp")).collect();
    files.extend(STF_PROGRAMS.iter().map(|n| format!("stf/{n}.cpp")));
    let mut checked = 0;
    for rel in &files {
        let p = prepared(rel);
        for strategy in [ThrottleStrategy::Unlimited, ThrottleStrategy::MaxDepth(DEPTH_LIMIT), ThrottleStrategy::MaxCount(4)] {
            let out = p.emit(strategy).unwrap();
            for f in &p.model1.functions {
                let untouched = p.plan.function(f.id).is_none_or(|fp| fp.tasks.is_empty() && fp.syncs.is_empty() && !fp.needs_taskgroup);
                let Some(body) = f.body_span.filter(|_| untouched) else { continue };
                let text = &p.text1[body.start..body.end];
                if !p.original.contains(text) || !out.contains(text) {
                    return Verdict::Fail(format!("{rel}: `{}` edited under {strategy}", f.name));
                }
                checked += 1;
            }
        }
    }
    if checked == 0 {
        return Verdict::Fail("no function without taskifiable calls found".into());
    }
    Verdict::Pass(format!("{checked} function bodies verbatim"))
}

fn stf_equivalence() -> Verdict {
    let mut schedules = 0;
    for name in STF_PROGRAMS {
        let p = prepared(&format!("stf/{name}.cpp"));
        for strategy in [ThrottleStrategy::Unlimited, ThrottleStrategy::MaxDepth(DEPTH_LIMIT)] {
            let cfg = SimConfig::default().with_strategy(strategy);
            let report = match check_stf(&p, &Ablation::default(), &cfg, ScheduleRequest::All, STF_SEED) {
                Ok(r) => r,
                Err(e) => return Verdict::Fail(format!("{name}: {e}")),
            };
            if report.divergences() > 0 {
                return Verdict::Fail(format!("{name} under {strategy}: {} divergent schedules", report.divergences()));
            }
            schedules += report.verdicts.len();
        }
    }
    if STF_PROGRAMS.len() < MIN_STF_PROGRAMS {
        return Verdict::Fail(format!("only {} programs", STF_PROGRAMS.len()));
    }
    Verdict::Pass(format!("{} programs, {schedules} schedules, 0 divergences", STF_PROGRAMS.len()))
}

fn sync_ablation() -> Verdict {
    let cases = [
        (
            "code3_main",
            Ablation {
                drop_all_syncs_in: vec!["main".into()],
                ..Ablation::default()
            },
        ),
        (
            "code4_main",
            Ablation {
                drop_syncs: vec![("main".into(), 0)],
                ..Ablation::default()
            },
        ),
    ];
    let mut found = Vec::new();
    for (name, ablation) in cases {
        let p = prepared(&format!("stf/{name}.cpp"));
        let cfg = SimConfig::default().with_strategy(ThrottleStrategy::Unlimited);
        let report = match check_stf(&p, &ablation, &cfg, ScheduleRequest::All, STF_SEED) {
            Ok(r) => r,
            Err(e) => return Verdict::Fail(format!("{name}: {e}")),
        };
        if report.divergences() == 0 {
            return Verdict::Fail(format!("{name}: no divergent schedule without its sync"));
        }
        found.push(format!("{name} {}/{}", report.divergences(), report.verdicts.len()));
    }
    Verdict::Pass(format!("divergent schedules: {}", found.join(", ")))
}

fn depth_throttle() -> Verdict {
    let program = Program::tasked(&prepared("perf/quicksort_4096.cpp"), &Ablation::default()).unwrap();
    let limited = extract_task_graph(&program, &SimConfig::default().with_strategy(ThrottleStrategy::MaxDepth(DEPTH_LIMIT))).unwrap();
    let zero = extract_task_graph(&program, &SimConfig::default().with_strategy(ThrottleStrategy::MaxDepth(0))).unwrap();
    if limited.graph.max_depth() > DEPTH_LIMIT {
        return Verdict::Fail(format!("max depth {}", limited.graph.max_depth()));
    }
    if zero.graph.len() != 1 {
        return Verdict::Fail(format!("depth:0 gave {} nodes", zero.graph.len()));
    }
    Verdict::Pass(format!("depth:{DEPTH_LIMIT} max depth {}, depth:0 one node", limited.graph.max_depth()))
}

fn count_throttle() -> Verdict {
    let mut groups = 0;
    for name in ["fib", "mergesort", "quicksort", "reduction", "code3_main", "code4_main"] {
        let program = Program::tasked(&prepared(&format!("stf/{name}.cpp")), &Ablation::default()).unwrap();
        for &n in COUNT_LIMITS {
            let (_, stats) = match run_deferred(&program, &SimConfig::default().with_strategy(ThrottleStrategy::MaxCount(n))) {
                Ok(r) => r,
                Err(e) => return Verdict::Fail(format!("{name} count:{n}: {e}")),
            };
            if stats.increments != stats.decrements || stats.final_live != 0 {
                return Verdict::Fail(format!("{name} count:{n}: {} increments, {} decrements", stats.increments, stats.decrements));
            }
            if let Some(g) = stats.groups.iter().find(|g| g.active && g.live_at_entry >= u64::from(n)) {
                return Verdict::Fail(format!("{name} count:{n}: group activated with {} live", g.live_at_entry));
            }
            groups += stats.groups.len();
        }
    }
    Verdict::Pass(format!("balanced counters over {groups} groups"))
}

fn perf() -> Verdict {
    let start = Instant::now();
    let program = Program::tasked(&prepared("perf/quicksort_4096.cpp"), &Ablation::default()).unwrap();
    let cfg = SimConfig::default()
        .with_strategy(ThrottleStrategy::MaxDepth(DEPTH_LIMIT))
        .with_cost(CostModel::default().with_arg_cost("partition", 1));
    let ex = extract_task_graph(&program, &cfg).unwrap();
    let m = simulate_makespan(&ex.graph, PERF_WORKERS);
    let took = start.elapsed();
    let speedup = m.speedup();
    let detail = format!("speedup {speedup:.3}, critical path {}, makespan {}, total {}, {took:?}", m.critical_path, m.makespan, m.total_cost);
    if ex.state.stdout != "1 982449637\n" {
        return Verdict::Fail(format!("wrong output {:?}", ex.state.stdout));
    }
    let bounds = m.critical_path <= m.makespan && m.makespan <= m.total_cost && m.total_cost.div_ceil(PERF_WORKERS as u64) <= m.makespan;
    if !(SPEEDUP_RANGE.0..=SPEEDUP_RANGE.1).contains(&speedup) || !bounds || took >= PERF_TIME_LIMIT {
        return Verdict::Fail(detail);
    }
    Verdict::Pass(detail)
}

fn openmp_available(dir: &Path) -> bool {
    let probe = dir.join("probe.cpp");
    std::fs::write(&probe, "#include <omp.h>\nint main() { return omp_get_max_threads() > 0 ? 0 : 1; }\n").unwrap();
    Command::new("g++")
        .arg("-fopenmp")
        .arg(&probe)
        .arg("-o")
        .arg(dir.join("probe"))
        .output()
        .is_ok_and(|o| o.status.success())
}

fn compile_and_run(dir: &Path, name: &str, src: &str, openmp: bool) -> Result<String, String> {
    let file = dir.join(format!("{name}.cpp"));
    let exe = dir.join(name);
    std::fs::write(&file, src).map_err(|e| e.to_string())?;
    let mut cc = Command::new("g++");
    cc.arg("-O1").arg(&file).arg("-o").arg(&exe);
    if openmp {
        cc.arg("-fopenmp");
    }
    let out = cc.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{name}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let run = Command::new(&exe).env("OMP_NUM_THREADS", "4").output().map_err(|e| e.to_string())?;
    if !run.status.success() {
        return Err(format!("{name} exited with {}", run.status));
    }
    Ok(String::from_utf8_lossy(&run.stdout).into_owned())
}

fn native() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    if !openmp_available(dir.path()) {
        return Verdict::Skip("g++ -fopenmp unavailable".into());
    }
    let mut runs = 0;
    for name in STF_PROGRAMS.iter().copied().chain(["quicksort_4096"]) {
        let rel = if name == "quicksort_4096" { "perf/quicksort_4096.cpp".to_string() } else { format!("stf/{name}.cpp") };
        let src = corpus(&rel);
        let reference = match compile_and_run(dir.path(), &format!("{name}_orig"), &src, false) {
            Ok(s) => s,
            Err(e) => return Verdict::Fail(e),
        };
        for strategy in [ThrottleStrategy::Unlimited, ThrottleStrategy::MaxDepth(DEPTH_LIMIT), ThrottleStrategy::MaxCount(4)] {
            let annotated = transform_source(&src, &AnalysisOptions::default(), strategy).unwrap();
            match compile_and_run(dir.path(), &format!("{name}_omp"), &annotated, true) {
                Ok(out) if out == reference => runs += 1,
                Ok(out) => return Verdict::Fail(format!("{name} under {strategy}: {out:?} vs {reference:?}")),
                Err(e) => return Verdict::Fail(e),
            }
        }
    }
    Verdict::Pass(format!("{runs} native OpenMP runs match"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("golden listings", golden),
        ("classification law", classification),
        ("zero edits", zero_edits),
        ("schedule equivalence", stf_equivalence),
        ("sync necessity", sync_ablation),
        ("depth throttle", depth_throttle),
        ("count throttle", count_throttle),
        ("quicksort speedup", perf),
        ("native OpenMP", native),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Verdict::Pass(d) => println!("[PASS] {} {name}: {d}", i + 1),
            Verdict::Skip(d) => println!("[SKIP] {} {name}: {d}", i + 1),
            Verdict::Fail(d) => {
                println!("[FAIL] {} {name}: {d}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

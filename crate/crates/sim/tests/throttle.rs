mod common;

use apac_core::throttle::ThrottleStrategy;
use apac_sim::{extract_task_graph, run_deferred, Ablation, Program, SimConfig};
use common::{corpus, prepared, stf, NATIVE_STDOUT};

fn quicksort_4096() -> Program {
    Program::tasked(&prepared(&corpus("perf/quicksort_4096.cpp")), &Ablation::default()).unwrap()
}

#[test]
fn depth_limit_bounds_node_depth() {
    let program = quicksort_4096();
    for d in [1, 2, 5] {
        let cfg = SimConfig::default().with_strategy(ThrottleStrategy::MaxDepth(d));
        let ex = extract_task_graph(&program, &cfg).unwrap();
        assert_eq!(ex.graph.max_depth(), d);
        assert_eq!(ex.state.stdout, "1 982449637\n");
    }
}

#[test]
fn depth_zero_runs_everything_inline() {
    let cfg = SimConfig::default().with_strategy(ThrottleStrategy::MaxDepth(0));
    let ex = extract_task_graph(&quicksort_4096(), &cfg).unwrap();
    assert_eq!(ex.graph.len(), 1);
    assert_eq!(ex.stats.increments, 0);
}

#[test]
fn unbounded_depth_equals_unlimited() {
    for (name, _) in NATIVE_STDOUT {
        let program = Program::tasked(&stf(name), &Ablation::default()).unwrap();
        let a = extract_task_graph(&program, &SimConfig::default().with_strategy(ThrottleStrategy::Unlimited)).unwrap();
        let b = extract_task_graph(&program, &SimConfig::default().with_strategy(ThrottleStrategy::MaxDepth(10_000))).unwrap();
        assert_eq!(a.graph, b.graph, "{name}");
    }
}

#[test]
fn count_limit_is_balanced_and_respected() {
    for name in ["fib", "mergesort", "quicksort", "reduction"] {
        let program = Program::tasked(&stf(name), &Ablation::default()).unwrap();
        for n in [1, 2, 3, 8] {
            let cfg = SimConfig::default().with_strategy(ThrottleStrategy::MaxCount(n));
            let (state, stats) = run_deferred(&program, &cfg).unwrap();
            let expected = NATIVE_STDOUT.iter().find(|(k, _)| *k == name).unwrap().1;
            assert_eq!(state.stdout, expected, "{name} count:{n}");
            assert_eq!(stats.increments, stats.decrements, "{name} count:{n}");
            assert_eq!(stats.final_live, 0);
            for g in stats.groups.iter().filter(|g| g.active) {
                assert!(g.live_at_entry < n as u64, "{name} count:{n}: {g:?}");
            }
        }
    }
}

#[test]
fn deferred_run_keeps_several_tasks_live() {
    let program = Program::tasked(&stf("fib"), &Ablation::default()).unwrap();
    let cfg = SimConfig::default().with_strategy(ThrottleStrategy::MaxCount(4));
    let (_, stats) = run_deferred(&program, &cfg).unwrap();
    assert!(stats.max_live > 1);
    assert!(stats.groups.iter().any(|g| !g.active));
}

#[test]
fn inactive_groups_touch_no_counter() {
    let program = Program::tasked(&stf("fib"), &Ablation::default()).unwrap();
    let cfg = SimConfig::default().with_strategy(ThrottleStrategy::MaxCount(0));
    let (state, stats) = run_deferred(&program, &cfg).unwrap();
    assert_eq!(state.stdout, "8\n");
    assert!(stats.groups.iter().all(|g| !g.active));
    assert_eq!(stats.increments + stats.decrements, 0);
}

#[test]
fn main_group_starts_at_depth_zero() {
    let cfg = SimConfig::default().with_strategy(ThrottleStrategy::MaxDepth(5));
    let ex = extract_task_graph(&Program::tasked(&stf("fib"), &Ablation::default()).unwrap(), &cfg).unwrap();
    assert_eq!(ex.stats.groups[0].depth, 0);
    assert!(ex.stats.groups.iter().all(|g| g.active == (g.depth < 5)));
}

mod common;

use apac_sim::schedule::{count_schedules, sample_schedules};
use apac_sim::{check_stf, enumerate_schedules, simulate_makespan, Ablation, Edge, EdgeKind, ScheduleRequest, SimConfig, TaskGraph, TaskNode};
use common::prepared;
use proptest::prelude::*;

fn arb_dag(max_nodes: usize) -> impl Strategy<Value = TaskGraph> {
    (1..=max_nodes).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let m = pairs.len();
        (prop::collection::vec(0u64..20, n), prop::collection::vec(prop::bool::weighted(0.3), m)).prop_map(move |(costs, keep)| {
            let nodes = costs
                .iter()
                .enumerate()
                .map(|(id, &cost)| TaskNode {
                    id,
                    task: id as u32,
                    fragment: 0,
                    label: format!("t{id}"),
                    reads: vec![],
                    writes: vec![],
                    depth: 0,
                    cost,
                })
                .collect();
            let edges = pairs
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(&(from, to), _)| Edge { from, to, kind: EdgeKind::Raw })
                .collect();
            TaskGraph::new(nodes, edges)
        })
    })
}

/// Counts valid orders by checking every permutation.
fn brute_force_count(g: &TaskGraph) -> usize {
    fn go(g: &TaskGraph, order: &mut Vec<usize>, used: &mut Vec<bool>, n: &mut usize) {
        if order.len() == g.len() {
            let pos: Vec<usize> = (0..g.len()).map(|v| order.iter().position(|&x| x == v).unwrap()).collect();
            if g.edges.iter().all(|e| pos[e.from] < pos[e.to]) {
                *n += 1;
            }
            return;
        }
        for v in 0..g.len() {
            if !used[v] {
                used[v] = true;
                order.push(v);
                go(g, order, used, n);
                order.pop();
                used[v] = false;
            }
        }
    }
    let mut n = 0;
    go(g, &mut Vec::new(), &mut vec![false; g.len()], &mut n);
    n
}

proptest! {
    #[test]
    fn makespan_within_bounds(g in arb_dag(24), workers in 1usize..9) {
        let m = simulate_makespan(&g, workers);
        prop_assert!(m.critical_path <= m.makespan);
        prop_assert!(m.makespan <= m.total_cost);
        prop_assert_eq!(simulate_makespan(&g, 1).makespan, g.total_cost());
    }

    #[test]
    fn sampled_orders_are_topological(g in arb_dag(30), seed in any::<u64>()) {
        for order in sample_schedules(&g, 8, seed) {
            prop_assert!(g.check_order(&order).is_ok());
        }
    }

    #[test]
    fn enumeration_agrees_with_brute_force(g in arb_dag(6)) {
        let expected = brute_force_count(&g);
        prop_assert_eq!(count_schedules(&g, 1000), Some(expected));
        let set = enumerate_schedules(&g, 1000, 0);
        prop_assert!(set.exhaustive);
        prop_assert_eq!(set.orders.len(), expected);
    }

    #[test]
    fn extracted_graphs_are_acyclic(prog in arb_program()) {
        let p = prepared(&prog);
        let cfg = SimConfig::default().with_strategy("none".parse().unwrap());
        let program = apac_sim::Program::tasked(&p, &Ablation::default()).unwrap();
        let ex = apac_sim::extract_task_graph(&program, &cfg).unwrap();
        prop_assert!(ex.graph.is_acyclic());
        for n in &ex.graph.nodes {
            prop_assert!(n.reads.iter().all(|r| !n.writes.contains(r)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_programs_keep_sequential_semantics(prog in arb_program(), seed in any::<u64>()) {
        let p = prepared(&prog);
        for strategy in ["none", "depth:1"] {
            let cfg = SimConfig::default().with_strategy(strategy.parse().unwrap());
            let report = check_stf(&p, &Ablation::default(), &cfg, ScheduleRequest::Random(40), seed).unwrap();
            let first = report.verdicts.iter().find_map(|v| v.divergence.clone());
            prop_assert_eq!(report.divergences(), 0, "{}\n{:?}", prog, first);
        }
    }
}

const HELPERS: &str = "#include <cstdio>
void f0(int& a, const int b) { a = a * 3 + b; }
void f1(const int& a, int& b) { b = b - a; }
void f2(int a, int& b) { b = b + a * 2; }
void f3(int& a, int& b) { int t = a; a = b + 1; b = t; }
int f4(const int a, const int b) { return a * 10 + b; }
void f5(int* p, const int k) { p[k % 3] = p[k % 3] + k; }
";

fn arb_stmt() -> impl Strategy<Value = String> {
    let v = || 0usize..4;
    prop_oneof![
        (0usize..4, v(), v()).prop_map(|(f, a, b)| format!("    f{f}(v{a}, v{b});")),
        (v(), v(), v()).prop_map(|(d, a, b)| format!("    v{d} = f4(v{a}, v{b}) % 1000;")),
        (v(), 1i32..5).prop_map(|(d, k)| format!("    v{d} = v{d} + {k};")),
        v().prop_map(|a| format!("    f5(arr, v{a} % 7 + 3);")),
        (v(), v()).prop_map(|(a, b)| format!("    if (v{a} > v{b}) {{\n        f0(v{a}, v{b});\n    }}")),
    ]
}

fn arb_program() -> impl Strategy<Value = String> {
    prop::collection::vec(arb_stmt(), 1..7).prop_map(|stmts| {
        format!(
            "{HELPERS}int main() {{\n    int v0 = 1;\n    int v1 = 2;\n    int v2 = 3;\n    int v3 = 4;\n    int arr[3] = {{5, 6, 7}};\n{}\n    printf(\"%d %d %d %d %d\\n\", v0, v1, v2, v3, arr[0] + arr[1] + arr[2]);\n    return 0;\n}}\n",
            stmts.join("\n")
        )
    })
}


mod common;

use apac_sim::{
    count_schedules, enumerate_schedules, extract_task_graph, schedule_execute, sequential_execute, Ablation, Cell, EdgeKind, MemoryState,
    Program, ScheduleOutcome, SimConfig, SimError,
};
use common::{corpus, prepared, stf};

fn unlimited() -> SimConfig {
    SimConfig::default().with_strategy("none".parse().unwrap())
}

fn tasked(src: &str) -> Program {
    Program::tasked(&prepared(src), &Ablation::default()).unwrap()
}

#[test]
fn nested_calls_form_a_chain() {
    let ex = extract_task_graph(&tasked(&corpus("golden/code1.cpp")), &unlimited()).unwrap();
    let tasks: Vec<_> = ex.graph.nodes.iter().filter(|n| n.task != 0 && n.fragment == 0).collect();
    assert_eq!(tasks.len(), 2);
    assert!(tasks[0].label.starts_with("a_function_with_call@"));
    assert!(tasks[1].label.starts_with("a_function@"));
    assert!(ex
        .graph
        .edges
        .iter()
        .any(|e| e.from == tasks[0].id && e.to == tasks[1].id && e.kind == EdgeKind::Nest));
    assert_eq!(tasks[1].depth, 2);
}

#[test]
fn readers_of_one_variable_are_unordered() {
    let src = "#include <cstdio>\nvoid show(const int v) { printf(\"%d\\n\", v); }\nint main() {\n    int x = 3;\n    show(x);\n    show(x);\n    return 0;\n}\n";
    let ex = extract_task_graph(&tasked(src), &unlimited()).unwrap();
    let tasks: Vec<usize> = ex.graph.nodes.iter().filter(|n| n.task != 0).map(|n| n.id).collect();
    assert_eq!(tasks.len(), 2);
    assert!(!ex.graph.edges.iter().any(|e| tasks.contains(&e.from) && tasks.contains(&e.to)));
    assert_eq!(ex.graph.nodes[tasks[0]].reads, vec!["x".to_string()]);
    assert!(ex.graph.nodes[tasks[0]].writes.is_empty());
}

#[test]
fn writer_then_reader_gets_raw_edge() {
    let src = "void put(int& v) { v = 4; }\nint get(const int v) { return v; }\nint main() {\n    int x = 0;\n    put(x);\n    int y = get(x);\n    return y;\n}\n";
    let ex = extract_task_graph(&tasked(src), &unlimited()).unwrap();
    let put = ex.graph.nodes.iter().find(|n| n.label.starts_with("put@")).unwrap().id;
    let get = ex.graph.nodes.iter().find(|n| n.label.starts_with("get@")).unwrap().id;
    assert!(ex.graph.edges.iter().any(|e| e.from == put && e.to == get && e.kind == EdgeKind::Raw));
    assert_eq!(ex.state.get("main::return"), Some(&Cell::Int(4)));
}

#[test]
fn shallow_quicksort_tree() {
    let src = corpus("stf/quicksort.cpp").replace("12", "15");
    let cfg = SimConfig::default().with_strategy("depth:2".parse().unwrap());
    let ex = extract_task_graph(&tasked(&src), &cfg).unwrap();
    let sorts = ex.graph.nodes.iter().filter(|n| n.fragment == 0 && n.label.starts_with("quicksort@")).count();
    // One task from main, then the two recursive calls of that task; deeper calls run inline.
    assert_eq!(sorts, 3);
    assert!(sorts <= 7);
    assert!(ex.graph.max_depth() <= 2);
}

#[test]
fn sorting_postcondition() {
    let src = "void sort3(int* a) {\n    for (int i = 0; i < 3; i++) {\n        for (int j = 0; j + 1 < 3; j++) {\n            if (a[j] > a[j + 1]) {\n                int t = a[j];\n                a[j] = a[j + 1];\n                a[j + 1] = t;\n            }\n        }\n    }\n}\nint main() {\n    int data[3] = {3, 1, 2};\n    sort3(data);\n    return 0;\n}\n";
    let state = sequential_execute(&Program::sequential(&prepared(src)).unwrap(), &SimConfig::default()).unwrap();
    assert_eq!(state.get("main::data"), Some(&Cell::Array(vec![Cell::Int(1), Cell::Int(2), Cell::Int(3)])));
}

#[test]
fn doubling_then_increment() {
    let state = sequential_execute(&Program::sequential(&stf("code4_main")).unwrap(), &SimConfig::default()).unwrap();
    // 3 * 2 + 1
    assert_eq!(state.get("main::var"), Some(&Cell::Int(7)));
}

#[test]
fn empty_main_keeps_input() {
    let src = "int g = 5;\nint main() {\n    return 0;\n}\n";
    let mut input = MemoryState::default();
    input.cells.insert("g".into(), Cell::Int(9));
    let cfg = SimConfig {
        input,
        ..SimConfig::default()
    };
    let state = sequential_execute(&Program::sequential(&prepared(src)).unwrap(), &cfg).unwrap();
    assert_eq!(state.get("g"), Some(&Cell::Int(9)));
}

#[test]
fn runtime_faults_are_reported() {
    let src = "int main() {\n    int a[4];\n    int i = 4;\n    a[i] = 1;\n    return 0;\n}\n";
    let err = sequential_execute(&Program::sequential(&prepared(src)).unwrap(), &SimConfig::default()).unwrap_err();
    assert!(matches!(err, SimError::Runtime(ref m) if m.contains("out of bounds")), "{err}");
}

#[test]
fn runaway_recursion_is_bounded() {
    let src = "int down(int n) {\n    return down(n + 1);\n}\nint main() {\n    return down(0);\n}\n";
    let cfg = SimConfig {
        max_frames: 200,
        ..SimConfig::default()
    };
    let err = sequential_execute(&Program::sequential(&prepared(src)).unwrap(), &cfg).unwrap_err();
    assert_eq!(err, SimError::RecursionLimit(200));
}

#[test]
fn edge_violating_order_is_rejected() {
    let program = tasked(&corpus("stf/code4_main.cpp"));
    let ex = extract_task_graph(&program, &unlimited()).unwrap();
    let mut order = ex.graph.topological_order().unwrap();
    order.reverse();
    let err = schedule_execute(&program, &unlimited(), &ex, &order).unwrap_err();
    assert!(matches!(err, SimError::InvalidSchedule(_)));
}

#[test]
fn program_without_tasks_is_one_node() {
    let src = "int main() {\n    int x = 1;\n    x = x + 1;\n    return x;\n}\n";
    let program = tasked(src);
    let ex = extract_task_graph(&program, &unlimited()).unwrap();
    assert_eq!(ex.graph.len(), 1);
    match schedule_execute(&program, &unlimited(), &ex, &[0]).unwrap() {
        ScheduleOutcome::Completed(state) => assert_eq!(state, ex.state),
        other => panic!("{other:?}"),
    }
}

#[test]
fn independent_writers_commute() {
    let src = "void set(int& v, const int k) { v = k; }\nint main() {\n    int a = 0;\n    int b = 0;\n    set(a, 1);\n    set(b, 2);\n    return a + b;\n}\n";
    let program = tasked(src);
    let ex = extract_task_graph(&program, &unlimited()).unwrap();
    let set = enumerate_schedules(&ex.graph, 100, 0);
    assert!(set.exhaustive && set.orders.len() > 1);
    for order in &set.orders {
        match schedule_execute(&program, &unlimited(), &ex, order).unwrap() {
            ScheduleOutcome::Completed(state) => assert_eq!(state, ex.state),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn dot_output_labels() {
    let ex = extract_task_graph(&tasked(&corpus("stf/code4_main.cpp")), &unlimited()).unwrap();
    let dot = ex.graph.to_dot();
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("f@9:5 depth=1"));
    assert!(dot.contains("[label=\"Sync\"]"));
}

#[test]
fn small_graph_counts() {
    let ex = extract_task_graph(&tasked(&corpus("stf/code4_main.cpp")), &unlimited()).unwrap();
    // root start, f, root continuation, root after the wait: f floats beside the continuation.
    assert_eq!(count_schedules(&ex.graph, 100), Some(2));
}

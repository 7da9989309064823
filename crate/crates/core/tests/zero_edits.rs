use apac_core::access_analysis::AnalysisOptions;
use apac_core::pipeline::{prepare, transform_source};
use apac_core::throttle::ThrottleStrategy;
use proptest::prelude::*;

fn corpus(rel: &str) -> String {
    std::fs::read_to_string(format!("{}/../../corpus/{rel}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

/// Output without the generated header comment.
fn body(out: &str) -> &str {
    let (first, rest) = out.split_once('\n').unwrap();
    assert!(first.starts_with("// "), "missing header: {first}");
    rest
}

#[test]
fn leaf_function_is_untouched() {
    let src = corpus("golden/code1.cpp");
    let leaf = "void a_function(const int a, const int* b, int& c){\n    c = a + 1;\n}\n";
    assert!(src.contains(leaf));
    for strategy in [ThrottleStrategy::Unlimited, ThrottleStrategy::default(), ThrottleStrategy::MaxCount(4)] {
        let out = transform_source(&src, &AnalysisOptions::default(), strategy).unwrap();
        assert!(out.contains(leaf), "{strategy}:\n{out}");
    }
    let p = prepare(&src, &AnalysisOptions::default()).unwrap();
    let leaf_id = p.model1.functions.iter().find(|f| f.name == "a_function").unwrap().id;
    assert!(p.plan.function(leaf_id).is_none_or(|fp| !fp.needs_taskgroup && fp.tasks.is_empty() && fp.syncs.is_empty()));
}

#[test]
fn unit_without_calls_is_byte_identical() {
    let src = "#include <cstdio>\n\nint square(int v) {\n    return v * v;\n}\n\nint main() {\n    int s = 0;\n    for (int i = 0; i < 4; i++) {\n        s += i;\n    }\n    printf(\"%d\\n\", s);\n    return 0;\n}\n";
    let out = transform_source(src, &AnalysisOptions::default(), ThrottleStrategy::default()).unwrap();
    assert_eq!(body(&out), src);
}

#[test]
fn empty_unit_is_byte_identical() {
    let out = transform_source("", &AnalysisOptions::default(), ThrottleStrategy::Unlimited).unwrap();
    assert_eq!(body(&out), "");
}

fn arb_leaf_unit() -> impl Strategy<Value = String> {
    let stmt = prop_oneof![
        (0i32..50).prop_map(|k| format!("    s = s + {k};")),
        (0i32..9).prop_map(|k| format!("    if (s > {k}) {{\n        s = s - 1;\n    }}")),
        Just("    printf(\"%d\\n\", s);".to_string()),
        (1i32..4).prop_map(|k| format!("    for (int i = 0; i < {k}; i++) {{\n        s *= 2;\n    }}")),
    ];
    prop::collection::vec(stmt, 0..8).prop_map(|stmts| format!("#include <cstdio>\nint main() {{\n    int s = 1;\n{}\n    return s;\n}}\n", stmts.join("\n")))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calls_only_to_library_leave_no_edit(src in arb_leaf_unit()) {
        for strategy in [ThrottleStrategy::Unlimited, ThrottleStrategy::MaxDepth(3)] {
            let out = transform_source(&src, &AnalysisOptions::default(), strategy).unwrap();
            prop_assert_eq!(body(&out), src.as_str());
        }
    }
}

use std::collections::HashSet;

use apac_core::access_analysis::{classify_call, classify_parameter, find_index_dependencies, AccessMode, DependClause};
use apac_core::frontend::parse_translation_unit;
use apac_core::frontend::sema::{enumerate_call_sites, DeclaratorKind, Model, ParamInfo, VarId};
use apac_core::rewrite_buffer::{Edit, EditKind, RewriteBuffer};
use apac_core::span::{FileId, SourceSpan};
use proptest::prelude::*;

fn arb_param() -> impl Strategy<Value = ParamInfo> {
    (
        "[a-z][a-z0-9_]{0,6}",
        prop::sample::select(vec!["int", "long", "double", "bool", "char", "Cell", "Vec3"]),
        prop::sample::select(vec![DeclaratorKind::ByValue, DeclaratorKind::Reference, DeclaratorKind::Pointer]),
        any::<bool>(),
    )
        .prop_map(|(name, base, declarator, is_const_qualified)| ParamInfo {
            name,
            base_type: base.to_string(),
            declarator,
            is_const_qualified,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn classification_law(p in arb_param()) {
        let read_only = matches!(p.declarator, DeclaratorKind::ByValue) || p.is_const_qualified;
        let mode = classify_parameter(&p);
        prop_assert_eq!(mode == AccessMode::In, read_only);
        prop_assert_eq!(mode == AccessMode::InOut, !read_only);
        let renamed = ParamInfo { name: format!("{}_x", p.name), ..p.clone() };
        let retyped = ParamInfo { base_type: "Other".into(), ..p.clone() };
        prop_assert_eq!(classify_parameter(&renamed), mode);
        prop_assert_eq!(classify_parameter(&retyped), mode);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Insert { after: bool, text: String },
    Replace { len: usize, text: String },
}

fn arb_edits() -> impl Strategy<Value = (String, Vec<(usize, Op)>, Vec<usize>)> {
    ("[ -~\n]{0,120}", prop::collection::vec((any::<prop::sample::Index>(), any::<bool>(), 0usize..6, "[a-z{}#;]{0,8}"), 0..25)).prop_flat_map(
        |(src, raw)| {
            let len = src.len();
            let mut cuts: Vec<usize> = raw.iter().map(|(i, ..)| i.index(len + 1)).collect();
            cuts.sort();
            cuts.dedup();
            let mut ops = Vec::new();
            let mut i = 0;
            while i < cuts.len() {
                let (_, is_replace, kind, text) = &raw[i % raw.len()];
                if *is_replace && i + 1 < cuts.len() {
                    ops.push((cuts[i], Op::Replace { len: cuts[i + 1] - cuts[i], text: text.clone() }));
                    i += 2;
                } else {
                    ops.push((cuts[i], Op::Insert { after: kind % 2 == 0, text: text.clone() }));
                    i += 1;
                }
            }
            let n = ops.len();
            (Just(src), Just(ops), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        },
    )
}

fn span(start: usize, end: usize) -> SourceSpan {
    SourceSpan { file: FileId(0), start, end, line: 0, col: 0 }
}

/// Left-to-right splice over edits sorted by position.
fn naive_splice(src: &str, ops: &[(usize, Op)]) -> String {
    let mut out = String::new();
    let mut cursor = 0;
    for (at, op) in ops {
        out.push_str(&src[cursor..*at]);
        cursor = *at;
        match op {
            Op::Insert { text, .. } => out.push_str(text),
            Op::Replace { len, text } => {
                out.push_str(text);
                cursor += len;
            }
        }
    }
    out.push_str(&src[cursor..]);
    out
}

proptest! {
    #[test]
    fn rewrite_matches_splice((src, ops, order) in arb_edits()) {
        let mut buf = RewriteBuffer::new(src.clone());
        for (seq, &k) in order.iter().enumerate() {
            let (at, op) = &ops[k];
            let edit = match op {
                Op::Insert { after: true, text } => Edit { kind: EditKind::InsertAfter, anchor: span(at.saturating_sub(1).min(*at), *at), text: text.clone(), phase: 0, seq: seq as u32 },
                Op::Insert { after: false, text } => Edit { kind: EditKind::InsertBefore, anchor: span(*at, *at), text: text.clone(), phase: 0, seq: seq as u32 },
                Op::Replace { len, text } => Edit { kind: EditKind::Replace, anchor: span(*at, at + len), text: text.clone(), phase: 0, seq: seq as u32 },
            };
            buf.record(edit).unwrap();
        }
        let out = buf.materialize();
        prop_assert_eq!(&out, &naive_splice(&src, &ops));
        prop_assert_eq!(out, buf.materialize());
    }

    #[test]
    fn no_edits_is_identity(src in "[ -~\n]{0,200}") {
        prop_assert_eq!(RewriteBuffer::new(src.clone()).materialize(), src);
    }
}

const HELPERS: &str = "#include <cstdio>
// helpers
void f0(int& a, const int b) { a = a * 3 + b; }
void f1(const int& a, int& b) { b = b - a; }
void f2(int a, int* b) { b[0] = b[0] + a; }
int f3(const int* a, const int i) { return a[i]; }
";

fn arb_call() -> impl Strategy<Value = String> {
    let v = || prop::sample::select(vec!["x", "y", "z"]);
    prop_oneof![
        (v(), v()).prop_map(|(a, b)| format!("f0({a}, {b});")),
        (v(), v()).prop_map(|(a, b)| format!("f1({a}, {b});")),
        (v(), v()).prop_map(|(a, b)| format!("f0({a}, {a} + {b});")),
        v().prop_map(|a| format!("f2({a}, arr);")),
        (v(), v()).prop_map(|(a, b)| format!("{a} = f3(arr, {b} % 3);")),
        (v(), v()).prop_map(|(a, b)| format!("f0(arr[{b} % 3], {a});")),
    ]
}

fn arb_unit() -> impl Strategy<Value = String> {
    (prop::collection::vec((arb_call(), prop::sample::select(vec![" ", "  ", "\t", " /* c */ "])), 1..8), "[ \n]{0,3}").prop_map(|(calls, tail)| {
        let body: String = calls.iter().map(|(c, ws)| format!("   {ws}{c}\n")).collect();
        format!("{HELPERS}int main() {{\n    int x = 1;\n    int y = 2;\n    int z = 3;\n    int arr[3] = {{4, 5, 6}};\n{body}    return x + y + z;\n}}\n{tail}")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parsing_is_deterministic_and_spans_tile(src in arb_unit()) {
        let a = parse_translation_unit(&src, FileId(0)).unwrap();
        let b = parse_translation_unit(&src, FileId(0)).unwrap();
        prop_assert_eq!(&a, &b);
        let mut rebuilt: String = a.items.iter().map(|i| i.full_span.text(&src)).collect();
        rebuilt.push_str(a.trailing.text(&src));
        prop_assert_eq!(rebuilt, src);
    }

    #[test]
    fn depend_sets_are_disjoint(src in arb_unit()) {
        let tree = parse_translation_unit(&src, FileId(0)).unwrap();
        let model = Model::build(&tree).unwrap();
        for f in model.functions.iter().filter(|f| !f.is_external) {
            for c in enumerate_call_sites(&model, &tree, f.id) {
                prop_assert!(f.body_span.unwrap().contains(&c.stmt_span));
                if c.is_std_or_external {
                    continue;
                }
                let d = classify_call(&c, &model).unwrap();
                let ins: HashSet<_> = d.in_vars.iter().collect();
                prop_assert!(d.inout_vars.iter().all(|v| !ins.contains(v)));
            }
        }
    }

    #[test]
    fn index_dependencies_are_monotone(src in arb_unit(), pending in prop::collection::vec(prop::collection::vec(0u32..8, 0..4), 0..4), extra in 0u32..8) {
        let tree = parse_translation_unit(&src, FileId(0)).unwrap();
        let model = Model::build(&tree).unwrap();
        let clauses: Vec<DependClause> = pending.iter().map(|vs| DependClause { in_vars: vec![], inout_vars: vs.iter().map(|&v| VarId(v)).collect() }).collect();
        let mut grown = clauses.clone();
        grown.push(DependClause { in_vars: vec![], inout_vars: vec![VarId(extra)] });
        for f in model.functions.iter().filter(|f| !f.is_external) {
            for c in enumerate_call_sites(&model, &tree, f.id) {
                if find_index_dependencies(&c, &clauses) {
                    prop_assert!(find_index_dependencies(&c, &grown));
                }
            }
        }
    }
}

#[test]
fn mixed_modes_land_in_inout() {
    let src = format!("{HELPERS}int main() {{\n    int x = 1;\n    f0(x, x);\n    return x;\n}}\n");
    let tree = parse_translation_unit(&src, FileId(0)).unwrap();
    let model = Model::build(&tree).unwrap();
    let main = model.functions.iter().find(|f| f.is_main).unwrap();
    let call = enumerate_call_sites(&model, &tree, main.id).remove(0);
    let d = classify_call(&call, &model).unwrap();
    assert!(d.in_vars.is_empty());
    assert_eq!(d.names(&model).1, vec!["x".to_string()]);
}

//! Hoists nested calls into temporaries so that every taskifiable call ends
//! up alone in its statement.
//!
//! `g(f(x));` becomes `int apac_tmp_0 = f(x); g(apac_tmp_0);` and a call in a
//! return expression is bound to a temporary before the `return`.

use std::collections::{HashMap, HashSet};

use crate::access_analysis::{global_touching_functions, taskifiable_anywhere};
use crate::frontend::ast::*;
use crate::frontend::sema::{enumerate_call_sites, CallPosition, Callee, CallSiteInfo, Model};
use crate::rewrite_buffer::{lines_before, RewriteBuffer};
use crate::span::SourceSpan;

/// Result of hoisting: the rewritten text and how many calls moved.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub text: String,
    pub hoisted: usize,
}

/// Hoists only calls that will become tasks, so functions without
/// taskifiable calls stay untouched.
pub fn hoist_nested_calls(source: &str, tree: &TranslationUnit, model: &Model, exclude: &[String]) -> Normalized {
    let global_touching = global_touching_functions(model, tree);
    let mut names = FreshNames::new(model);
    let mut buf = RewriteBuffer::new(source);
    let substatements = substatement_ids(tree);
    let mut hoisted = 0;
    for f in &model.functions {
        if f.is_external || f.ret_is_ref || exclude.iter().any(|e| *e == f.name || *e == f.qualified_name) {
            continue;
        }
        let sites = enumerate_call_sites(model, tree, f.id);
        let def = model.function_def(tree, f.id);
        let mut by_stmt: Vec<(StmtId, Vec<&CallSiteInfo>)> = Vec::new();
        for s in &sites {
            match by_stmt.last_mut() {
                Some((id, v)) if *id == s.stmt => v.push(s),
                _ => by_stmt.push((s.stmt, vec![s])),
            }
        }
        let stmts = index_stmts(def);
        for (sid, calls) in by_stmt {
            let stmt = stmts[&sid];
            if let StmtKind::Decl(d) = &stmt.kind {
                if d.declarators.len() > 1 {
                    continue;
                }
            }
            let is_return = matches!(stmt.kind, StmtKind::Return(_));
            // A void call returned from a void function: `f(); return;`.
            if let StmtKind::Return(Some(e)) = &stmt.kind {
                if let Some(site) = calls.iter().find(|c| c.call == e.unparen().id) {
                    if returns_void(model, site) && taskifiable_anywhere(model, site, &global_touching, exclude) {
                        let text = format!("{}; return;", source[e.span.start..e.span.end].trim());
                        let text = wrap_if_sub(&substatements, sid, text);
                        buf.replace(stmt.span, text, 0).expect("return statements do not overlap");
                        hoisted += 1;
                        continue;
                    }
                }
            }
            let targets: Vec<&CallSiteInfo> = calls
                .iter()
                .copied()
                .filter(|c| hoistable(model, c, is_return) && taskifiable_anywhere(model, c, &global_touching, exclude))
                .collect();
            if targets.is_empty() {
                continue;
            }
            let mut tmp_of: Vec<(SourceSpan, String)> = Vec::new();
            let mut lines = Vec::new();
            for c in &targets {
                let tmp = names.fresh("apac_tmp");
                let ret = &model.function(callee_id(c)).return_type;
                let text = substituted(source, c.span, &tmp_of);
                lines.push(format!("{ret} {tmp} = {text};"));
                tmp_of.push((c.span, tmp));
            }
            let wrap = substatements.contains(&sid);
            let mut prefix = if wrap { "{ ".to_string() } else { String::new() };
            prefix.push_str(&lines_before(source, stmt.span.start, &lines));
            buf.insert_before(stmt.span, prefix, 0).expect("inserts never fall inside hoisted calls");
            for (span, tmp) in outermost(&tmp_of) {
                buf.replace(span, tmp.clone(), 1).expect("outermost hoisted calls are disjoint");
            }
            if wrap {
                buf.insert_after(stmt.span, " }", 0).expect("statement end is outside replacements");
            }
            hoisted += targets.len();
        }
    }
    Normalized {
        text: buf.materialize(),
        hoisted,
    }
}

fn callee_id(c: &CallSiteInfo) -> crate::frontend::sema::FunctionId {
    match c.callee {
        Callee::Function(f) => f,
        Callee::External { .. } => unreachable!("only resolved callees are hoisted"),
    }
}

fn returns_void(model: &Model, c: &CallSiteInfo) -> bool {
    matches!(c.callee, Callee::Function(f) if model.function(f).return_type == "void")
}

fn hoistable(model: &Model, c: &CallSiteInfo, in_return: bool) -> bool {
    let Callee::Function(f) = c.callee else { return false };
    let fi = model.function(f);
    if fi.is_external || fi.ret_is_ref || fi.return_type == "void" || c.short_circuit {
        return false;
    }
    match c.position {
        CallPosition::Nested => true,
        CallPosition::Return => in_return,
        _ => false,
    }
}

fn wrap_if_sub(subs: &HashSet<StmtId>, id: StmtId, text: String) -> String {
    if subs.contains(&id) {
        format!("{{ {text} }}")
    } else {
        text
    }
}

/// Source text of `span` with already-hoisted inner calls replaced.
fn substituted(source: &str, span: SourceSpan, done: &[(SourceSpan, String)]) -> String {
    let mut inner: Vec<&(SourceSpan, String)> = done.iter().filter(|(s, _)| span.contains(s) && *s != span).collect();
    inner.sort_by_key(|(s, _)| s.start);
    let mut out = String::new();
    let mut cursor = span.start;
    for (s, tmp) in inner {
        if s.start < cursor {
            continue;
        }
        out.push_str(&source[cursor..s.start]);
        out.push_str(tmp);
        cursor = s.end;
    }
    out.push_str(&source[cursor..span.end]);
    out
}

fn outermost(spans: &[(SourceSpan, String)]) -> Vec<(SourceSpan, String)> {
    spans
        .iter()
        .filter(|(s, _)| !spans.iter().any(|(o, _)| o != s && o.contains(s)))
        .cloned()
        .collect()
}

fn index_stmts(def: &FunctionDef) -> HashMap<StmtId, &Stmt> {
    let mut map = HashMap::new();
    if let Some(b) = &def.body {
        for s in &b.stmts {
            s.walk(&mut |st| {
                map.insert(st.id, st);
            });
        }
    }
    map
}

/// Statements that are the unbraced body of an `if`, `else`, loop or switch.
pub fn substatement_ids(tree: &TranslationUnit) -> HashSet<StmtId> {
    let mut out = HashSet::new();
    let mut add = |s: &Stmt| {
        if !matches!(s.kind, StmtKind::Block(_)) {
            out.insert(s.id);
        }
    };
    let mut visit = |s: &Stmt| match &s.kind {
        StmtKind::If {
            then_branch,
            else_branch,
            ..
        } => {
            add(then_branch);
            if let Some(e) = else_branch {
                add(e);
            }
        }
        StmtKind::While { body, .. } | StmtKind::For { body, .. } | StmtKind::Switch { body, .. } => add(body),
        _ => {}
    };
    for_each_body(tree, &mut |b| {
        for s in &b.stmts {
            s.walk(&mut visit);
        }
    });
    out
}

pub fn for_each_body<'t>(tree: &'t TranslationUnit, f: &mut dyn FnMut(&'t Block)) {
    for item in &tree.items {
        match &item.kind {
            ItemKind::Function(def) => {
                if let Some(b) = &def.body {
                    f(b);
                }
            }
            ItemKind::Class(c) => {
                for m in &c.members {
                    if let ClassMember::Method(def) = m {
                        if let Some(b) = &def.body {
                            f(b);
                        }
                    }
                }
            }
            _ => {}
        }
    }
}

/// Generator of identifiers that collide with nothing in the unit.
#[derive(Debug, Clone)]
pub struct FreshNames {
    taken: HashSet<String>,
    counters: HashMap<String, u32>,
}

impl FreshNames {
    pub fn new(model: &Model) -> Self {
        FreshNames {
            taken: model.identifiers().map(str::to_string).collect(),
            counters: HashMap::new(),
        }
    }

    /// `<prefix>_<k>` for the first free `k`.
    pub fn fresh(&mut self, prefix: &str) -> String {
        let k = self.counters.entry(prefix.to_string()).or_insert(0);
        loop {
            let name = format!("{prefix}_{k}");
            *k += 1;
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }

    /// `name` itself when free, otherwise `name_<k>`.
    pub fn exact_or_suffixed(&mut self, name: &str) -> String {
        if self.taken.insert(name.to_string()) {
            return name.to_string();
        }
        self.fresh(name)
    }

    pub fn reserve(&mut self, name: &str) {
        self.taken.insert(name.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::lexer::token_stream;
    use crate::frontend::parse_translation_unit;
    use crate::span::FileId;

    fn hoist(src: &str) -> String {
        let tree = parse_translation_unit(src, FileId(0)).unwrap();
        let model = Model::build(&tree).unwrap();
        hoist_nested_calls(src, &tree, &model, &[]).text
    }

    fn same_tokens(a: &str, b: &str) {
        assert_eq!(token_stream(a).unwrap(), token_stream(b).unwrap(), "\n{a}\n---\n{b}");
    }

    #[test]
    fn nested_calls_hoisted_innermost_first() {
        let out = hoist("int f(int x){ return x; }\nvoid g(int y){}\nvoid h(){ int x = 1; g(f(f(x))); }");
        same_tokens(
            &out,
            "int f(int x){ return x; }\nvoid g(int y){}\nvoid h(){ int x = 1; int apac_tmp_0 = f(x); int apac_tmp_1 = f(apac_tmp_0); g(apac_tmp_1); }",
        );
    }

    #[test]
    fn return_calls_are_bound_to_temporaries() {
        let out = hoist("int fib(int n){ if(n < 2) return n; return fib(n-1) + fib(n-2); }");
        same_tokens(
            &out,
            "int fib(int n){ if(n < 2) return n; int apac_tmp_0 = fib(n-1); int apac_tmp_1 = fib(n-2); return apac_tmp_0 + apac_tmp_1; }",
        );
    }

    #[test]
    fn void_return_call_is_split() {
        let out = hoist("void f(){}\nvoid g(bool c){ if(c) return f(); }");
        same_tokens(&out, "void f(){}\nvoid g(bool c){ if(c) { f(); return; } }");
    }

    #[test]
    fn conditions_and_short_circuits_stay_inline() {
        let src = "bool p(int x){ return x > 0; }\nvoid g(int x){ if(p(x)) { x = 1; } }\nint h(int x){ return x > 0 && p(x); }";
        assert_eq!(hoist(src), src);
    }

    #[test]
    fn fresh_names_avoid_collisions() {
        let out = hoist("int f(int x){ return x; }\nvoid g(int apac_tmp_0){ f(f(apac_tmp_0)); }");
        assert!(out.contains("int apac_tmp_1 = f(apac_tmp_0);"), "{out}");
    }
}

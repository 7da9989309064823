//! Emits OpenMP text for a unit plan.
//!
//! Every insertion is a piece attached to an offset. Pieces at one offset are
//! rendered as a single insert: closers of inner statements first, then
//! openers of outer statements, each group ordered by phase. Pragmas always
//! land on their own lines.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::access_analysis::{FunctionPlan, PromotionCandidate, SyncPlacement, SyncPoint, SyncReason, TaskPlan, UnitPlan};
use crate::frontend::ast::*;
use crate::frontend::sema::{FunctionId, Model, ScopeId, Type, VarId};
use crate::normalize::substatement_ids;
use crate::rewrite_buffer::{RewriteBuffer, RewriteError};
use crate::span::{indentation_at, SourceSpan};
use crate::throttle::{self, ThrottleStrategy};

// Opener phases.
const OPEN_BODY: u32 = 0;
const OPEN_KEPT_RETURN: u32 = 0;
const OPEN_BRACE: u32 = 1;
const OPEN_FOR_WRAP: u32 = 2;
const OPEN_SYNC: u32 = 3;
const OPEN_FOR_PROMOTION: u32 = 4;
const OPEN_DECL: u32 = 5;
const OPEN_COUNTER: u32 = 6;
const OPEN_TASK: u32 = 7;
// Closer phases.
const CLOSE_TASK: u32 = 1;
const CLOSE_LOOP_SYNC: u32 = 2;
const CLOSE_CLEANUP: u32 = 3;
const CLOSE_BODY: u32 = 4;
const CLOSE_FOR_CLEANUP: u32 = 6;
const CLOSE_FOR_WRAP: u32 = 7;
const CLOSE_BRACE: u32 = 8;

#[derive(Debug, Clone)]
enum Piece {
    /// Whole lines; the original text resumes on a fresh line.
    Lines(Vec<String>),
    /// Lines with no line break after the last one.
    OpenLines(Vec<String>),
    /// Whole lines at an explicit indentation.
    IndentedLines(Vec<String>, String),
    Inline(String),
}

#[derive(Debug, Clone)]
struct Placed {
    closer: bool,
    depth: u32,
    phase: u32,
    seq: u32,
    piece: Piece,
}

impl Placed {
    fn key(&self) -> (u8, u32, u32, u32) {
        if self.closer {
            (0, u32::MAX - self.depth, self.phase, self.seq)
        } else {
            (1, self.depth, self.phase, self.seq)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct StmtInfo<'t> {
    stmt: &'t Stmt,
    depth: u32,
    /// The `for` whose init clause this statement is.
    for_init_of: Option<StmtId>,
}

/// Collects the edits of one unit.
pub struct Emitter<'a> {
    source: &'a str,
    model: &'a Model,
    plan: &'a UnitPlan,
    strategy: ThrottleStrategy,
    stmts: HashMap<StmtId, StmtInfo<'a>>,
    substatements: HashSet<StmtId>,
    /// Block statement that opened each scope.
    scope_blocks: HashMap<ScopeId, StmtId>,
    pieces: BTreeMap<usize, Vec<Placed>>,
    replaces: Vec<(SourceSpan, String)>,
    braced: HashSet<StmtId>,
    seq: u32,
}

/// Applies the whole plan to `source` (the normalized text `tree` was parsed
/// from).
pub fn transform_unit(
    source: &str,
    tree: &TranslationUnit,
    model: &Model,
    plan: &UnitPlan,
    strategy: ThrottleStrategy,
) -> Result<String, RewriteError> {
    let mut em = Emitter::new(source, tree, model, plan, strategy);
    let header = format!("// Generated by apac (strategy {strategy})\n");
    em.add(0, false, 0, 0, Piece::Inline(header));
    let any_group = plan.functions.iter().any(|f| f.needs_taskgroup);
    if any_group {
        let globals = throttle::emit_globals(strategy, &plan.names);
        if !globals.is_empty() {
            let at = tree
                .items
                .iter()
                .find(|i| !matches!(i.kind, ItemKind::Directive | ItemKind::Empty))
                .map_or(source.len(), |i| i.span.start);
            em.add(at, false, 0, 1, Piece::Lines(globals));
        }
    }
    for fp in &plan.functions {
        if fp.needs_taskgroup {
            em.emit_function(tree, fp);
        }
    }
    em.finish()
}

impl<'a> Emitter<'a> {
    pub fn new(source: &'a str, tree: &'a TranslationUnit, model: &'a Model, plan: &'a UnitPlan, strategy: ThrottleStrategy) -> Self {
        let mut stmts = HashMap::new();
        crate::normalize::for_each_body(tree, &mut |b| {
            for s in &b.stmts {
                index(s, 1, None, &mut stmts);
            }
        });
        let scope_blocks = model.opened_scope.iter().map(|(s, sc)| (*sc, *s)).collect();
        Emitter {
            source,
            model,
            plan,
            strategy,
            stmts,
            substatements: substatement_ids(tree),
            scope_blocks,
            pieces: BTreeMap::new(),
            replaces: Vec::new(),
            braced: HashSet::new(),
            seq: 0,
        }
    }

    fn add(&mut self, offset: usize, closer: bool, depth: u32, phase: u32, piece: Piece) {
        self.seq += 1;
        self.pieces.entry(offset).or_default().push(Placed {
            closer,
            depth,
            phase,
            seq: self.seq,
            piece,
        });
    }

    fn info(&self, id: StmtId) -> StmtInfo<'a> {
        self.stmts[&id]
    }

    /// Attaches an opener before statement `id`, bracing it when it is an
    /// unbraced substatement.
    fn before(&mut self, id: StmtId, phase: u32, piece: Piece) {
        let info = self.info(id);
        self.ensure_braced(id);
        self.add(info.stmt.span.start, false, info.depth, phase, piece);
    }

    fn after(&mut self, id: StmtId, phase: u32, piece: Piece) {
        let info = self.info(id);
        self.ensure_braced(id);
        self.add(info.stmt.span.end, true, info.depth, phase, piece);
    }

    fn ensure_braced(&mut self, id: StmtId) {
        if self.substatements.contains(&id) && self.braced.insert(id) {
            let info = self.info(id);
            self.add(info.stmt.span.start, false, info.depth, OPEN_BRACE, Piece::Inline("{ ".into()));
            self.add(info.stmt.span.end, true, info.depth, CLOSE_BRACE, Piece::Inline(" }".into()));
        }
    }

    /// Indentation of a block's statements.
    fn inner_indent(&self, b: &Block) -> String {
        match b.stmts.first() {
            Some(s) if self.source[..s.span.start].ends_with(indentation_at(self.source, s.span.start)) => {
                indentation_at(self.source, s.span.start).to_string()
            }
            _ => format!("{}    ", indentation_at(self.source, b.close.start)),
        }
    }

    fn text(&self, span: SourceSpan) -> &'a str {
        &self.source[span.start..span.end]
    }

    fn var_name(&self, v: VarId) -> &str {
        &self.model.var(v).name
    }

    fn emit_function(&mut self, tree: &TranslationUnit, fp: &FunctionPlan) {
        self.wrap_function_body(tree, fp);
        for t in &fp.tasks {
            self.wrap_call_in_task(fp, t);
        }
        let mut decls: Vec<StmtId> = fp.tasks.iter().filter(|t| t.split_var().is_some()).map(|t| t.stmt).collect();
        for p in &fp.promotions {
            self.promote_scope_local(p);
            if p.for_stmt.is_none() {
                decls.push(self.model.var(p.var).decl_stmt.expect("locals have declarations"));
            }
        }
        decls.sort();
        decls.dedup();
        for d in decls {
            self.rewrite_declaration(fp, d);
        }
        for s in &fp.syncs {
            self.insert_sync(s);
        }
        self.rewrite_returns(fp);
    }

    /// Encloses the body in a taskgroup (or the parallel triplet for main).
    pub fn wrap_function_body(&mut self, tree: &TranslationUnit, fp: &FunctionPlan) {
        let fi = self.model.function(fp.func);
        let def = self.model.function_def(tree, fp.func);
        let body = def.body.as_ref().expect("planned functions have bodies");
        let names = &self.plan.names;
        let mut open = Vec::new();
        if let Some(res) = &fp.returns.res_var {
            open.push(format!("{} {res};", value_type(&fi.return_type)));
        }
        open.extend(throttle::emit_activation_preamble(self.strategy, names));
        if fi.is_main {
            open.push("#pragma omp parallel".into());
            open.push("#pragma omp master".into());
        }
        open.push("#pragma omp taskgroup".into());
        open.push("{".into());
        if fp.returns.inner_braces {
            open.push("{".into());
        }
        self.add(body.open.end, false, 0, OPEN_BODY, Piece::OpenLines(open));

        let mut close = Vec::new();
        if fp.returns.inner_braces {
            close.push("}".to_string());
        }
        if let Some(label) = &fp.returns.label {
            close.push(format!("{label}: ;"));
        }
        close.push("}".into());
        if let Some(res) = &fp.returns.res_var {
            close.push(format!("return {res};"));
        }
        match fp.returns.kept_trailing {
            Some(ret) => self.before(ret, OPEN_KEPT_RETURN, Piece::Lines(close)),
            None => self.add(body.close.start, true, 0, CLOSE_BODY, Piece::Lines(close)),
        }
    }

    fn task_pragma(&self, in_vars: &[String], inout_vars: &[String], firstprivate: &[String]) -> String {
        let mut p = "#pragma omp task".to_string();
        if !in_vars.is_empty() {
            p.push_str(&format!(" depend(in:{})", in_vars.join(",")));
        }
        if !inout_vars.is_empty() {
            p.push_str(&format!(" depend(inout:{})", inout_vars.join(",")));
        }
        p.push_str(" default(shared)");
        if let Some(c) = throttle::activation_clause(self.strategy, &self.plan.names) {
            p.push(' ');
            p.push_str(&c);
        }
        let mut fp = throttle::throttle_firstprivate(self.strategy, &self.plan.names);
        fp.extend(firstprivate.iter().cloned());
        if !fp.is_empty() {
            p.push_str(&format!(" firstprivate({})", fp.join(", ")));
        }
        p
    }

    /// Encloses a call statement in a task with its depend clauses.
    pub fn wrap_call_in_task(&mut self, _fp: &FunctionPlan, t: &TaskPlan) {
        let (ins, outs) = t.depend.names(self.model);
        let fps: Vec<String> = t.firstprivate_vars.iter().map(|v| self.var_name(*v).to_string()).collect();
        let pragma = self.task_pragma(&ins, &outs, &fps);
        let inst = throttle::instrument_counters(self.strategy, &self.plan.names);
        if !inst.before.is_empty() {
            self.before(t.stmt, OPEN_COUNTER, Piece::Lines(inst.before.clone()));
        }
        self.before(t.stmt, OPEN_TASK, Piece::Lines(vec![pragma]));
        self.before(t.stmt, OPEN_TASK, Piece::Inline(format!("{{ {}", inst.body_prefix)));
        self.after(t.stmt, CLOSE_TASK, Piece::Inline(format!("{} }}", inst.body_suffix)));
    }

    /// Splits or promotes the declarators of one declaration statement.
    fn rewrite_declaration(&mut self, fp: &FunctionPlan, id: StmtId) {
        let info = self.info(id);
        let StmtKind::Decl(d) = &info.stmt.kind else { return };
        let task = fp.task_at(id);
        let mut lines = Vec::new();
        for (i, dc) in d.declarators.iter().enumerate() {
            let var = self.model.decl_vars.get(&(id, i)).copied();
            let promo = var.and_then(|v| fp.promotions.iter().find(|p| p.var == v));
            let split = task.is_some_and(|t| t.split_var().is_some() && t.split_var() == var);
            if let Some(p) = promo {
                let init = if split { None } else { dc.init.as_ref() };
                lines.extend(self.promotion_lines(d, dc, init, &p.ptr_name));
            } else if split {
                lines.push(format!("{} {};", d.ty.base.name(), declarator_text(dc, false)));
            } else {
                lines.push(format!("{} {};", self.text(d.ty.span), self.text(dc.span)));
            }
        }
        match task {
            Some(t) if t.split_var().is_some() => {
                self.before(id, OPEN_DECL, Piece::Lines(lines));
                let dc = &d.declarators[0];
                let Some(Initializer::Expr(e)) = &dc.init else { unreachable!("split declarations have initializers") };
                let assign = format!("{} = {};", dc.name, self.text(e.span));
                self.replaces.push((info.stmt.span, assign));
            }
            _ => {
                let last = lines.pop().expect("declarations have declarators");
                if !lines.is_empty() {
                    self.before(id, OPEN_DECL, Piece::Lines(lines));
                }
                self.ensure_braced(id);
                self.replaces.push((info.stmt.span, last));
            }
        }
    }

    fn promotion_lines(&self, d: &Declaration, dc: &Declarator, init: Option<&Initializer>, ptr: &str) -> Vec<String> {
        let mut ty = String::new();
        if d.ty.is_const {
            ty.push_str("const ");
        }
        ty.push_str(d.ty.base.name());
        for _ in 0..dc.pointer_depth {
            ty.push('*');
        }
        if dc.const_pointer {
            ty.push_str(" const");
        }
        let name = &dc.name;
        if dc.array_dims.is_empty() {
            let alloc = match init {
                None => format!("new {ty}()"),
                Some(Initializer::Expr(e)) => format!("new {ty}({})", self.text(e.span)),
                Some(Initializer::List { span, .. }) => format!("new {ty}{}", self.text(*span)),
            };
            vec![format!("{ty}* {ptr} = {alloc};"), format!("{ty}& {name} = *{ptr};")]
        } else {
            let list_len = match init {
                Some(Initializer::List { items, .. }) => items.len() as u64,
                _ => 0,
            };
            let dims: String = dc
                .array_dims
                .iter()
                .map(|n| format!("[{}]", n.unwrap_or(list_len)))
                .collect();
            let alloc = match init {
                Some(Initializer::List { span, .. }) => format!("new {ty}[1]{dims}{{{}}}", self.text(*span)),
                _ => format!("new {ty}[1]{dims}()"),
            };
            vec![format!("{ty} (*{ptr}){dims} = {alloc};"), format!("{ty} (&{name}){dims} = *{ptr};")]
        }
    }

    fn cleanup_lines(&self, p: &PromotionCandidate) -> Vec<String> {
        let inst = throttle::instrument_counters(self.strategy, &self.plan.names);
        let mut pragma = format!(
            "#pragma omp task depend(inout:{}) firstprivate({}) default(shared)",
            p.name, p.ptr_name
        );
        if let Some(c) = throttle::activation_clause(self.strategy, &self.plan.names) {
            pragma.push(' ');
            pragma.push_str(&c);
            let fp = throttle::throttle_firstprivate(self.strategy, &self.plan.names);
            pragma.push_str(&format!(" firstprivate({})", fp.join(", ")));
        }
        let is_array = matches!(self.model.var(p.var).ty, Type::Array(..));
        let del = if is_array { "delete[]" } else { "delete" };
        // The count decrement needs no depth bookkeeping.
        let suffix = match self.strategy {
            ThrottleStrategy::MaxCount(_) => inst.body_suffix.clone(),
            _ => String::new(),
        };
        let mut lines = inst.before.clone();
        lines.push(pragma);
        lines.push(format!("{{ {del} {};{suffix} }}", p.ptr_name));
        lines
    }

    /// Moves a nested-scope local to the heap and frees it at scope end.
    pub fn promote_scope_local(&mut self, p: &PromotionCandidate) {
        if p.is_alias {
            return;
        }
        let cleanup = self.cleanup_lines(p);
        match p.for_stmt {
            Some(fs) => {
                let info = self.info(fs);
                let StmtKind::For { init: Some(init), .. } = &info.stmt.kind else { return };
                let StmtKind::Decl(d) = &init.kind else { return };
                let lines: Vec<String> = d
                    .declarators
                    .iter()
                    .enumerate()
                    .flat_map(|(i, dc)| {
                        let promoted = self.model.decl_vars.get(&(init.id, i)) == Some(&p.var);
                        if promoted {
                            self.promotion_lines(d, dc, dc.init.as_ref(), &p.ptr_name)
                        } else {
                            vec![format!("{} {};", self.text(d.ty.span), self.text(dc.span))]
                        }
                    })
                    .collect();
                if !self.braced.contains(&init.id) {
                    self.braced.insert(init.id);
                    self.before(fs, OPEN_FOR_WRAP, Piece::Inline("{".into()));
                    self.after(fs, CLOSE_FOR_WRAP, Piece::Inline("}".into()));
                    self.replaces.push((init.span, ";".into()));
                }
                // Several promoted header variables share one wrapper.
                self.before(fs, OPEN_FOR_PROMOTION, Piece::Lines(lines));
                self.after(fs, CLOSE_FOR_CLEANUP, Piece::Lines(cleanup));
            }
            None => {
                let close = p.scope_end_span.expect("block scopes have a closing brace");
                let block = self.scope_blocks.get(&p.scope).copied();
                let depth = block.map_or(1, |b| self.info(b).depth);
                let piece = match block.map(|b| &self.info(b).stmt.kind) {
                    Some(StmtKind::Block(b)) => Piece::IndentedLines(cleanup, self.inner_indent(b)),
                    _ => Piece::Lines(cleanup),
                };
                self.add(close.start, true, depth, CLOSE_CLEANUP, piece);
            }
        }
    }

    /// A taskwait line at the sync point.
    pub fn insert_sync(&mut self, s: &SyncPoint) {
        let line = Piece::Lines(vec!["#pragma omp taskwait".into()]);
        match (s.reason, s.placement) {
            // Emitted by the return rewrite.
            (SyncReason::ReturnBarrier, _) => {}
            (_, SyncPlacement::Before(id)) => {
                let id = self.info(id).for_init_of.unwrap_or(id);
                self.before(id, OPEN_SYNC, line);
            }
            (_, SyncPlacement::EndOfBody(loop_id)) => {
                let info = self.info(loop_id);
                let body = match &info.stmt.kind {
                    StmtKind::While { body, .. } | StmtKind::For { body, .. } => body,
                    _ => return,
                };
                match &body.kind {
                    StmtKind::Block(b) => {
                        let depth = self.info(body.id).depth;
                        let line = Piece::IndentedLines(vec!["#pragma omp taskwait".into()], self.inner_indent(b));
                        self.add(b.close.start, true, depth, CLOSE_LOOP_SYNC, line);
                    }
                    _ => self.after(body.id, CLOSE_LOOP_SYNC, line),
                }
            }
        }
    }

    /// Replaces returns by taskwait, result assignment and a jump to the end
    /// of the taskgroup.
    pub fn rewrite_returns(&mut self, fp: &FunctionPlan) {
        let Some(label) = fp.returns.label.clone() else { return };
        for id in &fp.returns.rewritten {
            let info = self.info(*id);
            let StmtKind::Return(e) = &info.stmt.kind else { continue };
            let mut lines = vec!["#pragma omp taskwait".to_string()];
            if let (Some(e), Some(res)) = (e, &fp.returns.res_var) {
                lines.push(format!("{res} = {};", self.text(e.span)));
            }
            self.before(*id, OPEN_SYNC, Piece::Lines(lines));
            self.replaces.push((info.stmt.span, format!("goto {label};")));
        }
    }

    fn render(&self, offset: usize, placed: &mut [Placed]) -> String {
        placed.sort_by_key(Placed::key);
        let src = self.source;
        let indent = indentation_at(src, offset.min(src.len()));
        let line_start = src[..offset].rfind('\n').map_or(0, |i| i + 1);
        let mut at_line_start = src[line_start..offset].trim().is_empty();
        let mut out = String::new();
        for p in placed.iter() {
            match &p.piece {
                Piece::Inline(t) => {
                    out.push_str(t);
                    at_line_start = t.ends_with('\n');
                }
                Piece::Lines(lines) | Piece::OpenLines(lines) | Piece::IndentedLines(lines, _) => {
                    let own = match &p.piece {
                        Piece::IndentedLines(_, i) => i.as_str(),
                        _ => indent,
                    };
                    for l in lines {
                        if !at_line_start {
                            out.push('\n');
                            out.push_str(own);
                        } else if let Some(extra) = own.strip_prefix(indent) {
                            // At a line start the base indentation is already there.
                            out.push_str(extra);
                        }
                        out.push_str(l);
                        at_line_start = false;
                    }
                    if !matches!(p.piece, Piece::OpenLines(_)) {
                        out.push('\n');
                        out.push_str(indent);
                        at_line_start = true;
                    }
                }
            }
        }
        out
    }

    pub fn finish(mut self) -> Result<String, RewriteError> {
        let mut buf = RewriteBuffer::new(self.source);
        let index = crate::span::LineIndex::new(self.source);
        let mut pieces = std::mem::take(&mut self.pieces);
        for (offset, placed) in pieces.iter_mut() {
            let text = self.render(*offset, placed);
            let span = index.span(crate::span::FileId(0), *offset, *offset);
            buf.insert_before(span, text, 0)?;
        }
        for (span, text) in &self.replaces {
            buf.replace(*span, text.clone(), 0)?;
        }
        Ok(buf.materialize())
    }
}

fn index<'t>(s: &'t Stmt, depth: u32, for_init_of: Option<StmtId>, out: &mut HashMap<StmtId, StmtInfo<'t>>) {
    out.insert(s.id, StmtInfo { stmt: s, depth, for_init_of });
    match &s.kind {
        StmtKind::For { init, body, .. } => {
            if let Some(i) = init {
                index(i, depth + 1, Some(s.id), out);
            }
            index(body, depth + 1, None, out);
        }
        _ => {
            for c in s.children() {
                index(c, depth + 1, None, out);
            }
        }
    }
}

/// Return type usable for a default-initialized local.
fn value_type(ret: &str) -> &str {
    match ret.strip_prefix("const ") {
        Some(rest) if !ret.contains('*') => rest,
        _ => ret,
    }
}

/// `*p`, `a[3]`; optionally with the initializer dropped.
fn declarator_text(dc: &Declarator, keep_const_pointer: bool) -> String {
    let mut s = "*".repeat(dc.pointer_depth as usize);
    if dc.const_pointer && keep_const_pointer {
        s.push_str(" const ");
    }
    if dc.is_ref {
        s.push('&');
    }
    s.push_str(&dc.name);
    for d in &dc.array_dims {
        match d {
            Some(n) => s.push_str(&format!("[{n}]")),
            None => s.push_str("[]"),
        }
    }
    s
}

/// Functions whose bodies the plan rewrites.
pub fn transformed_functions(plan: &UnitPlan) -> Vec<FunctionId> {
    plan.functions.iter().filter(|f| f.needs_taskgroup).map(|f| f.func).collect()
}

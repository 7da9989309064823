//! Depend-clause inference, synchronization placement and scope promotion.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::diag::Diagnostic;
use crate::frontend::ast::*;
use crate::frontend::sema::{
    enumerate_call_sites, ArgInfo, Binding, Builtin, CallInfo, CallPosition, CallSiteInfo, Callee, DeclaratorKind,
    FunctionId, Model, ParamInfo, Receiver, ResultBinding, ScopeId, ScopeKind, VarId, VarKind,
};
use crate::normalize::FreshNames;
use crate::span::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AccessMode {
    In,
    InOut,
}

/// Ordered `in` and `inout` variable lists of one task.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DependClause {
    pub in_vars: Vec<VarId>,
    pub inout_vars: Vec<VarId>,
}

impl DependClause {
    pub fn all_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.in_vars.iter().chain(self.inout_vars.iter()).copied()
    }

    pub fn names(&self, model: &Model) -> (Vec<String>, Vec<String>) {
        let n = |v: &VarId| model.var(*v).name.clone();
        (self.in_vars.iter().map(n).collect(), self.inout_vars.iter().map(n).collect())
    }

    fn add(&mut self, v: VarId, mode: AccessMode) {
        match mode {
            AccessMode::InOut => {
                self.in_vars.retain(|x| *x != v);
                if !self.inout_vars.contains(&v) {
                    self.inout_vars.push(v);
                }
            }
            AccessMode::In => {
                if !self.inout_vars.contains(&v) && !self.in_vars.contains(&v) {
                    self.in_vars.push(v);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("arity mismatch: `{callee}` takes {params} argument(s), {args} given")]
    ArityMismatch { callee: String, params: usize, args: usize },
    #[error("callee of `{0}` is not resolved")]
    Unresolved(String),
}

/// `In` iff the parameter is passed by value or refers to a const object.
pub fn classify_parameter(param: &ParamInfo) -> AccessMode {
    if param.declarator == DeclaratorKind::ByValue || param.is_const_qualified {
        AccessMode::In
    } else {
        AccessMode::InOut
    }
}

/// Depend clause of a resolved call from the callee's signature.
pub fn classify_call(call: &CallSiteInfo, model: &Model) -> Result<DependClause, AnalysisError> {
    let Callee::Function(fid) = call.callee else {
        return Err(AnalysisError::Unresolved(call.callee_name.clone()));
    };
    let callee = model.function(fid);
    if callee.params.len() != call.args.len() {
        return Err(AnalysisError::ArityMismatch {
            callee: callee.qualified_name.clone(),
            params: callee.params.len(),
            args: call.args.len(),
        });
    }
    let mut d = DependClause::default();
    if let Some(r) = &call.receiver {
        let mode = if callee.is_const_method { AccessMode::In } else { AccessMode::InOut };
        add_arg(&mut d, r, mode);
    }
    for (arg, p) in call.args.iter().zip(&callee.params) {
        add_arg(&mut d, arg, classify_parameter(p));
    }
    match &call.result_binding {
        ResultBinding::None => {}
        ResultBinding::ExistingVar { target, .. } => add_arg(&mut d, target, AccessMode::InOut),
        ResultBinding::FreshDecl { var, .. } => d.add(*var, AccessMode::InOut),
    }
    Ok(d)
}

fn add_arg(d: &mut DependClause, arg: &ArgInfo, mode: AccessMode) {
    for v in &arg.vars {
        let only_index = arg.index_vars.contains(v) && !arg.plain_vars.contains(v);
        d.add(*v, if only_index { AccessMode::In } else { mode });
    }
}

/// True iff a subscript index of the call reads a variable that a pending
/// task writes.
pub fn find_index_dependencies(call: &CallSiteInfo, pending: &[DependClause]) -> bool {
    let written: HashSet<VarId> = pending.iter().flat_map(|d| d.inout_vars.iter().copied()).collect();
    call_index_vars(call).any(|v| written.contains(&v))
}

fn call_index_vars(call: &CallSiteInfo) -> impl Iterator<Item = VarId> + '_ {
    let binding = match &call.result_binding {
        ResultBinding::ExistingVar { target, .. } => Some(target),
        _ => None,
    };
    call.args
        .iter()
        .chain(call.receiver.iter())
        .chain(binding)
        .flat_map(|a| a.index_vars.iter().copied())
}

// ---- plans ------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SyncReason {
    Coherency,
    IndexDependency,
    ReturnBarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SyncPlacement {
    Before(StmtId),
    /// At the end of a loop body, before the back edge.
    EndOfBody(StmtId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SyncPoint {
    pub position: SourceSpan,
    pub reason: SyncReason,
    pub placement: SyncPlacement,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromotionCandidate {
    pub var: VarId,
    pub name: String,
    pub decl_span: SourceSpan,
    /// The `}` closing the variable's scope; `None` for a `for` header.
    pub scope_end_span: Option<SourceSpan>,
    pub is_alias: bool,
    pub scope: ScopeId,
    /// Set when the variable is declared in a `for` header.
    pub for_stmt: Option<StmtId>,
    pub ptr_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskPlan {
    pub stmt: StmtId,
    pub stmt_span: SourceSpan,
    pub call: ExprId,
    pub callee: FunctionId,
    pub depend: DependClause,
    pub firstprivate_vars: Vec<VarId>,
    /// Variables read by subscripts of the call's arguments.
    pub index_vars: Vec<VarId>,
    pub preceded_by_taskwait: bool,
    #[serde(skip)]
    pub binding: ResultBinding,
}

impl TaskPlan {
    pub fn split_var(&self) -> Option<VarId> {
        match self.binding {
            ResultBinding::FreshDecl { var, .. } => Some(var),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnPlan {
    /// Returns replaced by taskwait, assignment and goto.
    pub rewritten: Vec<StmtId>,
    /// A final `return <simple>;` left after the taskgroup.
    pub kept_trailing: Option<StmtId>,
    pub res_var: Option<String>,
    pub label: Option<String>,
    /// Wrap the original body in an extra block so gotos cross no
    /// initialized declaration.
    pub inner_braces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InlineCall {
    pub call: ExprId,
    pub callee: String,
    pub line: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionPlan {
    pub func: FunctionId,
    pub name: String,
    pub needs_taskgroup: bool,
    pub excluded: bool,
    pub tasks: Vec<TaskPlan>,
    pub syncs: Vec<SyncPoint>,
    pub promotions: Vec<PromotionCandidate>,
    pub aliases: Vec<PromotionCandidate>,
    pub returns: ReturnPlan,
    pub inline_calls: Vec<InlineCall>,
}

impl FunctionPlan {
    pub fn task_at(&self, stmt: StmtId) -> Option<&TaskPlan> {
        self.tasks.iter().find(|t| t.stmt == stmt)
    }
}

/// Identifiers the emitted code introduces, fixed once per unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratedNames {
    pub active: String,
    pub res: String,
    pub depth: String,
    pub depth_local: String,
    pub saved_depth: String,
    pub task_count: String,
    pub count_snapshot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitPlan {
    pub functions: Vec<FunctionPlan>,
    pub global_touching: Vec<FunctionId>,
    pub names: GeneratedNames,
    #[serde(skip)]
    pub warnings: Vec<Diagnostic>,
}

impl UnitPlan {
    pub fn function(&self, f: FunctionId) -> Option<&FunctionPlan> {
        self.functions.iter().find(|p| p.func == f)
    }

    pub fn function_mut(&mut self, f: FunctionId) -> Option<&mut FunctionPlan> {
        self.functions.iter_mut().find(|p| p.func == f)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisOptions {
    pub exclude: Vec<String>,
}

/// Whether `func` contains at least one taskifiable call.
pub fn function_needs_taskgroup(model: &Model, tree: &TranslationUnit, func: FunctionId, global_touching: &HashSet<FunctionId>, exclude: &[String]) -> bool {
    if model.function(func).is_external || is_excluded(model, func, exclude) {
        return false;
    }
    enumerate_call_sites(model, tree, func)
        .iter()
        .any(|c| taskify_blocker(model, c, global_touching, exclude).is_none())
}

fn is_excluded(model: &Model, f: FunctionId, exclude: &[String]) -> bool {
    let fi = model.function(f);
    exclude.iter().any(|e| *e == fi.name || *e == fi.qualified_name)
}

/// Why a call stays inline, or `None` when it becomes a task.
fn taskify_blocker(model: &Model, c: &CallSiteInfo, global_touching: &HashSet<FunctionId>, exclude: &[String]) -> Option<String> {
    if let Some(r) = blocker_except_position(model, c, global_touching, exclude) {
        return Some(r);
    }
    if c.position != CallPosition::Statement {
        return Some(format!("call in {:?} position", c.position).to_lowercase());
    }
    None
}

/// Whether the call would become a task if it stood alone in a statement.
pub fn taskifiable_anywhere(model: &Model, c: &CallSiteInfo, global_touching: &HashSet<FunctionId>, exclude: &[String]) -> bool {
    blocker_except_position(model, c, global_touching, exclude).is_none()
}

fn blocker_except_position(model: &Model, c: &CallSiteInfo, global_touching: &HashSet<FunctionId>, exclude: &[String]) -> Option<String> {
    let fid = match c.callee {
        Callee::Function(f) if !model.function(f).is_external => f,
        Callee::Function(_) => return Some("callee is external".into()),
        Callee::External { .. } => return Some("library call".into()),
    };
    if is_excluded(model, fid, exclude) {
        return Some("callee excluded".into());
    }
    if global_touching.contains(&fid) {
        return Some("callee touches global variables".into());
    }
    let uses_this = c.args.iter().chain(c.receiver.iter()).any(|a| a.uses_this)
        || matches!(&c.result_binding, ResultBinding::ExistingVar { target, .. } if target.uses_this);
    if uses_this {
        return Some("call uses members of the implicit object".into());
    }
    None
}

/// Functions whose bodies reference a global, closed over their callers.
pub fn global_touching_functions(model: &Model, tree: &TranslationUnit) -> HashSet<FunctionId> {
    let mut touching = HashSet::new();
    let mut callers: HashMap<FunctionId, Vec<FunctionId>> = HashMap::new();
    for f in &model.functions {
        if f.is_external {
            continue;
        }
        let def = model.function_def(tree, f.id);
        let mut direct = false;
        for s in &def.body.as_ref().unwrap().stmts {
            s.walk(&mut |st| {
                for e in st.own_exprs() {
                    e.walk_post(&mut |x| match model.binding(x.id) {
                        Some(Binding::Var(v)) if model.var(*v).kind == VarKind::Global => direct = true,
                        _ => {
                            if let Some(CallInfo {
                                callee: Callee::Function(g), ..
                            }) = model.call(x.id)
                            {
                                callers.entry(*g).or_default().push(f.id);
                            }
                        }
                    });
                }
                if let StmtKind::Decl(d) = &st.kind {
                    for dc in &d.declarators {
                        if let Some(Initializer::List { items, .. }) = &dc.init {
                            for e in items {
                                e.walk_post(&mut |x| {
                                    if let Some(Binding::Var(v)) = model.binding(x.id) {
                                        if model.var(*v).kind == VarKind::Global {
                                            direct = true;
                                        }
                                    }
                                });
                            }
                        }
                    }
                }
            });
        }
        if direct {
            touching.insert(f.id);
        }
    }
    let mut work: Vec<FunctionId> = touching.iter().copied().collect();
    while let Some(f) = work.pop() {
        for c in callers.get(&f).cloned().unwrap_or_default() {
            if touching.insert(c) {
                work.push(c);
            }
        }
    }
    touching
}

/// Plans every function of the unit.
pub fn analyze_unit(model: &Model, tree: &TranslationUnit, options: &AnalysisOptions) -> Result<UnitPlan, Vec<Diagnostic>> {
    let mut names = FreshNames::new(model);
    let gen = GeneratedNames {
        active: names.exact_or_suffixed("apac_active"),
        res: names.exact_or_suffixed("apac_res"),
        depth: names.exact_or_suffixed("apac_depth"),
        depth_local: names.exact_or_suffixed("apac_depth_local"),
        saved_depth: names.exact_or_suffixed("apac_saved_depth"),
        task_count: names.exact_or_suffixed("apac_task_count"),
        count_snapshot: names.exact_or_suffixed("apac_count_snapshot"),
    };
    let global_touching = global_touching_functions(model, tree);
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let mut touching: Vec<FunctionId> = global_touching.iter().copied().collect();
    touching.sort();
    for f in &touching {
        let fi = model.function(*f);
        warnings.push(Diagnostic::warning(
            fi.name_span,
            format!("`{}` touches global state; its calls are not taskified", fi.qualified_name),
        ));
    }
    let mut functions = Vec::new();
    for f in &model.functions {
        if f.is_external {
            continue;
        }
        match plan_function(model, tree, f.id, &global_touching, options, &gen, &mut names) {
            Ok(p) => functions.push(p),
            Err(mut e) => errors.append(&mut e),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(UnitPlan {
        functions,
        global_touching: touching,
        names: gen,
        warnings,
    })
}

fn plan_function(
    model: &Model,
    tree: &TranslationUnit,
    func: FunctionId,
    global_touching: &HashSet<FunctionId>,
    options: &AnalysisOptions,
    gen: &GeneratedNames,
    names: &mut FreshNames,
) -> Result<FunctionPlan, Vec<Diagnostic>> {
    let fi = model.function(func);
    let excluded = is_excluded(model, func, &options.exclude);
    let sites = enumerate_call_sites(model, tree, func);
    let mut tasks = Vec::new();
    let mut inline_calls = Vec::new();
    let mut errors = Vec::new();
    for c in &sites {
        let blocker = if excluded {
            Some("enclosing function excluded".to_string())
        } else if fi.ret_is_ref {
            Some("enclosing function returns a reference".to_string())
        } else {
            taskify_blocker(model, c, global_touching, &options.exclude)
        };
        if let Some(reason) = blocker {
            inline_calls.push(InlineCall {
                call: c.call,
                callee: c.callee_name.clone(),
                line: c.span.line,
                reason,
            });
            continue;
        }
        if let ResultBinding::FreshDecl { var, .. } = c.result_binding {
            if model.var(var).is_ref {
                errors.push(Diagnostic::error(
                    c.stmt_span,
                    "unsupported construct: call result bound to a reference",
                ));
                continue;
            }
        }
        let depend = match classify_call(c, model) {
            Ok(d) => d,
            Err(e) => {
                errors.push(Diagnostic::error(c.span, e.to_string()));
                continue;
            }
        };
        let Callee::Function(callee) = c.callee else { unreachable!() };
        tasks.push(TaskPlan {
            stmt: c.stmt,
            stmt_span: c.stmt_span,
            call: c.call,
            callee,
            depend,
            firstprivate_vars: Vec::new(),
            index_vars: {
                let mut v: Vec<VarId> = call_index_vars(c).collect();
                v.dedup();
                v
            },
            preceded_by_taskwait: false,
            binding: c.result_binding.clone(),
        });
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let needs_taskgroup = !tasks.is_empty();
    let def = model.function_def(tree, func);
    let body = def.body.as_ref().expect("planned functions have bodies");
    let mut plan = FunctionPlan {
        func,
        name: fi.qualified_name.clone(),
        needs_taskgroup,
        excluded,
        tasks,
        syncs: Vec::new(),
        promotions: Vec::new(),
        aliases: Vec::new(),
        returns: ReturnPlan {
            rewritten: Vec::new(),
            kept_trailing: None,
            res_var: None,
            label: None,
            inner_braces: false,
        },
        inline_calls,
    };
    if !needs_taskgroup {
        return Ok(plan);
    }
    let (promotions, aliases) = find_promotions_in(model, tree, func, &plan.tasks, names);
    for t in &mut plan.tasks {
        for a in &aliases {
            let v = model.var(a.var);
            if !v.is_ref && t.depend.all_vars().any(|x| x == a.var) && !t.firstprivate_vars.contains(&a.var) {
                t.firstprivate_vars.push(a.var);
            }
        }
    }
    plan.promotions = promotions;
    plan.aliases = aliases;
    plan.returns = plan_returns(model, func, body, gen);
    plan.syncs = run_dataflow(model, body, &plan, global_touching);
    for s in &plan.syncs {
        if let (SyncReason::IndexDependency, SyncPlacement::Before(st)) = (s.reason, s.placement) {
            if let Some(t) = plan.tasks.iter_mut().find(|t| t.stmt == st) {
                t.preceded_by_taskwait = true;
            }
        }
    }
    Ok(plan)
}

// ---- promotions -------------------------------------------------------------

/// Nested-scope variables referenced by tasks of `func`, split into heap
/// promotions and alias captures.
pub fn find_promotions(model: &Model, tree: &TranslationUnit, func: FunctionId, tasks: &[TaskPlan]) -> Vec<PromotionCandidate> {
    let mut names = FreshNames::new(model);
    let (mut p, a) = find_promotions_in(model, tree, func, tasks, &mut names);
    p.extend(a);
    p.sort_by_key(|c| c.decl_span.start);
    p
}

fn find_promotions_in(
    model: &Model,
    tree: &TranslationUnit,
    func: FunctionId,
    tasks: &[TaskPlan],
    names: &mut FreshNames,
) -> (Vec<PromotionCandidate>, Vec<PromotionCandidate>) {
    let fscope = model.function_scope[&func];
    let def = model.function_def(tree, func);
    let mut decl_stmts: HashMap<StmtId, &Stmt> = HashMap::new();
    let mut for_inits: HashMap<StmtId, StmtId> = HashMap::new();
    for s in &def.body.as_ref().unwrap().stmts {
        s.walk(&mut |st| {
            decl_stmts.insert(st.id, st);
            if let StmtKind::For { init: Some(i), .. } = &st.kind {
                for_inits.insert(i.id, st.id);
            }
        });
    }
    let mut seen = HashSet::new();
    let mut promotions = Vec::new();
    let mut aliases = Vec::new();
    for t in tasks {
        let mut vars: Vec<VarId> = t.depend.all_vars().collect();
        vars.sort_by_key(|v| model.var(*v).name_span.start);
        for v in vars {
            let info = model.var(v);
            if info.kind != VarKind::Local || info.scope == fscope || !seen.insert(v) {
                continue;
            }
            let scope = model.scope(info.scope);
            let stmt = info.decl_stmt.expect("locals come from declarations");
            let decl = decl_stmts[&stmt];
            let is_alias = info.is_ref || is_address_of_outer(model, decl, info.declarator, info.scope);
            let for_stmt = if scope.kind == ScopeKind::For { for_inits.get(&stmt).copied() } else { None };
            let cand = PromotionCandidate {
                var: v,
                name: info.name.clone(),
                decl_span: decl.span,
                scope_end_span: scope.close,
                is_alias,
                scope: info.scope,
                for_stmt,
                ptr_name: if is_alias { String::new() } else { names.exact_or_suffixed(&format!("apac_ptr_{}", info.name)) },
            };
            if is_alias {
                aliases.push(cand);
            } else {
                promotions.push(cand);
            }
        }
    }
    promotions.sort_by_key(|c| c.decl_span.start);
    aliases.sort_by_key(|c| c.decl_span.start);
    (promotions, aliases)
}

/// `T* p = &x;` with `x` declared outside `scope`.
fn is_address_of_outer(model: &Model, decl: &Stmt, index: usize, scope: ScopeId) -> bool {
    let StmtKind::Decl(d) = &decl.kind else { return false };
    let dc = &d.declarators[index];
    if dc.pointer_depth == 0 {
        return false;
    }
    let Some(Initializer::Expr(e)) = &dc.init else { return false };
    let ExprKind::Unary {
        op: UnaryOp::AddrOf,
        operand,
    } = &e.unparen().kind
    else {
        return false;
    };
    let mut base = operand.unparen();
    loop {
        match &base.kind {
            ExprKind::Index { base: b, .. } | ExprKind::Member { base: b, arrow: false, .. } => base = b.unparen(),
            _ => break,
        }
    }
    match model.binding(base.id) {
        Some(Binding::Var(v)) => {
            let vs = model.var(*v).scope;
            vs != scope && !model.scope_within(vs, scope)
        }
        _ => false,
    }
}

// ---- returns ----------------------------------------------------------------

fn plan_returns(model: &Model, func: FunctionId, body: &Block, gen: &GeneratedNames) -> ReturnPlan {
    let fi = model.function(func);
    let mut returns = Vec::new();
    for s in &body.stmts {
        s.walk(&mut |st| {
            if let StmtKind::Return(_) = st.kind {
                returns.push(st);
            }
        });
    }
    let non_void = fi.return_type != "void";
    let mut kept = None;
    if non_void && returns.len() == 1 {
        let r = returns[0];
        if body.stmts.last().map(|s| s.id) == Some(r.id) {
            if let StmtKind::Return(Some(e)) = &r.kind {
                if is_simple_return(model, e) {
                    kept = Some(r.id);
                }
            }
        }
    }
    let rewritten: Vec<StmtId> = returns.iter().map(|s| s.id).filter(|id| Some(*id) != kept).collect();
    let label = (!rewritten.is_empty()).then(|| format!("apac_endtaskgrouplabel_{}", fi.name));
    let res_var = (non_void && !rewritten.is_empty()).then(|| gen.res.clone());
    let inner_braces = !rewritten.is_empty()
        && body.stmts.iter().any(|s| match &s.kind {
            StmtKind::Decl(d) => {
                matches!(d.ty.base, BaseType::Named(_)) || d.declarators.iter().any(|dc| dc.init.is_some())
            }
            _ => false,
        });
    ReturnPlan {
        rewritten,
        kept_trailing: kept,
        res_var,
        label,
        inner_braces,
    }
}

/// Literals, parameters and globals only, with no calls.
fn is_simple_return(model: &Model, e: &Expr) -> bool {
    let mut ok = true;
    e.walk_post(&mut |x| match &x.kind {
        ExprKind::Call { .. } | ExprKind::Assign { .. } | ExprKind::Postfix { .. } | ExprKind::This => ok = false,
        ExprKind::Unary {
            op: UnaryOp::PreInc | UnaryOp::PreDec,
            ..
        } => ok = false,
        ExprKind::Name(_) => match model.binding(x.id) {
            Some(Binding::Var(v)) if model.var(*v).kind != VarKind::Local => {}
            _ => ok = false,
        },
        _ => {}
    });
    ok
}

// ---- coherency dataflow ------------------------------------------------------

/// Taskwaits a planned function needs: coherency and index-dependency syncs
/// plus one barrier per rewritten return.
pub fn find_coherency_syncs(model: &Model, tree: &TranslationUnit, plan: &FunctionPlan) -> Vec<SyncPoint> {
    let def = model.function_def(tree, plan.func);
    let body = def.body.as_ref().expect("planned functions have bodies");
    let touching = global_touching_functions(model, tree);
    run_dataflow(model, body, plan, &touching)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct Pending {
    reachable: bool,
    any: bool,
    reads: BTreeSet<VarId>,
    writes: BTreeSet<VarId>,
}

impl Pending {
    fn start() -> Pending {
        Pending {
            reachable: true,
            ..Pending::default()
        }
    }

    fn unreachable() -> Pending {
        Pending::default()
    }

    fn cleared(&self) -> Pending {
        Pending {
            reachable: self.reachable,
            ..Pending::default()
        }
    }

    fn union(&self, o: &Pending) -> Pending {
        match (self.reachable, o.reachable) {
            (false, _) => o.clone(),
            (_, false) => self.clone(),
            _ => Pending {
                reachable: true,
                any: self.any || o.any,
                reads: self.reads.union(&o.reads).copied().collect(),
                writes: self.writes.union(&o.writes).copied().collect(),
            },
        }
    }

    fn add_task(&mut self, d: &DependClause) {
        if !self.reachable {
            return;
        }
        self.any = true;
        self.reads.extend(d.in_vars.iter().copied());
        self.writes.extend(d.inout_vars.iter().copied());
    }

    fn forget(&mut self, v: VarId) {
        self.reads.remove(&v);
        self.writes.remove(&v);
    }
}

/// Direct accesses of a statement's own expressions.
#[derive(Debug, Clone, Default)]
struct Access {
    reads: BTreeSet<VarId>,
    writes: BTreeSet<VarId>,
    /// Contains an inline call to a user function.
    barrier: bool,
}

impl Access {
    fn conflicts(&self, p: &Pending) -> bool {
        p.reachable
            && (self.writes.iter().any(|v| p.reads.contains(v) || p.writes.contains(v))
                || self.reads.iter().any(|v| p.writes.contains(v))
                || (self.barrier && p.any))
    }

    fn merge(&mut self, o: Access) {
        self.reads.extend(o.reads);
        self.writes.extend(o.writes);
        self.barrier |= o.barrier;
    }
}

struct LoopCtx {
    is_switch: bool,
    breaks: Pending,
    continues: Vec<(StmtId, Pending)>,
}

struct Flow<'a> {
    model: &'a Model,
    tasks: HashMap<StmtId, &'a TaskPlan>,
    rewritten_returns: HashSet<StmtId>,
    cleanups: HashMap<ScopeId, Vec<VarId>>,
    syncs: Vec<SyncPoint>,
    loops: Vec<LoopCtx>,
    globals: Vec<VarId>,
    global_touching: HashSet<FunctionId>,
}

fn run_dataflow(model: &Model, body: &Block, plan: &FunctionPlan, global_touching: &HashSet<FunctionId>) -> Vec<SyncPoint> {
    let mut cleanups: HashMap<ScopeId, Vec<VarId>> = HashMap::new();
    for p in &plan.promotions {
        cleanups.entry(p.scope).or_default().push(p.var);
    }
    let mut flow = Flow {
        model,
        tasks: plan.tasks.iter().map(|t| (t.stmt, t)).collect(),
        rewritten_returns: plan.returns.rewritten.iter().copied().collect(),
        cleanups,
        syncs: Vec::new(),
        loops: Vec::new(),
        globals: model.globals.clone(),
        global_touching: global_touching.clone(),
    };
    let mut st = Pending::start();
    for s in &body.stmts {
        st = flow.stmt(s, st);
    }
    let mut syncs = flow.syncs;
    syncs.sort_by_key(|s| (s.position.start, s.placement));
    syncs.dedup_by_key(|s| s.placement);
    syncs
}

impl<'a> Flow<'a> {
    fn sync(&mut self, placement: SyncPlacement, position: SourceSpan, reason: SyncReason) {
        if !self.syncs.iter().any(|s| s.placement == placement) {
            self.syncs.push(SyncPoint {
                position,
                reason,
                placement,
            });
        }
    }

    fn check(&mut self, s: &Stmt, acc: &Access, st: Pending) -> Pending {
        if acc.conflicts(&st) {
            self.sync(SyncPlacement::Before(s.id), s.span, SyncReason::Coherency);
            st.cleared()
        } else {
            st
        }
    }

    fn stmt(&mut self, s: &Stmt, st: Pending) -> Pending {
        if !st.reachable {
            // Code after a jump is reachable only through labels.
            return self.stmt(s, Pending::start()).union(&Pending::unreachable());
        }
        if let Some(task) = self.tasks.get(&s.id).copied() {
            let mut st = st;
            let pending_writes: Vec<VarId> = st.writes.iter().copied().collect();
            let index_dep = task.index_vars.iter().any(|v| pending_writes.contains(v));
            if index_dep {
                self.sync(SyncPlacement::Before(s.id), s.span, SyncReason::IndexDependency);
                st = st.cleared();
            }
            if let Some(v) = task.split_var() {
                st.forget(v);
            }
            st.add_task(&task.depend);
            return st;
        }
        match &s.kind {
            StmtKind::Expr(e) => {
                let acc = self.access(e);
                self.check(s, &acc, st)
            }
            StmtKind::Decl(d) => {
                let mut acc = Access::default();
                for e in s.own_exprs() {
                    acc.merge(self.access(e));
                }
                let mut st = self.check(s, &acc, st);
                for i in 0..d.declarators.len() {
                    if let Some(v) = self.model.decl_vars.get(&(s.id, i)) {
                        st.forget(*v);
                    }
                }
                st
            }
            StmtKind::Block(b) => {
                let mut st = st;
                for c in &b.stmts {
                    st = self.stmt(c, st);
                }
                self.scope_exit(s.id, st)
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let acc = self.access(cond);
                let st = self.check(s, &acc, st);
                let a = self.stmt(then_branch, st.clone());
                let b = match else_branch {
                    Some(e) => self.stmt(e, st),
                    None => st,
                };
                a.union(&b)
            }
            StmtKind::While { cond, body } => {
                let hdr = self.access(cond);
                let st = self.check(s, &hdr, st);
                self.looped(s, body, &hdr, st)
            }
            StmtKind::For { init, cond, step, body } => {
                let mut st = st;
                if let Some(i) = init {
                    st = self.stmt(i, st);
                }
                let first = cond.as_ref().map(|c| self.access(c)).unwrap_or_default();
                // A header conflict on entry is resolved before the whole loop.
                if first.conflicts(&st) {
                    self.sync(SyncPlacement::Before(s.id), s.span, SyncReason::Coherency);
                    st = st.cleared();
                }
                let mut back = first.clone();
                if let Some(stp) = step {
                    back.merge(self.access(stp));
                }
                let out = self.looped(s, body, &back, st);
                self.scope_exit(s.id, out)
            }
            StmtKind::Switch { cond, body } => {
                let acc = self.access(cond);
                let st = self.check(s, &acc, st);
                self.loops.push(LoopCtx {
                    is_switch: true,
                    breaks: Pending::unreachable(),
                    continues: Vec::new(),
                });
                let entry = st.clone();
                let mut has_default = false;
                let out = match &body.kind {
                    StmtKind::Block(b) => {
                        let mut cur = Pending::unreachable();
                        for c in &b.stmts {
                            match &c.kind {
                                StmtKind::Case(e) => {
                                    let acc = self.access(e);
                                    cur = cur.union(&entry);
                                    cur = self.check(c, &acc, cur);
                                }
                                StmtKind::Default => {
                                    has_default = true;
                                    cur = cur.union(&entry);
                                }
                                _ => {
                                    if cur.reachable {
                                        cur = self.stmt(c, cur);
                                    }
                                }
                            }
                        }
                        self.scope_exit(body.id, cur)
                    }
                    _ => self.stmt(body, entry.clone()),
                };
                let ctx = self.loops.pop().unwrap();
                let mut exit = out.union(&ctx.breaks);
                if !has_default {
                    exit = exit.union(&entry);
                }
                // `continue` inside a switch belongs to the enclosing loop.
                if let Some(outer) = self.loops.last_mut() {
                    outer.continues.extend(ctx.continues);
                }
                exit
            }
            StmtKind::Case(_) | StmtKind::Default | StmtKind::Empty => st,
            StmtKind::Break => {
                if let Some(ctx) = self.loops.last_mut() {
                    ctx.breaks = ctx.breaks.union(&st);
                }
                Pending::unreachable()
            }
            StmtKind::Continue => {
                if let Some(ctx) = self.loops.iter_mut().rev().find(|c| !c.is_switch) {
                    ctx.continues.push((s.id, st));
                }
                Pending::unreachable()
            }
            StmtKind::Return(e) => {
                if self.rewritten_returns.contains(&s.id) {
                    // The return barrier waits for every pending task.
                    self.sync(SyncPlacement::Before(s.id), s.span, SyncReason::ReturnBarrier);
                } else if let Some(e) = e {
                    let acc = self.access(e);
                    let _ = self.check(s, &acc, st);
                }
                Pending::unreachable()
            }
        }
    }

    /// Adds the cleanup tasks of promoted variables at the end of a scope.
    fn scope_exit(&mut self, stmt: StmtId, mut st: Pending) -> Pending {
        if let Some(scope) = self.model.opened_scope.get(&stmt) {
            if let Some(vars) = self.cleanups.get(scope) {
                for v in vars {
                    st.add_task(&DependClause {
                        in_vars: Vec::new(),
                        inout_vars: vec![*v],
                    });
                }
            }
        }
        st
    }

    fn looped(&mut self, s: &Stmt, body: &Stmt, back_hdr: &Access, entry: Pending) -> Pending {
        let mut back = Pending::unreachable();
        let mut rounds = 0;
        loop {
            rounds += 1;
            let start = entry.union(&back);
            self.loops.push(LoopCtx {
                is_switch: false,
                breaks: Pending::unreachable(),
                continues: Vec::new(),
            });
            let mut out = self.stmt(body, start.clone());
            let ctx = self.loops.pop().unwrap();
            let mut new_back = Pending::unreachable();
            for (cid, cst) in &ctx.continues {
                let mut cst = cst.clone();
                if back_hdr.conflicts(&cst) {
                    self.sync(SyncPlacement::Before(*cid), s.span, SyncReason::Coherency);
                    cst = cst.cleared();
                }
                new_back = new_back.union(&cst);
            }
            if back_hdr.conflicts(&out) {
                self.sync(SyncPlacement::EndOfBody(s.id), body.span, SyncReason::Coherency);
                out = out.cleared();
            }
            new_back = new_back.union(&out);
            let merged = back.union(&new_back);
            if merged == back || rounds > 16 {
                return start.union(&ctx.breaks);
            }
            back = merged;
        }
    }

    fn access(&mut self, e: &Expr) -> Access {
        let mut acc = Access::default();
        self.collect(e, false, &mut acc);
        acc
    }

    fn collect(&mut self, e: &Expr, write: bool, acc: &mut Access) {
        match &e.kind {
            ExprKind::Name(_) => {
                if let Some(Binding::Var(v)) = self.model.binding(e.id) {
                    if write {
                        acc.writes.insert(*v);
                    } else {
                        acc.reads.insert(*v);
                    }
                }
            }
            ExprKind::Assign { lhs, rhs, .. } => {
                self.collect(lhs, true, acc);
                self.collect(rhs, false, acc);
            }
            ExprKind::Unary {
                op: UnaryOp::PreInc | UnaryOp::PreDec | UnaryOp::AddrOf,
                operand,
            }
            | ExprKind::Postfix { operand, .. } => self.collect(operand, true, acc),
            ExprKind::Unary { operand, .. } => self.collect(operand, write, acc),
            ExprKind::Paren(inner) => self.collect(inner, write, acc),
            ExprKind::Index { base, index } => {
                self.collect(base, write, acc);
                self.collect(index, false, acc);
            }
            ExprKind::Member { base, .. } => self.collect(base, write, acc),
            ExprKind::Call { callee, args } => self.inline_call(e, callee, args, acc),
            _ => {
                for c in e.children() {
                    self.collect(c, false, acc);
                }
            }
        }
    }

    fn inline_call(&mut self, e: &Expr, callee: &Expr, args: &[Expr], acc: &mut Access) {
        let Some(info) = self.model.call(e.id) else { return };
        match &info.callee {
            Callee::Function(f) => {
                let fi = self.model.function(*f);
                if !fi.is_external {
                    acc.barrier = true;
                }
                if self.global_touching.contains(f) {
                    for g in &self.globals {
                        acc.writes.insert(*g);
                    }
                }
                if let (Receiver::Expr(_), ExprKind::Member { base, .. }) = (info.receiver, &callee.kind) {
                    let w = !fi.is_const_method;
                    self.collect(base, w, acc);
                }
                for (i, a) in args.iter().enumerate() {
                    let w = fi.params.get(i).is_none_or(|p| classify_parameter(p) == AccessMode::InOut);
                    self.collect(a, w, acc);
                }
            }
            Callee::External { builtin, .. } => {
                let w = match builtin {
                    Some(Builtin::Swap) | None => true,
                    Some(_) => false,
                };
                for a in args {
                    self.collect(a, w, acc);
                }
            }
        }
    }
}

// ---- report -----------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CallReport {
    pub callee: String,
    pub line: u32,
    pub taskified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(rename = "in")]
    pub in_vars: Vec<String>,
    #[serde(rename = "inout")]
    pub inout_vars: Vec<String>,
    pub firstprivate: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SyncReport {
    pub line: u32,
    pub column: u32,
    pub reason: SyncReason,
    pub end_of_loop_body: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PromotionReport {
    pub var: String,
    pub line: u32,
    pub is_alias: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionReport {
    pub name: String,
    pub taskgroup: bool,
    pub excluded: bool,
    pub touches_globals: bool,
    pub calls: Vec<CallReport>,
    pub syncs: Vec<SyncReport>,
    pub promotions: Vec<PromotionReport>,
    pub rewritten_returns: usize,
}

/// Serializable summary of a unit plan, keyed by names and source lines.
pub fn report(model: &Model, plan: &UnitPlan) -> Vec<FunctionReport> {
    let name = |v: &VarId| model.var(*v).name.clone();
    plan.functions
        .iter()
        .map(|fp| {
            let mut calls: Vec<(u32, CallReport)> = fp
                .tasks
                .iter()
                .map(|t| {
                    let (i, o) = t.depend.names(model);
                    (
                        t.stmt_span.start as u32,
                        CallReport {
                            callee: model.function(t.callee).qualified_name.clone(),
                            line: t.stmt_span.line,
                            taskified: true,
                            reason: None,
                            in_vars: i,
                            inout_vars: o,
                            firstprivate: t.firstprivate_vars.iter().map(name).collect(),
                        },
                    )
                })
                .collect();
            for c in &fp.inline_calls {
                calls.push((
                    u32::MAX,
                    CallReport {
                        callee: c.callee.clone(),
                        line: c.line,
                        taskified: false,
                        reason: Some(c.reason.clone()),
                        in_vars: Vec::new(),
                        inout_vars: Vec::new(),
                        firstprivate: Vec::new(),
                    },
                ));
            }
            calls.sort_by_key(|(off, c)| (c.line, *off));
            FunctionReport {
                name: fp.name.clone(),
                taskgroup: fp.needs_taskgroup,
                excluded: fp.excluded,
                touches_globals: plan.global_touching.contains(&fp.func),
                calls: calls.into_iter().map(|(_, c)| c).collect(),
                syncs: fp
                    .syncs
                    .iter()
                    .map(|s| SyncReport {
                        line: s.position.line,
                        column: s.position.col,
                        reason: s.reason,
                        end_of_loop_body: matches!(s.placement, SyncPlacement::EndOfBody(_)),
                    })
                    .collect(),
                promotions: fp
                    .promotions
                    .iter()
                    .chain(fp.aliases.iter())
                    .map(|p| PromotionReport {
                        var: p.name.clone(),
                        line: p.decl_span.line,
                        is_alias: p.is_alias,
                    })
                    .collect(),
                rewritten_returns: fp.returns.rewritten.len(),
            }
        })
        .collect()
}

//! Lowers a translation unit to stack code. The tasked form reads the
//! analysis plan directly: tasks, syncs, promotions and return rewrites
//! become dedicated instructions instead of pragma text.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use apac_core::access_analysis::{FunctionPlan, SyncPlacement, SyncReason, TaskPlan, UnitPlan};
use apac_core::frontend::ast::*;
use apac_core::frontend::sema::{Binding, Builtin, Callee, FunctionId, Model, Receiver, ScopeId, Type, VarId, VarKind};
use apac_core::pipeline::Prepared;

use crate::value::Value;
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Scalar {
    Bool,
    Char,
    Int,
    Long,
    Double,
}

impl Scalar {
    fn of(t: &Type) -> Option<Scalar> {
        Some(match t {
            Type::Bool => Scalar::Bool,
            Type::Char => Scalar::Char,
            Type::Int => Scalar::Int,
            Type::Long => Scalar::Long,
            Type::Double => Scalar::Double,
            _ => return None,
        })
    }
}

/// Arithmetic domain of an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Num {
    Int,
    Long,
    Double,
}

fn num_of(t: &Type) -> Num {
    match t {
        Type::Double => Num::Double,
        Type::Long => Num::Long,
        _ => Num::Int,
    }
}

fn ptr_like(t: &Type) -> bool {
    matches!(t, Type::Ptr(_) | Type::Array(..) | Type::Null)
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Const(Value),
    Local(u16),
    Global(u32),
    This,
    Field(u16),
    Decay,
    PtrAdd,
    PtrDiff,
    Load,
    Store,
    StoreKeep,
    Dup,
    Pop,
    Conv(Scalar),
    Arith(BinaryOp, Num),
    Cmp(BinaryOp),
    Neg(Num),
    BitNot(Num),
    Not,
    /// `None` for pointer steps.
    IncDec { delta: i64, post: bool, num: Option<Num>, conv: Option<Scalar> },
    Jump(u32),
    JumpIfFalse(u32),
    JumpIfTrue(u32),
    Alloc { slot: u16, tmpl: u32, level: u16, promoted: bool },
    BindRef(u16),
    Materialize { level: u16 },
    ExitTo(u16),
    Call { func: u32, argc: u16 },
    Builtin { which: Builtin, argc: u16, num: Num },
    Ret,
    RetVoid,
    GroupBegin,
    GroupEnd,
    Taskwait,
    Spawn(u32),
    TaskEnd,
    Free(u16),
    Fail(Arc<str>),
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSlot {
    pub slot: u16,
    pub by_ref: bool,
    pub conv: Option<Scalar>,
    pub tmpl: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct FuncCode {
    pub name: String,
    pub defined: bool,
    pub is_method: bool,
    pub code: Vec<Op>,
    pub lines: Vec<u32>,
    pub nslots: u16,
    pub slot_names: Vec<Arc<str>>,
    pub params: Vec<ParamSlot>,
    /// Parameters and function-scope locals visible in the final state.
    pub top_level: Vec<(Arc<str>, u16)>,
}

#[derive(Debug, Clone)]
pub(crate) struct TaskSite {
    pub label: String,
    pub n_in: u16,
    pub n_inout: u16,
    pub firstprivate: Vec<u16>,
    pub body_end: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct GlobalSlot {
    pub name: Arc<str>,
    pub tmpl: u32,
}

/// Deliberate weakenings of the tasked program, used to show that the
/// inserted synchronizations are needed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ablation {
    /// `(function, index into its sync list)`.
    pub drop_syncs: Vec<(String, usize)>,
    /// Drop every sync of these functions.
    pub drop_all_syncs_in: Vec<String>,
    /// Keep promoted locals on the stack and skip their cleanup tasks.
    pub drop_promotions: bool,
    /// Free promoted locals at scope end instead of in a cleanup task.
    pub inline_cleanup: bool,
}

/// Executable form of one translation unit.
#[derive(Debug, Clone)]
pub struct Program {
    pub(crate) funcs: Vec<FuncCode>,
    pub(crate) init: FuncCode,
    pub(crate) globals: Vec<GlobalSlot>,
    pub(crate) templates: Vec<Value>,
    pub(crate) sites: Vec<TaskSite>,
    pub(crate) tasked: bool,
}

impl Program {
    /// The original program, without any task semantics.
    pub fn sequential(p: &Prepared) -> Result<Program, SimError> {
        compile(&p.tree0, &p.model0, None, &Ablation::default())
    }

    /// The normalized program with the plan's tasks, syncs and promotions.
    pub fn tasked(p: &Prepared, ablation: &Ablation) -> Result<Program, SimError> {
        compile(&p.tree1, &p.model1, Some(&p.plan), ablation)
    }

    pub fn is_tasked(&self) -> bool {
        self.tasked
    }

    pub(crate) fn entry(&self, name: &str) -> Option<u32> {
        self.funcs.iter().position(|f| f.name == name && f.defined).map(|i| i as u32)
    }
}

pub fn compile(tree: &TranslationUnit, model: &Model, plan: Option<&UnitPlan>, ablation: &Ablation) -> Result<Program, SimError> {
    let mut u = Unit {
        model,
        tree,
        plan,
        ablation,
        templates: Vec::new(),
        tmpl_ids: HashMap::new(),
        sites: Vec::new(),
        globals: HashMap::new(),
    };
    let mut globals = Vec::new();
    for (i, v) in model.globals.iter().enumerate() {
        let vi = model.var(*v);
        u.globals.insert(*v, i as u32);
        let tmpl = u.template(&vi.ty, true);
        globals.push(GlobalSlot {
            name: vi.name.as_str().into(),
            tmpl,
        });
    }
    let mut funcs = Vec::new();
    for f in &model.functions {
        funcs.push(u.function(f.id)?);
    }
    let init = u.global_init()?;
    Ok(Program {
        funcs,
        init,
        globals,
        templates: u.templates,
        sites: u.sites,
        tasked: plan.is_some(),
    })
}

struct Unit<'a> {
    model: &'a Model,
    tree: &'a TranslationUnit,
    plan: Option<&'a UnitPlan>,
    ablation: &'a Ablation,
    templates: Vec<Value>,
    tmpl_ids: HashMap<(Type, bool), u32>,
    sites: Vec<TaskSite>,
    globals: HashMap<VarId, u32>,
}

impl<'a> Unit<'a> {
    fn template(&mut self, ty: &Type, zeroed: bool) -> u32 {
        if let Some(id) = self.tmpl_ids.get(&(ty.clone(), zeroed)) {
            return *id;
        }
        let v = self.default_value(ty, zeroed);
        let id = self.templates.len() as u32;
        self.templates.push(v);
        self.tmpl_ids.insert((ty.clone(), zeroed), id);
        id
    }

    fn default_value(&self, ty: &Type, zeroed: bool) -> Value {
        let scalar = |v: Value| if zeroed { v } else { Value::Uninit };
        match ty {
            Type::Int | Type::Long | Type::Char => scalar(Value::Int(0)),
            Type::Double => scalar(Value::Double(0.0)),
            Type::Bool => scalar(Value::Bool(false)),
            Type::Ptr(_) | Type::Null => scalar(Value::Ptr(None)),
            Type::Array(t, n) => Value::Array(vec![self.default_value(t, zeroed); n.unwrap_or(0) as usize]),
            Type::Class(name) => match self.model.class(name) {
                Some(c) => Value::Struct(
                    c.fields
                        .iter()
                        .map(|f| match &f.init {
                            Some(Initializer::Expr(e)) => const_eval(e).unwrap_or_else(|| self.default_value(&f.ty, zeroed)),
                            _ => self.default_value(&f.ty, zeroed),
                        })
                        .collect(),
                ),
                None => Value::Uninit,
            },
            Type::Void => Value::Uninit,
        }
    }

    fn function(&mut self, fid: FunctionId) -> Result<FuncCode, SimError> {
        let model = self.model;
        let tree = self.tree;
        let info = model.function(fid);
        let mut fc = Fc::new(self, Some(fid));
        if info.is_external {
            return Ok(fc.finish(info.qualified_name.clone(), false, info.is_method, Vec::new(), Vec::new()));
        }
        let mut params = Vec::new();
        for (i, v) in info.param_vars.iter().enumerate() {
            let (ty, by_ref) = &info.param_types[i];
            let slot = fc.slots[v];
            let tmpl = fc.u.template(ty, false);
            params.push(ParamSlot {
                slot,
                by_ref: *by_ref,
                conv: Scalar::of(ty),
                tmpl,
            });
        }
        let def = model.function_def(tree, fid);
        let body = def.body.as_ref().expect("defined functions have bodies");
        fc.level = 1;
        if let Some(fp) = fc.fp {
            if fp.returns.res_var.is_some() {
                let slot = fc.hidden("apac_res");
                let tmpl = fc.u.template(&info.ret, false);
                fc.emit(Op::Alloc {
                    slot,
                    tmpl,
                    level: 0,
                    promoted: false,
                });
                fc.res_slot = Some(slot);
            }
            fc.emit(Op::GroupBegin);
        }
        let kept = fc.fp.and_then(|fp| fp.returns.kept_trailing);
        for s in &body.stmts {
            if Some(s.id) != kept {
                fc.stmt(s)?;
            }
        }
        if fc.fp.is_some() {
            let here = fc.pc();
            for j in std::mem::take(&mut fc.group_end_patches) {
                fc.patch(j, here);
            }
            fc.emit(Op::GroupEnd);
            if let Some(res) = fc.res_slot {
                fc.emit(Op::Local(res));
                fc.emit(Op::Load);
                fc.emit(Op::Ret);
            } else if let Some(k) = kept {
                let s = body.stmts.iter().find(|s| s.id == k).expect("kept return is a top-level statement");
                fc.stmt(s)?;
            }
        }
        if info.is_main {
            fc.emit(Op::Const(Value::Int(0)));
            fc.emit(Op::Ret);
        } else {
            fc.emit(Op::RetVoid);
        }
        let fscope = model.function_scope.get(&fid).copied();
        let top_level = model
            .vars
            .iter()
            .filter(|v| Some(v.scope) == fscope && v.function == Some(fid) && !v.name.starts_with("apac_"))
            .map(|v| (Arc::<str>::from(v.name.as_str()), fc.slots[&v.id]))
            .collect();
        Ok(fc.finish(info.qualified_name.clone(), true, info.is_method, params, top_level))
    }

    fn global_init(&mut self) -> Result<FuncCode, SimError> {
        let model = self.model;
        let tree = self.tree;
        let mut fc = Fc::new(self, None);
        for (item, d, var) in &model.global_decls {
            let ItemKind::Global(decl) = &tree.items[*item].kind else { continue };
            let dc = &decl.declarators[*d];
            let g = fc.u.globals[var];
            let ty = model.var(*var).ty.clone();
            match &dc.init {
                None => {}
                Some(Initializer::Expr(e)) => {
                    fc.emit(Op::Global(g));
                    fc.expr(e)?;
                    fc.conv(&ty);
                    fc.emit(Op::Store);
                }
                Some(Initializer::List { items, .. }) => fc.list_init(Op::Global(g), &ty, items)?,
            }
        }
        fc.emit(Op::RetVoid);
        Ok(fc.finish("<init>".into(), true, false, Vec::new(), Vec::new()))
    }
}

fn const_eval(e: &Expr) -> Option<Value> {
    match &e.unparen().kind {
        ExprKind::Int(i) | ExprKind::Char(i) => Some(Value::Int(*i)),
        ExprKind::Float(f) => Some(Value::Double(*f)),
        ExprKind::Bool(b) => Some(Value::Bool(*b)),
        ExprKind::Unary { op: UnaryOp::Neg, operand } => match const_eval(operand)? {
            Value::Int(i) => Some(Value::Int(-i)),
            Value::Double(d) => Some(Value::Double(-d)),
            _ => None,
        },
        _ => None,
    }
}

struct Jumps {
    breaks: Vec<usize>,
    continues: Vec<usize>,
    break_level: u16,
    continue_level: u16,
    is_switch: bool,
}

/// Per-function code generator.
struct Fc<'u, 'a> {
    u: &'u mut Unit<'a>,
    func: Option<FunctionId>,
    code: Vec<Op>,
    lines: Vec<u32>,
    line: u32,
    slots: HashMap<VarId, u16>,
    slot_names: Vec<Arc<str>>,
    level: u16,
    loops: Vec<Jumps>,
    fp: Option<&'a FunctionPlan>,
    dropped: HashSet<usize>,
    promoted: HashSet<VarId>,
    group_end_patches: Vec<usize>,
    res_slot: Option<u16>,
    case_pc: HashMap<StmtId, u32>,
}

impl<'u, 'a> Fc<'u, 'a> {
    fn new(u: &'u mut Unit<'a>, func: Option<FunctionId>) -> Self {
        let model = u.model;
        let mut slots = HashMap::new();
        let mut slot_names = Vec::new();
        let mut fp = None;
        if let Some(f) = func {
            let info = model.function(f);
            let locals = model.vars.iter().filter(|v| v.function == Some(f) && v.kind == VarKind::Local);
            for v in info.param_vars.iter().map(|p| model.var(*p)).chain(locals) {
                slots.insert(v.id, slot_names.len() as u16);
                slot_names.push(Arc::from(v.name.as_str()));
            }
            fp = u.plan.and_then(|p| p.function(f)).filter(|p| p.needs_taskgroup);
        }
        let mut dropped = HashSet::new();
        let mut promoted = HashSet::new();
        if let Some(fp) = fp {
            let name = &model.function(fp.func).qualified_name;
            for (f, i) in &u.ablation.drop_syncs {
                if f == name || *f == fp.name {
                    dropped.insert(*i);
                }
            }
            if u.ablation.drop_all_syncs_in.iter().any(|f| f == name || *f == fp.name) {
                dropped.extend(0..fp.syncs.len());
            }
            if !u.ablation.drop_promotions {
                promoted.extend(fp.promotions.iter().map(|p| p.var));
            }
        }
        Fc {
            u,
            func,
            code: Vec::new(),
            lines: Vec::new(),
            line: 0,
            slots,
            slot_names,
            level: 0,
            loops: Vec::new(),
            fp,
            dropped,
            promoted,
            group_end_patches: Vec::new(),
            res_slot: None,
            case_pc: HashMap::new(),
        }
    }

    fn finish(self, name: String, defined: bool, is_method: bool, params: Vec<ParamSlot>, top_level: Vec<(Arc<str>, u16)>) -> FuncCode {
        FuncCode {
            name,
            defined,
            is_method,
            nslots: self.slot_names.len() as u16,
            slot_names: self.slot_names,
            code: self.code,
            lines: self.lines,
            params,
            top_level,
        }
    }

    fn model(&self) -> &'a Model {
        self.u.model
    }

    fn hidden(&mut self, name: &str) -> u16 {
        self.slot_names.push(Arc::from(name));
        (self.slot_names.len() - 1) as u16
    }

    fn emit(&mut self, op: Op) -> usize {
        self.code.push(op);
        self.lines.push(self.line);
        self.code.len() - 1
    }

    fn pc(&self) -> u32 {
        self.code.len() as u32
    }

    fn patch(&mut self, at: usize, target: u32) {
        match &mut self.code[at] {
            Op::Jump(t) | Op::JumpIfFalse(t) | Op::JumpIfTrue(t) => *t = target,
            other => unreachable!("patching {other:?}"),
        }
    }

    fn fail(&mut self, msg: String) {
        self.emit(Op::Fail(msg.into()));
    }

    fn conv(&mut self, ty: &Type) {
        if let Some(s) = Scalar::of(ty) {
            self.emit(Op::Conv(s));
        }
    }

    fn load_or_decay(&mut self, ty: &Type) {
        if matches!(ty, Type::Array(..)) {
            self.emit(Op::Decay);
        } else {
            self.emit(Op::Load);
        }
    }

    fn var_addr(&mut self, v: VarId) {
        if let Some(g) = self.u.globals.get(&v) {
            self.emit(Op::Global(*g));
        } else if let Some(s) = self.slots.get(&v) {
            self.emit(Op::Local(*s));
        } else {
            let name = self.model().var(v).name.clone();
            self.fail(format!("variable `{name}` is not visible here"));
        }
    }

    fn syncs_where(&self, pred: impl Fn(&apac_core::access_analysis::SyncPoint) -> bool) -> usize {
        self.fp.map_or(0, |fp| {
            fp.syncs
                .iter()
                .enumerate()
                .filter(|(i, s)| s.reason != SyncReason::ReturnBarrier && pred(s) && !self.dropped.contains(i))
                .count()
        })
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), SimError> {
        self.line = s.span.line;
        for _ in 0..self.syncs_where(|p| p.placement == SyncPlacement::Before(s.id)) {
            self.emit(Op::Taskwait);
        }
        if let Some(t) = self.fp.and_then(|fp| fp.task_at(s.id)) {
            return self.task(s, t);
        }
        let model = self.model();
        match &s.kind {
            StmtKind::Decl(d) => {
                for (i, dc) in d.declarators.iter().enumerate() {
                    let var = model.decl_vars[&(s.id, i)];
                    self.declare(var, dc)?;
                }
            }
            StmtKind::Expr(e) => {
                self.expr(e)?;
                self.emit(Op::Pop);
            }
            StmtKind::Block(b) => self.block(b, model.opened_scope.get(&s.id).copied(), None)?,
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.expr(cond)?;
                let jf = self.emit(Op::JumpIfFalse(0));
                self.stmt(then_branch)?;
                match else_branch {
                    Some(e) => {
                        let j = self.emit(Op::Jump(0));
                        let here = self.pc();
                        self.patch(jf, here);
                        self.stmt(e)?;
                        let end = self.pc();
                        self.patch(j, end);
                    }
                    None => {
                        let here = self.pc();
                        self.patch(jf, here);
                    }
                }
            }
            StmtKind::While { cond, body } => {
                let start = self.pc();
                self.expr(cond)?;
                let jf = self.emit(Op::JumpIfFalse(0));
                self.loops.push(Jumps {
                    breaks: vec![jf],
                    continues: Vec::new(),
                    break_level: self.level,
                    continue_level: self.level,
                    is_switch: false,
                });
                self.loop_body(s.id, body)?;
                self.emit(Op::Jump(start));
                let j = self.loops.pop().expect("loop context");
                let end = self.pc();
                for b in j.breaks {
                    self.patch(b, end);
                }
                for c in j.continues {
                    self.patch(c, start);
                }
            }
            StmtKind::For { init, cond, step, body } => {
                self.level += 1;
                if let Some(i) = init {
                    self.stmt(i)?;
                }
                let start = self.pc();
                let mut breaks = Vec::new();
                if let Some(c) = cond {
                    self.expr(c)?;
                    breaks.push(self.emit(Op::JumpIfFalse(0)));
                }
                self.loops.push(Jumps {
                    breaks,
                    continues: Vec::new(),
                    break_level: self.level,
                    continue_level: self.level,
                    is_switch: false,
                });
                self.loop_body(s.id, body)?;
                let cont = self.pc();
                if let Some(st) = step {
                    self.expr(st)?;
                    self.emit(Op::Pop);
                }
                self.emit(Op::Jump(start));
                let j = self.loops.pop().expect("loop context");
                let exit = self.pc();
                for b in j.breaks {
                    self.patch(b, exit);
                }
                for c in j.continues {
                    self.patch(c, cont);
                }
                self.emit(Op::ExitTo(self.level - 1));
                self.level -= 1;
                let for_promoted: Vec<VarId> = self
                    .fp
                    .map(|fp| fp.promotions.iter().filter(|p| p.for_stmt == Some(s.id)).map(|p| p.var).collect())
                    .unwrap_or_default();
                for v in for_promoted {
                    self.cleanup(v, s.span);
                }
            }
            StmtKind::Switch { cond, body } => {
                let tmp = self.hidden("apac_switch");
                let cty = model.type_of(cond.id).clone();
                let tmpl = self.u.template(&cty, false);
                self.emit(Op::Alloc {
                    slot: tmp,
                    tmpl,
                    level: self.level,
                    promoted: false,
                });
                self.emit(Op::Local(tmp));
                self.expr(cond)?;
                self.emit(Op::Store);
                let labels: Vec<&Stmt> = match &body.kind {
                    StmtKind::Block(b) => b.stmts.iter().filter(|c| matches!(c.kind, StmtKind::Case(_) | StmtKind::Default)).collect(),
                    _ => Vec::new(),
                };
                let mut dispatch = Vec::new();
                for l in &labels {
                    if let StmtKind::Case(e) = &l.kind {
                        self.emit(Op::Local(tmp));
                        self.emit(Op::Load);
                        self.expr(e)?;
                        self.emit(Op::Cmp(BinaryOp::Eq));
                        dispatch.push((self.emit(Op::JumpIfTrue(0)), l.id));
                    }
                }
                let fallback = self.emit(Op::Jump(0));
                self.loops.push(Jumps {
                    breaks: Vec::new(),
                    continues: Vec::new(),
                    break_level: self.level,
                    continue_level: self.level,
                    is_switch: true,
                });
                self.stmt(body)?;
                let j = self.loops.pop().expect("switch context");
                let end = self.pc();
                for b in j.breaks {
                    self.patch(b, end);
                }
                for (at, id) in dispatch {
                    let t = self.case_pc[&id];
                    self.patch(at, t);
                }
                let default = labels.iter().find(|l| matches!(l.kind, StmtKind::Default)).map(|l| self.case_pc[&l.id]);
                self.patch(fallback, default.unwrap_or(end));
            }
            StmtKind::Case(_) | StmtKind::Default => {
                let here = self.pc();
                self.case_pc.insert(s.id, here);
            }
            StmtKind::Break => match self.loops.last() {
                Some(j) => {
                    self.emit(Op::ExitTo(j.break_level));
                    let at = self.emit(Op::Jump(0));
                    self.loops.last_mut().expect("checked").breaks.push(at);
                }
                None => self.fail("break outside a loop".into()),
            },
            StmtKind::Continue => match self.loops.iter().rposition(|j| !j.is_switch) {
                Some(i) => {
                    self.emit(Op::ExitTo(self.loops[i].continue_level));
                    let at = self.emit(Op::Jump(0));
                    self.loops[i].continues.push(at);
                }
                None => self.fail("continue outside a loop".into()),
            },
            StmtKind::Return(e) => self.ret(s, e.as_ref())?,
            StmtKind::Empty => {}
        }
        Ok(())
    }

    fn loop_body(&mut self, loop_id: StmtId, body: &Stmt) -> Result<(), SimError> {
        match &body.kind {
            StmtKind::Block(b) => {
                let scope = self.model().opened_scope.get(&body.id).copied();
                self.line = body.span.line;
                for _ in 0..self.syncs_where(|p| p.placement == SyncPlacement::Before(body.id)) {
                    self.emit(Op::Taskwait);
                }
                self.block(b, scope, Some(loop_id))
            }
            _ => {
                self.stmt(body)?;
                self.end_of_body(loop_id);
                Ok(())
            }
        }
    }

    fn end_of_body(&mut self, loop_id: StmtId) {
        for _ in 0..self.syncs_where(|p| p.placement == SyncPlacement::EndOfBody(loop_id)) {
            self.emit(Op::Taskwait);
        }
    }

    fn block(&mut self, b: &Block, scope: Option<ScopeId>, loop_id: Option<StmtId>) -> Result<(), SimError> {
        self.level += 1;
        for s in &b.stmts {
            self.stmt(s)?;
        }
        self.line = b.close.line;
        if let Some(l) = loop_id {
            self.end_of_body(l);
        }
        let promoted: Vec<VarId> = self
            .fp
            .map(|fp| {
                fp.promotions
                    .iter()
                    .filter(|p| Some(p.scope) == scope && p.for_stmt.is_none())
                    .map(|p| p.var)
                    .collect()
            })
            .unwrap_or_default();
        for v in promoted {
            self.cleanup(v, b.close);
        }
        self.emit(Op::ExitTo(self.level - 1));
        self.level -= 1;
        Ok(())
    }

    fn cleanup(&mut self, var: VarId, at: apac_core::span::SourceSpan) {
        if !self.promoted.contains(&var) {
            return;
        }
        let slot = self.slots[&var];
        if self.u.ablation.inline_cleanup {
            self.emit(Op::Free(slot));
            return;
        }
        let name = self.model().var(var).name.clone();
        self.emit(Op::Local(slot));
        let site = self.u.sites.len() as u32;
        self.u.sites.push(TaskSite {
            label: format!("delete {name}@{}:{}", at.line, at.col),
            n_in: 0,
            n_inout: 1,
            firstprivate: Vec::new(),
            body_end: 0,
        });
        self.emit(Op::Spawn(site));
        self.emit(Op::Free(slot));
        self.emit(Op::TaskEnd);
        self.u.sites[site as usize].body_end = self.pc();
    }

    fn declare(&mut self, var: VarId, dc: &Declarator) -> Result<(), SimError> {
        let vi = self.model().var(var);
        let slot = self.slots[&var];
        if vi.is_ref {
            match &dc.init {
                Some(Initializer::Expr(e)) => self.lvalue(e)?,
                _ => self.fail(format!("reference `{}` without initializer", vi.name)),
            }
            self.emit(Op::BindRef(slot));
            return Ok(());
        }
        let mut ty = vi.ty.clone();
        if let (Type::Array(elem, None), Some(Initializer::List { items, .. })) = (&ty, &dc.init) {
            ty = Type::Array(elem.clone(), Some(items.len() as u64));
        }
        let zeroed = matches!(dc.init, Some(Initializer::List { .. }));
        let tmpl = self.u.template(&ty, zeroed);
        self.emit(Op::Alloc {
            slot,
            tmpl,
            level: self.level,
            promoted: self.promoted.contains(&var),
        });
        match &dc.init {
            None => {}
            Some(Initializer::Expr(e)) => {
                self.emit(Op::Local(slot));
                self.expr(e)?;
                self.conv(&ty);
                self.emit(Op::Store);
            }
            Some(Initializer::List { items, .. }) => self.list_init(Op::Local(slot), &ty, items)?,
        }
        Ok(())
    }

    fn list_init(&mut self, base: Op, ty: &Type, items: &[Expr]) -> Result<(), SimError> {
        match ty {
            Type::Array(elem, _) => {
                for (k, it) in items.iter().enumerate() {
                    self.emit(base.clone());
                    self.emit(Op::Decay);
                    self.emit(Op::Const(Value::Int(k as i64)));
                    self.emit(Op::PtrAdd);
                    self.expr(it)?;
                    self.conv(elem);
                    self.emit(Op::Store);
                }
            }
            Type::Class(name) => {
                let fields: Vec<Type> = self.model().class(name).map(|c| c.fields.iter().map(|f| f.ty.clone()).collect()).unwrap_or_default();
                for (k, it) in items.iter().enumerate() {
                    let Some(fty) = fields.get(k) else { break };
                    self.emit(base.clone());
                    self.emit(Op::Field(k as u16));
                    self.expr(it)?;
                    self.conv(fty);
                    self.emit(Op::Store);
                }
            }
            _ => {
                if let Some(it) = items.first() {
                    self.emit(base);
                    self.expr(it)?;
                    self.conv(ty);
                    self.emit(Op::Store);
                }
            }
        }
        Ok(())
    }

    fn task(&mut self, s: &Stmt, t: &TaskPlan) -> Result<(), SimError> {
        let model = self.model();
        let split = t.split_var();
        let mut init = None;
        if let Some(v) = split {
            let StmtKind::Decl(d) = &s.kind else {
                return Err(SimError::Compile("split task on a non-declaration".into()));
            };
            let vi = model.var(v);
            let tmpl = self.u.template(&vi.ty, false);
            self.emit(Op::Alloc {
                slot: self.slots[&v],
                tmpl,
                level: self.level,
                promoted: self.promoted.contains(&v),
            });
            init = match &d.declarators[0].init {
                Some(Initializer::Expr(e)) => Some(e),
                _ => None,
            };
        }
        for v in t.depend.in_vars.iter().chain(&t.depend.inout_vars) {
            self.var_addr(*v);
        }
        let firstprivate = t.firstprivate_vars.iter().filter_map(|v| self.slots.get(v).copied()).collect();
        let site = self.u.sites.len() as u32;
        self.u.sites.push(TaskSite {
            label: format!("{}@{}:{}", model.function(t.callee).name, s.span.line, s.span.col),
            n_in: t.depend.in_vars.len() as u16,
            n_inout: t.depend.inout_vars.len() as u16,
            firstprivate,
            body_end: 0,
        });
        self.emit(Op::Spawn(site));
        match (split, init, &s.kind) {
            (Some(v), Some(e), _) => {
                let ty = model.var(v).ty.clone();
                self.emit(Op::Local(self.slots[&v]));
                self.expr(e)?;
                self.conv(&ty);
                self.emit(Op::Store);
            }
            (None, _, StmtKind::Expr(e)) => {
                self.expr(e)?;
                self.emit(Op::Pop);
            }
            _ => return Err(SimError::Compile(format!("unsupported task statement at line {}", s.span.line))),
        }
        self.emit(Op::TaskEnd);
        self.u.sites[site as usize].body_end = self.pc();
        Ok(())
    }

    fn ret(&mut self, s: &Stmt, e: Option<&Expr>) -> Result<(), SimError> {
        let model = self.model();
        let f = model.function(self.func.expect("returns appear in functions"));
        if let Some(fp) = self.fp.filter(|fp| fp.returns.rewritten.contains(&s.id)) {
            let barrier = fp
                .syncs
                .iter()
                .position(|p| p.reason == SyncReason::ReturnBarrier && p.placement == SyncPlacement::Before(s.id));
            if barrier.is_none_or(|i| !self.dropped.contains(&i)) {
                self.emit(Op::Taskwait);
            }
            if let (Some(e), Some(res)) = (e, self.res_slot) {
                self.emit(Op::Local(res));
                self.expr(e)?;
                self.conv(&f.ret);
                self.emit(Op::Store);
            }
            self.emit(Op::ExitTo(1));
            let j = self.emit(Op::Jump(0));
            self.group_end_patches.push(j);
            return Ok(());
        }
        match e {
            Some(e) if f.ret_is_ref => {
                self.lvalue(e)?;
                self.emit(Op::Ret);
            }
            Some(e) => {
                self.expr(e)?;
                self.conv(&f.ret);
                self.emit(Op::Ret);
            }
            None => {
                self.emit(Op::RetVoid);
            }
        }
        Ok(())
    }

    fn field_index(&self, base: &Expr, field: &str, arrow: bool) -> Option<u16> {
        let bt = self.model().type_of(base.id);
        let class = if arrow { bt.element()?.class_name()? } else { bt.class_name()? };
        self.model().class(class)?.fields.iter().position(|f| f.name == field).map(|i| i as u16)
    }

    fn lvalue(&mut self, e: &Expr) -> Result<(), SimError> {
        let model = self.model();
        match &e.kind {
            ExprKind::Paren(x) => self.lvalue(x)?,
            ExprKind::Name(_) => match model.binding(e.id) {
                Some(Binding::Var(v)) => self.var_addr(*v),
                Some(Binding::Field { index, .. }) => {
                    self.emit(Op::This);
                    self.emit(Op::Field(*index as u16));
                }
                _ => self.fail("name does not denote an object".into()),
            },
            ExprKind::Unary { op: UnaryOp::Deref, operand } => self.expr(operand)?,
            ExprKind::Index { base, index } => {
                self.expr(base)?;
                self.expr(index)?;
                self.emit(Op::PtrAdd);
            }
            ExprKind::Member { base, field, arrow } => {
                if *arrow {
                    self.expr(base)?;
                } else {
                    self.lvalue(base)?;
                }
                match self.field_index(base, field, *arrow) {
                    Some(i) => {
                        self.emit(Op::Field(i));
                    }
                    None => self.fail(format!("unknown field `{field}`")),
                }
            }
            ExprKind::Call { callee, args } if self.returns_ref(e) => self.call(e, callee, args)?,
            _ => {
                self.expr(e)?;
                self.emit(Op::Materialize { level: self.level });
            }
        }
        Ok(())
    }

    fn returns_ref(&self, e: &Expr) -> bool {
        matches!(self.model().call(e.id), Some(c) if matches!(c.callee, Callee::Function(f) if self.model().function(f).ret_is_ref))
    }

    fn expr(&mut self, e: &Expr) -> Result<(), SimError> {
        let model = self.model();
        let ty = model.type_of(e.id).clone();
        match &e.kind {
            ExprKind::Int(i) | ExprKind::Char(i) => {
                self.emit(Op::Const(Value::Int(*i)));
            }
            ExprKind::Float(f) => {
                self.emit(Op::Const(Value::Double(*f)));
            }
            ExprKind::Bool(b) => {
                self.emit(Op::Const(Value::Bool(*b)));
            }
            ExprKind::Str(s) => {
                self.emit(Op::Const(Value::Str(s.as_str().into())));
            }
            ExprKind::Null => {
                self.emit(Op::Const(Value::Ptr(None)));
            }
            ExprKind::This => {
                self.emit(Op::This);
            }
            ExprKind::Paren(x) => self.expr(x)?,
            ExprKind::Name(_) => match model.binding(e.id) {
                Some(Binding::Var(v)) => {
                    let vty = model.var(*v).ty.clone();
                    self.var_addr(*v);
                    self.load_or_decay(&vty);
                }
                Some(Binding::Field { .. }) => {
                    self.lvalue(e)?;
                    self.load_or_decay(&ty);
                }
                _ => self.fail("function used as a value".into()),
            },
            ExprKind::Unary { op, operand } => {
                let oty = model.type_of(operand.id).clone();
                match op {
                    UnaryOp::Neg => {
                        self.expr(operand)?;
                        self.emit(Op::Neg(num_of(&ty)));
                    }
                    UnaryOp::Plus => {
                        self.expr(operand)?;
                        self.conv(&ty);
                    }
                    UnaryOp::Not => {
                        self.expr(operand)?;
                        self.emit(Op::Not);
                    }
                    UnaryOp::BitNot => {
                        self.expr(operand)?;
                        self.emit(Op::BitNot(num_of(&ty)));
                    }
                    UnaryOp::AddrOf => self.lvalue(operand)?,
                    UnaryOp::Deref => {
                        self.expr(operand)?;
                        self.load_or_decay(&ty);
                    }
                    UnaryOp::PreInc | UnaryOp::PreDec => {
                        self.lvalue(operand)?;
                        self.emit(Op::IncDec {
                            delta: if *op == UnaryOp::PreInc { 1 } else { -1 },
                            post: false,
                            num: (!ptr_like(&oty)).then(|| num_of(&oty)),
                            conv: Scalar::of(&oty),
                        });
                    }
                }
            }
            ExprKind::Postfix { op, operand } => {
                let oty = model.type_of(operand.id).clone();
                self.lvalue(operand)?;
                self.emit(Op::IncDec {
                    delta: if *op == PostfixOp::Inc { 1 } else { -1 },
                    post: true,
                    num: (!ptr_like(&oty)).then(|| num_of(&oty)),
                    conv: Scalar::of(&oty),
                });
            }
            ExprKind::Binary { op, lhs, rhs } => self.binary(*op, lhs, rhs, &ty)?,
            ExprKind::Assign { op, lhs, rhs } => {
                let lt = model.type_of(lhs.id).clone();
                let rt = model.type_of(rhs.id).clone();
                self.lvalue(lhs)?;
                match op.binary() {
                    None => self.expr(rhs)?,
                    Some(b) => {
                        self.emit(Op::Dup);
                        self.emit(Op::Load);
                        self.expr(rhs)?;
                        if ptr_like(&lt) {
                            if b == BinaryOp::Sub {
                                self.emit(Op::Neg(Num::Long));
                            }
                            self.emit(Op::PtrAdd);
                        } else {
                            self.emit(Op::Arith(b, num_of(&Type::common(&lt, &rt))));
                        }
                    }
                }
                self.conv(&lt);
                self.emit(Op::StoreKeep);
            }
            ExprKind::Call { callee, args } => {
                self.call(e, callee, args)?;
                if self.returns_ref(e) {
                    self.load_or_decay(&ty);
                }
            }
            ExprKind::Index { .. } | ExprKind::Member { .. } => {
                self.lvalue(e)?;
                self.load_or_decay(&ty);
            }
        }
        Ok(())
    }

    fn binary(&mut self, op: BinaryOp, lhs: &Expr, rhs: &Expr, ty: &Type) -> Result<(), SimError> {
        let model = self.model();
        let lt = model.type_of(lhs.id).clone();
        let rt = model.type_of(rhs.id).clone();
        match op {
            BinaryOp::And | BinaryOp::Or => {
                self.expr(lhs)?;
                let short = if op == BinaryOp::And {
                    self.emit(Op::JumpIfFalse(0))
                } else {
                    self.emit(Op::JumpIfTrue(0))
                };
                self.expr(rhs)?;
                self.emit(Op::Not);
                self.emit(Op::Not);
                let done = self.emit(Op::Jump(0));
                let here = self.pc();
                self.patch(short, here);
                self.emit(Op::Const(Value::Bool(op == BinaryOp::Or)));
                let end = self.pc();
                self.patch(done, end);
            }
            _ if op.is_comparison() => {
                self.expr(lhs)?;
                self.expr(rhs)?;
                self.emit(Op::Cmp(op));
            }
            BinaryOp::Add | BinaryOp::Sub if ptr_like(&lt) && ptr_like(&rt) => {
                self.expr(lhs)?;
                self.expr(rhs)?;
                self.emit(Op::PtrDiff);
            }
            BinaryOp::Add | BinaryOp::Sub if ptr_like(&lt) => {
                self.expr(lhs)?;
                self.expr(rhs)?;
                if op == BinaryOp::Sub {
                    self.emit(Op::Neg(Num::Long));
                }
                self.emit(Op::PtrAdd);
            }
            BinaryOp::Add if ptr_like(&rt) => {
                self.expr(rhs)?;
                self.expr(lhs)?;
                self.emit(Op::PtrAdd);
            }
            _ => {
                self.expr(lhs)?;
                self.expr(rhs)?;
                self.emit(Op::Arith(op, num_of(ty)));
            }
        }
        Ok(())
    }

    fn call(&mut self, e: &Expr, callee: &Expr, args: &[Expr]) -> Result<(), SimError> {
        let model = self.model();
        let Some(info) = model.call(e.id) else {
            self.fail("unresolved call".into());
            return Ok(());
        };
        match &info.callee {
            Callee::Function(f) => {
                let fi = model.function(*f);
                if fi.is_method {
                    match (info.receiver, &callee.unparen().kind) {
                        (Receiver::Expr(_), ExprKind::Member { base, .. }) => {
                            if info.arrow {
                                self.expr(base)?;
                            } else {
                                self.lvalue(base)?;
                            }
                        }
                        (Receiver::ImplicitThis, _) => {
                            self.emit(Op::This);
                        }
                        _ => {
                            self.fail(format!("method `{}` called without an object", fi.name));
                            return Ok(());
                        }
                    }
                }
                if args.len() != fi.param_types.len() {
                    self.fail(format!("`{}` expects {} arguments", fi.name, fi.param_types.len()));
                    return Ok(());
                }
                for (a, (pty, by_ref)) in args.iter().zip(&fi.param_types) {
                    if *by_ref {
                        self.lvalue(a)?;
                    } else {
                        self.expr(a)?;
                        self.conv(pty);
                    }
                }
                self.emit(Op::Call {
                    func: f.0,
                    argc: args.len() as u16,
                });
            }
            Callee::External { builtin: Some(b), name } => {
                let ty = model.type_of(e.id).clone();
                let num = num_of(&ty);
                for a in args {
                    match b {
                        Builtin::Swap => self.lvalue(a)?,
                        Builtin::Printf | Builtin::Puts => self.expr(a)?,
                        Builtin::Min | Builtin::Max | Builtin::Abs => {
                            self.expr(a)?;
                            self.conv(&ty);
                        }
                        _ => {
                            self.expr(a)?;
                            self.conv(&Type::Double);
                        }
                    }
                }
                let want = match b {
                    Builtin::Printf => args.len().max(1),
                    Builtin::Pow | Builtin::Min | Builtin::Max | Builtin::Swap => 2,
                    _ => 1,
                };
                if args.len() != want {
                    self.fail(format!("`{name}` called with {} arguments", args.len()));
                    return Ok(());
                }
                self.emit(Op::Builtin {
                    which: *b,
                    argc: args.len() as u16,
                    num,
                });
            }
            Callee::External { name, builtin: None } => self.fail(format!("call to external function `{name}`")),
        }
        Ok(())
    }
}

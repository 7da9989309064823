//! Stack-code interpreter with suspendable tasks.
//!
//! Each deferred task owns a frame stack and runs until it reaches a
//! boundary: an active spawn, a wait with something to wait for, or its end.
//! Drivers decide which task resumes next.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use apac_core::frontend::ast::BinaryOp;
use apac_core::frontend::sema::Builtin;
use serde::Serialize;

use crate::graph::{Edge, EdgeKind, TaskGraph, TaskNode};
use crate::program::{FuncCode, Num, Op, Program, Scalar};
use crate::value::{format_printf, num_f64, num_i64, Cell, Loc, LocKey, MemoryState, ObjId, ObjKey, Object, Value, GLOBAL_TASK};
use crate::{SimConfig, SimError};

const INIT: u32 = u32::MAX;

/// One taskgroup entry as seen by the throttle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GroupActivation {
    pub live_at_entry: u64,
    pub depth: u32,
    pub active: bool,
}

/// Task-counter bookkeeping of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ThrottleStats {
    pub increments: u64,
    pub decrements: u64,
    pub final_live: u64,
    pub max_live: u64,
    pub groups: Vec<GroupActivation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Boundary {
    Spawn { child: u32, ins: Vec<LocKey>, inouts: Vec<LocKey> },
    Wait(Vec<u32>),
    End,
}

#[derive(Debug, Clone)]
pub(crate) struct NodeRec {
    pub boundary: Boundary,
}

/// What a recording run observed, enough to replay it under another order.
#[derive(Debug, Clone, Default)]
pub(crate) struct Recording {
    pub nodes: Vec<NodeRec>,
    pub node_of: HashMap<(u32, u32), usize>,
    pub activations: HashMap<u32, Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrameKind {
    Init,
    Entry,
    Call,
    TaskBody,
    InlineBody { saved_depth: u32 },
}

#[derive(Debug, Clone)]
struct Group {
    active: bool,
    depth_local: u32,
    members: Vec<u32>,
}

#[derive(Debug, Clone)]
struct Frame {
    func: u32,
    pc: u32,
    slots: Vec<Option<Loc>>,
    owned: Vec<(ObjId, u16)>,
    this: Option<Loc>,
    groups: Vec<Group>,
    kind: FrameKind,
    stack_base: usize,
}

#[derive(Debug, Clone, Default)]
struct DepEntry {
    writer: Option<u32>,
    readers: Vec<u32>,
}

/// Dependence and child bookkeeping of one logical task. Undeferred task
/// bodies push their own domain onto the running task.
#[derive(Debug, Clone, Default)]
struct Domain {
    children: Vec<u32>,
    deps: HashMap<LocKey, DepEntry>,
}

#[derive(Debug, Clone)]
struct Ctx {
    id: u32,
    frames: Vec<Frame>,
    stack: Vec<Value>,
    depth: u32,
    base_depth: u32,
    domains: Vec<Domain>,
    covered: HashSet<u32>,
    fragment: u32,
    allocs: u32,
    groups_begun: u32,
    preds: Vec<(u32, EdgeKind)>,
    pending_wait: Vec<u32>,
    label: String,
    reads: Vec<String>,
    writes: Vec<String>,
    cost: u64,
    spawn_node: Option<usize>,
    cur_node: Option<usize>,
}

impl Ctx {
    fn new(id: u32, depth: u32, label: String) -> Ctx {
        Ctx {
            id,
            frames: Vec::new(),
            stack: Vec::new(),
            depth,
            base_depth: depth,
            domains: vec![Domain::default()],
            covered: HashSet::new(),
            fragment: 0,
            allocs: 0,
            groups_begun: 0,
            preds: Vec::new(),
            pending_wait: Vec::new(),
            label,
            reads: Vec::new(),
            writes: Vec::new(),
            cost: 0,
            spawn_node: None,
            cur_node: None,
        }
    }
}

#[derive(Debug)]
pub(crate) enum Event {
    Spawned { child: u32, ins: Vec<LocKey>, inouts: Vec<LocKey> },
    Wait(Vec<u32>),
    End,
}

impl Event {
    fn boundary(&self) -> Boundary {
        match self {
            Event::Spawned { child, ins, inouts } => Boundary::Spawn {
                child: *child,
                ins: ins.clone(),
                inouts: inouts.clone(),
            },
            Event::Wait(s) => Boundary::Wait(s.clone()),
            Event::End => Boundary::End,
        }
    }
}

enum Src {
    Node(usize),
    LastOf(u32),
}

#[derive(Default)]
struct GraphBuilder {
    nodes: Vec<TaskNode>,
    edges: Vec<(Src, usize, EdgeKind)>,
    last: HashMap<u32, usize>,
    rec: Recording,
}

pub(crate) struct Machine<'p> {
    prog: &'p Program,
    cfg: &'p SimConfig,
    entry: u32,
    heap: Vec<Object>,
    ctxs: Vec<Option<Ctx>>,
    finished: Vec<bool>,
    stdout: String,
    live: u64,
    stats: ThrottleStats,
    steps: u64,
    replay: Option<&'p Recording>,
    builder: Option<GraphBuilder>,
    final_state: Option<MemoryState>,
}

fn rt(msg: impl Into<String>) -> SimError {
    SimError::Runtime(msg.into())
}

impl<'p> Machine<'p> {
    fn new(prog: &'p Program, cfg: &'p SimConfig, replay: Option<&'p Recording>, record: bool) -> Result<Self, SimError> {
        let entry = prog.entry(&cfg.entry).ok_or_else(|| SimError::NoEntry(cfg.entry.clone()))?;
        let mut m = Machine {
            prog,
            cfg,
            entry,
            heap: Vec::new(),
            ctxs: Vec::new(),
            finished: Vec::new(),
            stdout: String::new(),
            live: 0,
            stats: ThrottleStats::default(),
            steps: 0,
            replay,
            builder: record.then(GraphBuilder::default),
            final_state: None,
        };
        for (g, slot) in prog.globals.iter().enumerate() {
            m.heap.push(Object {
                value: prog.templates[slot.tmpl as usize].clone(),
                alive: true,
                name: slot.name.clone(),
                key: ObjKey {
                    task: GLOBAL_TASK,
                    ordinal: g as u32,
                },
            });
        }
        let mut root = Ctx::new(0, 0, format!("{}@entry", cfg.entry));
        root.frames.push(Frame {
            func: INIT,
            pc: 0,
            slots: Vec::new(),
            owned: Vec::new(),
            this: None,
            groups: Vec::new(),
            kind: FrameKind::Init,
            stack_base: 0,
        });
        m.ctxs.push(Some(root));
        m.finished.push(false);
        Ok(m)
    }

    fn code(&self, func: u32) -> &'p FuncCode {
        if func == INIT {
            &self.prog.init
        } else {
            &self.prog.funcs[func as usize]
        }
    }

    fn ctx(&self, id: u32) -> &Ctx {
        self.ctxs[id as usize].as_ref().expect("task is not running")
    }

    fn ctx_mut(&mut self, id: u32) -> &mut Ctx {
        self.ctxs[id as usize].as_mut().expect("task is not running")
    }

    fn exists(&self, id: u32) -> bool {
        self.ctxs.get(id as usize).is_some_and(Option::is_some)
    }

    fn is_finished(&self, id: u32) -> bool {
        self.finished.get(id as usize).copied().unwrap_or(false)
    }

    fn ready(&self, id: u32) -> bool {
        let c = self.ctx(id);
        c.preds.iter().all(|(p, _)| self.is_finished(*p)) && c.pending_wait.iter().all(|w| self.is_finished(*w))
    }

    // ---- memory -------------------------------------------------------------

    fn alloc(&mut self, ctx: &mut Ctx, value: Value, name: Arc<str>) -> ObjId {
        let id = self.heap.len() as ObjId;
        self.heap.push(Object {
            value,
            alive: true,
            name,
            key: ObjKey {
                task: ctx.id,
                ordinal: ctx.allocs,
            },
        });
        ctx.allocs += 1;
        id
    }

    fn describe(&self, loc: &Loc) -> String {
        let obj = &self.heap[loc.obj as usize];
        let mut s = obj.name.to_string();
        let mut v = Some(&obj.value);
        for &i in &loc.path {
            match v {
                Some(Value::Struct(fields)) => {
                    s.push_str(&format!(".{i}"));
                    v = fields.get(i as usize);
                }
                Some(Value::Array(items)) => {
                    s.push_str(&format!("[{i}]"));
                    v = items.get(i as usize);
                }
                _ => {
                    s.push_str(&format!("[{i}]"));
                    v = None;
                }
            }
        }
        s
    }

    fn key(&self, loc: &Loc) -> LocKey {
        LocKey {
            obj: self.heap[loc.obj as usize].key,
            path: loc.path.clone(),
        }
    }

    fn read(&self, loc: &Loc) -> Result<&Value, SimError> {
        let obj = &self.heap[loc.obj as usize];
        if !obj.alive {
            return Err(rt(format!("read of `{}` after its lifetime ended", obj.name)));
        }
        let mut v = &obj.value;
        for &i in &loc.path {
            v = match v {
                Value::Array(items) | Value::Struct(items) => items
                    .get(i as usize)
                    .ok_or_else(|| rt(format!("index {i} out of bounds in `{}`", obj.name)))?,
                _ => return Err(rt(format!("`{}` is not an aggregate", self.describe(loc)))),
            };
        }
        Ok(v)
    }

    fn write(&mut self, loc: &Loc, value: Value) -> Result<(), SimError> {
        let obj = &mut self.heap[loc.obj as usize];
        if !obj.alive {
            return Err(rt(format!("write to `{}` after its lifetime ended", obj.name)));
        }
        let name = obj.name.clone();
        let mut v = &mut obj.value;
        for &i in &loc.path {
            v = match v {
                Value::Array(items) | Value::Struct(items) => items
                    .get_mut(i as usize)
                    .ok_or_else(|| rt(format!("index {i} out of bounds in `{name}`")))?,
                _ => return Err(rt(format!("`{name}` is not an aggregate"))),
            };
        }
        *v = value;
        Ok(())
    }

    fn kill(&mut self, obj: ObjId) {
        self.heap[obj as usize].alive = false;
    }

    fn render(&self, v: &Value) -> Cell {
        match v {
            Value::Uninit => Cell::Uninit,
            Value::Int(i) => Cell::Int(*i),
            Value::Double(d) => Cell::Double(*d),
            Value::Bool(b) => Cell::Bool(*b),
            Value::Str(s) => Cell::Str(s.to_string()),
            Value::Ptr(None) => Cell::Ptr(None),
            Value::Ptr(Some(l)) => Cell::Ptr(Some(format!("&{}", self.describe(l)))),
            Value::Array(items) => Cell::Array(items.iter().map(|v| self.render(v)).collect()),
            Value::Struct(items) => Cell::Struct(items.iter().map(|v| self.render(v)).collect()),
        }
    }

    fn pop_loc(stack: &mut Vec<Value>) -> Result<Loc, SimError> {
        match stack.pop() {
            Some(Value::Ptr(Some(l))) => Ok(l),
            Some(Value::Ptr(None)) => Err(rt("null pointer dereference")),
            Some(Value::Uninit) => Err(rt("use of an uninitialized pointer")),
            other => Err(rt(format!("expected an address, found {other:?}"))),
        }
    }

    // ---- entry and exit ------------------------------------------------------

    fn entry_frame(&mut self, ctx: &mut Ctx) -> Result<Frame, SimError> {
        for (g, slot) in self.prog.globals.iter().enumerate() {
            if let Some(c) = self.cfg.input.cells.get(slot.name.as_ref()) {
                let v = c.to_value().ok_or_else(|| rt(format!("input for `{}` holds a pointer", slot.name)))?;
                self.heap[g].value = v;
            }
        }
        let f = self.code(self.entry);
        if f.is_method {
            return Err(SimError::NoEntry(format!("{} is a method", f.name)));
        }
        let mut slots = vec![None; f.nslots as usize];
        let mut owned = Vec::new();
        for p in &f.params {
            let name = f.slot_names[p.slot as usize].clone();
            let key = format!("{}::{}", f.name, name);
            let v = match self.cfg.input.cells.get(&key) {
                Some(c) => c.to_value().ok_or_else(|| rt(format!("input for `{key}` holds a pointer")))?,
                None => self.prog.templates[p.tmpl as usize].clone(),
            };
            let v = match p.conv {
                Some(s) if !p.by_ref => convert(v, s)?,
                _ => v,
            };
            let obj = self.alloc(ctx, v, name);
            slots[p.slot as usize] = Some(Loc::root(obj));
            owned.push((obj, 0));
        }
        Ok(Frame {
            func: self.entry,
            pc: 0,
            slots,
            owned,
            this: None,
            groups: Vec::new(),
            kind: FrameKind::Entry,
            stack_base: 0,
        })
    }

    fn capture(&self, frame: &Frame, ret: &Value) -> MemoryState {
        let f = self.code(frame.func);
        let mut state = MemoryState {
            stdout: self.stdout.clone(),
            ..MemoryState::default()
        };
        for (g, slot) in self.prog.globals.iter().enumerate() {
            state.cells.insert(slot.name.to_string(), self.render(&self.heap[g].value));
        }
        for (name, slot) in &f.top_level {
            if let Some(loc) = &frame.slots[*slot as usize] {
                if let Ok(v) = self.read(loc) {
                    state.cells.insert(format!("{}::{}", f.name, name), self.render(v));
                }
            }
        }
        if *ret != Value::Uninit {
            state.cells.insert(format!("{}::return", f.name), self.render(ret));
        }
        state
    }

    // ---- execution ---------------------------------------------------------------

    /// Runs task `id` up to its next boundary.
    fn resume(&mut self, id: u32) -> Result<Event, SimError> {
        let mut ctx = self.ctxs[id as usize].take().expect("resumed task exists");
        let r = self.run(&mut ctx);
        if matches!(r, Ok(Event::End)) {
            self.finished[id as usize] = true;
        }
        self.ctxs[id as usize] = Some(ctx);
        r
    }

    fn run(&mut self, ctx: &mut Ctx) -> Result<Event, SimError> {
        let prog = self.prog;
        loop {
            self.steps += 1;
            if self.steps > self.cfg.step_limit {
                return Err(SimError::StepLimit(self.cfg.step_limit));
            }
            let fi = ctx.frames.len() - 1;
            let func = ctx.frames[fi].func;
            let code = self.code(func);
            let pc = ctx.frames[fi].pc as usize;
            ctx.frames[fi].pc += 1;
            let op = &code.code[pc];
            let stack = &mut ctx.stack;
            let res: Result<(), SimError> = (|| {
                match op {
                    Op::Const(v) => stack.push(v.clone()),
                    Op::Local(s) => match &ctx.frames[fi].slots[*s as usize] {
                        Some(l) => stack.push(Value::Ptr(Some(l.clone()))),
                        None => return Err(rt(format!("`{}` used before its declaration", code.slot_names[*s as usize]))),
                    },
                    Op::Global(g) => stack.push(Value::Ptr(Some(Loc::root(*g)))),
                    Op::This => stack.push(Value::Ptr(ctx.frames[fi].this.clone())),
                    Op::Field(i) => {
                        let l = Self::pop_loc(stack)?;
                        stack.push(Value::Ptr(Some(l.child(*i as u32))));
                    }
                    Op::Decay => {
                        let l = Self::pop_loc(stack)?;
                        stack.push(Value::Ptr(Some(l.child(0))));
                    }
                    Op::PtrAdd => {
                        let k = num_i64(&stack.pop().expect("operand"));
                        let p = stack.pop().expect("operand");
                        stack.push(ptr_add(p, k)?);
                    }
                    Op::PtrDiff => {
                        let b = Self::pop_loc(stack)?;
                        let a = Self::pop_loc(stack)?;
                        if a.obj != b.obj || a.path.len() != b.path.len() || a.path.is_empty() {
                            return Err(rt("difference of unrelated pointers"));
                        }
                        let n = a.path.len() - 1;
                        stack.push(Value::Int(a.path[n] as i64 - b.path[n] as i64));
                    }
                    Op::Load => {
                        let l = Self::pop_loc(stack)?;
                        stack.push(self.read(&l)?.clone());
                    }
                    Op::Store | Op::StoreKeep => {
                        let v = stack.pop().expect("operand");
                        let l = Self::pop_loc(stack)?;
                        if matches!(op, Op::StoreKeep) {
                            stack.push(v.clone());
                        }
                        self.write(&l, v)?;
                    }
                    Op::Dup => {
                        let v = stack.last().expect("operand").clone();
                        stack.push(v);
                    }
                    Op::Pop => {
                        stack.pop();
                    }
                    Op::Conv(s) => {
                        let v = stack.pop().expect("operand");
                        stack.push(convert(v, *s)?);
                    }
                    Op::Arith(o, n) => {
                        let b = stack.pop().expect("operand");
                        let a = stack.pop().expect("operand");
                        stack.push(arith(*o, *n, &a, &b)?);
                    }
                    Op::Cmp(o) => {
                        let b = stack.pop().expect("operand");
                        let a = stack.pop().expect("operand");
                        stack.push(Value::Bool(compare(*o, &a, &b)));
                    }
                    Op::Neg(n) => {
                        let a = stack.pop().expect("operand");
                        stack.push(match n {
                            Num::Double => Value::Double(-num_f64(&a)),
                            _ => wrap(*n, num_i64(&a).wrapping_neg()),
                        });
                    }
                    Op::BitNot(n) => {
                        let a = stack.pop().expect("operand");
                        stack.push(wrap(*n, !num_i64(&a)));
                    }
                    Op::Not => {
                        let a = stack.pop().expect("operand");
                        stack.push(Value::Bool(!a.truthy()));
                    }
                    Op::IncDec { delta, post, num, conv } => {
                        let l = Self::pop_loc(stack)?;
                        let old = self.read(&l)?.clone();
                        let mut new = match num {
                            None => ptr_add(old.clone(), *delta)?,
                            Some(n) => arith(BinaryOp::Add, *n, &old, &Value::Int(*delta))?,
                        };
                        if let Some(c) = conv {
                            new = convert(new, *c)?;
                        }
                        self.write(&l, new.clone())?;
                        stack.push(if *post { old } else { new });
                    }
                    Op::Jump(t) => ctx.frames[fi].pc = *t,
                    Op::JumpIfFalse(t) => {
                        if !stack.pop().expect("operand").truthy() {
                            ctx.frames[fi].pc = *t;
                        }
                    }
                    Op::JumpIfTrue(t) => {
                        if stack.pop().expect("operand").truthy() {
                            ctx.frames[fi].pc = *t;
                        }
                    }
                    Op::Alloc { .. } | Op::Materialize { .. } | Op::Call { .. } | Op::Free(_) => {}
                    Op::BindRef(s) => {
                        let l = Self::pop_loc(stack)?;
                        ctx.frames[fi].slots[*s as usize] = Some(l);
                    }
                    Op::ExitTo(level) => {
                        while let Some(&(o, lv)) = ctx.frames[fi].owned.last() {
                            if lv <= *level {
                                break;
                            }
                            self.kill(o);
                            ctx.frames[fi].owned.pop();
                        }
                    }
                    Op::Builtin { which, argc, num } => {
                        let args = stack.split_off(stack.len() - *argc as usize);
                        let v = self.builtin(*which, *num, args)?;
                        stack.push(v);
                    }
                    Op::Fail(msg) => return Err(rt(format!("{msg} (in {}, line {})", code.name, code.lines[pc]))),
                    _ => {}
                }
                Ok(())
            })();
            res.map_err(|e| match e {
                SimError::Runtime(m) if !m.contains("(in ") => rt(format!("{m} (in {}, line {})", code.name, code.lines[pc])),
                other => other,
            })?;
            // Ops that need the whole task context.
            match op {
                Op::Alloc {
                    slot,
                    tmpl,
                    level,
                    promoted,
                } => {
                    let v = prog.templates[*tmpl as usize].clone();
                    let obj = self.alloc(ctx, v, code.slot_names[*slot as usize].clone());
                    let fr = &mut ctx.frames[fi];
                    fr.slots[*slot as usize] = Some(Loc::root(obj));
                    if !promoted {
                        fr.owned.push((obj, *level));
                    }
                }
                Op::Materialize { level } => {
                    let v = ctx.stack.pop().expect("operand");
                    let obj = self.alloc(ctx, v, "<temporary>".into());
                    ctx.frames[fi].owned.push((obj, *level));
                    ctx.stack.push(Value::Ptr(Some(Loc::root(obj))));
                }
                Op::Free(s) => {
                    let Some(l) = ctx.frames[fi].slots[*s as usize].clone() else {
                        return Err(rt("delete of an unbound variable"));
                    };
                    if !self.heap[l.obj as usize].alive {
                        return Err(rt(format!("double delete of `{}`", self.heap[l.obj as usize].name)));
                    }
                    self.kill(l.obj);
                }
                Op::Call { func, argc } => self.call(ctx, *func, *argc as usize)?,
                Op::Ret | Op::RetVoid => {
                    let v = if matches!(op, Op::Ret) {
                        ctx.stack.pop().expect("return value")
                    } else {
                        Value::Uninit
                    };
                    let fr = ctx.frames.pop().expect("frame");
                    match fr.kind {
                        FrameKind::Call => {
                            for (o, _) in &fr.owned {
                                self.kill(*o);
                            }
                            ctx.stack.truncate(fr.stack_base);
                            ctx.stack.push(v);
                        }
                        FrameKind::Init => {
                            let f = self.entry_frame(ctx)?;
                            ctx.frames.push(f);
                        }
                        FrameKind::Entry => {
                            self.final_state = Some(self.capture(&fr, &v));
                            for (o, _) in &fr.owned {
                                self.kill(*o);
                            }
                            return Ok(Event::End);
                        }
                        FrameKind::TaskBody | FrameKind::InlineBody { .. } => {
                            return Err(rt("return from inside a task body"));
                        }
                    }
                }
                Op::GroupBegin => self.group_begin(ctx)?,
                Op::GroupEnd => {
                    let g = ctx.frames[fi].groups.pop().ok_or_else(|| rt("taskgroup end without a begin"))?;
                    let set: Vec<u32> = g.members.into_iter().filter(|m| !ctx.covered.contains(m)).collect();
                    ctx.covered.extend(set.iter().copied());
                    let covered = &ctx.covered;
                    for d in &mut ctx.domains {
                        d.children.retain(|c| !covered.contains(c));
                    }
                    if !set.is_empty() {
                        return Ok(Event::Wait(set));
                    }
                }
                Op::Taskwait => {
                    let dom = ctx.domains.last_mut().expect("domain");
                    let set: Vec<u32> = dom.children.drain(..).filter(|c| !ctx.covered.contains(c)).collect();
                    ctx.covered.extend(set.iter().copied());
                    if !set.is_empty() {
                        return Ok(Event::Wait(set));
                    }
                }
                Op::Spawn(site) => {
                    if let Some(ev) = self.spawn(ctx, fi, *site)? {
                        return Ok(ev);
                    }
                }
                Op::TaskEnd => {
                    let fr = ctx.frames.pop().expect("frame");
                    for (o, _) in &fr.owned {
                        self.kill(*o);
                    }
                    match fr.kind {
                        FrameKind::InlineBody { saved_depth } => {
                            ctx.depth = saved_depth;
                            ctx.domains.pop();
                        }
                        _ => {
                            self.live -= 1;
                            self.stats.decrements += 1;
                            return Ok(Event::End);
                        }
                    }
                }
                _ => {}
            }
        }
    }

    fn call(&mut self, ctx: &mut Ctx, func: u32, argc: usize) -> Result<(), SimError> {
        let f = self.code(func);
        if !f.defined {
            return Err(rt(format!("call to `{}`, which has no definition", f.name)));
        }
        if ctx.frames.len() >= self.cfg.max_frames {
            return Err(SimError::RecursionLimit(self.cfg.max_frames));
        }
        let args = ctx.stack.split_off(ctx.stack.len() - argc);
        let this = if f.is_method { Some(Self::pop_loc(&mut ctx.stack)?) } else { None };
        if let Some(c) = self.cfg.cost.call_cost(&f.name, &args) {
            ctx.cost += c;
        }
        let mut slots = vec![None; f.nslots as usize];
        let mut owned = Vec::new();
        for (p, a) in f.params.iter().zip(args) {
            if p.by_ref {
                match a {
                    Value::Ptr(Some(l)) => slots[p.slot as usize] = Some(l),
                    _ => return Err(rt(format!("reference argument to `{}` is not an object", f.name))),
                }
            } else {
                let obj = self.alloc(ctx, a, f.slot_names[p.slot as usize].clone());
                slots[p.slot as usize] = Some(Loc::root(obj));
                owned.push((obj, 0));
            }
        }
        ctx.frames.push(Frame {
            func,
            pc: 0,
            slots,
            owned,
            this,
            groups: Vec::new(),
            kind: FrameKind::Call,
            stack_base: ctx.stack.len(),
        });
        Ok(())
    }

    fn group_begin(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let idx = ctx.groups_begun as usize;
        ctx.groups_begun += 1;
        let active = match self.replay {
            Some(rec) => *rec
                .activations
                .get(&ctx.id)
                .and_then(|a| a.get(idx))
                .ok_or_else(|| SimError::Mismatch(format!("task `{}` entered an unrecorded taskgroup", ctx.label)))?,
            None => self.cfg.strategy.activates(self.live, ctx.depth),
        };
        self.stats.groups.push(GroupActivation {
            live_at_entry: self.live,
            depth: ctx.depth,
            active,
        });
        if let Some(b) = &mut self.builder {
            b.rec.activations.entry(ctx.id).or_default().push(active);
        }
        let fr = ctx.frames.last_mut().expect("frame");
        fr.groups.push(Group {
            active,
            depth_local: ctx.depth,
            members: Vec::new(),
        });
        Ok(())
    }

    fn spawn(&mut self, ctx: &mut Ctx, fi: usize, site_id: u32) -> Result<Option<Event>, SimError> {
        let site = &self.prog.sites[site_id as usize];
        let n = (site.n_in + site.n_inout) as usize;
        let addrs = ctx.stack.split_off(ctx.stack.len() - n);
        let mut locs = Vec::with_capacity(n);
        for a in addrs {
            match a {
                Value::Ptr(Some(l)) => locs.push(l),
                _ => return Err(rt(format!("depend item of `{}` is not an object", site.label))),
            }
        }
        let (gf, gi) = ctx
            .frames
            .iter()
            .enumerate()
            .rev()
            .find_map(|(i, f)| (!f.groups.is_empty()).then(|| (i, f.groups.len() - 1)))
            .ok_or_else(|| rt(format!("task `{}` created outside a taskgroup", site.label)))?;
        let (active, depth_local) = {
            let g = &ctx.frames[gf].groups[gi];
            (g.active, g.depth_local)
        };
        let parent = &mut ctx.frames[fi];
        let body_start = parent.pc;
        parent.pc = site.body_end;
        let mut frame = Frame {
            func: parent.func,
            pc: body_start,
            slots: parent.slots.clone(),
            owned: Vec::new(),
            this: parent.this.clone(),
            groups: Vec::new(),
            kind: FrameKind::TaskBody,
            stack_base: 0,
        };
        for s in &site.firstprivate {
            if let Some(l) = frame.slots[*s as usize].clone() {
                let v = self.read(&l)?.clone();
                let obj = self.alloc(ctx, v, self.code(frame.func).slot_names[*s as usize].clone());
                frame.slots[*s as usize] = Some(Loc::root(obj));
                frame.owned.push((obj, 0));
            }
        }
        if !active {
            frame.kind = FrameKind::InlineBody { saved_depth: ctx.depth };
            frame.stack_base = ctx.stack.len();
            ctx.depth = depth_local + 1;
            ctx.domains.push(Domain::default());
            ctx.frames.push(frame);
            return Ok(None);
        }
        let ins: Vec<LocKey> = locs[..site.n_in as usize].iter().map(|l| self.key(l)).collect();
        let inouts: Vec<LocKey> = locs[site.n_in as usize..].iter().map(|l| self.key(l)).collect();
        let child = match self.replay {
            Some(rec) => {
                let node = rec
                    .node_of
                    .get(&(ctx.id, ctx.fragment))
                    .ok_or_else(|| SimError::Mismatch(format!("`{}` spawned in an unrecorded fragment", ctx.label)))?;
                match &rec.nodes[*node].boundary {
                    Boundary::Spawn { child, .. } => *child,
                    other => {
                        return Err(SimError::Mismatch(format!(
                            "`{}` spawned `{}` where the recording has {other:?}",
                            ctx.label, site.label
                        )))
                    }
                }
            }
            None => self.ctxs.len() as u32,
        };
        let preds = dep_preds(ctx.domains.last_mut().expect("domain"), child, &ins, &inouts);
        let mut c = Ctx::new(child, depth_local + 1, site.label.clone());
        c.preds = preds;
        c.reads = locs[..site.n_in as usize].iter().map(|l| self.describe(l)).collect();
        c.writes = locs[site.n_in as usize..].iter().map(|l| self.describe(l)).collect();
        c.frames.push(frame);
        ctx.frames[gf].groups[gi].members.push(child);
        ctx.domains.last_mut().expect("domain").children.push(child);
        self.live += 1;
        self.stats.increments += 1;
        self.stats.max_live = self.stats.max_live.max(self.live);
        let idx = child as usize;
        if self.ctxs.len() <= idx {
            self.ctxs.resize_with(idx + 1, || None);
            self.finished.resize(idx + 1, false);
        }
        if self.ctxs[idx].is_some() {
            return Err(SimError::Mismatch(format!("task {child} created twice")));
        }
        self.ctxs[idx] = Some(c);
        Ok(Some(Event::Spawned { child, ins, inouts }))
    }

    fn builtin(&mut self, which: Builtin, num: Num, args: Vec<Value>) -> Result<Value, SimError> {
        let f = |i: usize| num_f64(&args[i]);
        Ok(match which {
            Builtin::Printf => {
                let Some(Value::Str(fmt)) = args.first() else {
                    return Err(rt("printf without a format string"));
                };
                let s = format_printf(fmt, &args[1..]).map_err(rt)?;
                self.stdout.push_str(&s);
                Value::Int(s.len() as i64)
            }
            Builtin::Puts => {
                let Some(Value::Str(s)) = args.first() else {
                    return Err(rt("puts without a string"));
                };
                self.stdout.push_str(s);
                self.stdout.push('\n');
                Value::Int(0)
            }
            Builtin::Sqrt => Value::Double(f(0).sqrt()),
            Builtin::Fabs => Value::Double(f(0).abs()),
            Builtin::Exp => Value::Double(f(0).exp()),
            Builtin::Sin => Value::Double(f(0).sin()),
            Builtin::Cos => Value::Double(f(0).cos()),
            Builtin::Floor => Value::Double(f(0).floor()),
            Builtin::Pow => Value::Double(f(0).powf(f(1))),
            Builtin::Abs => match num {
                Num::Double => Value::Double(f(0).abs()),
                _ => wrap(num, num_i64(&args[0]).wrapping_abs()),
            },
            Builtin::Min | Builtin::Max => {
                let less = compare(BinaryOp::Lt, &args[1], &args[0]);
                let pick_second = (which == Builtin::Min) == less;
                args[if pick_second { 1 } else { 0 }].clone()
            }
            Builtin::Swap => {
                let mut it = args.into_iter();
                let (Some(Value::Ptr(Some(a))), Some(Value::Ptr(Some(b)))) = (it.next(), it.next()) else {
                    return Err(rt("swap of non-objects"));
                };
                let va = self.read(&a)?.clone();
                let vb = self.read(&b)?.clone();
                self.write(&a, vb)?;
                self.write(&b, va)?;
                Value::Uninit
            }
        })
    }

    // ---- graph recording ---------------------------------------------------------

    fn begin_fragment(&mut self, id: u32) {
        let per_task = self.cfg.cost.per_task;
        let ctx = self.ctxs[id as usize].as_mut().expect("task exists");
        let Some(b) = &mut self.builder else { return };
        let node = b.nodes.len();
        let k = ctx.fragment;
        b.nodes.push(TaskNode {
            id: node,
            task: id,
            fragment: k,
            label: if k == 0 { ctx.label.clone() } else { format!("{}#{k}", ctx.label) },
            reads: if k == 0 { ctx.reads.iter().filter(|r| !ctx.writes.contains(r)).cloned().collect() } else { Vec::new() },
            writes: if k == 0 { ctx.writes.clone() } else { Vec::new() },
            depth: ctx.base_depth,
            cost: if k == 0 { per_task } else { 0 },
        });
        b.rec.node_of.insert((id, k), node);
        if k == 0 {
            if let Some(p) = ctx.spawn_node {
                b.edges.push((Src::Node(p), node, EdgeKind::Nest));
            }
            for (p, kind) in &ctx.preds {
                b.edges.push((Src::LastOf(*p), node, *kind));
            }
        } else {
            if let Some(prev) = ctx.cur_node {
                b.edges.push((Src::Node(prev), node, EdgeKind::Seq));
            }
            for w in &ctx.pending_wait {
                b.edges.push((Src::LastOf(*w), node, EdgeKind::Sync));
            }
        }
        ctx.cur_node = Some(node);
        ctx.cost = 0;
    }

    fn end_fragment(&mut self, id: u32, ev: &Event) {
        let ctx = self.ctxs[id as usize].as_mut().expect("task exists");
        ctx.fragment += 1;
        if let Event::Wait(set) = ev {
            ctx.pending_wait = set.clone();
        }
        let cost = std::mem::take(&mut ctx.cost);
        let cur = ctx.cur_node;
        if let Some(b) = &mut self.builder {
            let node = cur.expect("fragment was begun");
            b.nodes[node].cost += cost;
            b.rec.nodes.push(NodeRec {
                boundary: ev.boundary(),
            });
            match ev {
                Event::End => {
                    b.last.insert(id, node);
                }
                Event::Spawned { child, .. } => {
                    self.ctxs[*child as usize].as_mut().expect("spawned task exists").spawn_node = Some(node);
                }
                Event::Wait(_) => {}
            }
        }
    }

    fn finish_graph(&mut self) -> (TaskGraph, Recording) {
        let b = self.builder.take().expect("recording run");
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for (src, to, kind) in b.edges {
            let from = match src {
                Src::Node(n) => n,
                Src::LastOf(t) => b.last[&t],
            };
            if seen.insert((from, to)) {
                edges.push(Edge { from, to, kind });
            }
        }
        (TaskGraph::new(b.nodes, edges), b.rec)
    }
}

fn dep_preds(dom: &mut Domain, child: u32, ins: &[LocKey], inouts: &[LocKey]) -> Vec<(u32, EdgeKind)> {
    let mut out: Vec<(u32, EdgeKind)> = Vec::new();
    let mut add = |t: u32, k: EdgeKind| {
        if t != child && !out.iter().any(|(p, _)| *p == t) {
            out.push((t, k));
        }
    };
    for k in ins {
        let e = dom.deps.entry(k.clone()).or_default();
        if let Some(w) = e.writer {
            add(w, EdgeKind::Raw);
        }
        e.readers.push(child);
    }
    for k in inouts {
        let e = dom.deps.entry(k.clone()).or_default();
        if let Some(w) = e.writer {
            add(w, EdgeKind::Waw);
        }
        for r in e.readers.drain(..) {
            add(r, EdgeKind::War);
        }
        e.writer = Some(child);
    }
    out
}

fn wrap(n: Num, v: i64) -> Value {
    match n {
        Num::Int => Value::Int(v as i32 as i64),
        _ => Value::Int(v),
    }
}

fn convert(v: Value, s: Scalar) -> Result<Value, SimError> {
    if v == Value::Uninit {
        return Ok(v);
    }
    if matches!(v, Value::Ptr(_) | Value::Str(_)) && s != Scalar::Bool {
        return Err(rt("address converted to a number"));
    }
    Ok(match s {
        Scalar::Bool => Value::Bool(v.truthy()),
        Scalar::Char => Value::Int(num_i64(&v) as i8 as i64),
        Scalar::Int => Value::Int(num_i64(&v) as i32 as i64),
        Scalar::Long => Value::Int(num_i64(&v)),
        Scalar::Double => Value::Double(num_f64(&v)),
    })
}

fn ptr_add(p: Value, k: i64) -> Result<Value, SimError> {
    match p {
        Value::Ptr(Some(mut l)) => {
            if k == 0 {
                return Ok(Value::Ptr(Some(l)));
            }
            let Some(last) = l.path.last_mut() else {
                return Err(rt("pointer arithmetic outside an array"));
            };
            let n = *last as i64 + k;
            if n < 0 {
                return Err(rt("pointer moved before the start of its array"));
            }
            *last = n as u32;
            Ok(Value::Ptr(Some(l)))
        }
        Value::Ptr(None) if k == 0 => Ok(Value::Ptr(None)),
        Value::Ptr(None) => Err(rt("arithmetic on a null pointer")),
        _ => Err(rt("arithmetic on an uninitialized pointer")),
    }
}

fn arith(op: BinaryOp, n: Num, a: &Value, b: &Value) -> Result<Value, SimError> {
    if n == Num::Double {
        let (x, y) = (num_f64(a), num_f64(b));
        return Ok(Value::Double(match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
            _ => return Err(rt(format!("{op:?} on doubles"))),
        }));
    }
    let (x, y) = (num_i64(a), num_i64(b));
    let v = match op {
        BinaryOp::Add => x.wrapping_add(y),
        BinaryOp::Sub => x.wrapping_sub(y),
        BinaryOp::Mul => x.wrapping_mul(y),
        BinaryOp::Div | BinaryOp::Rem if y == 0 => return Err(rt("integer division by zero")),
        BinaryOp::Div => x.wrapping_div(y),
        BinaryOp::Rem => x.wrapping_rem(y),
        BinaryOp::Shl => x.wrapping_shl(y as u32),
        BinaryOp::Shr => x.wrapping_shr(y as u32),
        BinaryOp::BitAnd => x & y,
        BinaryOp::BitOr => x | y,
        BinaryOp::BitXor => x ^ y,
        _ => return Err(rt(format!("{op:?} is not arithmetic"))),
    };
    Ok(wrap(n, v))
}

fn compare(op: BinaryOp, a: &Value, b: &Value) -> bool {
    use std::cmp::Ordering;
    let as_ptr = |v: &Value| match v {
        Value::Ptr(p) => Some(p.clone()),
        Value::Int(0) => Some(None),
        _ => None,
    };
    let ord = match (a, b) {
        (Value::Ptr(_), _) | (_, Value::Ptr(_)) => match (as_ptr(a), as_ptr(b)) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => Ordering::Less,
        },
        (Value::Double(_), _) | (_, Value::Double(_)) => num_f64(a).partial_cmp(&num_f64(b)).unwrap_or(Ordering::Less),
        _ => num_i64(a).cmp(&num_i64(b)),
    };
    let nan = matches!((a, b), (Value::Double(x), _) if x.is_nan()) || matches!((a, b), (_, Value::Double(y)) if y.is_nan());
    if nan {
        return op == BinaryOp::Ne;
    }
    match op {
        BinaryOp::Lt => ord == Ordering::Less,
        BinaryOp::Gt => ord == Ordering::Greater,
        BinaryOp::Le => ord != Ordering::Greater,
        BinaryOp::Ge => ord != Ordering::Less,
        BinaryOp::Eq => ord == Ordering::Equal,
        _ => ord != Ordering::Equal,
    }
}

// ---- drivers ---------------------------------------------------------------------

/// Plain interpretation of the root task only.
pub(crate) fn run_plain(prog: &Program, cfg: &SimConfig) -> Result<MemoryState, SimError> {
    let mut m = Machine::new(prog, cfg, None, false)?;
    match m.resume(0)? {
        Event::End => m.final_state.ok_or_else(|| rt("entry did not return")),
        _ => Err(rt("sequential program reached a task boundary")),
    }
}

/// Eager run: every task executes to completion at its creation point.
pub(crate) fn run_record(prog: &Program, cfg: &SimConfig) -> Result<(TaskGraph, Recording, MemoryState, ThrottleStats), SimError> {
    let mut m = Machine::new(prog, cfg, None, true)?;
    let mut stack = vec![0u32];
    while let Some(&t) = stack.last() {
        m.begin_fragment(t);
        let ev = m.resume(t)?;
        m.end_fragment(t, &ev);
        match ev {
            Event::Spawned { child, .. } => stack.push(child),
            Event::Wait(_) => {}
            Event::End => {
                stack.pop();
            }
        }
    }
    let (graph, rec) = m.finish_graph();
    let state = m.final_state.take().ok_or_else(|| rt("entry did not return"))?;
    m.stats.final_live = m.live;
    Ok((graph, rec, state, m.stats))
}

/// Runs the fragments in `order`; any departure from the recording is a
/// `Mismatch`.
pub(crate) fn run_replay(prog: &Program, cfg: &SimConfig, graph: &TaskGraph, rec: &Recording, order: &[usize]) -> Result<MemoryState, SimError> {
    let mut m = Machine::new(prog, cfg, Some(rec), false)?;
    for &n in order {
        let node = &graph.nodes[n];
        let t = node.task;
        if !m.exists(t) {
            return Err(SimError::Mismatch(format!("`{}` scheduled before its creation", node.label)));
        }
        if m.ctx(t).fragment != node.fragment {
            return Err(SimError::Mismatch(format!("`{}` is out of step with its task", node.label)));
        }
        if !m.ready(t) {
            return Err(SimError::Mismatch(format!("`{}` ran before the tasks it waits for", node.label)));
        }
        let ev = m.resume(t)?;
        let expected = &rec.nodes[rec.node_of[&(t, node.fragment)]].boundary;
        if ev.boundary() != *expected {
            return Err(SimError::Mismatch(format!("`{}` ended with {:?}, recorded {:?}", node.label, ev.boundary(), expected)));
        }
        let ctx = m.ctx_mut(t);
        ctx.fragment += 1;
        if let Event::Wait(set) = ev {
            ctx.pending_wait = set;
        }
    }
    m.final_state.take().ok_or_else(|| SimError::Mismatch("entry did not return".into()))
}

/// Breadth-first run: a spawning task keeps going and its children queue up.
pub(crate) fn run_deferred(prog: &Program, cfg: &SimConfig) -> Result<(MemoryState, ThrottleStats), SimError> {
    let mut m = Machine::new(prog, cfg, None, false)?;
    let mut queue: VecDeque<u32> = VecDeque::from([0]);
    while !queue.is_empty() {
        let Some(pos) = queue.iter().position(|t| m.ready(*t)) else {
            return Err(SimError::Deadlock(queue.len()));
        };
        let t = queue.remove(pos).expect("position is valid");
        loop {
            match m.resume(t)? {
                Event::Spawned { child, .. } => queue.push_back(child),
                Event::Wait(set) => {
                    let done = set.iter().all(|w| m.is_finished(*w));
                    m.ctx_mut(t).pending_wait = set;
                    if !done {
                        queue.push_back(t);
                        break;
                    }
                }
                Event::End => break,
            }
        }
    }
    let state = m.final_state.take().ok_or_else(|| rt("entry did not return"))?;
    m.stats.final_live = m.live;
    Ok((state, m.stats))
}

//! Name resolution, static types and the function/call tables.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::ast::*;
use crate::diag::Diagnostic;
use crate::span::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FunctionId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ScopeId(pub u32);

/// Static type of an object or expression value. References are a property
/// of declarations, not of types.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum Type {
    Void,
    Bool,
    Char,
    Int,
    Long,
    Double,
    Class(String),
    Ptr(Box<Type>),
    Array(Box<Type>, Option<u64>),
    Null,
}

impl Type {
    pub fn is_integral(&self) -> bool {
        matches!(self, Type::Bool | Type::Char | Type::Int | Type::Long)
    }

    pub fn is_arithmetic(&self) -> bool {
        self.is_integral() || *self == Type::Double
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, Type::Ptr(_) | Type::Null)
    }

    /// Element type of an array or pointee type of a pointer.
    pub fn element(&self) -> Option<&Type> {
        match self {
            Type::Ptr(t) | Type::Array(t, _) => Some(t),
            _ => None,
        }
    }

    /// Array-to-pointer decay.
    pub fn decayed(&self) -> Type {
        match self {
            Type::Array(t, _) => Type::Ptr(t.clone()),
            other => other.clone(),
        }
    }

    pub fn class_name(&self) -> Option<&str> {
        match self {
            Type::Class(n) => Some(n),
            _ => None,
        }
    }

    fn from_base(base: &BaseType) -> Type {
        match base {
            BaseType::Void => Type::Void,
            BaseType::Int => Type::Int,
            BaseType::Long => Type::Long,
            BaseType::Double => Type::Double,
            BaseType::Bool => Type::Bool,
            BaseType::Char => Type::Char,
            BaseType::Named(n) => Type::Class(n.clone()),
        }
    }

    /// Type named by a specifier plus declarator (`int* a[3]`).
    pub fn of_declarator(ty: &TypeSpec, d: &Declarator) -> Type {
        let mut t = Type::from_base(&ty.base);
        for _ in 0..d.pointer_depth {
            t = Type::Ptr(Box::new(t));
        }
        for dim in d.array_dims.iter().rev() {
            t = Type::Array(Box::new(t), *dim);
        }
        t
    }

    /// Usual arithmetic conversions.
    pub fn common(a: &Type, b: &Type) -> Type {
        if *a == Type::Double || *b == Type::Double {
            Type::Double
        } else if *a == Type::Long || *b == Type::Long {
            Type::Long
        } else {
            Type::Int
        }
    }

    fn promoted(&self) -> Type {
        match self {
            Type::Bool | Type::Char => Type::Int,
            other => other.clone(),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Void => f.write_str("void"),
            Type::Bool => f.write_str("bool"),
            Type::Char => f.write_str("char"),
            Type::Int => f.write_str("int"),
            Type::Long => f.write_str("long"),
            Type::Double => f.write_str("double"),
            Type::Class(n) => f.write_str(n),
            Type::Ptr(t) => write!(f, "{t}*"),
            Type::Array(t, Some(n)) => write!(f, "{t}[{n}]"),
            Type::Array(t, None) => write!(f, "{t}[]"),
            Type::Null => f.write_str("std::nullptr_t"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DeclaratorKind {
    ByValue,
    Reference,
    Pointer,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ParamInfo {
    pub name: String,
    pub base_type: String,
    pub declarator: DeclaratorKind,
    /// Constness of the parameter for by-value declarators, of the referred
    /// object otherwise.
    pub is_const_qualified: bool,
}

impl ParamInfo {
    pub fn from_param(p: &Param) -> ParamInfo {
        let d = &p.declarator;
        let declarator = if d.is_ref {
            DeclaratorKind::Reference
        } else if d.pointer_depth > 0 || !d.array_dims.is_empty() {
            DeclaratorKind::Pointer
        } else {
            DeclaratorKind::ByValue
        };
        ParamInfo {
            name: d.name.clone(),
            base_type: p.ty.base.name().to_string(),
            declarator,
            is_const_qualified: p.ty.is_const,
        }
    }
}

/// Where a function's definition (or, for external functions, its
/// declaration) lives in the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FnLocation {
    pub item: usize,
    pub member: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionInfo {
    pub id: FunctionId,
    pub name: String,
    pub qualified_name: String,
    pub params: Vec<ParamInfo>,
    pub return_type: String,
    pub body_span: Option<SourceSpan>,
    pub is_method: bool,
    pub is_const_method: bool,
    pub is_main: bool,
    pub is_external: bool,
    pub class: Option<String>,
    #[serde(skip)]
    pub location: FnLocation,
    #[serde(skip)]
    pub ret: Type,
    #[serde(skip)]
    pub ret_is_ref: bool,
    /// Parameter types after array decay, with reference flags.
    #[serde(skip)]
    pub param_types: Vec<(Type, bool)>,
    #[serde(skip)]
    pub param_vars: Vec<VarId>,
    #[serde(skip)]
    pub name_span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldInfo {
    pub name: String,
    pub ty: Type,
    pub is_const: bool,
    pub init: Option<Initializer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassInfo {
    pub name: String,
    pub fields: Vec<FieldInfo>,
    pub methods: Vec<FunctionId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Global,
    Param,
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarInfo {
    pub id: VarId,
    pub name: String,
    pub ty: Type,
    pub is_ref: bool,
    pub is_const: bool,
    pub kind: VarKind,
    pub function: Option<FunctionId>,
    pub scope: ScopeId,
    pub decl_stmt: Option<StmtId>,
    pub declarator: usize,
    pub name_span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScopeKind {
    Global,
    Function,
    Block,
    For,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScopeInfo {
    pub id: ScopeId,
    pub parent: Option<ScopeId>,
    pub kind: ScopeKind,
    pub function: Option<FunctionId>,
    pub span: SourceSpan,
    /// The closing brace, for block-like scopes.
    pub close: Option<SourceSpan>,
    /// The statement that opens the scope (block or `for`).
    pub stmt: Option<StmtId>,
    pub vars: Vec<VarId>,
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Var(VarId),
    /// Data member reached through the implicit `this`.
    Field { class: String, index: usize },
    Function,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Builtin {
    Printf,
    Puts,
    Sqrt,
    Fabs,
    Abs,
    Exp,
    Pow,
    Sin,
    Cos,
    Floor,
    Min,
    Max,
    Swap,
}

impl Builtin {
    pub fn lookup(name: &str) -> Option<Builtin> {
        Some(match name {
            "printf" => Builtin::Printf,
            "puts" => Builtin::Puts,
            "sqrt" => Builtin::Sqrt,
            "fabs" => Builtin::Fabs,
            "abs" => Builtin::Abs,
            "exp" => Builtin::Exp,
            "pow" => Builtin::Pow,
            "sin" => Builtin::Sin,
            "cos" => Builtin::Cos,
            "floor" => Builtin::Floor,
            "min" => Builtin::Min,
            "max" => Builtin::Max,
            "swap" => Builtin::Swap,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Callee {
    Function(FunctionId),
    /// Not defined or declared in this unit (library code).
    External { name: String, builtin: Option<Builtin> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    None,
    /// `obj.m()` or `ptr->m()`; the expression is `obj` / `ptr`.
    Expr(ExprId),
    ImplicitThis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallInfo {
    pub callee: Callee,
    pub receiver: Receiver,
    pub arrow: bool,
}

/// Semantic tables for one translation unit.
#[derive(Debug, Clone)]
pub struct Model {
    pub functions: Vec<FunctionInfo>,
    pub classes: Vec<ClassInfo>,
    pub vars: Vec<VarInfo>,
    pub scopes: Vec<ScopeInfo>,
    pub globals: Vec<VarId>,
    pub bindings: Vec<Option<Binding>>,
    pub types: Vec<Type>,
    pub calls: HashMap<ExprId, CallInfo>,
    pub decl_vars: HashMap<(StmtId, usize), VarId>,
    /// Scope in which each statement appears.
    pub stmt_scope: HashMap<StmtId, ScopeId>,
    /// Scope opened by a block or `for` statement.
    pub opened_scope: HashMap<StmtId, ScopeId>,
    pub function_scope: HashMap<FunctionId, ScopeId>,
    pub global_scope: ScopeId,
    /// Global declarations: item index and declarator index.
    pub global_decls: Vec<(usize, usize, VarId)>,
}

impl Model {
    pub fn build(tree: &TranslationUnit) -> Result<Model, Vec<Diagnostic>> {
        let mut b = Builder::new(tree);
        b.collect();
        b.resolve_bodies();
        if b.diags.is_empty() {
            Ok(b.model)
        } else {
            Err(b.diags)
        }
    }

    pub fn function(&self, id: FunctionId) -> &FunctionInfo {
        &self.functions[id.0 as usize]
    }

    pub fn var(&self, id: VarId) -> &VarInfo {
        &self.vars[id.0 as usize]
    }

    pub fn scope(&self, id: ScopeId) -> &ScopeInfo {
        &self.scopes[id.0 as usize]
    }

    pub fn class(&self, name: &str) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn binding(&self, e: ExprId) -> Option<&Binding> {
        self.bindings.get(e.0 as usize).and_then(|b| b.as_ref())
    }

    pub fn type_of(&self, e: ExprId) -> &Type {
        &self.types[e.0 as usize]
    }

    pub fn call(&self, e: ExprId) -> Option<&CallInfo> {
        self.calls.get(&e)
    }

    pub fn function_by_name(&self, name: &str) -> Option<&FunctionInfo> {
        self.functions
            .iter()
            .find(|f| f.qualified_name == name || (f.class.is_none() && f.name == name))
    }

    pub fn main_function(&self) -> Option<&FunctionInfo> {
        self.functions.iter().find(|f| f.is_main)
    }

    pub fn function_def<'t>(&self, tree: &'t TranslationUnit, id: FunctionId) -> &'t FunctionDef {
        let loc = self.function(id).location;
        match (&tree.items[loc.item].kind, loc.member) {
            (ItemKind::Function(f), None) => f,
            (ItemKind::Class(c), Some(m)) => match &c.members[m] {
                ClassMember::Method(f) => f,
                _ => unreachable!("method location points at a non-method"),
            },
            _ => unreachable!("function location points at a non-function"),
        }
    }

    /// Scope chain from `scope` outwards, innermost first.
    pub fn scope_chain(&self, scope: ScopeId) -> Vec<ScopeId> {
        let mut out = vec![scope];
        let mut cur = scope;
        while let Some(p) = self.scope(cur).parent {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Whether `inner` is `outer` or nested inside it.
    pub fn scope_within(&self, inner: ScopeId, outer: ScopeId) -> bool {
        self.scope_chain(inner).contains(&outer)
    }

    /// Every identifier spelled anywhere in the unit (for fresh-name checks).
    pub fn identifiers(&self) -> impl Iterator<Item = &str> {
        self.vars
            .iter()
            .map(|v| v.name.as_str())
            .chain(self.functions.iter().map(|f| f.name.as_str()))
            .chain(self.classes.iter().map(|c| c.name.as_str()))
    }
}

/// Functions of the unit in source order.
pub fn enumerate_functions(model: &Model) -> Vec<FunctionInfo> {
    model.functions.clone()
}

// ---- call sites -------------------------------------------------------------

/// Variables referenced by an argument (or receiver, or assignment target).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArgInfo {
    pub expr: Option<ExprId>,
    /// Referenced variables, first appearance first.
    pub vars: Vec<VarId>,
    /// Variables appearing inside subscript indices.
    pub index_vars: Vec<VarId>,
    /// Variables appearing outside subscript indices.
    pub plain_vars: Vec<VarId>,
    /// The expression touches members through the implicit `this`.
    pub uses_this: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResultBinding {
    None,
    /// `lhs = f(...)`; `target` holds the variables of `lhs`.
    ExistingVar { lhs: ExprId, target: ArgInfo },
    /// `T v = f(...)`.
    FreshDecl { var: VarId, is_const: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CallPosition {
    /// The whole statement is the call, possibly bound to a result.
    Statement,
    /// Argument (at any depth) of another call.
    Nested,
    /// Inside a return expression.
    Return,
    /// Condition, `for` header, `case` label.
    Condition,
    /// Any other expression position.
    Expression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallSiteInfo {
    pub call: ExprId,
    pub callee: Callee,
    pub callee_name: String,
    pub stmt: StmtId,
    pub stmt_span: SourceSpan,
    pub span: SourceSpan,
    pub args: Vec<ArgInfo>,
    pub receiver: Option<ArgInfo>,
    pub result_binding: ResultBinding,
    /// Outermost first.
    pub enclosing_scopes: Vec<ScopeId>,
    pub is_std_or_external: bool,
    pub position: CallPosition,
    /// Evaluated only conditionally (right operand of `&&`/`||`).
    pub short_circuit: bool,
}

/// Call expressions of a function body in source order; calls nested in one
/// statement come innermost first.
pub fn enumerate_call_sites(model: &Model, tree: &TranslationUnit, func: FunctionId) -> Vec<CallSiteInfo> {
    let def = model.function_def(tree, func);
    let mut out = Vec::new();
    if let Some(body) = &def.body {
        for s in &body.stmts {
            collect_stmt_calls(model, s, false, &mut out);
        }
    }
    out
}

fn collect_stmt_calls(model: &Model, s: &Stmt, for_init: bool, out: &mut Vec<CallSiteInfo>) {
    let mut exprs: Vec<(&Expr, CallPosition)> = Vec::new();
    let mut statement_call: Option<(ExprId, ResultBinding)> = None;
    match &s.kind {
        StmtKind::Expr(e) => {
            let u = e.unparen();
            match &u.kind {
                ExprKind::Call { .. } if !for_init => {
                    statement_call = Some((u.id, ResultBinding::None));
                }
                ExprKind::Assign { lhs, rhs, .. } if !for_init => {
                    if let ExprKind::Call { .. } = rhs.unparen().kind {
                        let target = arg_info(model, lhs);
                        statement_call = Some((
                            rhs.unparen().id,
                            ResultBinding::ExistingVar { lhs: lhs.id, target },
                        ));
                    }
                }
                _ => {}
            }
            let pos = if for_init { CallPosition::Condition } else { CallPosition::Expression };
            exprs.push((e, pos));
        }
        StmtKind::Decl(d) => {
            if d.declarators.len() == 1 && !for_init {
                let dc = &d.declarators[0];
                if let Some(Initializer::Expr(e)) = &dc.init {
                    if let ExprKind::Call { .. } = e.unparen().kind {
                        if let Some(var) = model.decl_vars.get(&(s.id, 0)) {
                            statement_call = Some((
                                e.unparen().id,
                                ResultBinding::FreshDecl {
                                    var: *var,
                                    is_const: d.ty.is_const && dc.pointer_depth == 0,
                                },
                            ));
                        }
                    }
                }
            }
            let pos = if for_init { CallPosition::Condition } else { CallPosition::Expression };
            for e in s.own_exprs() {
                exprs.push((e, pos));
            }
        }
        StmtKind::Return(Some(e)) => exprs.push((e, CallPosition::Return)),
        _ => {
            for e in s.own_exprs() {
                exprs.push((e, CallPosition::Condition));
            }
        }
    }
    for (e, pos) in exprs {
        collect_expr_calls(model, s, e, pos, false, false, &statement_call, out);
    }
    match &s.kind {
        StmtKind::For { init, body, .. } => {
            if let Some(i) = init {
                collect_stmt_calls(model, i, true, out);
            }
            collect_stmt_calls(model, body, false, out);
        }
        _ => {
            for c in s.children() {
                collect_stmt_calls(model, c, false, out);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn collect_expr_calls(
    model: &Model,
    s: &Stmt,
    e: &Expr,
    pos: CallPosition,
    nested: bool,
    short: bool,
    statement_call: &Option<(ExprId, ResultBinding)>,
    out: &mut Vec<CallSiteInfo>,
) {
    match &e.kind {
        ExprKind::Call { callee, args } => {
            // Receiver and arguments first: innermost calls come first.
            if let ExprKind::Member { base, .. } = &callee.kind {
                collect_expr_calls(model, s, base, pos, true, short, statement_call, out);
            }
            for a in args {
                collect_expr_calls(model, s, a, pos, true, short, statement_call, out);
            }
            let Some(info) = model.call(e.id) else { return };
            let (position, binding) = match statement_call {
                Some((id, b)) if *id == e.id => (CallPosition::Statement, b.clone()),
                _ if nested && pos != CallPosition::Condition => (CallPosition::Nested, ResultBinding::None),
                _ => (pos, ResultBinding::None),
            };
            let receiver = match info.receiver {
                Receiver::Expr(_) => match &callee.kind {
                    ExprKind::Member { base, .. } => Some(arg_info(model, base)),
                    _ => None,
                },
                Receiver::ImplicitThis => Some(ArgInfo {
                    uses_this: true,
                    ..ArgInfo::default()
                }),
                Receiver::None => None,
            };
            let (callee_name, is_ext) = match &info.callee {
                Callee::Function(f) => {
                    let fi = model.function(*f);
                    (fi.qualified_name.clone(), fi.is_external)
                }
                Callee::External { name, .. } => (name.clone(), true),
            };
            let scope = model.stmt_scope.get(&s.id).copied().unwrap_or(model.global_scope);
            let mut enclosing = model.scope_chain(scope);
            enclosing.reverse();
            out.push(CallSiteInfo {
                call: e.id,
                callee: info.callee.clone(),
                callee_name,
                stmt: s.id,
                stmt_span: s.span,
                span: e.span,
                args: args.iter().map(|a| arg_info(model, a)).collect(),
                receiver,
                result_binding: binding,
                enclosing_scopes: enclosing,
                is_std_or_external: is_ext,
                position,
                short_circuit: short,
            });
        }
        ExprKind::Binary {
            op: BinaryOp::And | BinaryOp::Or,
            lhs,
            rhs,
        } => {
            collect_expr_calls(model, s, lhs, pos, nested, short, statement_call, out);
            collect_expr_calls(model, s, rhs, pos, nested, true, statement_call, out);
        }
        _ => {
            for c in e.children() {
                collect_expr_calls(model, s, c, pos, nested, short, statement_call, out);
            }
        }
    }
}

/// Variables referenced by `e`, skipping callee names.
pub fn arg_info(model: &Model, e: &Expr) -> ArgInfo {
    let mut info = ArgInfo {
        expr: Some(e.id),
        ..ArgInfo::default()
    };
    collect_vars(model, e, false, &mut info);
    info
}

fn collect_vars(model: &Model, e: &Expr, in_index: bool, info: &mut ArgInfo) {
    match &e.kind {
        ExprKind::Name(_) => match model.binding(e.id) {
            Some(Binding::Var(v)) => {
                let list = if in_index { &mut info.index_vars } else { &mut info.plain_vars };
                if !list.contains(v) {
                    list.push(*v);
                }
                if !info.vars.contains(v) {
                    info.vars.push(*v);
                }
            }
            Some(Binding::Field { .. }) => info.uses_this = true,
            _ => {}
        },
        ExprKind::This => info.uses_this = true,
        ExprKind::Call { callee, args } => {
            if let ExprKind::Member { base, .. } = &callee.kind {
                collect_vars(model, base, in_index, info);
            }
            if let Some(CallInfo {
                receiver: Receiver::ImplicitThis,
                ..
            }) = model.call(e.id)
            {
                info.uses_this = true;
            }
            for a in args {
                collect_vars(model, a, in_index, info);
            }
        }
        ExprKind::Index { base, index } => {
            collect_vars(model, base, in_index, info);
            collect_vars(model, index, true, info);
        }
        _ => {
            for c in e.children() {
                collect_vars(model, c, in_index, info);
            }
        }
    }
}

// ---- builder ----------------------------------------------------------------

struct Builder<'t> {
    tree: &'t TranslationUnit,
    model: Model,
    diags: Vec<Diagnostic>,
    /// (class, name, signature) -> function
    keys: HashMap<(Option<String>, String, String), FunctionId>,
}

struct Ctx {
    func: FunctionId,
    class: Option<String>,
    is_const_method: bool,
}

impl<'t> Builder<'t> {
    fn new(tree: &'t TranslationUnit) -> Self {
        let n_expr = tree.expr_count as usize;
        let global_span = tree.trailing;
        let mut model = Model {
            functions: Vec::new(),
            classes: Vec::new(),
            vars: Vec::new(),
            scopes: Vec::new(),
            globals: Vec::new(),
            bindings: vec![None; n_expr],
            types: vec![Type::Void; n_expr],
            calls: HashMap::new(),
            decl_vars: HashMap::new(),
            stmt_scope: HashMap::new(),
            opened_scope: HashMap::new(),
            function_scope: HashMap::new(),
            global_scope: ScopeId(0),
            global_decls: Vec::new(),
        };
        model.scopes.push(ScopeInfo {
            id: ScopeId(0),
            parent: None,
            kind: ScopeKind::Global,
            function: None,
            span: global_span,
            close: None,
            stmt: None,
            vars: Vec::new(),
            level: 0,
        });
        Builder {
            tree,
            model,
            diags: Vec::new(),
            keys: HashMap::new(),
        }
    }

    fn error(&mut self, span: SourceSpan, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(span, msg));
    }

    // ---- pass 1: declarations ----

    fn collect(&mut self) {
        let tree = self.tree;
        for (i, item) in tree.items.iter().enumerate() {
            match &item.kind {
                ItemKind::Class(c) => {
                    let mut fields = Vec::new();
                    for m in &c.members {
                        if let ClassMember::Field(d) = m {
                            for dc in &d.declarators {
                                if dc.is_ref {
                                    self.error(dc.span, "reference data members are not supported");
                                }
                                fields.push(FieldInfo {
                                    name: dc.name.clone(),
                                    ty: Type::of_declarator(&d.ty, dc),
                                    is_const: d.ty.is_const,
                                    init: dc.init.clone(),
                                });
                            }
                        }
                    }
                    self.model.classes.push(ClassInfo {
                        name: c.name.clone(),
                        fields,
                        methods: Vec::new(),
                    });
                    for (mi, m) in c.members.iter().enumerate() {
                        if let ClassMember::Method(f) = m {
                            self.declare_function(f, Some(c.name.clone()), FnLocation { item: i, member: Some(mi) });
                        }
                    }
                }
                ItemKind::Function(f) => {
                    let class = f.qualifier.clone();
                    if let Some(q) = &class {
                        if !self.model.classes.iter().any(|c| &c.name == q) {
                            self.error(f.name_span, format!("unknown class `{q}`"));
                            continue;
                        }
                    }
                    self.declare_function(f, class, FnLocation { item: i, member: None });
                }
                ItemKind::Global(d) => {
                    for (di, dc) in d.declarators.iter().enumerate() {
                        let var = self.new_var(&d.ty, dc, VarKind::Global, None, ScopeId(0), None, di);
                        self.model.globals.push(var);
                        self.model.global_decls.push((i, di, var));
                    }
                }
                _ => {}
            }
        }
        let mains: Vec<_> = self.model.functions.iter().filter(|f| f.is_main).map(|f| f.name_span).collect();
        if mains.len() > 1 {
            self.error(mains[1], "more than one `main`");
        }
    }

    fn declare_function(&mut self, f: &FunctionDef, class: Option<String>, loc: FnLocation) {
        let sig: Vec<String> = f
            .params
            .iter()
            .map(|p| {
                let t = Type::of_declarator(&p.ty, &p.declarator).decayed();
                format!("{}{}{}", if p.ty.is_const { "const " } else { "" }, t, if p.declarator.is_ref { "&" } else { "" })
            })
            .collect();
        let key = (class.clone(), f.name.clone(), sig.join(","));
        let has_body = f.body.is_some();
        if let Some(&id) = self.keys.get(&key) {
            let existing = &mut self.model.functions[id.0 as usize];
            if has_body {
                if !existing.is_external {
                    self.diags.push(Diagnostic::error(f.name_span, format!("redefinition of `{}`", f.name)));
                    return;
                }
                existing.is_external = false;
                existing.location = loc;
                existing.body_span = f.body.as_ref().map(|b| b.span);
                existing.name_span = f.name_span;
                existing.params = f.params.iter().map(ParamInfo::from_param).collect();
            }
            return;
        }
        let id = FunctionId(self.model.functions.len() as u32);
        let mut ret = Type::from_base(&f.ret.base);
        for _ in 0..f.ret_pointer_depth {
            ret = Type::Ptr(Box::new(ret));
        }
        let return_type = format!(
            "{}{}{}{}",
            if f.ret.is_const { "const " } else { "" },
            f.ret.base.name(),
            "*".repeat(f.ret_pointer_depth as usize),
            if f.ret_is_ref { "&" } else { "" }
        );
        let qualified_name = match &class {
            Some(c) => format!("{c}::{}", f.name),
            None => f.name.clone(),
        };
        let is_const_method = f.is_const;
        if is_const_method && class.is_none() {
            self.error(f.name_span, "const qualifier on a non-member function");
        }
        self.model.functions.push(FunctionInfo {
            id,
            name: f.name.clone(),
            qualified_name,
            params: f.params.iter().map(ParamInfo::from_param).collect(),
            return_type,
            body_span: f.body.as_ref().map(|b| b.span),
            is_method: class.is_some(),
            is_const_method,
            is_main: class.is_none() && f.name == "main",
            is_external: !has_body,
            class: class.clone(),
            location: loc,
            ret,
            ret_is_ref: f.ret_is_ref,
            param_types: f
                .params
                .iter()
                .map(|p| (Type::of_declarator(&p.ty, &p.declarator).decayed(), p.declarator.is_ref))
                .collect(),
            param_vars: Vec::new(),
            name_span: f.name_span,
        });
        self.keys.insert(key, id);
        if let Some(c) = &class {
            if let Some(ci) = self.model.classes.iter_mut().find(|ci| &ci.name == c) {
                ci.methods.push(id);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn new_var(
        &mut self,
        ty: &TypeSpec,
        d: &Declarator,
        kind: VarKind,
        function: Option<FunctionId>,
        scope: ScopeId,
        stmt: Option<StmtId>,
        declarator: usize,
    ) -> VarId {
        let id = VarId(self.model.vars.len() as u32);
        let mut t = Type::of_declarator(ty, d);
        if kind == VarKind::Param {
            t = t.decayed();
        }
        if t == Type::Void {
            self.error(d.span, format!("variable `{}` declared void", d.name));
        }
        let sc = &mut self.model.scopes[scope.0 as usize];
        if !d.name.is_empty() {
            let clash = sc.vars.iter().any(|v| self.model.vars[v.0 as usize].name == d.name);
            if clash {
                self.diags.push(Diagnostic::error(d.name_span, format!("redeclaration of `{}`", d.name)));
            }
        }
        sc.vars.push(id);
        self.model.vars.push(VarInfo {
            id,
            name: d.name.clone(),
            ty: t,
            is_ref: d.is_ref,
            is_const: ty.is_const && d.pointer_depth == 0,
            kind,
            function,
            scope,
            decl_stmt: stmt,
            declarator,
            name_span: d.name_span,
        });
        if let Some(s) = stmt {
            self.model.decl_vars.insert((s, declarator), id);
        }
        id
    }

    fn new_scope(&mut self, parent: ScopeId, kind: ScopeKind, span: SourceSpan, close: Option<SourceSpan>, stmt: Option<StmtId>) -> ScopeId {
        let id = ScopeId(self.model.scopes.len() as u32);
        let level = self.model.scopes[parent.0 as usize].level + 1;
        let function = self.model.scopes[parent.0 as usize].function;
        self.model.scopes.push(ScopeInfo {
            id,
            parent: Some(parent),
            kind,
            function,
            span,
            close,
            stmt,
            vars: Vec::new(),
            level,
        });
        if let Some(s) = stmt {
            self.model.opened_scope.insert(s, id);
        }
        id
    }

    // ---- pass 2: bodies ----

    fn resolve_bodies(&mut self) {
        // Global initializers.
        let tree = self.tree;
        for (item, di, _) in self.model.global_decls.clone() {
            if let ItemKind::Global(d) = &tree.items[item].kind {
                if let Some(init) = &d.declarators[di].init {
                    let ctx = None;
                    self.initializer(init, ScopeId(0), ctx.as_ref());
                }
            }
        }
        for fid in 0..self.model.functions.len() {
            let fid = FunctionId(fid as u32);
            let info = self.model.function(fid).clone();
            if info.is_external {
                continue;
            }
            let def = self.model.function_def(tree, fid);
            let body = def.body.as_ref().expect("defined function has a body");
            let scope = self.new_scope(ScopeId(0), ScopeKind::Function, body.span, Some(body.close), None);
            self.model.scopes[scope.0 as usize].function = Some(fid);
            self.model.function_scope.insert(fid, scope);
            let mut params = Vec::new();
            for p in &def.params {
                params.push(self.new_var(&p.ty, &p.declarator, VarKind::Param, Some(fid), scope, None, 0));
            }
            self.model.functions[fid.0 as usize].param_vars = params;
            let ctx = Ctx {
                func: fid,
                class: info.class.clone(),
                is_const_method: info.is_const_method,
            };
            for s in &body.stmts {
                self.stmt(s, scope, &ctx);
            }
        }
    }

    fn stmt(&mut self, s: &Stmt, scope: ScopeId, ctx: &Ctx) {
        self.model.stmt_scope.insert(s.id, scope);
        match &s.kind {
            StmtKind::Decl(d) => {
                for (i, dc) in d.declarators.iter().enumerate() {
                    let declared = Type::of_declarator(&d.ty, dc);
                    if let Some(init) = &dc.init {
                        self.initializer(init, scope, Some(ctx));
                        if dc.is_ref {
                            if let Initializer::Expr(e) = init {
                                if !is_lvalue(e) {
                                    self.error(e.span, "reference bound to a non-lvalue is not supported");
                                }
                            }
                        }
                    } else if dc.is_ref {
                        self.error(dc.span, format!("reference `{}` must be initialized", dc.name));
                    } else if matches!(declared, Type::Array(_, None)) {
                        self.error(dc.span, "array of unknown bound needs an initializer");
                    }
                    self.new_var(&d.ty, dc, VarKind::Local, Some(ctx.func), scope, Some(s.id), i);
                }
            }
            StmtKind::Expr(e) => {
                self.expr(e, scope, Some(ctx));
            }
            StmtKind::Block(b) => {
                let inner = self.new_scope(scope, ScopeKind::Block, b.span, Some(b.close), Some(s.id));
                for c in &b.stmts {
                    self.stmt(c, inner, ctx);
                }
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.expr(cond, scope, Some(ctx));
                self.substmt(then_branch, scope, ctx);
                if let Some(e) = else_branch {
                    self.substmt(e, scope, ctx);
                }
            }
            StmtKind::While { cond, body } | StmtKind::Switch { cond, body } => {
                self.expr(cond, scope, Some(ctx));
                self.substmt(body, scope, ctx);
            }
            StmtKind::For { init, cond, step, body } => {
                let inner = self.new_scope(scope, ScopeKind::For, s.span, None, Some(s.id));
                if let Some(i) = init {
                    self.stmt(i, inner, ctx);
                }
                if let Some(c) = cond {
                    self.expr(c, inner, Some(ctx));
                }
                if let Some(st) = step {
                    self.expr(st, inner, Some(ctx));
                }
                self.substmt(body, inner, ctx);
            }
            StmtKind::Case(e) => {
                self.expr(e, scope, Some(ctx));
            }
            StmtKind::Return(e) => {
                let ret = self.model.function(ctx.func).ret.clone();
                match e {
                    Some(e) => {
                        let t = self.expr(e, scope, Some(ctx));
                        if ret == Type::Void && t != Type::Void {
                            self.error(e.span, "returning a value from a void function");
                        }
                    }
                    None if ret != Type::Void => self.error(s.span, "missing return value"),
                    None => {}
                }
            }
            StmtKind::Default | StmtKind::Break | StmtKind::Continue | StmtKind::Empty => {}
        }
    }

    fn substmt(&mut self, s: &Stmt, scope: ScopeId, ctx: &Ctx) {
        if let StmtKind::Decl(_) = s.kind {
            self.diags.push(Diagnostic::error(
                s.span,
                "unsupported construct: declaration as an unbraced substatement",
            ));
            return;
        }
        self.stmt(s, scope, ctx);
    }

    fn initializer(&mut self, init: &Initializer, scope: ScopeId, ctx: Option<&Ctx>) {
        match init {
            Initializer::Expr(e) => {
                self.expr(e, scope, ctx);
            }
            Initializer::List { items, .. } => {
                for e in items {
                    self.expr(e, scope, ctx);
                }
            }
        }
    }

    fn lookup(&self, name: &str, scope: ScopeId) -> Option<VarId> {
        let mut cur = Some(scope);
        while let Some(s) = cur {
            let info = self.model.scope(s);
            if let Some(v) = info.vars.iter().rev().find(|v| self.model.var(**v).name == name) {
                return Some(*v);
            }
            cur = info.parent;
        }
        None
    }

    fn set(&mut self, e: &Expr, t: Type) -> Type {
        self.model.types[e.id.0 as usize] = t.clone();
        t
    }

    fn expr(&mut self, e: &Expr, scope: ScopeId, ctx: Option<&Ctx>) -> Type {
        let t = match &e.kind {
            ExprKind::Int(v) => {
                if i32::try_from(*v).is_ok() {
                    Type::Int
                } else {
                    Type::Long
                }
            }
            ExprKind::Float(_) => Type::Double,
            ExprKind::Bool(_) => Type::Bool,
            ExprKind::Char(_) => Type::Char,
            ExprKind::Str(_) => Type::Ptr(Box::new(Type::Char)),
            ExprKind::Null => Type::Null,
            ExprKind::This => match ctx.and_then(|c| c.class.clone()) {
                Some(c) => Type::Ptr(Box::new(Type::Class(c))),
                None => {
                    self.error(e.span, "`this` outside a member function");
                    Type::Void
                }
            },
            ExprKind::Name(path) => self.name(e, path, scope, ctx),
            ExprKind::Unary { op, operand } => {
                let t = self.expr(operand, scope, ctx);
                match op {
                    UnaryOp::Neg | UnaryOp::Plus | UnaryOp::BitNot => t.promoted(),
                    UnaryOp::Not => Type::Bool,
                    UnaryOp::AddrOf => {
                        if !is_lvalue(operand) {
                            self.error(e.span, "address of a non-lvalue");
                        }
                        Type::Ptr(Box::new(t))
                    }
                    UnaryOp::Deref => match t.element() {
                        Some(el) => el.clone(),
                        None => {
                            self.error(e.span, format!("cannot dereference a value of type `{t}`"));
                            Type::Int
                        }
                    },
                    UnaryOp::PreInc | UnaryOp::PreDec => t,
                }
            }
            ExprKind::Postfix { operand, .. } => self.expr(operand, scope, ctx),
            ExprKind::Binary { op, lhs, rhs } => {
                let a = self.expr(lhs, scope, ctx).decayed();
                let b = self.expr(rhs, scope, ctx).decayed();
                match op {
                    BinaryOp::And | BinaryOp::Or => Type::Bool,
                    o if o.is_comparison() => Type::Bool,
                    BinaryOp::Add if a.is_pointer() => a,
                    BinaryOp::Add if b.is_pointer() => b,
                    BinaryOp::Sub if a.is_pointer() && b.is_pointer() => Type::Long,
                    BinaryOp::Sub if a.is_pointer() => a,
                    BinaryOp::Shl | BinaryOp::Shr => a.promoted(),
                    _ => {
                        if !(a.is_arithmetic() && b.is_arithmetic()) {
                            self.error(e.span, format!("invalid operands `{a}` and `{b}`"));
                        }
                        Type::common(&a, &b)
                    }
                }
            }
            ExprKind::Assign { lhs, rhs, .. } => {
                let t = self.expr(lhs, scope, ctx);
                self.expr(rhs, scope, ctx);
                if !is_lvalue(lhs) {
                    self.error(lhs.span, "assignment to a non-lvalue");
                }
                t
            }
            ExprKind::Call { callee, args } => self.call(e, callee, args, scope, ctx),
            ExprKind::Index { base, index } => {
                let b = self.expr(base, scope, ctx);
                let i = self.expr(index, scope, ctx);
                if !i.is_integral() {
                    self.error(index.span, "subscript is not an integer");
                }
                match b.element() {
                    Some(el) => el.clone(),
                    None => {
                        self.error(e.span, format!("subscript of a value of type `{b}`"));
                        Type::Int
                    }
                }
            }
            ExprKind::Member { base, field, arrow } => {
                let b = self.expr(base, scope, ctx);
                let class = if *arrow { b.element().cloned() } else { Some(b.clone()) };
                match class.as_ref().and_then(|c| c.class_name()).and_then(|c| self.model.class(c)) {
                    Some(ci) => match ci.fields.iter().find(|f| &f.name == field) {
                        Some(f) => f.ty.clone(),
                        None => {
                            let msg = format!("no member `{field}` in `{}`", ci.name);
                            self.error(e.span, msg);
                            Type::Int
                        }
                    },
                    None => {
                        self.error(e.span, format!("member access on a value of type `{b}`"));
                        Type::Int
                    }
                }
            }
            ExprKind::Paren(inner) => self.expr(inner, scope, ctx),
        };
        self.set(e, t)
    }

    fn name(&mut self, e: &Expr, path: &[String], scope: ScopeId, ctx: Option<&Ctx>) -> Type {
        if path.len() > 1 {
            self.diags.push(Diagnostic::error(
                e.span,
                format!("unsupported construct: qualified name `{}` outside a call", path.join("::")),
            ));
            return Type::Int;
        }
        let name = &path[0];
        if let Some(v) = self.lookup(name, scope) {
            self.model.bindings[e.id.0 as usize] = Some(Binding::Var(v));
            return self.model.var(v).ty.clone();
        }
        if let Some(class) = ctx.and_then(|c| c.class.clone()) {
            if let Some(ci) = self.model.class(&class) {
                if let Some(i) = ci.fields.iter().position(|f| &f.name == name) {
                    let t = ci.fields[i].ty.clone();
                    self.model.bindings[e.id.0 as usize] = Some(Binding::Field { class, index: i });
                    return t;
                }
            }
        }
        self.error(e.span, format!("use of undeclared identifier `{name}`"));
        Type::Int
    }

    fn call(&mut self, e: &Expr, callee: &Expr, args: &[Expr], scope: ScopeId, ctx: Option<&Ctx>) -> Type {
        let arg_types: Vec<Type> = args.iter().map(|a| self.expr(a, scope, ctx)).collect();
        let n = args.len();
        let (candidates, receiver, arrow, display) = match &callee.kind {
            ExprKind::Name(path) if path.len() == 1 => {
                let name = &path[0];
                if self.lookup(name, scope).is_some() {
                    self.error(callee.span, format!("`{name}` is not a function"));
                    return Type::Int;
                }
                let mut cands = Vec::new();
                let mut receiver = Receiver::None;
                if let Some(class) = ctx.and_then(|c| c.class.clone()) {
                    cands = self.methods_named(&class, name);
                    if !cands.is_empty() {
                        receiver = Receiver::ImplicitThis;
                        if ctx.is_some_and(|c| c.is_const_method)
                            && cands.iter().any(|f| !self.model.function(*f).is_const_method)
                        {
                            self.error(callee.span, format!("non-const method `{name}` called from a const method"));
                        }
                    }
                }
                if cands.is_empty() {
                    cands = self
                        .model
                        .functions
                        .iter()
                        .filter(|f| f.class.is_none() && &f.name == name)
                        .map(|f| f.id)
                        .collect();
                }
                (cands, receiver, false, name.clone())
            }
            ExprKind::Name(path) => {
                let name = path.join("::");
                let builtin = if path[0] == "std" {
                    Builtin::lookup(path.last().unwrap())
                } else {
                    None
                };
                self.model.bindings[callee.id.0 as usize] = Some(Binding::Function);
                self.model.calls.insert(
                    e.id,
                    CallInfo {
                        callee: Callee::External { name, builtin },
                        receiver: Receiver::None,
                        arrow: false,
                    },
                );
                return builtin_type(builtin, &arg_types);
            }
            ExprKind::Member { base, field, arrow } => {
                let b = self.expr(base, scope, ctx);
                self.set(callee, Type::Void);
                let class = if *arrow { b.element().cloned() } else { Some(b.clone()) };
                let Some(cname) = class.as_ref().and_then(|c| c.class_name()).map(str::to_string) else {
                    self.error(callee.span, format!("method call on a value of type `{b}`"));
                    return Type::Int;
                };
                (self.methods_named(&cname, field), Receiver::Expr(base.id), *arrow, format!("{cname}::{field}"))
            }
            _ => {
                self.diags.push(Diagnostic::error(
                    callee.span,
                    "unsupported construct: call through an expression",
                ));
                return Type::Int;
            }
        };
        self.model.bindings[callee.id.0 as usize] = Some(Binding::Function);
        if candidates.is_empty() {
            if let Receiver::Expr(_) = receiver {
                self.error(callee.span, format!("no method `{display}`"));
                return Type::Int;
            }
            let builtin = Builtin::lookup(&display);
            self.model.calls.insert(
                e.id,
                CallInfo {
                    callee: Callee::External { name: display, builtin },
                    receiver: Receiver::None,
                    arrow: false,
                },
            );
            return builtin_type(builtin, &arg_types);
        }
        let matching: Vec<FunctionId> = candidates
            .iter()
            .copied()
            .filter(|f| self.model.function(*f).params.len() == n)
            .collect();
        let fid = match matching.as_slice() {
            [one] => *one,
            [] => {
                self.error(
                    e.span,
                    format!("arity mismatch: no overload of `{display}` takes {n} argument(s)"),
                );
                return Type::Int;
            }
            _ => {
                self.error(e.span, format!("ambiguous call to overloaded `{display}`"));
                return Type::Int;
            }
        };
        let info = self.model.function(fid).clone();
        for (i, (a, (pt, is_ref))) in args.iter().zip(&info.param_types).enumerate() {
            if *is_ref && !is_lvalue(a) && !info.params[i].is_const_qualified {
                self.error(a.span, "non-const reference parameter bound to a non-lvalue");
            }
            let _ = pt;
        }
        self.model.calls.insert(
            e.id,
            CallInfo {
                callee: Callee::Function(fid),
                receiver,
                arrow,
            },
        );
        info.ret
    }

    fn methods_named(&self, class: &str, name: &str) -> Vec<FunctionId> {
        self.model
            .class(class)
            .map(|c| {
                c.methods
                    .iter()
                    .copied()
                    .filter(|m| self.model.function(*m).name == name)
                    .collect()
            })
            .unwrap_or_default()
    }
}

fn builtin_type(b: Option<Builtin>, args: &[Type]) -> Type {
    match b {
        Some(Builtin::Printf | Builtin::Puts | Builtin::Abs) => Type::Int,
        Some(Builtin::Swap) => Type::Void,
        Some(Builtin::Min | Builtin::Max) => match args {
            [a, b] => Type::common(a, b),
            _ => Type::Int,
        },
        Some(_) => Type::Double,
        None => Type::Int,
    }
}

pub fn is_lvalue(e: &Expr) -> bool {
    match &e.unparen().kind {
        ExprKind::Name(_) | ExprKind::Index { .. } | ExprKind::Member { .. } => true,
        ExprKind::Unary {
            op: UnaryOp::Deref | UnaryOp::PreInc | UnaryOp::PreDec,
            ..
        } => true,
        ExprKind::Assign { .. } => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_translation_unit;
    use crate::span::FileId;

    fn model(src: &str) -> (TranslationUnit, Model) {
        let tree = parse_translation_unit(src, FileId(0)).unwrap();
        let m = Model::build(&tree).unwrap_or_else(|d| panic!("{d:?}"));
        (tree, m)
    }

    #[test]
    fn prototypes_merge_with_definitions() {
        let (_, m) = model("int f(int x);\nint main(){ return f(1); }\nint f(int x){ return x; }");
        assert_eq!(m.functions.len(), 2);
        assert!(!m.functions[0].is_external);
        assert!(m.functions[1].is_main);
    }

    #[test]
    fn unresolved_names_are_errors() {
        let tree = parse_translation_unit("int main(){ return y; }", FileId(0)).unwrap();
        let err = Model::build(&tree).unwrap_err();
        assert!(err[0].message.contains("undeclared"));
    }

    #[test]
    fn shadowing_resolves_to_innermost() {
        let (tree, m) = model("void g(int a){ int x = a; { int x = 2; x = 3; } x = 4; }");
        let f = m.function_def(&tree, FunctionId(0));
        let body = f.body.as_ref().unwrap();
        let inner_assign = match &body.stmts[1].kind {
            StmtKind::Block(b) => match &b.stmts[1].kind {
                StmtKind::Expr(e) => e.clone(),
                _ => unreachable!(),
            },
            _ => unreachable!(),
        };
        let ExprKind::Assign { lhs, .. } = &inner_assign.kind else { unreachable!() };
        let Some(Binding::Var(v)) = m.binding(lhs.id) else { panic!() };
        assert_ne!(m.var(*v).scope, m.function_scope[&FunctionId(0)]);
    }

    #[test]
    fn method_receivers_resolve() {
        let src = "class C { public: int v; int get() const { return v; } void set(int x){ v = x; } };\n\
                   void use(C& c){ c.set(c.get()); }";
        let (tree, m) = model(src);
        let use_fn = m.function_by_name("use").unwrap().id;
        let sites = enumerate_call_sites(&m, &tree, use_fn);
        assert_eq!(sites.len(), 2);
        assert_eq!(sites[0].callee_name, "C::get");
        assert_eq!(sites[0].position, CallPosition::Nested);
        assert_eq!(sites[1].callee_name, "C::set");
        assert!(sites[1].receiver.is_some());
    }

    #[test]
    fn overload_by_arity() {
        let (_, m) = model("int h(int a){ return a; }\nint h(int a, int b){ return a + b; }\nint main(){ return h(1, 2); }");
        let call = m.calls.values().next().unwrap();
        assert_eq!(call.callee, Callee::Function(FunctionId(1)));
    }
}

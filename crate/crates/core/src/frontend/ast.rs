//! Syntax tree for the accepted C++ subset. Every node carries the span of
//! the exact source text it was parsed from.

use serde::Serialize;

use crate::span::{FileId, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StmtId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ExprId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationUnit {
    pub file: FileId,
    pub items: Vec<Item>,
    /// Whitespace and comments after the last item.
    pub trailing: SourceSpan,
    pub stmt_count: u32,
    pub expr_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub kind: ItemKind,
    /// The item's own text.
    pub span: SourceSpan,
    /// The item's text including the trivia that precedes it. Full spans of
    /// consecutive items are contiguous.
    pub full_span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemKind {
    Directive,
    Function(FunctionDef),
    Class(ClassDef),
    ClassForward(String),
    Global(Declaration),
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaseType {
    Void,
    Int,
    Long,
    Double,
    Bool,
    Char,
    Named(String),
}

impl BaseType {
    pub fn name(&self) -> &str {
        match self {
            BaseType::Void => "void",
            BaseType::Int => "int",
            BaseType::Long => "long",
            BaseType::Double => "double",
            BaseType::Bool => "bool",
            BaseType::Char => "char",
            BaseType::Named(n) => n,
        }
    }
}

/// Base type with its leading `const`, e.g. `const int`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeSpec {
    pub is_const: bool,
    pub base: BaseType,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    Expr(Expr),
    List { items: Vec<Expr>, span: SourceSpan },
}

impl Initializer {
    pub fn span(&self) -> SourceSpan {
        match self {
            Initializer::Expr(e) => e.span,
            Initializer::List { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declarator {
    pub name: String,
    pub name_span: SourceSpan,
    pub pointer_depth: u8,
    /// `const` written after a `*`, i.e. the pointer itself is const.
    pub const_pointer: bool,
    pub is_ref: bool,
    /// Array bounds; `None` for `[]`.
    pub array_dims: Vec<Option<u64>>,
    pub init: Option<Initializer>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declaration {
    pub ty: TypeSpec,
    pub declarators: Vec<Declarator>,
    /// Includes the terminating `;`.
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub ty: TypeSpec,
    pub declarator: Declarator,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub ret: TypeSpec,
    pub ret_pointer_depth: u8,
    pub ret_is_ref: bool,
    /// Class qualifier of an out-of-class method definition (`Cell::update`).
    pub qualifier: Option<String>,
    pub name: String,
    pub name_span: SourceSpan,
    pub params: Vec<Param>,
    pub is_const: bool,
    pub body: Option<Block>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassMember {
    Field(Declaration),
    Method(FunctionDef),
    Access(SourceSpan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDef {
    pub name: String,
    pub name_span: SourceSpan,
    pub members: Vec<ClassMember>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub open: SourceSpan,
    pub close: SourceSpan,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub id: StmtId,
    pub kind: StmtKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Decl(Declaration),
    Expr(Expr),
    Block(Block),
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
    },
    While {
        cond: Expr,
        body: Box<Stmt>,
    },
    For {
        init: Option<Box<Stmt>>,
        cond: Option<Expr>,
        step: Option<Expr>,
        body: Box<Stmt>,
    },
    Switch {
        cond: Expr,
        body: Box<Stmt>,
    },
    Case(Expr),
    Default,
    Break,
    Continue,
    Return(Option<Expr>),
    Empty,
}

impl Stmt {
    /// Direct child statements, in source order.
    pub fn children(&self) -> Vec<&Stmt> {
        match &self.kind {
            StmtKind::Block(b) => b.stmts.iter().collect(),
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                let mut v = vec![then_branch.as_ref()];
                if let Some(e) = else_branch {
                    v.push(e);
                }
                v
            }
            StmtKind::While { body, .. } | StmtKind::Switch { body, .. } => vec![body.as_ref()],
            StmtKind::For { init, body, .. } => {
                let mut v = Vec::new();
                if let Some(i) = init {
                    v.push(i.as_ref());
                }
                v.push(body.as_ref());
                v
            }
            _ => Vec::new(),
        }
    }

    /// Calls `f` on this statement and every nested statement, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// Expressions held directly by this statement (not by nested statements).
    pub fn own_exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Decl(d) => d
                .declarators
                .iter()
                .flat_map(|dc| match &dc.init {
                    Some(Initializer::Expr(e)) => vec![e],
                    Some(Initializer::List { items, .. }) => items.iter().collect(),
                    None => vec![],
                })
                .collect(),
            StmtKind::Expr(e) | StmtKind::Case(e) => vec![e],
            StmtKind::If { cond, .. }
            | StmtKind::While { cond, .. }
            | StmtKind::Switch { cond, .. } => vec![cond],
            StmtKind::For { cond, step, .. } => cond.iter().chain(step.iter()).collect(),
            StmtKind::Return(Some(e)) => vec![e],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnaryOp {
    Neg,
    Plus,
    Not,
    BitNot,
    AddrOf,
    Deref,
    PreInc,
    PreDec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PostfixOp {
    Inc,
    Dec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    BitAnd,
    BitOr,
    BitXor,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinaryOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Lt | BinaryOp::Gt | BinaryOp::Le | BinaryOp::Ge | BinaryOp::Eq | BinaryOp::Ne
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AssignOp {
    Assign,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    BitAnd,
    BitOr,
    BitXor,
}

impl AssignOp {
    /// The arithmetic operator of a compound assignment.
    pub fn binary(self) -> Option<BinaryOp> {
        Some(match self {
            AssignOp::Assign => return None,
            AssignOp::Add => BinaryOp::Add,
            AssignOp::Sub => BinaryOp::Sub,
            AssignOp::Mul => BinaryOp::Mul,
            AssignOp::Div => BinaryOp::Div,
            AssignOp::Rem => BinaryOp::Rem,
            AssignOp::Shl => BinaryOp::Shl,
            AssignOp::Shr => BinaryOp::Shr,
            AssignOp::BitAnd => BinaryOp::BitAnd,
            AssignOp::BitOr => BinaryOp::BitOr,
            AssignOp::BitXor => BinaryOp::BitXor,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub id: ExprId,
    pub kind: ExprKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    Char(i64),
    Null,
    /// Possibly qualified name: `x`, `std::sort`.
    Name(Vec<String>),
    This,
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Postfix {
        op: PostfixOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Assign {
        op: AssignOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        callee: Box<Expr>,
        args: Vec<Expr>,
    },
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
    },
    Member {
        base: Box<Expr>,
        field: String,
        arrow: bool,
    },
    Paren(Box<Expr>),
}

impl Expr {
    /// Direct sub-expressions, left to right.
    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Unary { operand, .. } | ExprKind::Postfix { operand, .. } => vec![operand],
            ExprKind::Binary { lhs, rhs, .. } | ExprKind::Assign { lhs, rhs, .. } => {
                vec![lhs, rhs]
            }
            ExprKind::Call { callee, args } => {
                let mut v = vec![callee.as_ref()];
                v.extend(args.iter());
                v
            }
            ExprKind::Index { base, index } => vec![base, index],
            ExprKind::Member { base, .. } => vec![base],
            ExprKind::Paren(e) => vec![e],
            _ => Vec::new(),
        }
    }

    /// Post-order traversal (children before parents).
    pub fn walk_post<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        for c in self.children() {
            c.walk_post(f);
        }
        f(self);
    }

    /// Strips redundant parentheses.
    pub fn unparen(&self) -> &Expr {
        match &self.kind {
            ExprKind::Paren(e) => e.unparen(),
            _ => self,
        }
    }

    pub fn as_call(&self) -> Option<(&Expr, &[Expr])> {
        match &self.unparen().kind {
            ExprKind::Call { callee, args } => Some((callee, args)),
            _ => None,
        }
    }

    /// The single identifier of an unqualified name expression.
    pub fn as_ident(&self) -> Option<&str> {
        match &self.unparen().kind {
            ExprKind::Name(p) if p.len() == 1 => Some(&p[0]),
            _ => None,
        }
    }
}

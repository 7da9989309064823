//! Recursive-descent parser for the accepted C++ subset.

use std::collections::HashSet;

use super::ast::*;
use crate::diag::FrontendError;
use super::lexer::{tokenize, Token, TokenKind};
use crate::span::{FileId, LineIndex, SourceSpan};

/// Keywords outside the subset, reported as unsupported constructs.
const UNSUPPORTED: &[(&str, &str)] = &[
    ("template", "template"),
    ("typename", "template"),
    ("try", "try/catch"),
    ("catch", "try/catch"),
    ("throw", "throw"),
    ("goto", "goto"),
    ("auto", "auto"),
    ("new", "new-expression"),
    ("delete", "delete-expression"),
    ("namespace", "namespace"),
    ("using", "using-declaration"),
    ("typedef", "typedef"),
    ("operator", "operator overloading"),
    ("union", "union"),
    ("enum", "enum"),
    ("virtual", "virtual function"),
    ("static", "static storage"),
    ("extern", "extern storage"),
    ("do", "do-while"),
    ("sizeof", "sizeof"),
    ("unsigned", "unsigned type"),
    ("signed", "signed type"),
    ("short", "short type"),
    ("float", "float type"),
    ("static_cast", "cast"),
    ("reinterpret_cast", "cast"),
    ("const_cast", "cast"),
    ("dynamic_cast", "cast"),
    ("inline", "inline specifier"),
    ("friend", "friend declaration"),
];

pub fn parse_translation_unit(source: &str, file: FileId) -> Result<TranslationUnit, FrontendError> {
    let tokens = tokenize(source, file)?;
    let mut p = Parser {
        src: source,
        tokens,
        pos: 0,
        index: LineIndex::new(source),
        file,
        class_names: HashSet::new(),
        next_stmt: 0,
        next_expr: 0,
    };
    let mut items = Vec::new();
    while !p.at_eof() {
        items.push(p.item()?);
    }
    // Make full spans contiguous so that they tile the input.
    let mut prev = 0;
    for item in &mut items {
        item.full_span = p.index.span(file, prev, item.span.end);
        prev = item.span.end;
    }
    Ok(TranslationUnit {
        file,
        items,
        trailing: p.index.span(file, prev, source.len()),
        stmt_count: p.next_stmt,
        expr_count: p.next_expr,
    })
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    index: LineIndex,
    file: FileId,
    class_names: HashSet<String>,
    next_stmt: u32,
    next_expr: u32,
}

type PResult<T> = Result<T, FrontendError>;

impl<'a> Parser<'a> {
    // ---- token helpers ------------------------------------------------

    fn tok(&self) -> Token {
        self.tokens[self.pos]
    }

    fn tok_at(&self, ahead: usize) -> Token {
        let i = (self.pos + ahead).min(self.tokens.len() - 1);
        self.tokens[i]
    }

    fn text(&self) -> &'a str {
        self.tok().text(self.src)
    }

    fn at_eof(&self) -> bool {
        self.tok().kind == TokenKind::Eof
    }

    fn is(&self, s: &str) -> bool {
        let t = self.tok();
        matches!(t.kind, TokenKind::Punct | TokenKind::Ident) && t.text(self.src) == s
    }

    fn is_at(&self, ahead: usize, s: &str) -> bool {
        let t = self.tok_at(ahead);
        matches!(t.kind, TokenKind::Punct | TokenKind::Ident) && t.text(self.src) == s
    }

    fn bump(&mut self) -> Token {
        let t = self.tok();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.is(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> PResult<Token> {
        if self.is(s) {
            Ok(self.bump())
        } else {
            Err(self.syntax(format!("expected `{s}`, found {}", self.describe())))
        }
    }

    fn describe(&self) -> String {
        match self.tok().kind {
            TokenKind::Eof => "end of input".to_string(),
            _ => format!("`{}`", self.text()),
        }
    }

    fn syntax(&self, message: impl Into<String>) -> FrontendError {
        FrontendError::SyntaxError {
            span: self.tok().span,
            message: message.into(),
        }
    }

    fn unsupported(&self, span: SourceSpan, name: &str) -> FrontendError {
        FrontendError::UnsupportedConstruct {
            span,
            name: name.to_string(),
        }
    }

    fn span_from(&self, start: SourceSpan) -> SourceSpan {
        let end = if self.pos == 0 {
            start.start
        } else {
            self.tokens[self.pos - 1].span.end
        };
        self.index.span(self.file, start.start, end.max(start.start))
    }

    fn ident(&mut self) -> PResult<(String, SourceSpan)> {
        self.check_unsupported()?;
        let t = self.tok();
        if t.kind != TokenKind::Ident {
            return Err(self.syntax(format!("expected identifier, found {}", self.describe())));
        }
        self.pos += 1;
        Ok((t.text(self.src).to_string(), t.span))
    }

    fn check_unsupported(&self) -> PResult<()> {
        let t = self.tok();
        if t.kind == TokenKind::Ident {
            let s = t.text(self.src);
            if let Some((_, name)) = UNSUPPORTED.iter().find(|(k, _)| *k == s) {
                return Err(self.unsupported(t.span, name));
            }
        }
        Ok(())
    }

    fn new_stmt(&mut self, kind: StmtKind, span: SourceSpan) -> Stmt {
        let id = StmtId(self.next_stmt);
        self.next_stmt += 1;
        Stmt { id, kind, span }
    }

    fn new_expr(&mut self, kind: ExprKind, span: SourceSpan) -> Expr {
        let id = ExprId(self.next_expr);
        self.next_expr += 1;
        Expr { id, kind, span }
    }

    // ---- types ----------------------------------------------------------

    /// Whether the tokens at the cursor begin a type specifier.
    fn starts_type(&self) -> bool {
        let t = self.tok();
        if t.kind != TokenKind::Ident {
            return false;
        }
        match t.text(self.src) {
            "const" | "void" | "int" | "long" | "double" | "bool" | "char" => true,
            "unsigned" | "signed" | "short" | "float" | "auto" => true,
            name if self.class_names.contains(name) => !self.is_at(1, "::") && !self.is_at(1, "("),
            _ => false,
        }
    }

    fn type_spec(&mut self) -> PResult<TypeSpec> {
        let start = self.tok().span;
        let mut is_const = false;
        while self.eat("const") {
            is_const = true;
        }
        self.check_unsupported()?;
        let t = self.tok();
        if t.kind != TokenKind::Ident {
            return Err(self.syntax(format!("expected type, found {}", self.describe())));
        }
        let base = match t.text(self.src) {
            "void" => BaseType::Void,
            "int" => BaseType::Int,
            "double" => BaseType::Double,
            "bool" => BaseType::Bool,
            "char" => BaseType::Char,
            "long" => {
                self.bump();
                // `long long`, `long int`
                while self.is("long") || self.is("int") {
                    self.bump();
                }
                self.pos -= 1;
                BaseType::Long
            }
            "std" => {
                return Err(self.unsupported(t.span, "standard library type"));
            }
            name if self.class_names.contains(name) => BaseType::Named(name.to_string()),
            other => return Err(self.syntax(format!("unknown type `{other}`"))),
        };
        self.bump();
        if self.is("<") {
            return Err(self.unsupported(self.tok().span, "template"));
        }
        while self.eat("const") {
            is_const = true;
        }
        Ok(TypeSpec {
            is_const,
            base,
            span: self.span_from(start),
        })
    }

    /// `*`* [`const`] [`&`] name? [`[`n`]`]* [`=` init]
    fn declarator(&mut self, allow_unnamed: bool, allow_init: bool) -> PResult<Declarator> {
        let start = self.tok().span;
        let mut pointer_depth = 0u8;
        let mut const_pointer = false;
        loop {
            if self.eat("*") {
                pointer_depth += 1;
                const_pointer = false;
            } else if pointer_depth > 0 && self.eat("const") {
                const_pointer = true;
            } else {
                break;
            }
        }
        let is_ref = self.eat("&");
        if self.is("&&") {
            return Err(self.unsupported(self.tok().span, "rvalue reference"));
        }
        let (name, name_span) = if self.tok().kind == TokenKind::Ident {
            self.ident()?
        } else if allow_unnamed {
            (String::new(), self.index.span(self.file, self.tok().span.start, self.tok().span.start))
        } else {
            return Err(self.syntax(format!("expected declarator name, found {}", self.describe())));
        };
        let mut array_dims = Vec::new();
        while self.eat("[") {
            if self.eat("]") {
                array_dims.push(None);
                continue;
            }
            let t = self.tok();
            if t.kind != TokenKind::Int {
                return Err(self.unsupported(t.span, "non-constant array bound"));
            }
            let n = parse_int(t.text(self.src)).ok_or_else(|| self.syntax("bad array bound"))?;
            self.bump();
            self.expect("]")?;
            array_dims.push(Some(n as u64));
        }
        if self.is("(") && allow_init {
            return Err(self.unsupported(self.tok().span, "direct initialization"));
        }
        if self.is("{") && allow_init {
            return Err(self.unsupported(self.tok().span, "brace initialization"));
        }
        let init = if self.eat("=") {
            if !allow_init {
                return Err(self.unsupported(self.tokens[self.pos - 1].span, "default argument"));
            }
            if self.is("{") {
                let open = self.bump().span;
                let mut items = Vec::new();
                while !self.is("}") {
                    items.push(self.assignment()?);
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect("}")?;
                Some(Initializer::List {
                    items,
                    span: self.span_from(open),
                })
            } else {
                Some(Initializer::Expr(self.assignment()?))
            }
        } else {
            None
        };
        Ok(Declarator {
            name,
            name_span,
            pointer_depth,
            const_pointer,
            is_ref,
            array_dims,
            init,
            span: self.span_from(start),
        })
    }

    fn declaration_rest(&mut self, ty: TypeSpec, first: Declarator) -> PResult<Declaration> {
        let start = ty.span;
        let mut declarators = vec![first];
        while self.eat(",") {
            declarators.push(self.declarator(false, true)?);
        }
        self.expect(";")?;
        Ok(Declaration {
            ty,
            declarators,
            span: self.span_from(start),
        })
    }

    // ---- items ------------------------------------------------------------

    fn item(&mut self) -> PResult<Item> {
        let start = self.tok().span;
        let kind = if self.tok().kind == TokenKind::Directive {
            self.bump();
            ItemKind::Directive
        } else if self.eat(";") {
            ItemKind::Empty
        } else if self.is("class") || self.is("struct") {
            self.class_item()?
        } else {
            self.check_unsupported()?;
            let ty = self.type_spec()?;
            if self.function_ahead() {
                ItemKind::Function(self.function_rest(ty, None)?)
            } else {
                let d = self.declarator(false, true)?;
                ItemKind::Global(self.declaration_rest(ty, d)?)
            }
        };
        let span = self.span_from(start);
        Ok(Item {
            kind,
            span,
            full_span: span,
        })
    }

    fn class_item(&mut self) -> PResult<ItemKind> {
        let start = self.bump().span;
        let (name, name_span) = self.ident()?;
        self.class_names.insert(name.clone());
        if self.eat(";") {
            return Ok(ItemKind::ClassForward(name));
        }
        if self.is(":") {
            return Err(self.unsupported(self.tok().span, "inheritance"));
        }
        self.expect("{")?;
        let mut members = Vec::new();
        while !self.is("}") {
            if self.at_eof() {
                return Err(self.syntax("unterminated class body"));
            }
            if (self.is("public") || self.is("private") || self.is("protected")) && self.is_at(1, ":") {
                let s = self.bump().span;
                self.bump();
                members.push(ClassMember::Access(self.span_from(s)));
                continue;
            }
            if self.is(&name) && self.is_at(1, "(") {
                return Err(self.unsupported(self.tok().span, "constructor"));
            }
            if self.is("~") {
                return Err(self.unsupported(self.tok().span, "destructor"));
            }
            let ty = self.type_spec()?;
            if self.function_ahead() {
                members.push(ClassMember::Method(self.function_rest(ty, Some(&name))?));
            } else {
                let d = self.declarator(false, true)?;
                members.push(ClassMember::Field(self.declaration_rest(ty, d)?));
            }
        }
        self.expect("}")?;
        self.expect(";")?;
        Ok(ItemKind::Class(ClassDef {
            name,
            name_span,
            members,
            span: self.span_from(start),
        }))
    }

    /// After a type: whether a function declarator (`*name(`, `C::m(`) follows.
    fn function_ahead(&self) -> bool {
        let mut i = 0;
        while self.is_at(i, "*") || self.is_at(i, "&") || self.is_at(i, "const") {
            i += 1;
        }
        if self.tok_at(i).kind != TokenKind::Ident {
            return false;
        }
        i += 1;
        if self.is_at(i, "::") && self.tok_at(i + 1).kind == TokenKind::Ident {
            i += 2;
        }
        self.is_at(i, "(")
    }

    /// Parses `[*&]name[::name](params) [const] (body | ;)` after the return type.
    fn function_rest(&mut self, ret: TypeSpec, in_class: Option<&str>) -> PResult<FunctionDef> {
        let start = ret.span;
        let mut ret_pointer_depth = 0u8;
        while self.eat("*") {
            ret_pointer_depth += 1;
        }
        let ret_is_ref = self.eat("&");
        let (mut name, mut name_span) = self.ident()?;
        let mut qualifier = None;
        if self.eat("::") {
            if in_class.is_some() {
                return Err(self.syntax("qualified name inside class body"));
            }
            let (n, s) = self.ident()?;
            qualifier = Some(name);
            name = n;
            name_span = s;
        }
        if name == "operator" {
            return Err(self.unsupported(name_span, "operator overloading"));
        }
        self.expect("(")?;
        let mut params = Vec::new();
        if self.is("void") && self.is_at(1, ")") {
            self.bump();
        }
        while !self.is(")") {
            let pstart = self.tok().span;
            if self.is("...") {
                return Err(self.unsupported(self.tok().span, "variadic function"));
            }
            let ty = self.type_spec()?;
            let declarator = self.declarator(true, false)?;
            params.push(Param {
                ty,
                declarator,
                span: self.span_from(pstart),
            });
            if !self.eat(",") {
                break;
            }
        }
        self.expect(")")?;
        let is_const = self.eat("const");
        let body = if self.eat(";") {
            None
        } else if self.is("{") {
            Some(self.block()?)
        } else {
            return Err(self.syntax(format!("expected function body, found {}", self.describe())));
        };
        let mut seen = HashSet::new();
        for p in &params {
            if !p.declarator.name.is_empty() && !seen.insert(p.declarator.name.clone()) {
                return Err(FrontendError::SyntaxError {
                    span: p.declarator.name_span,
                    message: format!("duplicate parameter `{}`", p.declarator.name),
                });
            }
        }
        Ok(FunctionDef {
            ret,
            ret_pointer_depth,
            ret_is_ref,
            qualifier,
            name,
            name_span,
            params,
            is_const,
            body,
            span: self.span_from(start),
        })
    }

    // ---- statements -----------------------------------------------------

    fn block(&mut self) -> PResult<Block> {
        let open = self.expect("{")?.span;
        let mut stmts = Vec::new();
        while !self.is("}") {
            if self.at_eof() {
                return Err(FrontendError::SyntaxError {
                    span: open,
                    message: "unterminated block".into(),
                });
            }
            stmts.push(self.statement()?);
        }
        let close = self.bump().span;
        Ok(Block {
            stmts,
            open,
            close,
            span: self.span_from(open),
        })
    }

    fn statement(&mut self) -> PResult<Stmt> {
        self.check_unsupported()?;
        let start = self.tok().span;
        if self.tok().kind == TokenKind::Directive {
            return Err(self.unsupported(start, "preprocessor directive inside function"));
        }
        let kind = match self.text() {
            "{" => StmtKind::Block(self.block()?),
            "if" => {
                self.bump();
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                let then_branch = Box::new(self.statement()?);
                let else_branch = if self.eat("else") {
                    Some(Box::new(self.statement()?))
                } else {
                    None
                };
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                }
            }
            "while" => {
                self.bump();
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                StmtKind::While {
                    cond,
                    body: Box::new(self.statement()?),
                }
            }
            "for" => {
                self.bump();
                self.expect("(")?;
                let init = if self.is(";") {
                    let s = self.bump().span;
                    Some(Box::new(self.new_stmt(StmtKind::Empty, s)))
                } else {
                    Some(Box::new(self.simple_statement()?))
                };
                let cond = if self.is(";") {
                    None
                } else {
                    Some(self.expression()?)
                };
                self.expect(";")?;
                let step = if self.is(")") {
                    None
                } else {
                    Some(self.expression()?)
                };
                self.expect(")")?;
                StmtKind::For {
                    init,
                    cond,
                    step,
                    body: Box::new(self.statement()?),
                }
            }
            "switch" => {
                self.bump();
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                StmtKind::Switch {
                    cond,
                    body: Box::new(self.statement()?),
                }
            }
            "case" => {
                self.bump();
                let e = self.expression()?;
                self.expect(":")?;
                StmtKind::Case(e)
            }
            "default" if self.is_at(1, ":") => {
                self.bump();
                self.bump();
                StmtKind::Default
            }
            "break" => {
                self.bump();
                self.expect(";")?;
                StmtKind::Break
            }
            "continue" => {
                self.bump();
                self.expect(";")?;
                StmtKind::Continue
            }
            "return" => {
                self.bump();
                let e = if self.is(";") {
                    None
                } else {
                    Some(self.expression()?)
                };
                self.expect(";")?;
                StmtKind::Return(e)
            }
            ";" => {
                self.bump();
                StmtKind::Empty
            }
            "class" | "struct" => {
                return Err(self.unsupported(start, "local class"));
            }
            _ => return self.simple_statement(),
        };
        let span = self.span_from(start);
        Ok(self.new_stmt(kind, span))
    }

    /// Declaration or expression statement, including the `;`.
    fn simple_statement(&mut self) -> PResult<Stmt> {
        self.check_unsupported()?;
        let start = self.tok().span;
        if self.tok().kind == TokenKind::Ident
            && self.is_at(1, ":")
            && !self.is_at(1, "::")
            && !self.is("default")
        {
            return Err(self.unsupported(start, "label"));
        }
        let kind = if self.starts_type() {
            let ty = self.type_spec()?;
            let d = self.declarator(false, true)?;
            StmtKind::Decl(self.declaration_rest(ty, d)?)
        } else {
            let e = self.expression()?;
            self.expect(";")?;
            StmtKind::Expr(e)
        };
        let span = self.span_from(start);
        Ok(self.new_stmt(kind, span))
    }

    // ---- expressions ----------------------------------------------------

    fn expression(&mut self) -> PResult<Expr> {
        let e = self.assignment()?;
        if self.is(",") {
            return Err(self.unsupported(self.tok().span, "comma operator"));
        }
        Ok(e)
    }

    fn assignment(&mut self) -> PResult<Expr> {
        let lhs = self.binary(0)?;
        if self.is("?") {
            return Err(self.unsupported(self.tok().span, "conditional operator"));
        }
        let op = match self.text() {
            "=" => AssignOp::Assign,
            "+=" => AssignOp::Add,
            "-=" => AssignOp::Sub,
            "*=" => AssignOp::Mul,
            "/=" => AssignOp::Div,
            "%=" => AssignOp::Rem,
            "<<=" => AssignOp::Shl,
            ">>=" => AssignOp::Shr,
            "&=" => AssignOp::BitAnd,
            "|=" => AssignOp::BitOr,
            "^=" => AssignOp::BitXor,
            _ => return Ok(lhs),
        };
        if self.tok().kind != TokenKind::Punct {
            return Ok(lhs);
        }
        self.bump();
        let rhs = self.assignment()?;
        let span = lhs.span.to(&rhs.span);
        Ok(self.new_expr(
            ExprKind::Assign {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        ))
    }

    fn binary_op(&self) -> Option<(BinaryOp, u8)> {
        if self.tok().kind != TokenKind::Punct {
            return None;
        }
        Some(match self.text() {
            "||" => (BinaryOp::Or, 1),
            "&&" => (BinaryOp::And, 2),
            "|" => (BinaryOp::BitOr, 3),
            "^" => (BinaryOp::BitXor, 4),
            "&" => (BinaryOp::BitAnd, 5),
            "==" => (BinaryOp::Eq, 6),
            "!=" => (BinaryOp::Ne, 6),
            "<" => (BinaryOp::Lt, 7),
            ">" => (BinaryOp::Gt, 7),
            "<=" => (BinaryOp::Le, 7),
            ">=" => (BinaryOp::Ge, 7),
            "<<" => (BinaryOp::Shl, 8),
            ">>" => (BinaryOp::Shr, 8),
            "+" => (BinaryOp::Add, 9),
            "-" => (BinaryOp::Sub, 9),
            "*" => (BinaryOp::Mul, 10),
            "/" => (BinaryOp::Div, 10),
            "%" => (BinaryOp::Rem, 10),
            _ => return None,
        })
    }

    /// Precedence climbing over left-associative binary operators.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some((op, prec)) = self.binary_op() {
            if prec <= min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec)?;
            let span = lhs.span.to(&rhs.span);
            lhs = self.new_expr(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        self.check_unsupported()?;
        let start = self.tok().span;
        let op = if self.tok().kind == TokenKind::Punct {
            match self.text() {
                "-" => Some(UnaryOp::Neg),
                "+" => Some(UnaryOp::Plus),
                "!" => Some(UnaryOp::Not),
                "~" => Some(UnaryOp::BitNot),
                "&" => Some(UnaryOp::AddrOf),
                "*" => Some(UnaryOp::Deref),
                "++" => Some(UnaryOp::PreInc),
                "--" => Some(UnaryOp::PreDec),
                _ => None,
            }
        } else {
            None
        };
        if let Some(op) = op {
            self.bump();
            let operand = self.unary()?;
            let span = start.to(&operand.span);
            return Ok(self.new_expr(
                ExprKind::Unary {
                    op,
                    operand: Box::new(operand),
                },
                span,
            ));
        }
        if self.is("(") && self.cast_ahead() {
            return Err(self.unsupported(start, "cast"));
        }
        self.postfix()
    }

    fn cast_ahead(&self) -> bool {
        let t = self.tok_at(1);
        if t.kind != TokenKind::Ident {
            return false;
        }
        let name = t.text(self.src);
        matches!(
            name,
            "int" | "long" | "double" | "bool" | "char" | "const" | "void" | "float" | "unsigned"
        ) || (self.class_names.contains(name) && (self.is_at(2, ")") || self.is_at(2, "*")))
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.is("(") {
                self.bump();
                let mut args = Vec::new();
                while !self.is(")") {
                    args.push(self.assignment()?);
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect(")")?;
                let span = self.span_from(e.span);
                e = self.new_expr(
                    ExprKind::Call {
                        callee: Box::new(e),
                        args,
                    },
                    span,
                );
            } else if self.is("[") {
                self.bump();
                let index = self.expression()?;
                self.expect("]")?;
                let span = self.span_from(e.span);
                e = self.new_expr(
                    ExprKind::Index {
                        base: Box::new(e),
                        index: Box::new(index),
                    },
                    span,
                );
            } else if self.is(".") || self.is("->") {
                let arrow = self.bump().text(self.src) == "->";
                let (field, _) = self.ident()?;
                let span = self.span_from(e.span);
                e = self.new_expr(
                    ExprKind::Member {
                        base: Box::new(e),
                        field,
                        arrow,
                    },
                    span,
                );
            } else if self.is("++") || self.is("--") {
                let op = if self.bump().text(self.src) == "++" {
                    PostfixOp::Inc
                } else {
                    PostfixOp::Dec
                };
                let span = self.span_from(e.span);
                e = self.new_expr(
                    ExprKind::Postfix {
                        op,
                        operand: Box::new(e),
                    },
                    span,
                );
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        self.check_unsupported()?;
        let t = self.tok();
        let text = t.text(self.src);
        let kind = match t.kind {
            TokenKind::Int => {
                let v = parse_int(text).ok_or_else(|| self.syntax("integer literal out of range"))?;
                self.bump();
                ExprKind::Int(v)
            }
            TokenKind::Float => {
                let trimmed = text.trim_end_matches(['f', 'F', 'l', 'L']);
                let v: f64 = trimmed
                    .parse()
                    .map_err(|_| self.syntax("malformed floating literal"))?;
                self.bump();
                ExprKind::Float(v)
            }
            TokenKind::Str => {
                let s = unescape(&text[1..text.len() - 1]);
                self.bump();
                ExprKind::Str(s)
            }
            TokenKind::Char => {
                let s = unescape(&text[1..text.len() - 1]);
                self.bump();
                ExprKind::Char(s.bytes().next().unwrap_or(0) as i64)
            }
            TokenKind::Ident => match text {
                "true" => {
                    self.bump();
                    ExprKind::Bool(true)
                }
                "false" => {
                    self.bump();
                    ExprKind::Bool(false)
                }
                "nullptr" | "NULL" => {
                    self.bump();
                    ExprKind::Null
                }
                "this" => {
                    self.bump();
                    ExprKind::This
                }
                _ => {
                    let mut path = vec![self.ident()?.0];
                    while self.is("::") {
                        self.bump();
                        path.push(self.ident()?.0);
                    }
                    if self.is("<") && path.len() > 1 && path[0] == "std" {
                        let span = self.tok().span;
                        // `std::max<int>(...)`, `std::vector<int>`
                        if self.tok_at(1).kind == TokenKind::Ident && self.is_at(2, ">") {
                            return Err(self.unsupported(span, "template"));
                        }
                    }
                    ExprKind::Name(path)
                }
            },
            TokenKind::Punct if text == "(" => {
                self.bump();
                let inner = self.expression()?;
                self.expect(")")?;
                let span = self.span_from(t.span);
                return Ok(self.new_expr(ExprKind::Paren(Box::new(inner)), span));
            }
            TokenKind::Punct if text == "[" => {
                return Err(self.unsupported(t.span, "lambda"));
            }
            _ => {
                return Err(self.syntax(format!("expected expression, found {}", self.describe())))
            }
        };
        let span = self.span_from(t.span);
        Ok(self.new_expr(kind, span))
    }
}

pub(crate) fn parse_int(text: &str) -> Option<i64> {
    let t = text.trim_end_matches(['u', 'U', 'l', 'L']);
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()
    } else if t.len() > 1 && t.starts_with('0') {
        i64::from_str_radix(&t[1..], 8).ok()
    } else {
        t.parse().ok()
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('0') => out.push('\0'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

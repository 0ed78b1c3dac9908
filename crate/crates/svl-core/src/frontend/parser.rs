//! Recursive descent parser for SVL.
//!
//! The token stream already has `/*@ @*/` markers stripped, so specification
//! constructs parse as ordinary grammar productions. Resource expressions
//! are disambiguated from pure expressions with token-index rewinding: a
//! parenthesized resource conjunction is retried as such when expression
//! parsing fails or stops at a resource operator.

use super::ast::*;
use super::lexer::{lex, LexError, Tok, Token};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at {span}: {message}")]
pub struct ParseError {
    pub message: String,
    pub span: Span,
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError {
            message: e.message,
            span: e.span,
        }
    }
}

type PResult<T> = Result<T, ParseError>;

const MODIFIERS: &[&str] = &["public", "private", "final", "static"];

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

pub fn parse_tokens(source: &str) -> PResult<Program> {
    let toks = lex(source)?;
    Parser { toks, pos: 0 }.file()
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if self.peek() == &tok {
            Ok(self.bump().span)
        } else {
            Err(self.err(format!("expected {tok}, found {}", self.peek())))
        }
    }

    fn err(&self, message: String) -> ParseError {
        ParseError {
            message,
            span: self.span(),
        }
    }

    fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == s)
    }

    fn eat_ident(&mut self, s: &str) -> bool {
        if self.is_ident(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_ident(&mut self, s: &str) -> PResult<Span> {
        if self.is_ident(s) {
            Ok(self.bump().span)
        } else {
            Err(self.err(format!("expected `{s}`, found {}", self.peek())))
        }
    }

    fn any_ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            other => Err(self.err(format!("expected identifier, found {other}"))),
        }
    }

    fn int_lit(&mut self) -> PResult<i128> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::IntLit(n) => {
                self.bump();
                Ok(if neg { -n } else { n })
            }
            other => Err(self.err(format!("expected integer literal, found {other}"))),
        }
    }

    // ----- top level ---------------------------------------------------------

    fn file(&mut self) -> PResult<Program> {
        let mut classes = Vec::new();
        let mut harness = None;
        while self.peek() != &Tok::Eof {
            if self.is_ident("harness") {
                if harness.is_some() {
                    return Err(self.err("duplicate harness block".into()));
                }
                harness = Some(self.harness()?);
            } else {
                classes.push(self.class()?);
            }
        }
        Ok(Program { classes, harness })
    }

    fn class(&mut self) -> PResult<ClassDecl> {
        let mut givens = Vec::new();
        while self.is_ident("given") {
            givens.extend(self.given_decls()?);
        }
        let mut mods = Vec::new();
        while let Tok::Ident(s) = self.peek() {
            if MODIFIERS.contains(&s.as_str()) {
                mods.push(self.bump());
            } else {
                break;
            }
        }
        let span = self.expect_ident("class")?;
        let (name, _) = self.any_ident()?;
        self.expect(Tok::LBrace)?;

        let mut class = ClassDecl {
            name: name.clone(),
            givens,
            roles: Vec::new(),
            roles_span: span,
            ghost_fields: Vec::new(),
            fields: Vec::new(),
            predicates: Vec::new(),
            functions: Vec::new(),
            methods: Vec::new(),
            span,
        };

        let mut pending_givens: Vec<Param> = Vec::new();
        let mut pending_requires: Vec<ResourceExpr> = Vec::new();
        let mut pending_ensures: Vec<ResourceExpr> = Vec::new();

        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            if self.peek() == &Tok::Eof {
                return Err(self.err("unterminated class body".into()));
            }
            if self.is_ident("given") {
                pending_givens.extend(self.method_givens()?);
                continue;
            }
            if self.is_ident("requires") {
                self.bump();
                pending_requires.push(self.resource()?);
                self.expect(Tok::Semi)?;
                continue;
            }
            if self.is_ident("ensures") {
                self.bump();
                pending_ensures.push(self.resource()?);
                self.expect(Tok::Semi)?;
                continue;
            }
            if self.is_ident("ghost") {
                self.ghost_class_member(&mut class)?;
                continue;
            }
            if self.is_ident("group") || self.is_ident("resource") {
                class.predicates.push(self.predicate()?);
                continue;
            }

            // Member with optional modifiers.
            let mut modifiers = Vec::new();
            while let Tok::Ident(s) = self.peek() {
                if MODIFIERS.contains(&s.as_str()) {
                    modifiers.push(match self.bump().tok {
                        Tok::Ident(s) => s,
                        _ => unreachable!(),
                    });
                } else {
                    break;
                }
            }

            if self.is_ident("AtomicInteger") {
                let span = self.bump().span;
                let proto = self.proto_args()?;
                let (fname, _) = self.any_ident()?;
                self.expect(Tok::Semi)?;
                class.fields.push(FieldDecl::Atomic {
                    modifiers,
                    name: fname,
                    proto,
                    span,
                });
                continue;
            }

            if self.is_ident(&name) && self.peek_at(1) == &Tok::LParen {
                // Constructor.
                let span = self.span();
                self.bump();
                let params = self.param_list()?;
                let body = self.block()?;
                class.methods.push(MethodDecl {
                    modifiers,
                    name: name.clone(),
                    is_constructor: true,
                    givens: std::mem::take(&mut pending_givens),
                    params,
                    requires: std::mem::take(&mut pending_requires),
                    ensures: std::mem::take(&mut pending_ensures),
                    body,
                    span,
                });
                continue;
            }

            let ty_span = self.span();
            let ty = self.parse_type()?;
            let (mname, mspan) = self.any_ident()?;
            if self.peek() == &Tok::LParen {
                if ty == Type::Void {
                    let params = self.param_list()?;
                    let body = self.block()?;
                    class.methods.push(MethodDecl {
                        modifiers,
                        name: mname,
                        is_constructor: false,
                        givens: std::mem::take(&mut pending_givens),
                        params,
                        requires: std::mem::take(&mut pending_requires),
                        ensures: std::mem::take(&mut pending_ensures),
                        body,
                        span: mspan,
                    });
                } else {
                    // Pure function: `frac share(role r, int c) { ... return e; }`
                    let params = self.param_list()?;
                    self.expect(Tok::LBrace)?;
                    let mut body = Vec::new();
                    while !self.is_ident("return") {
                        if self.peek() == &Tok::RBrace || self.peek() == &Tok::Eof {
                            return Err(self.err("function body must end in `return`".into()));
                        }
                        body.push(self.stmt()?);
                    }
                    self.expect_ident("return")?;
                    let ret_expr = self.expr()?;
                    self.expect(Tok::Semi)?;
                    self.expect(Tok::RBrace)?;
                    class.functions.push(FunctionDecl {
                        name: mname,
                        ret: ty,
                        params,
                        body,
                        ret_expr,
                        span: mspan,
                    });
                }
            } else {
                // Data field.
                self.expect(Tok::Semi)?;
                class.fields.push(FieldDecl::Data {
                    modifiers,
                    name: mname,
                    ty,
                    span: ty_span,
                });
            }
        }

        if !pending_givens.is_empty() || !pending_requires.is_empty() || !pending_ensures.is_empty()
        {
            return Err(ParseError {
                message: "contract clauses without a following method".into(),
                span: class.span,
            });
        }
        Ok(class)
    }

    fn ghost_class_member(&mut self, class: &mut ClassDecl) -> PResult<()> {
        let span = self.expect_ident("ghost")?;
        if self.is_ident("Set") {
            // ghost Set<role> roles = {T, W};
            self.bump();
            self.expect(Tok::Lt)?;
            self.expect_ident("role")?;
            self.expect(Tok::Gt)?;
            self.expect_ident("roles")?;
            self.expect(Tok::Assign)?;
            self.expect(Tok::LBrace)?;
            let mut roles = Vec::new();
            loop {
                let (r, _) = self.any_ident()?;
                roles.push(r);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RBrace)?;
            self.expect(Tok::Semi)?;
            if !class.roles.is_empty() {
                return Err(ParseError {
                    message: "duplicate roles declaration".into(),
                    span,
                });
            }
            class.roles = roles;
            class.roles_span = span;
            return Ok(());
        }
        let final_ = self.eat_ident("final");
        let ty = self.parse_type()?;
        let (name, _) = self.any_ident()?;
        self.expect(Tok::Semi)?;
        class.ghost_fields.push(GhostField {
            name,
            ty,
            final_,
            span,
        });
        Ok(())
    }

    fn predicate(&mut self) -> PResult<PredicateDecl> {
        let span = self.span();
        let group = self.eat_ident("group");
        self.expect_ident("resource")?;
        let (name, _) = self.any_ident()?;
        let params = self.param_list()?;
        self.expect(Tok::Assign)?;
        let body = self.resource()?;
        self.expect(Tok::Semi)?;
        Ok(PredicateDecl {
            name,
            group,
            params,
            body,
            span,
        })
    }

    /// Class-level `given` declarations: simple variables or families.
    fn given_decls(&mut self) -> PResult<Vec<GivenDecl>> {
        let span = self.expect_ident("given")?;
        let group = self.eat_ident("group");
        if self.peek() == &Tok::LParen {
            self.bump();
            let mut params = vec![self.parse_type()?];
            while self.eat(&Tok::Comma) {
                params.push(self.parse_type()?);
            }
            self.expect(Tok::Minus)?;
            self.expect(Tok::Gt)?;
            let ret = self.parse_type()?;
            self.expect(Tok::RParen)?;
            let (name, _) = self.any_ident()?;
            self.expect(Tok::Semi)?;
            return Ok(vec![GivenDecl::Family {
                name,
                params,
                ret,
                group,
                span,
            }]);
        }
        if group {
            return Err(self.err("`group` only applies to resource families".into()));
        }
        let mut out = Vec::new();
        loop {
            let ty = self.parse_type()?;
            let (name, nspan) = self.any_ident()?;
            out.push(GivenDecl::Var {
                name,
                ty,
                span: nspan,
            });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::Semi)?;
        Ok(out)
    }

    /// Method-level `given int d, frac p;` clause.
    fn method_givens(&mut self) -> PResult<Vec<Param>> {
        self.expect_ident("given")?;
        let mut out = Vec::new();
        loop {
            let ty = self.parse_type()?;
            let (name, span) = self.any_ident()?;
            out.push(Param { name, ty, span });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::Semi)?;
        Ok(out)
    }

    fn proto_args(&mut self) -> PResult<ProtoArgs> {
        self.expect(Tok::Lt)?;
        let (roles, _) = self.any_ident()?;
        self.expect(Tok::Comma)?;
        let (inv, _) = self.any_ident()?;
        self.expect(Tok::Comma)?;
        let (share, _) = self.any_ident()?;
        self.expect(Tok::Comma)?;
        let (trans, _) = self.any_ident()?;
        // Additive precedence only: `>` closes the parameter list.
        let max = if self.eat(&Tok::Comma) {
            Some(Box::new(self.add_expr()?))
        } else {
            None
        };
        self.expect(Tok::Gt)?;
        Ok(ProtoArgs {
            roles,
            inv,
            share,
            trans,
            max,
        })
    }

    fn param_list(&mut self) -> PResult<Vec<Param>> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            let ty = self.parse_type()?;
            let (name, span) = self.any_ident()?;
            out.push(Param { name, ty, span });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(out)
    }

    fn parse_type(&mut self) -> PResult<Type> {
        let (name, _) = self.any_ident()?;
        Ok(match name.as_str() {
            "int" => Type::Int,
            "boolean" => Type::Bool,
            "frac" => Type::Frac,
            "role" => Type::Role,
            "resource" => Type::Resource,
            "void" => Type::Void,
            other => Type::Class(other.to_string()),
        })
    }

    // ----- statements ----------------------------------------------------------

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.peek() == &Tok::Eof {
                return Err(self.err("unterminated block".into()));
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        if self.is_ident("loop_invariant") || self.is_ident("while") {
            return self.while_stmt();
        }
        if self.is_ident("if") {
            self.bump();
            self.expect(Tok::LParen)?;
            let cond = self.expr()?;
            self.expect(Tok::RParen)?;
            let then_branch = self.block()?;
            let else_branch = if self.eat_ident("else") {
                self.block()?
            } else {
                Vec::new()
            };
            return Ok(Stmt::If {
                cond,
                then_branch,
                else_branch,
                span,
            });
        }
        if self.is_ident("ghost") {
            self.bump();
            let ty = self.parse_type()?;
            let (name, _) = self.any_ident()?;
            self.expect(Tok::Assign)?;
            let init = self.expr()?;
            self.expect(Tok::Semi)?;
            return Ok(Stmt::GhostDecl {
                ty,
                name,
                init,
                span,
            });
        }
        if self.is_ident("set") {
            self.bump();
            let (target, _) = self.any_ident()?;
            self.expect(Tok::Assign)?;
            let value = self.expr()?;
            self.expect(Tok::Semi)?;
            return Ok(Stmt::GhostSet {
                target,
                value,
                span,
            });
        }
        if self.is_ident("fold") || self.is_ident("unfold") {
            let is_fold = self.is_ident("fold");
            self.bump();
            let pred = self.pred_ref()?;
            let args = self.call_args()?;
            self.expect(Tok::Semi)?;
            return Ok(if is_fold {
                Stmt::Fold { pred, args, span }
            } else {
                Stmt::Unfold { pred, args, span }
            });
        }
        if self.is_ident("assert") {
            self.bump();
            let cond = self.expr()?;
            self.expect(Tok::Semi)?;
            return Ok(Stmt::Assert { cond, span });
        }
        if self.is_ident("int") || self.is_ident("boolean") {
            let ty = self.parse_type()?;
            let (name, _) = self.any_ident()?;
            let init = if self.eat(&Tok::Assign) {
                Some(self.expr()?)
            } else {
                None
            };
            self.expect(Tok::Semi)?;
            return Ok(Stmt::VarDecl {
                ty,
                name,
                init,
                span,
            });
        }
        if self.is_ident("this") && self.peek_at(1) == &Tok::Dot {
            // this.f = e;
            self.bump();
            self.bump();
            let (field, _) = self.any_ident()?;
            self.expect(Tok::Assign)?;
            let value = self.expr()?;
            self.expect(Tok::Semi)?;
            return Ok(Stmt::FieldAssign { field, value, span });
        }
        if matches!(self.peek(), Tok::Ident(_)) && self.peek_at(1) == &Tok::Assign {
            let (target, _) = self.any_ident()?;
            self.expect(Tok::Assign)?;
            let value = self.expr()?;
            self.expect(Tok::Semi)?;
            return Ok(Stmt::Assign {
                target,
                value,
                span,
            });
        }
        let expr = self.expr()?;
        self.expect(Tok::Semi)?;
        Ok(Stmt::ExprStmt { expr, span })
    }

    fn while_stmt(&mut self) -> PResult<Stmt> {
        let mut invariants = Vec::new();
        while self.is_ident("loop_invariant") {
            self.bump();
            invariants.push(self.resource()?);
            self.expect(Tok::Semi)?;
        }
        let span = self.span();
        if !self.is_ident("while") {
            return Err(self.err("loop_invariant clauses must precede a while loop".into()));
        }
        if invariants.is_empty() {
            return Err(ParseError {
                message: "missing loop invariant".into(),
                span,
            });
        }
        self.bump();
        self.expect(Tok::LParen)?;
        let cond = self.expr()?;
        self.expect(Tok::RParen)?;
        let body = self.block()?;
        Ok(Stmt::While {
            cond,
            invariants,
            body,
            span,
        })
    }

    fn pred_ref(&mut self) -> PResult<PredRef> {
        let (first, _) = self.any_ident()?;
        if self.eat(&Tok::Dot) {
            let (name, _) = self.any_ident()?;
            Ok(PredRef {
                cell: Some(first),
                name,
            })
        } else {
            Ok(PredRef {
                cell: None,
                name: first,
            })
        }
    }

    // ----- resource expressions --------------------------------------------------

    fn resource(&mut self) -> PResult<ResourceExpr> {
        let mut acc = self.rconjunct()?;
        while self.eat(&Tok::StarStar) {
            let rhs = self.rconjunct()?;
            acc = ResourceExpr::SepConj(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn rconjunct(&mut self) -> PResult<ResourceExpr> {
        let span = self.span();
        if self.eat_ident("emp") {
            return Ok(ResourceExpr::Emp { span });
        }
        if self.is_ident("PointsTo") || self.is_ident("Perm") {
            let bare_perm = self.is_ident("Perm");
            self.bump();
            self.expect(Tok::LParen)?;
            let (recv, field) = self.location()?;
            self.expect(Tok::Comma)?;
            let frac = self.expr()?;
            let value = if bare_perm {
                ValuePat::Wildcard(span)
            } else {
                self.expect(Tok::Comma)?;
                self.value_pat()?
            };
            self.expect(Tok::RParen)?;
            return Ok(ResourceExpr::PointsTo {
                recv,
                field,
                frac,
                value,
                span,
            });
        }
        if self.peek() == &Tok::LParen && self.peek_at(1) == &Tok::ForallStar {
            self.bump();
            self.bump();
            self.expect_ident("int")?;
            let (binder, _) = self.any_ident()?;
            self.expect(Tok::Semi)?;
            let range = self.expr()?;
            self.expect(Tok::Semi)?;
            let body = self.resource()?;
            self.expect(Tok::RParen)?;
            return Ok(ResourceExpr::IterStar {
                binder,
                range,
                body: Box::new(body),
                span,
            });
        }
        if self.peek() == &Tok::LParen {
            // Either a parenthesized pure expression continuing as an
            // expression, or a parenthesized resource conjunction.
            let snapshot = self.pos;
            match self.expr() {
                Ok(e) if self.at_resource_follow() => return self.finish_conjunct(e, span),
                _ => {
                    self.pos = snapshot;
                    self.expect(Tok::LParen)?;
                    let inner = self.resource()?;
                    self.expect(Tok::RParen)?;
                    return Ok(inner);
                }
            }
        }
        let e = self.expr()?;
        self.finish_conjunct(e, span)
    }

    fn at_resource_follow(&self) -> bool {
        matches!(
            self.peek(),
            Tok::StarStar | Tok::Semi | Tok::RParen | Tok::Implies | Tok::Eof
        )
    }

    fn finish_conjunct(&mut self, e: Expr, span: Span) -> PResult<ResourceExpr> {
        if self.eat(&Tok::Implies) {
            let body = self.rconjunct()?;
            return Ok(ResourceExpr::Implies {
                guard: e,
                body: Box::new(body),
                span,
            });
        }
        if !self.at_resource_follow() {
            return Err(self.err(format!(
                "expected `**`, `==>` or end of clause, found {}",
                self.peek()
            )));
        }
        Ok(ResourceExpr::Pure(e))
    }

    fn location(&mut self) -> PResult<(Expr, String)> {
        let span = self.span();
        if self.eat_ident("this") {
            self.expect(Tok::Dot)?;
            let (field, _) = self.any_ident()?;
            return Ok((Expr::Var("this".into(), span), field));
        }
        let (obj, ospan) = self.any_ident()?;
        self.expect(Tok::Dot)?;
        let (field, _) = self.any_ident()?;
        Ok((Expr::Var(obj, ospan), field))
    }

    fn value_pat(&mut self) -> PResult<ValuePat> {
        let span = self.span();
        if self.eat(&Tok::Question) {
            if let Tok::Ident(name) = self.peek().clone() {
                self.bump();
                return Ok(ValuePat::Bind(name, span));
            }
            return Ok(ValuePat::Wildcard(span));
        }
        Ok(ValuePat::Expr(self.expr()?))
    }

    // ----- expressions -------------------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        self.ternary()
    }

    fn ternary(&mut self) -> PResult<Expr> {
        let cond = self.or_expr()?;
        if self.eat(&Tok::Question) {
            let span = cond.span();
            let then_expr = self.expr()?;
            self.expect(Tok::Colon)?;
            let else_expr = self.expr()?;
            return Ok(Expr::Ternary {
                cond: Box::new(cond),
                then_expr: Box::new(then_expr),
                else_expr: Box::new(else_expr),
                span,
            });
        }
        Ok(cond)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.peek() == &Tok::OrOr {
            let span = self.bump().span;
            let rhs = self.and_expr()?;
            lhs = Expr::Binary {
                op: BinOp::Or,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.cmp_expr()?;
        while self.peek() == &Tok::AndAnd {
            let span = self.bump().span;
            let rhs = self.cmp_expr()?;
            lhs = Expr::Binary {
                op: BinOp::And,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::EqEq,
            Tok::NotEq => BinOp::NotEq,
            _ => return Ok(lhs),
        };
        let span = self.bump().span;
        let rhs = self.add_expr()?;
        Ok(Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
            span,
        })
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let span = self.bump().span;
            let rhs = self.mul_expr()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            let span = self.bump().span;
            let rhs = self.unary_expr()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        let span = self.span();
        if self.eat(&Tok::Not) {
            let expr = self.unary_expr()?;
            return Ok(Expr::Unary {
                op: UnOp::Not,
                expr: Box::new(expr),
                span,
            });
        }
        if self.eat(&Tok::Minus) {
            let expr = self.unary_expr()?;
            return Ok(Expr::Unary {
                op: UnOp::Neg,
                expr: Box::new(expr),
                span,
            });
        }
        self.postfix_expr()
    }

    fn postfix_expr(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::IntLit(n) => {
                self.bump();
                Ok(Expr::IntLit(n, span))
            }
            Tok::Question => {
                // `?x` binder or `?` wildcard, validated during resolution.
                self.bump();
                if let Tok::Ident(name) = self.peek().clone() {
                    self.bump();
                    Ok(Expr::Hole(Some(name), span))
                } else {
                    Ok(Expr::Hole(None, span))
                }
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(id) => {
                match id.as_str() {
                    "true" => {
                        self.bump();
                        return Ok(Expr::BoolLit(true, span));
                    }
                    "false" => {
                        self.bump();
                        return Ok(Expr::BoolLit(false, span));
                    }
                    "new" => {
                        self.bump();
                        self.expect_ident("AtomicInteger")?;
                        let proto = self.proto_args()?;
                        self.expect(Tok::LParen)?;
                        let init = self.expr()?;
                        self.expect(Tok::RParen)?;
                        return Ok(Expr::NewAtomic {
                            proto,
                            init: Box::new(init),
                            span,
                        });
                    }
                    "this" => {
                        self.bump();
                        self.expect(Tok::Dot)?;
                        let (field, fspan) = self.any_ident()?;
                        if self.peek() == &Tok::LParen {
                            return Err(ParseError {
                                message: "method calls through `this` are not supported".into(),
                                span: fspan,
                            });
                        }
                        return Ok(Expr::Field(field, span));
                    }
                    _ => {}
                }
                self.bump();
                if self.eat(&Tok::Dot) {
                    let (member, mspan) = self.any_ident()?;
                    if self.peek() != &Tok::LParen {
                        return Err(ParseError {
                            message: format!("expected call after `{id}.{member}`"),
                            span: mspan,
                        });
                    }
                    let args = self.call_args()?;
                    return self.qualified_call(id, member, args, span);
                }
                if self.peek() == &Tok::LParen {
                    let args = self.call_args()?;
                    return Ok(Expr::Call {
                        cell: None,
                        name: id,
                        args,
                        span,
                    });
                }
                Ok(Expr::Var(id, span))
            }
            other => Err(self.err(format!("expected expression, found {other}"))),
        }
    }

    fn qualified_call(
        &mut self,
        cell: String,
        member: String,
        args: Vec<Expr>,
        span: Span,
    ) -> PResult<Expr> {
        let op = match member.as_str() {
            "get" => Some(AtomicOp::Get),
            "set" => Some(AtomicOp::Set),
            "compareAndSet" => Some(AtomicOp::Cas),
            _ => None,
        };
        if let Some(op) = op {
            let expected = match op {
                AtomicOp::Get => 0,
                AtomicOp::Set => 1,
                AtomicOp::Cas => 2,
            };
            if args.len() != expected {
                return Err(ParseError {
                    message: format!(
                        "{} takes {expected} argument(s), found {}",
                        op.name(),
                        args.len()
                    ),
                    span,
                });
            }
            let with_args = self.with_clause()?;
            return Ok(Expr::Atomic {
                cell,
                op,
                args,
                with_args,
                span,
            });
        }
        Ok(Expr::Call {
            cell: Some(cell),
            name: member,
            args,
            span,
        })
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(out)
    }

    fn with_clause(&mut self) -> PResult<Vec<(String, Expr)>> {
        if !self.eat_ident("with") {
            return Ok(Vec::new());
        }
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        loop {
            let (name, _) = self.any_ident()?;
            self.expect(Tok::Assign)?;
            let value = self.expr()?;
            out.push((name, value));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(out)
    }

    // ----- harness -------------------------------------------------------------------

    fn harness(&mut self) -> PResult<Harness> {
        let span = self.expect_ident("harness")?;
        let mut class = None;
        let mut ctor_args = Vec::new();
        let mut threads = Vec::new();
        let mut loop_cap = None;
        loop {
            if self.eat_ident("instance") {
                let (cname, _) = self.any_ident()?;
                self.expect(Tok::LParen)?;
                let mut args = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        args.push(self.int_lit()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RParen)?;
                }
                self.expect(Tok::Semi)?;
                if class.is_some() {
                    return Err(ParseError {
                        message: "duplicate instance declaration".into(),
                        span,
                    });
                }
                class = Some(cname);
                ctor_args = args;
                continue;
            }
            if self.is_ident("thread") {
                let tspan = self.bump().span;
                let name = match self.peek().clone() {
                    Tok::StrLit(s) => {
                        self.bump();
                        s
                    }
                    other => {
                        return Err(self.err(format!("expected thread name string, found {other}")))
                    }
                };
                self.expect_ident("role")?;
                let (role, _) = self.any_ident()?;
                let holds = if self.eat_ident("holds") {
                    let n = self.int_lit()?;
                    let d = if self.eat(&Tok::Slash) {
                        self.int_lit()?
                    } else {
                        1
                    };
                    Some((n, d))
                } else {
                    None
                };
                self.expect(Tok::Colon)?;
                let mut script = Vec::new();
                loop {
                    let ospan = self.span();
                    if self.eat_ident("access") {
                        if self.eat_ident("read") {
                            script.push(HarnessOp::AccessRead { span: ospan });
                        } else if self.eat_ident("write") {
                            script.push(HarnessOp::AccessWrite { span: ospan });
                        } else {
                            return Err(self.err("expected `read` or `write`".into()));
                        }
                    } else {
                        let (method, _) = self.any_ident()?;
                        self.expect(Tok::LParen)?;
                        let mut args = Vec::new();
                        if !self.eat(&Tok::RParen) {
                            loop {
                                args.push(self.int_lit()?);
                                if !self.eat(&Tok::Comma) {
                                    break;
                                }
                            }
                            self.expect(Tok::RParen)?;
                        }
                        script.push(HarnessOp::Call {
                            method,
                            args,
                            span: ospan,
                        });
                    }
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::Semi)?;
                threads.push(HarnessThread {
                    name,
                    role,
                    holds,
                    script,
                    span: tspan,
                });
                continue;
            }
            if self.eat_ident("loop_cap") {
                let n = self.int_lit()?;
                if n <= 0 {
                    return Err(self.err("loop_cap must be positive".into()));
                }
                loop_cap = Some(n as u32);
                self.expect(Tok::Semi)?;
                continue;
            }
            break;
        }
        let class = class.ok_or_else(|| ParseError {
            message: "harness requires an instance declaration".into(),
            span,
        })?;
        if threads.is_empty() {
            return Err(ParseError {
                message: "harness declares no threads".into(),
                span,
            });
        }
        Ok(Harness {
            class,
            ctor_args,
            threads,
            loop_cap,
            span,
        })
    }
}

//! Type and purity diagnostics over a resolved program.
//!
//! Returns an empty list exactly when every resource expression is
//! resource-typed where required and boolean where required, predicate
//! applications match their declarations, and share/trans functions are pure
//! functions of their parameters.

use super::ast::*;
use super::resolve::{ClassInfo, GivenInfo, ResolvedProgram, HANDLE, SYNC_ROLE};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub span: Span,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

pub fn wellformed(rp: &ResolvedProgram) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for class in &rp.program.classes {
        let info = &rp.classes[&class.name];
        Checker {
            class,
            info,
            diags: &mut out,
        }
        .run();
    }
    out
}

/// Handle parameter types: `handle(role r, int d, frac p)`.
pub fn handle_param_types() -> Vec<Type> {
    vec![Type::Role, Type::Int, Type::Frac]
}

struct Checker<'a> {
    class: &'a ClassDecl,
    info: &'a ClassInfo,
    diags: &'a mut Vec<Diagnostic>,
}

type Env = Vec<BTreeMap<String, Type>>;

fn lookup(env: &Env, name: &str) -> Option<Type> {
    env.iter().rev().find_map(|f| f.get(name).cloned())
}

impl Checker<'_> {
    fn report(&mut self, span: Span, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            span,
            message: message.into(),
        });
    }

    fn run(&mut self) {
        for g in &self.class.givens {
            if let GivenDecl::Family {
                params, ret, span, ..
            } = g
            {
                if *ret == Type::Resource && params.as_slice() != [Type::Frac] {
                    self.report(
                        *span,
                        "resource families take a single frac parameter",
                    );
                }
            }
        }
        for p in &self.class.predicates {
            if p.group {
                match p.params.last() {
                    Some(last) if last.ty == Type::Frac => {}
                    _ => self.report(
                        p.span,
                        format!("group predicate `{}` needs a final frac parameter", p.name),
                    ),
                }
            }
            let mut env: Env = vec![p
                .params
                .iter()
                .map(|q| (q.name.clone(), q.ty.clone()))
                .collect()];
            self.resource(&p.body, &mut env);
        }
        for f in &self.class.functions {
            self.function(f);
        }
        for field in &self.class.fields {
            if let FieldDecl::Atomic { proto, span, .. } = field {
                self.proto(proto, *span);
            }
        }
        for m in &self.class.methods {
            self.method(m);
        }
    }

    fn proto(&mut self, proto: &ProtoArgs, span: Span) {
        if let Some(pi) = self.info.preds.get(&proto.inv) {
            let p = &self.class.predicates[*pi];
            if !p.group || p.params.len() != 1 || p.params[0].ty != Type::Frac {
                self.report(
                    span,
                    format!(
                        "protocol invariant `{}` must be a group resource over one frac",
                        proto.inv
                    ),
                );
            }
        }
        if let Some(fi) = self.info.funcs.get(&proto.share) {
            let f = &self.class.functions[*fi];
            let tys: Vec<&Type> = f.params.iter().map(|p| &p.ty).collect();
            if f.ret != Type::Frac || tys != [&Type::Role, &Type::Int] {
                self.report(
                    span,
                    format!("share function `{}` must be (role, int) -> frac", proto.share),
                );
            }
        }
        if let Some(fi) = self.info.funcs.get(&proto.trans) {
            let f = &self.class.functions[*fi];
            let tys: Vec<&Type> = f.params.iter().map(|p| &p.ty).collect();
            if f.ret != Type::Bool || tys != [&Type::Role, &Type::Int, &Type::Int] {
                self.report(
                    span,
                    format!(
                        "trans predicate `{}` must be (role, int, int) -> boolean",
                        proto.trans
                    ),
                );
            }
        }
        if let Some(max) = &proto.max {
            let mut env: Env = vec![BTreeMap::new()];
            self.expect(max, Type::Int, &mut env);
        }
    }

    fn function(&mut self, f: &FunctionDecl) {
        let mut env: Env = vec![f
            .params
            .iter()
            .map(|p| (p.name.clone(), p.ty.clone()))
            .collect()];
        env.push(BTreeMap::new());
        for s in &f.body {
            match s {
                Stmt::VarDecl {
                    ty,
                    name,
                    init: Some(init),
                    ..
                } => {
                    self.expect(init, ty.clone(), &mut env);
                    env.last_mut().unwrap().insert(name.clone(), ty.clone());
                }
                Stmt::VarDecl { span, .. } => {
                    self.report(*span, "function locals need an initializer");
                }
                Stmt::Assign { target, value, .. } => {
                    if let Some(ty) = lookup(&env, target) {
                        self.expect(value, ty, &mut env);
                    }
                }
                other => {
                    self.report(
                        other.span(),
                        format!("`{}` must be pure", f.name),
                    );
                }
            }
        }
        self.expect(&f.ret_expr, f.ret.clone(), &mut env);
    }

    fn method(&mut self, m: &MethodDecl) {
        let mut env: Env = vec![BTreeMap::new()];
        for g in &m.givens {
            env.last_mut().unwrap().insert(g.name.clone(), g.ty.clone());
        }
        for p in &m.params {
            env.last_mut().unwrap().insert(p.name.clone(), p.ty.clone());
        }
        for r in &m.requires {
            self.resource(r, &mut env);
        }
        let mut post_env = env.clone();
        for r in &m.ensures {
            self.resource(r, &mut post_env);
        }
        env.push(BTreeMap::new());
        self.stmts(&m.body, &mut env);
    }

    fn stmts(&mut self, stmts: &[Stmt], env: &mut Env) {
        for s in stmts {
            self.stmt(s, env);
        }
    }

    fn stmt(&mut self, s: &Stmt, env: &mut Env) {
        match s {
            Stmt::VarDecl { ty, name, init, .. } => {
                if let Some(e) = init {
                    self.expect(e, ty.clone(), env);
                }
                env.last_mut().unwrap().insert(name.clone(), ty.clone());
            }
            Stmt::Assign { target, value, .. } => {
                if let Some(ty) = lookup(env, target) {
                    self.expect(value, ty, env);
                }
            }
            Stmt::FieldAssign { field, value, span } => {
                if let Some((ty, _)) = self.info.data_fields.get(field) {
                    self.expect(value, ty.clone(), env);
                } else if self.info.atomic_fields.contains_key(field) {
                    if let Expr::NewAtomic { init, .. } = value {
                        self.expect(init, Type::Int, env);
                    } else {
                        self.report(*span, "atomic cells are assigned only from `new`");
                    }
                }
            }
            Stmt::ExprStmt { expr, .. } => {
                self.infer(expr, env);
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                self.expect(cond, Type::Bool, env);
                env.push(BTreeMap::new());
                self.stmts(then_branch, env);
                env.pop();
                env.push(BTreeMap::new());
                self.stmts(else_branch, env);
                env.pop();
            }
            Stmt::While {
                cond,
                invariants,
                body,
                ..
            } => {
                self.expect(cond, Type::Bool, env);
                for inv in invariants {
                    self.resource(inv, env);
                }
                env.push(BTreeMap::new());
                self.stmts(body, env);
                env.pop();
            }
            Stmt::GhostDecl { ty, name, init, .. } => {
                self.expect(init, ty.clone(), env);
                env.last_mut().unwrap().insert(name.clone(), ty.clone());
            }
            Stmt::GhostSet { target, value, .. } => {
                let ty = lookup(env, target)
                    .or_else(|| self.info.ghost_fields.get(target).map(|(t, _)| t.clone()));
                if let Some(ty) = ty {
                    self.expect(value, ty, env);
                }
            }
            Stmt::Fold { pred, args, span } | Stmt::Unfold { pred, args, span } => {
                let params = self.pred_params(pred);
                match params {
                    Some(tys) if tys.len() == args.len() => {
                        for (a, ty) in args.iter().zip(tys) {
                            self.expect(a, ty, env);
                        }
                    }
                    Some(tys) => self.report(
                        *span,
                        format!(
                            "`{pred}` takes {} argument(s), found {}",
                            tys.len(),
                            args.len()
                        ),
                    ),
                    None => {}
                }
            }
            Stmt::Assert { cond, .. } => self.expect(cond, Type::Bool, env),
        }
    }

    fn pred_params(&mut self, pred: &PredRef) -> Option<Vec<Type>> {
        if pred.cell.is_some() && pred.name == HANDLE {
            return Some(handle_param_types());
        }
        if let Some(pi) = self.info.preds.get(&pred.name) {
            return Some(
                self.class.predicates[*pi]
                    .params
                    .iter()
                    .map(|p| p.ty.clone())
                    .collect(),
            );
        }
        if let Some(GivenInfo::Family { params, ret, .. }) = self.info.givens.get(&pred.name) {
            if *ret == Type::Resource {
                return Some(params.clone());
            }
        }
        None
    }

    fn resource(&mut self, r: &ResourceExpr, env: &mut Env) {
        match r {
            ResourceExpr::Pure(e) => self.expect(e, Type::Bool, env),
            ResourceExpr::PointsTo {
                field,
                frac,
                value,
                span,
                ..
            } => {
                self.expect(frac, Type::Frac, env);
                let vty = self
                    .info
                    .data_fields
                    .get(field)
                    .map(|(t, _)| t.clone())
                    .unwrap_or(Type::Int);
                match value {
                    ValuePat::Expr(e) => self.expect(e, vty, env),
                    ValuePat::Bind(name, _) => {
                        env.last_mut().unwrap().insert(name.clone(), vty);
                    }
                    ValuePat::Wildcard(_) => {}
                }
                let _ = span;
            }
            ResourceExpr::Pred { pred, args, span } => match self.pred_params(pred) {
                Some(tys) if tys.len() == args.len() => {
                    for (a, ty) in args.iter().zip(tys) {
                        match a {
                            PredArg::Expr(e) => self.expect(e, ty, env),
                            PredArg::Bind(name, _) => {
                                env.last_mut().unwrap().insert(name.clone(), ty);
                            }
                        }
                    }
                }
                Some(tys) => self.report(
                    *span,
                    format!(
                        "`{pred}` takes {} argument(s), found {}",
                        tys.len(),
                        args.len()
                    ),
                ),
                None => {}
            },
            ResourceExpr::SepConj(a, b) => {
                self.resource(a, env);
                self.resource(b, env);
            }
            ResourceExpr::Implies { guard, body, .. } => {
                self.expect(guard, Type::Bool, env);
                self.resource(body, env);
            }
            ResourceExpr::IterStar {
                binder,
                range,
                body,
                ..
            } => {
                env.push(BTreeMap::new());
                env.last_mut().unwrap().insert(binder.clone(), Type::Int);
                self.expect(range, Type::Bool, env);
                self.resource(body, env);
                env.pop();
            }
            ResourceExpr::Emp { .. } => {}
        }
    }

    /// Checks `e` against an expected type, coercing integer expressions to
    /// fractions where a fraction is required.
    fn expect(&mut self, e: &Expr, expected: Type, env: &mut Env) {
        if let Some(found) = self.infer(e, env) {
            let ok = found == expected || (expected == Type::Frac && found == Type::Int);
            if !ok {
                self.report(
                    e.span(),
                    format!("expected {expected}, found {found}"),
                );
            }
        }
    }

    /// Infers a type; `None` means an error was already reported.
    fn infer(&mut self, e: &Expr, env: &mut Env) -> Option<Type> {
        match e {
            Expr::IntLit(..) => Some(Type::Int),
            Expr::BoolLit(..) => Some(Type::Bool),
            Expr::Hole(..) => None,
            Expr::Var(name, _) => {
                if let Some(ty) = lookup(env, name) {
                    return Some(ty);
                }
                if name == SYNC_ROLE || self.info.roles.contains(name) {
                    return Some(Type::Role);
                }
                if let Some(GivenInfo::Var(ty)) = self.info.givens.get(name) {
                    return Some(ty.clone());
                }
                None
            }
            Expr::Field(name, _) => self
                .info
                .ghost_fields
                .get(name)
                .map(|(t, _)| t.clone())
                .or_else(|| self.info.data_fields.get(name).map(|(t, _)| t.clone())),
            Expr::Unary { op, expr, .. } => match op {
                UnOp::Not => {
                    self.expect(expr, Type::Bool, env);
                    Some(Type::Bool)
                }
                UnOp::Neg => {
                    self.expect(expr, Type::Int, env);
                    Some(Type::Int)
                }
            },
            Expr::Binary { op, lhs, rhs, span } => {
                use BinOp::*;
                match op {
                    And | Or => {
                        self.expect(lhs, Type::Bool, env);
                        self.expect(rhs, Type::Bool, env);
                        Some(Type::Bool)
                    }
                    Div => {
                        // Integer quotients denote fractions; there is no
                        // integer division in the language.
                        self.expect(lhs, Type::Int, env);
                        self.expect(rhs, Type::Int, env);
                        Some(Type::Frac)
                    }
                    Add | Sub | Mul => {
                        let lt = self.infer(lhs, env)?;
                        if lt == Type::Frac {
                            if *op == Mul {
                                self.report(*span, "fractions cannot be multiplied");
                            }
                            self.expect(rhs, Type::Frac, env);
                            Some(Type::Frac)
                        } else {
                            self.expect(lhs, Type::Int, env);
                            self.expect(rhs, Type::Int, env);
                            Some(Type::Int)
                        }
                    }
                    Lt | Le | Gt | Ge => {
                        let lt = self.infer(lhs, env)?;
                        if lt == Type::Frac {
                            self.expect(rhs, Type::Frac, env);
                        } else {
                            self.expect(lhs, Type::Int, env);
                            self.expect(rhs, Type::Int, env);
                        }
                        Some(Type::Bool)
                    }
                    EqEq | NotEq => {
                        let lt = self.infer(lhs, env)?;
                        let rt = self.infer(rhs, env)?;
                        let ok = lt == rt
                            || (lt == Type::Frac && rt == Type::Int)
                            || (lt == Type::Int && rt == Type::Frac);
                        if !ok {
                            self.report(*span, format!("cannot compare {lt} with {rt}"));
                        }
                        Some(Type::Bool)
                    }
                }
            }
            Expr::Ternary {
                cond,
                then_expr,
                else_expr,
                span,
            } => {
                self.expect(cond, Type::Bool, env);
                let tt = self.infer(then_expr, env)?;
                let et = self.infer(else_expr, env)?;
                if tt == et {
                    Some(tt)
                } else if (tt == Type::Frac && et == Type::Int)
                    || (tt == Type::Int && et == Type::Frac)
                {
                    Some(Type::Frac)
                } else {
                    self.report(*span, format!("branches have types {tt} and {et}"));
                    None
                }
            }
            Expr::Call {
                cell: _,
                name,
                args,
                span,
            } => {
                if let Some(fi) = self.info.funcs.get(name) {
                    let f = &self.class.functions[*fi];
                    if f.params.len() != args.len() {
                        self.report(
                            *span,
                            format!(
                                "`{name}` takes {} argument(s), found {}",
                                f.params.len(),
                                args.len()
                            ),
                        );
                        return Some(f.ret.clone());
                    }
                    let param_tys: Vec<Type> = f.params.iter().map(|p| p.ty.clone()).collect();
                    for (a, ty) in args.iter().zip(param_tys) {
                        self.expect(a, ty, env);
                    }
                    return Some(f.ret.clone());
                }
                // Predicate or family used as a value.
                self.report(*span, format!("`{name}` is a resource, not a value"));
                None
            }
            Expr::Atomic { op, args, with_args, .. } => {
                for a in args {
                    self.expect(a, Type::Int, env);
                }
                for (k, v) in with_args {
                    let ty = match k.as_str() {
                        "r" => Type::Role,
                        "d" => Type::Int,
                        _ => Type::Frac,
                    };
                    self.expect(v, ty, env);
                }
                Some(match op {
                    AtomicOp::Get => Type::Int,
                    AtomicOp::Set => Type::Void,
                    AtomicOp::Cas => Type::Bool,
                })
            }
            Expr::NewAtomic { init, .. } => {
                self.expect(init, Type::Int, env);
                Some(Type::Void)
            }
        }
    }
}

//! Name resolution.
//!
//! Resolution builds per-class lookup tables, rejects unknown identifiers and
//! duplicate declarations, validates protocol references and `with` clauses,
//! and rewrites the tree in two ways: bare identifiers naming class fields
//! become field reads, and call-shaped conjuncts naming predicates or
//! resource families become predicate instances.

use super::ast::*;
use std::collections::BTreeMap;

/// The distinguished synchroniser role, always in scope.
pub const SYNC_ROLE: &str = "S";

/// Built-in token predicate of atomic cells.
pub const HANDLE: &str = "handle";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("resolve error at {span}: {message}")]
pub struct ResolveError {
    pub message: String,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum GivenInfo {
    Var(Type),
    Family {
        params: Vec<Type>,
        ret: Type,
        group: bool,
    },
}

#[derive(Debug, Clone, Default)]
pub struct ClassInfo {
    pub index: usize,
    pub roles: Vec<String>,
    pub preds: BTreeMap<String, usize>,
    pub funcs: BTreeMap<String, usize>,
    pub ghost_fields: BTreeMap<String, (Type, bool)>,
    pub atomic_fields: BTreeMap<String, usize>,
    pub data_fields: BTreeMap<String, (Type, bool)>,
    pub givens: BTreeMap<String, GivenInfo>,
    pub methods: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct ResolvedProgram {
    pub program: Program,
    pub classes: BTreeMap<String, ClassInfo>,
}

impl ResolvedProgram {
    pub fn class(&self, name: &str) -> (&ClassDecl, &ClassInfo) {
        let info = &self.classes[name];
        (&self.program.classes[info.index], info)
    }
}

type RResult<T> = Result<T, ResolveError>;

fn err<T>(message: impl Into<String>, span: Span) -> RResult<T> {
    Err(ResolveError {
        message: message.into(),
        span,
    })
}

pub fn resolve(mut program: Program) -> RResult<ResolvedProgram> {
    let mut classes = BTreeMap::new();
    for (index, class) in program.classes.iter().enumerate() {
        if classes.contains_key(&class.name) {
            return err(format!("duplicate class `{}`", class.name), class.span);
        }
        classes.insert(class.name.clone(), build_info(index, class)?);
    }
    for class in &mut program.classes {
        let info = classes[&class.name].clone();
        ClassResolver { info: &info }.run(class)?;
    }
    if let Some(h) = &program.harness {
        resolve_harness(h, &program.classes, &classes)?;
    }
    Ok(ResolvedProgram { program, classes })
}

fn build_info(index: usize, class: &ClassDecl) -> RResult<ClassInfo> {
    let mut info = ClassInfo {
        index,
        ..ClassInfo::default()
    };
    let mut names: BTreeMap<&str, Span> = BTreeMap::new();
    let claim = |name: &str, span: Span, names: &mut BTreeMap<&str, Span>| -> RResult<()> {
        if names.contains_key(name) {
            return err(format!("duplicate declaration `{name}`"), span);
        }
        Ok(())
    };

    for r in &class.roles {
        if r == SYNC_ROLE {
            return err("role `S` is reserved for the synchroniser", class.roles_span);
        }
        if info.roles.contains(r) {
            return err(format!("duplicate role `{r}`"), class.roles_span);
        }
        info.roles.push(r.clone());
    }
    for g in &class.givens {
        claim(g.name(), g.span(), &mut names)?;
        names.insert(
            match g {
                GivenDecl::Var { name, .. } | GivenDecl::Family { name, .. } => name,
            },
            g.span(),
        );
        info.givens.insert(
            g.name().to_string(),
            match g {
                GivenDecl::Var { ty, .. } => GivenInfo::Var(ty.clone()),
                GivenDecl::Family {
                    params, ret, group, ..
                } => GivenInfo::Family {
                    params: params.clone(),
                    ret: ret.clone(),
                    group: *group,
                },
            },
        );
    }
    for f in &class.ghost_fields {
        claim(&f.name, f.span, &mut names)?;
        names.insert(&f.name, f.span);
        info.ghost_fields
            .insert(f.name.clone(), (f.ty.clone(), f.final_));
    }
    for (i, f) in class.fields.iter().enumerate() {
        claim(f.name(), f.span(), &mut names)?;
        names.insert(f.name(), f.span());
        match f {
            FieldDecl::Atomic { name, .. } => {
                info.atomic_fields.insert(name.clone(), i);
            }
            FieldDecl::Data {
                name, ty, modifiers, ..
            } => {
                let final_ = modifiers.iter().any(|m| m == "final");
                info.data_fields.insert(name.clone(), (ty.clone(), final_));
            }
        }
    }
    for (i, p) in class.predicates.iter().enumerate() {
        claim(&p.name, p.span, &mut names)?;
        names.insert(&p.name, p.span);
        if p.name == HANDLE {
            return err("`handle` is the built-in cell predicate", p.span);
        }
        info.preds.insert(p.name.clone(), i);
    }
    for (i, f) in class.functions.iter().enumerate() {
        claim(&f.name, f.span, &mut names)?;
        names.insert(&f.name, f.span);
        info.funcs.insert(f.name.clone(), i);
    }
    for (i, m) in class.methods.iter().enumerate() {
        if !m.is_constructor {
            claim(&m.name, m.span, &mut names)?;
            names.insert(&m.name, m.span);
        }
        info.methods.entry(m.name.clone()).or_insert(i);
    }
    Ok(info)
}

struct ClassResolver<'a> {
    info: &'a ClassInfo,
}

/// Lexical scope for expression resolution: variable name to (type, ghost).
#[derive(Debug, Clone, Default)]
struct Scope {
    frames: Vec<BTreeMap<String, (Type, bool)>>,
}

impl Scope {
    fn push(&mut self) {
        self.frames.push(BTreeMap::new());
    }

    fn pop(&mut self) {
        self.frames.pop();
    }

    fn declare(&mut self, name: &str, ty: Type, ghost: bool, span: Span) -> RResult<()> {
        let top = self.frames.last_mut().expect("scope frame");
        if top.contains_key(name) {
            return err(format!("duplicate declaration `{name}`"), span);
        }
        top.insert(name.to_string(), (ty, ghost));
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&(Type, bool)> {
        self.frames.iter().rev().find_map(|f| f.get(name))
    }
}

/// Position of the resource expression being resolved; existential binders
/// are legal only in postconditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ResPos {
    Requires,
    Ensures,
    Invariant,
    PredBody,
}

impl ClassResolver<'_> {
    fn run(&self, class: &mut ClassDecl) -> RResult<()> {
        // Protocol references on atomic fields.
        let mut fields = std::mem::take(&mut class.fields);
        for f in &mut fields {
            if let FieldDecl::Atomic { proto, span, .. } = f {
                self.check_proto(proto, *span)?;
            }
        }
        class.fields = fields;

        let preds = std::mem::take(&mut class.predicates);
        class.predicates = preds
            .into_iter()
            .map(|mut p| {
                let mut scope = Scope::default();
                scope.push();
                for param in &p.params {
                    scope.declare(&param.name, param.ty.clone(), true, param.span)?;
                }
                self.resource(&mut p.body, &mut scope, ResPos::PredBody)?;
                Ok(p)
            })
            .collect::<RResult<_>>()?;

        let funcs = std::mem::take(&mut class.functions);
        class.functions = funcs
            .into_iter()
            .map(|mut f| {
                let mut scope = Scope::default();
                scope.push();
                for param in &f.params {
                    scope.declare(&param.name, param.ty.clone(), true, param.span)?;
                }
                for s in &mut f.body {
                    self.function_stmt(s, &mut scope)?;
                }
                self.expr(&mut f.ret_expr, &mut scope, true)?;
                Ok(f)
            })
            .collect::<RResult<_>>()?;

        let methods = std::mem::take(&mut class.methods);
        class.methods = methods
            .into_iter()
            .map(|m| self.method(m, class))
            .collect::<RResult<_>>()?;
        Ok(())
    }

    /// Statements allowed in pure-function bodies: local bindings and
    /// assignments. Field writes resolve but are flagged by wellformedness.
    fn function_stmt(&self, stmt: &mut Stmt, scope: &mut Scope) -> RResult<()> {
        match stmt {
            Stmt::VarDecl {
                ty,
                name,
                init,
                span,
            } => {
                if let Some(e) = init {
                    self.expr(e, scope, true)?;
                }
                scope.declare(name, ty.clone(), true, *span)?;
                Ok(())
            }
            Stmt::Assign {
                target,
                value,
                span,
            } => {
                self.expr(value, scope, true)?;
                if scope.lookup(target).is_some() {
                    return Ok(());
                }
                if self.info.data_fields.contains_key(target) {
                    *stmt = Stmt::FieldAssign {
                        field: target.clone(),
                        value: value.clone(),
                        span: *span,
                    };
                    return Ok(());
                }
                err(format!("unknown assignment target `{target}`"), *span)
            }
            Stmt::FieldAssign { field, value, span } => {
                self.expr(value, scope, true)?;
                if self.info.data_fields.contains_key(field) {
                    Ok(())
                } else {
                    err(format!("unknown field `{field}`"), *span)
                }
            }
            other => err(
                "only local bindings and a final return are allowed in pure functions",
                other.span(),
            ),
        }
    }

    fn check_proto(&self, proto: &mut ProtoArgs, span: Span) -> RResult<()> {
        if proto.roles != "roles" || self.info.roles.is_empty() {
            return err(
                "protocol must reference the class `roles` declaration",
                span,
            );
        }
        let inv_ok = self.info.preds.contains_key(&proto.inv)
            || matches!(
                self.info.givens.get(&proto.inv),
                Some(GivenInfo::Family { .. })
            );
        if !inv_ok {
            return err(
                format!("protocol invariant `{}` is not a resource family", proto.inv),
                span,
            );
        }
        for f in [&proto.share, &proto.trans] {
            if !self.info.funcs.contains_key(f) {
                return err(format!("protocol function `{f}` is not declared"), span);
            }
        }
        if let Some(max) = &mut proto.max {
            let mut scope = Scope::default();
            scope.push();
            self.expr(max, &mut scope, true)?;
        }
        Ok(())
    }

    fn method(&self, mut m: MethodDecl, class: &ClassDecl) -> RResult<MethodDecl> {
        let mut scope = Scope::default();
        scope.push();
        for g in &m.givens {
            scope.declare(&g.name, g.ty.clone(), true, g.span)?;
        }
        for p in &m.params {
            scope.declare(&p.name, p.ty.clone(), false, p.span)?;
        }
        for r in &mut m.requires {
            self.resource(r, &mut scope, ResPos::Requires)?;
        }
        // Postconditions may bind `?x`; binders scope over later conjuncts,
        // which resolution treats as ordinary ghost variables once declared.
        let mut post_scope = scope.clone();
        for r in &mut m.ensures {
            self.resource(r, &mut post_scope, ResPos::Ensures)?;
        }
        scope.push();
        self.stmts(&mut m.body, &mut scope, m.is_constructor, class)?;
        scope.pop();
        Ok(m)
    }

    fn stmts(
        &self,
        stmts: &mut [Stmt],
        scope: &mut Scope,
        in_ctor: bool,
        class: &ClassDecl,
    ) -> RResult<()> {
        for s in stmts.iter_mut() {
            self.stmt(s, scope, in_ctor, class)?;
        }
        Ok(())
    }

    fn stmt(
        &self,
        stmt: &mut Stmt,
        scope: &mut Scope,
        in_ctor: bool,
        class: &ClassDecl,
    ) -> RResult<()> {
        match stmt {
            Stmt::VarDecl {
                ty,
                name,
                init,
                span,
            } => {
                if let Some(e) = init {
                    self.expr(e, scope, false)?;
                }
                scope.declare(name, ty.clone(), false, *span)?;
            }
            Stmt::Assign {
                target,
                value,
                span,
            } => {
                self.expr(value, scope, false)?;
                if let Some((_, ghost)) = scope.lookup(target) {
                    if *ghost {
                        return err(
                            format!("`{target}` is ghost; use a `set` statement"),
                            *span,
                        );
                    }
                } else if self.info.atomic_fields.contains_key(target) {
                    // Atomic cell initialization: rewrite to a field assign.
                    if !in_ctor {
                        return err("atomic cells may only be assigned in constructors", *span);
                    }
                    if !matches!(value, Expr::NewAtomic { .. }) {
                        return err("atomic cells are assigned only from `new`", *span);
                    }
                    if let Expr::NewAtomic { proto, .. } = value {
                        let idx = self.info.atomic_fields[target.as_str()];
                        if let FieldDecl::Atomic { proto: fp, .. } = &class.fields[idx] {
                            if !same_proto(fp, proto) {
                                return err(
                                    "protocol arguments differ from the field declaration",
                                    *span,
                                );
                            }
                        }
                    }
                    *stmt = Stmt::FieldAssign {
                        field: target.clone(),
                        value: value.clone(),
                        span: *span,
                    };
                } else if self.info.data_fields.contains_key(target) {
                    *stmt = Stmt::FieldAssign {
                        field: target.clone(),
                        value: value.clone(),
                        span: *span,
                    };
                } else {
                    return err(format!("unknown assignment target `{target}`"), *span);
                }
            }
            Stmt::FieldAssign { field, value, span } => {
                self.expr(value, scope, false)?;
                if let Some((_, final_)) = self.info.data_fields.get(field) {
                    if *final_ && !in_ctor {
                        return err(
                            format!("final field `{field}` may only be assigned in constructors"),
                            *span,
                        );
                    }
                } else if !self.info.atomic_fields.contains_key(field) {
                    return err(format!("unknown field `{field}`"), *span);
                }
            }
            Stmt::ExprStmt { expr, span } => {
                self.expr(expr, scope, false)?;
                if !matches!(
                    expr,
                    Expr::Atomic {
                        op: AtomicOp::Set,
                        ..
                    }
                ) {
                    return err(
                        "only atomic `set` calls may be used as statements",
                        *span,
                    );
                }
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                self.expr(cond, scope, false)?;
                scope.push();
                self.stmts(then_branch, scope, in_ctor, class)?;
                scope.pop();
                scope.push();
                self.stmts(else_branch, scope, in_ctor, class)?;
                scope.pop();
            }
            Stmt::While {
                cond,
                invariants,
                body,
                ..
            } => {
                self.expr(cond, scope, false)?;
                for inv in invariants.iter_mut() {
                    self.resource(inv, scope, ResPos::Invariant)?;
                }
                scope.push();
                self.stmts(body, scope, in_ctor, class)?;
                scope.pop();
            }
            Stmt::GhostDecl {
                ty,
                name,
                init,
                span,
            } => {
                self.expr(init, scope, true)?;
                scope.declare(name, ty.clone(), true, *span)?;
            }
            Stmt::GhostSet {
                target,
                value,
                span,
            } => {
                self.expr(value, scope, true)?;
                match scope.lookup(target) {
                    Some((_, true)) => {}
                    Some((_, false)) => {
                        return err(format!("`set` target `{target}` is not ghost"), *span)
                    }
                    None => {
                        if !self.info.ghost_fields.contains_key(target) {
                            return err(format!("unknown ghost target `{target}`"), *span);
                        }
                        if !in_ctor {
                            return err("ghost fields may only be set in constructors", *span);
                        }
                    }
                }
            }
            Stmt::Fold { pred, args, span } | Stmt::Unfold { pred, args, span } => {
                self.pred_target(pred, *span)?;
                for a in args.iter_mut() {
                    self.expr(a, scope, true)?;
                }
            }
            Stmt::Assert { cond, .. } => self.expr(cond, scope, true)?,
        }
        Ok(())
    }

    /// Validates a predicate reference and returns whether it is the built-in
    /// handle predicate.
    fn pred_target(&self, pred: &PredRef, span: Span) -> RResult<bool> {
        if let Some(cell) = &pred.cell {
            if !self.info.atomic_fields.contains_key(cell) {
                return err(format!("`{cell}` is not an atomic cell"), span);
            }
            if pred.name == HANDLE {
                return Ok(true);
            }
        }
        if self.info.preds.contains_key(&pred.name)
            || matches!(
                self.info.givens.get(&pred.name),
                Some(GivenInfo::Family { ret: Type::Resource, .. })
            )
        {
            Ok(false)
        } else {
            err(format!("unknown predicate `{}`", pred.name), span)
        }
    }

    fn resource(&self, r: &mut ResourceExpr, scope: &mut Scope, pos: ResPos) -> RResult<()> {
        match r {
            ResourceExpr::Pure(e) => {
                // A call-shaped conjunct naming a predicate or a resource
                // family is a predicate instance.
                if let Expr::Call {
                    cell, name, args, span,
                } = e.clone()
                {
                    let is_pred = self.info.preds.contains_key(&name)
                        || name == HANDLE && cell.is_some()
                        || matches!(
                            self.info.givens.get(&name),
                            Some(GivenInfo::Family { ret: Type::Resource, .. })
                        );
                    if is_pred {
                        let pred = PredRef { cell, name };
                        self.pred_target(&pred, span)?;
                        let mut pargs = Vec::new();
                        for a in args {
                            pargs.push(self.pred_arg(a, scope, pos)?);
                        }
                        *r = ResourceExpr::Pred {
                            pred,
                            args: pargs,
                            span,
                        };
                        return Ok(());
                    }
                }
                self.expr(e, scope, true)
            }
            ResourceExpr::PointsTo {
                recv,
                field,
                frac,
                value,
                span,
            } => {
                self.expr(recv, scope, true)?;
                if !self.info.data_fields.contains_key(field) {
                    return err(format!("unknown data field `{field}`"), *span);
                }
                self.expr(frac, scope, true)?;
                match value {
                    ValuePat::Expr(e) => self.expr(e, scope, true)?,
                    ValuePat::Bind(name, bspan) => {
                        if pos != ResPos::Ensures {
                            return err(
                                "existential binder only allowed in ensures clauses",
                                *bspan,
                            );
                        }
                        scope.declare(name, Type::Int, true, *bspan)?;
                    }
                    ValuePat::Wildcard(_) => {}
                }
                Ok(())
            }
            ResourceExpr::Pred { pred, args, span } => {
                self.pred_target(pred, *span)?;
                for a in args.iter_mut() {
                    if let PredArg::Expr(e) = a {
                        self.expr(e, scope, true)?;
                    }
                }
                Ok(())
            }
            ResourceExpr::SepConj(a, b) => {
                self.resource(a, scope, pos)?;
                self.resource(b, scope, pos)
            }
            ResourceExpr::Implies { guard, body, .. } => {
                self.expr(guard, scope, true)?;
                self.resource(body, scope, pos)
            }
            ResourceExpr::IterStar {
                binder,
                range,
                body,
                span,
            } => {
                scope.push();
                scope.declare(binder, Type::Int, true, *span)?;
                self.expr(range, scope, true)?;
                self.resource(body, scope, pos)?;
                scope.pop();
                Ok(())
            }
            ResourceExpr::Emp { .. } => Ok(()),
        }
    }

    fn pred_arg(&self, a: Expr, scope: &mut Scope, pos: ResPos) -> RResult<PredArg> {
        match a {
            Expr::Hole(Some(name), span) => {
                if pos != ResPos::Ensures {
                    return err("existential binder only allowed in ensures clauses", span);
                }
                scope.declare(&name, Type::Int, true, span)?;
                Ok(PredArg::Bind(name, span))
            }
            Expr::Hole(None, span) => err("`?` wildcard is not a predicate argument", span),
            mut e => {
                self.expr(&mut e, scope, true)?;
                Ok(PredArg::Expr(e))
            }
        }
    }

    fn expr(&self, e: &mut Expr, scope: &mut Scope, ghost_ctx: bool) -> RResult<()> {
        match e {
            Expr::IntLit(..) | Expr::BoolLit(..) => Ok(()),
            Expr::Hole(_, span) => err("`?` pattern not allowed here", *span),
            Expr::Var(name, span) => {
                if scope.lookup(name).is_some() {
                    if !ghost_ctx {
                        if let Some((_, true)) = scope.lookup(name) {
                            return err(
                                format!("ghost variable `{name}` used in real code"),
                                *span,
                            );
                        }
                    }
                    return Ok(());
                }
                if name == SYNC_ROLE || self.info.roles.contains(name) {
                    return Ok(());
                }
                if self.info.ghost_fields.contains_key(name) {
                    if !ghost_ctx {
                        return err(format!("ghost field `{name}` used in real code"), *span);
                    }
                    *e = Expr::Field(name.clone(), *span);
                    return Ok(());
                }
                if self.info.data_fields.contains_key(name) {
                    *e = Expr::Field(name.clone(), *span);
                    return Ok(());
                }
                if let Some(GivenInfo::Var(_)) = self.info.givens.get(name) {
                    return Ok(());
                }
                err(format!("unknown identifier `{name}`"), *span)
            }
            Expr::Field(name, span) => {
                if self.info.ghost_fields.contains_key(name) {
                    if !ghost_ctx {
                        return err(format!("ghost field `{name}` used in real code"), *span);
                    }
                    return Ok(());
                }
                if self.info.data_fields.contains_key(name) {
                    return Ok(());
                }
                err(format!("unknown field `{name}`"), *span)
            }
            Expr::Unary { expr, .. } => self.expr(expr, scope, ghost_ctx),
            Expr::Binary { lhs, rhs, .. } => {
                self.expr(lhs, scope, ghost_ctx)?;
                self.expr(rhs, scope, ghost_ctx)
            }
            Expr::Ternary {
                cond,
                then_expr,
                else_expr,
                ..
            } => {
                self.expr(cond, scope, ghost_ctx)?;
                self.expr(then_expr, scope, ghost_ctx)?;
                self.expr(else_expr, scope, ghost_ctx)
            }
            Expr::Call {
                cell, name, args, span,
            } => {
                if let Some(c) = cell {
                    if !self.info.atomic_fields.contains_key(c) {
                        return err(format!("`{c}` is not an atomic cell"), *span);
                    }
                }
                let known = self.info.funcs.contains_key(name)
                    || self.info.preds.contains_key(name)
                    || matches!(self.info.givens.get(name), Some(GivenInfo::Family { .. }))
                    || (cell.is_some() && name == HANDLE);
                if !known {
                    return err(format!("unknown function or predicate `{name}`"), *span);
                }
                for a in args.iter_mut() {
                    if !matches!(a, Expr::Hole(..)) {
                        self.expr(a, scope, ghost_ctx)?;
                    }
                }
                Ok(())
            }
            Expr::Atomic {
                cell,
                op,
                args,
                with_args,
                span,
            } => {
                if ghost_ctx {
                    return err("atomic operations are not specification terms", *span);
                }
                if !self.info.atomic_fields.contains_key(cell) {
                    return err(format!("`{cell}` is not an atomic cell"), *span);
                }
                for a in args.iter_mut() {
                    self.expr(a, scope, false)?;
                }
                let mut keys: Vec<&str> = with_args.iter().map(|(k, _)| k.as_str()).collect();
                keys.sort_unstable();
                let expected: &[&str] = match op {
                    AtomicOp::Get | AtomicOp::Set => &["d", "p", "r"],
                    AtomicOp::Cas => &["p", "r"],
                };
                if keys != expected {
                    return err(
                        format!(
                            "{} requires ghost arguments {{{}}}",
                            op.name(),
                            expected.join(", ")
                        ),
                        *span,
                    );
                }
                for (_, v) in with_args.iter_mut() {
                    self.expr(v, scope, true)?;
                }
                Ok(())
            }
            Expr::NewAtomic { proto, init, span } => {
                if ghost_ctx {
                    return err("`new` is not a specification term", *span);
                }
                if let Some(m) = &mut proto.max {
                    self.expr(m, scope, true)?;
                }
                self.expr(init, scope, false)
            }
        }
    }
}

/// Structural protocol-argument equality, ignoring source positions.
fn same_proto(a: &ProtoArgs, b: &ProtoArgs) -> bool {
    a.roles == b.roles
        && a.inv == b.inv
        && a.share == b.share
        && a.trans == b.trans
        && match (&a.max, &b.max) {
            (None, None) => true,
            (Some(x), Some(y)) => {
                super::pretty::expr(x) == super::pretty::expr(y)
            }
            _ => false,
        }
}

fn resolve_harness(
    h: &Harness,
    classes: &[ClassDecl],
    infos: &BTreeMap<String, ClassInfo>,
) -> RResult<()> {
    let Some(info) = infos.get(&h.class) else {
        return err(format!("harness instantiates unknown class `{}`", h.class), h.span);
    };
    let class = &classes[info.index];
    let ctor = class.methods.iter().find(|m| m.is_constructor);
    match ctor {
        Some(c) if c.params.len() == h.ctor_args.len() => {}
        Some(c) => {
            return err(
                format!(
                    "constructor takes {} argument(s), harness passes {}",
                    c.params.len(),
                    h.ctor_args.len()
                ),
                h.span,
            )
        }
        None => {
            if !h.ctor_args.is_empty() {
                return err("class has no constructor", h.span);
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for t in &h.threads {
        if !seen.insert(&t.name) {
            return err(format!("duplicate thread name `{}`", t.name), t.span);
        }
        if t.role != SYNC_ROLE && !info.roles.contains(&t.role) {
            return err(format!("unknown role `{}`", t.role), t.span);
        }
        if t.role == SYNC_ROLE {
            return err("threads cannot take the synchroniser role", t.span);
        }
        if let Some((n, d)) = t.holds {
            if d <= 0 || n < 0 || n > d {
                return err("initial holding must be a fraction in [0,1]", t.span);
            }
        }
        for op in &t.script {
            if let HarnessOp::Call { method, args, span } = op {
                match info.methods.get(method) {
                    Some(&mi) => {
                        let m = &class.methods[mi];
                        if m.is_constructor {
                            return err("harness scripts cannot call constructors", *span);
                        }
                        if m.params.len() != args.len() {
                            return err(
                                format!(
                                    "`{method}` takes {} argument(s), harness passes {}",
                                    m.params.len(),
                                    args.len()
                                ),
                                *span,
                            );
                        }
                    }
                    None => return err(format!("unknown method `{method}`"), *span),
                }
            }
        }
    }
    Ok(())
}

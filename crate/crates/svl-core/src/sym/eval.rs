//! Specification-level evaluation and the produce/consume pair.
//!
//! Evaluating an expression against a symbolic state may case-split: ternary
//! guards and the guard structure of share functions fork the state with the
//! guard assumed on one side and its negation on the other. All operations
//! therefore map a state to a vector of successor states.
//!
//! `produce` adds the resources denoted by an expression (inhaling an
//! assumption); `consume` finds and removes them, returning the residual
//! heap and bindings for existential `?x` patterns. Consumption is the
//! obligation side: a failed consume is a failed proof obligation.

use super::heap::{ArgV, HeapState};
use super::solver::{BoolF, LinCon, Rel};
use super::term::{FracTerm, LinTerm, SymTable};
use crate::frontend::ast::*;
use crate::frontend::resolve::{ClassInfo, GivenInfo, ResolvedProgram, HANDLE, SYNC_ROLE};
use crate::{Int, Perm};
use std::collections::BTreeMap;

/// Class-level evaluation context: the receiver, its atomic cells, and the
/// constant fields (final data fields and final ghost fields).
pub struct SpecCtx<'a> {
    pub rp: &'a ResolvedProgram,
    pub class: &'a ClassDecl,
    pub info: &'a ClassInfo,
    pub this: LinTerm,
    pub cells: BTreeMap<String, LinTerm>,
    pub consts: BTreeMap<String, LinTerm>,
}

impl<'a> SpecCtx<'a> {
    pub fn function(&self, name: &str) -> Option<&'a FunctionDecl> {
        self.info.funcs.get(name).map(|i| &self.class.functions[*i])
    }

    pub fn predicate(&self, name: &str) -> Option<&'a PredicateDecl> {
        self.info.preds.get(name).map(|i| &self.class.predicates[*i])
    }

    pub fn is_role(&self, name: &str) -> bool {
        name == SYNC_ROLE || self.info.roles.contains(&name.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(LinTerm),
    Frac(FracTerm),
    /// Boolean-sorted term constrained to {0, 1}.
    Bool(LinTerm),
    Role(String),
}

impl Value {
    pub fn render(&self, syms: &SymTable) -> String {
        match self {
            Value::Int(t) | Value::Bool(t) => t.render(syms),
            Value::Frac(f) => f.render(syms),
            Value::Role(r) => r.clone(),
        }
    }
}

pub type Env = BTreeMap<String, Value>;

/// Hard evaluation error: unsupported construct or ill-typed runtime value.
/// The engine reports these as failed obligations at the carried span.
#[derive(Debug, Clone)]
pub struct EvalErr {
    pub span: Span,
    pub msg: String,
}

fn fail<T>(span: Span, msg: impl Into<String>) -> Result<T, EvalErr> {
    Err(EvalErr {
        span,
        msg: msg.into(),
    })
}

/// Receives side conditions discovered during evaluation (fraction range and
/// denominator positivity). `ok` reports whether the condition was provable
/// in the state it arose in.
pub trait SpecSink {
    fn side_check(&mut self, span: Span, what: &str, ok: bool, detail: String);
}

/// Sink that ignores side conditions; used by tests that only care about
/// heap shapes.
pub struct NullSink;

impl SpecSink for NullSink {
    fn side_check(&mut self, _: Span, _: &str, _: bool, _: String) {}
}

/// Three-valued truth of a formula in a state.
pub fn decide(st: &HeapState, f: &BoolF) -> Option<bool> {
    if st.pure.entails(&st.syms, f) {
        return Some(true);
    }
    if st.pure.entails(&st.syms, &BoolF::not(f.clone())) {
        return Some(false);
    }
    None
}

/// Assumes a formula, splitting into one state per DNF disjunct and pruning
/// infeasible splits. An empty result means the formula contradicts the
/// state.
pub fn assume_formula(st: HeapState, f: &BoolF) -> Vec<HeapState> {
    let Some(disjuncts) = f.dnf(&st.syms) else {
        // Too large to normalize: keep the state unconstrained.
        return vec![st];
    };
    let mut out = Vec::new();
    for conj in disjuncts {
        let mut s = st.clone();
        s.pure.assume_all(conj.iter().cloned());
        if s.pure.is_sat(&s.syms) {
            out.push(s);
        }
    }
    out
}

// ----- expression evaluation ---------------------------------------------------

pub fn eval_int(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    states: Vec<HeapState>,
    env: &Env,
    e: &Expr,
) -> Result<Vec<(HeapState, LinTerm)>, EvalErr> {
    match e {
        Expr::IntLit(n, _) => Ok(states
            .into_iter()
            .map(|s| (s, LinTerm::konst(Int::from(*n))))
            .collect()),
        Expr::Var(name, span) => {
            if name == "this" {
                return Ok(states.into_iter().map(|s| (s, ctx.this.clone())).collect());
            }
            match env.get(name) {
                Some(Value::Int(t)) | Some(Value::Bool(t)) => {
                    Ok(states.into_iter().map(|s| (s, t.clone())).collect())
                }
                Some(_) => fail(*span, format!("`{name}` is not an integer")),
                None => fail(*span, format!("`{name}` has no value here")),
            }
        }
        Expr::Field(name, span) => match ctx.consts.get(name) {
            Some(t) => Ok(states.into_iter().map(|s| (s, t.clone())).collect()),
            None => fail(
                *span,
                format!("field `{name}` is not a constant; read it into a local first"),
            ),
        },
        Expr::Unary {
            op: UnOp::Neg,
            expr,
            ..
        } => Ok(eval_int(ctx, sink, states, env, expr)?
            .into_iter()
            .map(|(s, t)| (s, t.neg()))
            .collect()),
        Expr::Unary { span, .. } => fail(*span, "not an integer expression"),
        Expr::Binary {
            op, lhs, rhs, span, ..
        } => {
            let mut out = Vec::new();
            for (s, lt) in eval_int(ctx, sink, states, env, lhs)? {
                for (s2, rt) in eval_int(ctx, sink, vec![s], env, rhs)? {
                    let t = match op {
                        BinOp::Add => lt.add(&rt),
                        BinOp::Sub => lt.sub(&rt),
                        BinOp::Mul => {
                            if let Some(k) = lt.is_const() {
                                rt.scale(k)
                            } else if let Some(k) = rt.is_const() {
                                lt.scale(k)
                            } else {
                                return fail(*span, "nonlinear multiplication");
                            }
                        }
                        _ => return fail(*span, "not an integer operator"),
                    };
                    out.push((s2, t));
                }
            }
            Ok(out)
        }
        Expr::Ternary {
            cond,
            then_expr,
            else_expr,
            ..
        } => {
            let mut out = Vec::new();
            for (st, f) in eval_bool(ctx, sink, states, env, cond)? {
                for (st2, taken) in branch(st, &f) {
                    let arm = if taken { then_expr } else { else_expr };
                    out.extend(eval_int(ctx, sink, vec![st2], env, arm)?);
                }
            }
            Ok(out)
        }
        Expr::Call { name, args, span, .. } => {
            let Some(f) = ctx.function(name) else {
                return fail(*span, format!("`{name}` is not a function"));
            };
            if f.ret != Type::Int {
                return fail(*span, format!("`{name}` does not return int"));
            }
            let mut out = Vec::new();
            for (st, fenv) in bind_call(ctx, sink, states, env, f, args, *span)? {
                out.extend(eval_fn_body(ctx, sink, st, f, fenv, |c, k, s, e2, ex| {
                    eval_int(c, k, vec![s], e2, ex)
                })?);
            }
            Ok(out)
        }
        other => fail(other.span(), "not an integer expression"),
    }
}

/// Branches a state on a formula: decided formulas yield one successor,
/// undecided ones fork with the guard assumed each way. Infeasible sides are
/// pruned.
pub fn branch(st: HeapState, f: &BoolF) -> Vec<(HeapState, bool)> {
    match decide(&st, f) {
        Some(v) => vec![(st, v)],
        None => {
            let mut out = Vec::new();
            for s in assume_formula(st.clone(), f) {
                out.push((s, true));
            }
            for s in assume_formula(st, &BoolF::not(f.clone())) {
                out.push((s, false));
            }
            out
        }
    }
}

pub fn eval_frac(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    states: Vec<HeapState>,
    env: &Env,
    e: &Expr,
) -> Result<Vec<(HeapState, FracTerm)>, EvalErr> {
    match e {
        Expr::IntLit(n, span) => {
            let p = Perm::new(Int::from(*n), Int::from(1))
                .map_err(|_| EvalErr {
                    span: *span,
                    msg: format!("fraction literal {n} outside [0,1]"),
                })?;
            Ok(states.into_iter().map(|s| (s, FracTerm::Lit(p.clone()))).collect())
        }
        Expr::Var(name, span) => match env.get(name) {
            Some(Value::Frac(f)) => Ok(states.into_iter().map(|s| (s, f.clone())).collect()),
            Some(Value::Int(t)) => coerce_int_frac(states, t.clone()),
            Some(_) => fail(*span, format!("`{name}` is not a fraction")),
            None => fail(*span, format!("`{name}` has no value here")),
        },
        Expr::Field(name, span) => match ctx.consts.get(name) {
            Some(t) => coerce_int_frac(states, t.clone()),
            None => fail(*span, format!("field `{name}` is not a constant")),
        },
        Expr::Binary {
            op: BinOp::Div,
            lhs,
            rhs,
            span,
        } => {
            let mut out = Vec::new();
            for (s, num) in eval_int(ctx, sink, states, env, lhs)? {
                for (mut s2, den) in eval_int(ctx, sink, vec![s], env, rhs)? {
                    let pos = LinCon::new(den.clone(), Rel::Gt, &s2.syms);
                    let ok = s2.inconsistent || s2.pure.entails_con(&s2.syms, &pos);
                    sink.side_check(
                        *span,
                        "denominator positive",
                        ok,
                        format!("{} > 0", den.render(&s2.syms)),
                    );
                    s2.pure.assume(pos);
                    match FracTerm::quot(num.clone(), den) {
                        Ok(q) => out.push((s2, q)),
                        Err(_) => return fail(*span, "constant quotient outside [0,1]"),
                    }
                }
            }
            Ok(out)
        }
        Expr::Binary {
            op: op @ (BinOp::Add | BinOp::Sub),
            lhs,
            rhs,
            span,
        } => {
            let mut out = Vec::new();
            for (s, a) in eval_frac(ctx, sink, states, env, lhs)? {
                for (s2, b) in eval_frac(ctx, sink, vec![s], env, rhs)? {
                    match op {
                        BinOp::Add => out.push((s2, a.add(&b))),
                        BinOp::Sub => out.extend(cutoff_sub(s2, &a, &b, *span)?),
                        _ => unreachable!(),
                    }
                }
            }
            Ok(out)
        }
        Expr::Ternary {
            cond,
            then_expr,
            else_expr,
            ..
        } => {
            let mut out = Vec::new();
            for (st, f) in eval_bool(ctx, sink, states, env, cond)? {
                for (st2, taken) in branch(st, &f) {
                    let arm = if taken { then_expr } else { else_expr };
                    out.extend(eval_frac(ctx, sink, vec![st2], env, arm)?);
                }
            }
            Ok(out)
        }
        Expr::Call { name, args, span, .. } => {
            let Some(f) = ctx.function(name) else {
                return fail(*span, format!("`{name}` is not a function"));
            };
            if f.ret != Type::Frac {
                return fail(*span, format!("`{name}` does not return frac"));
            }
            let mut out = Vec::new();
            for (st, fenv) in bind_call(ctx, sink, states, env, f, args, *span)? {
                out.extend(eval_fn_body(ctx, sink, st, f, fenv, |c, k, s, e2, ex| {
                    eval_frac(c, k, vec![s], e2, ex)
                })?);
            }
            Ok(out)
        }
        other => fail(other.span(), "not a fraction expression"),
    }
}

fn coerce_int_frac(
    states: Vec<HeapState>,
    t: LinTerm,
) -> Result<Vec<(HeapState, FracTerm)>, EvalErr> {
    let q = FracTerm::quot(t, LinTerm::konst(1)).expect("den 1");
    Ok(states.into_iter().map(|s| (s, q.clone())).collect())
}

/// Cut-off subtraction of fraction terms. Decides the comparison where the
/// constraints allow and case-splits otherwise.
pub fn cutoff_sub(
    st: HeapState,
    a: &FracTerm,
    b: &FracTerm,
    span: Span,
) -> Result<Vec<(HeapState, FracTerm)>, EvalErr> {
    let ge = st.pure.frac_le(&st.syms, b, a); // b <= a
    let le = st.pure.frac_le(&st.syms, a, b); // a <= b
    if ge {
        if le {
            return Ok(vec![(st, FracTerm::zero())]);
        }
        return match a.sub_exact(b) {
            Some(d) => Ok(vec![(st, d)]),
            None => fail(span, "fraction difference outside the supported fragment"),
        };
    }
    if le {
        return Ok(vec![(st, FracTerm::zero())]);
    }
    // Undecided: split on a >= b.
    let Some(geq) = st.pure.frac_con(&st.syms, a, b, Rel::Ge) else {
        return fail(span, "incomparable fraction terms");
    };
    let mut out = Vec::new();
    for (s, is_ge) in branch(st, &BoolF::Atom(geq)) {
        if is_ge {
            match a.sub_exact(b) {
                Some(d) => out.push((s, d)),
                None => return fail(span, "fraction difference outside the supported fragment"),
            }
        } else {
            out.push((s, FracTerm::zero()));
        }
    }
    Ok(out)
}

pub fn eval_role(ctx: &SpecCtx, env: &Env, e: &Expr) -> Result<String, EvalErr> {
    match e {
        Expr::Var(name, span) => {
            if let Some(Value::Role(r)) = env.get(name) {
                return Ok(r.clone());
            }
            if ctx.is_role(name) {
                return Ok(name.clone());
            }
            fail(*span, format!("`{name}` is not a role"))
        }
        other => fail(other.span(), "not a role expression"),
    }
}

pub fn eval_bool(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    states: Vec<HeapState>,
    env: &Env,
    e: &Expr,
) -> Result<Vec<(HeapState, BoolF)>, EvalErr> {
    match e {
        Expr::BoolLit(b, _) => Ok(states
            .into_iter()
            .map(|s| (s, BoolF::Lit(*b)))
            .collect()),
        Expr::Var(name, span) => match env.get(name) {
            Some(Value::Bool(t)) => {
                let f = |s: &HeapState| BoolF::Atom(LinCon::new(t.clone(), Rel::Gt, &s.syms));
                Ok(states.into_iter().map(|s| {
                    let g = f(&s);
                    (s, g)
                }).collect())
            }
            _ => fail(*span, format!("`{name}` is not a boolean")),
        },
        Expr::Unary {
            op: UnOp::Not,
            expr,
            ..
        } => Ok(eval_bool(ctx, sink, states, env, expr)?
            .into_iter()
            .map(|(s, f)| (s, BoolF::not(f)))
            .collect()),
        Expr::Binary {
            op: op @ (BinOp::And | BinOp::Or),
            lhs,
            rhs,
            ..
        } => {
            let mut out = Vec::new();
            for (s, lf) in eval_bool(ctx, sink, states, env, lhs)? {
                for (s2, rf) in eval_bool(ctx, sink, vec![s], env, rhs)? {
                    let f = match op {
                        BinOp::And => BoolF::and(vec![lf.clone(), rf]),
                        BinOp::Or => BoolF::or(vec![lf.clone(), rf]),
                        _ => unreachable!(),
                    };
                    out.push((s2, f));
                }
            }
            Ok(out)
        }
        Expr::Binary {
            op, lhs, rhs, span, ..
        } => {
            // Role equality decides immediately; otherwise integer or
            // fraction comparison.
            if role_operand(ctx, env, lhs) && role_operand(ctx, env, rhs) {
                let lr = eval_role(ctx, env, lhs)?;
                let rr = eval_role(ctx, env, rhs)?;
                let same = lr == rr;
                let v = match op {
                    BinOp::EqEq => same,
                    BinOp::NotEq => !same,
                    _ => return fail(*span, "roles only support equality"),
                };
                return Ok(states.into_iter().map(|s| (s, BoolF::Lit(v))).collect());
            }
            if fracish(ctx, env, lhs) || fracish(ctx, env, rhs) {
                let mut out = Vec::new();
                for (s, a) in eval_frac(ctx, sink, states, env, lhs)? {
                    for (s2, b) in eval_frac(ctx, sink, vec![s], env, rhs)? {
                        let rel = frac_rel(*op, *span)?;
                        let con = s2
                            .pure
                            .frac_con(&s2.syms, &rel.order(&a, &b).0, &rel.order(&a, &b).1, rel.rel)
                            .ok_or(EvalErr {
                                span: *span,
                                msg: "fraction comparison outside the supported fragment".into(),
                            })?;
                        out.push((s2, BoolF::Atom(con)));
                    }
                }
                return Ok(out);
            }
            let mut out = Vec::new();
            for (s, a) in eval_int(ctx, sink, states, env, lhs)? {
                for (s2, b) in eval_int(ctx, sink, vec![s], env, rhs)? {
                    let f = int_cmp(*op, &a, &b, &s2.syms, *span)?;
                    out.push((s2, f));
                }
            }
            Ok(out)
        }
        Expr::Ternary {
            cond,
            then_expr,
            else_expr,
            ..
        } => {
            let mut out = Vec::new();
            for (s, c) in eval_bool(ctx, sink, states, env, cond)? {
                for (s2, t) in eval_bool(ctx, sink, vec![s], env, then_expr)? {
                    for (s3, f) in eval_bool(ctx, sink, vec![s2], env, else_expr)? {
                        let formula = BoolF::or(vec![
                            BoolF::and(vec![c.clone(), t.clone()]),
                            BoolF::and(vec![BoolF::not(c.clone()), f]),
                        ]);
                        out.push((s3, formula));
                    }
                }
            }
            Ok(out)
        }
        Expr::Call { name, args, span, .. } => {
            let Some(f) = ctx.function(name) else {
                return fail(*span, format!("`{name}` is not a function"));
            };
            if f.ret != Type::Bool {
                return fail(*span, format!("`{name}` does not return boolean"));
            }
            let mut out = Vec::new();
            for (st, fenv) in bind_call(ctx, sink, states, env, f, args, *span)? {
                out.extend(eval_fn_body(ctx, sink, st, f, fenv, |c, k, s, e2, ex| {
                    eval_bool(c, k, vec![s], e2, ex)
                })?);
            }
            Ok(out)
        }
        other => fail(other.span(), "not a boolean expression"),
    }
}

fn role_operand(ctx: &SpecCtx, env: &Env, e: &Expr) -> bool {
    match e {
        Expr::Var(name, _) => {
            matches!(env.get(name), Some(Value::Role(_)))
                || (!env.contains_key(name) && ctx.is_role(name))
        }
        _ => false,
    }
}

/// Syntactic test for fraction-typed expressions, used to route comparisons.
fn fracish(ctx: &SpecCtx, env: &Env, e: &Expr) -> bool {
    match e {
        Expr::Binary { op: BinOp::Div, .. } => true,
        Expr::Binary { lhs, rhs, .. } => fracish(ctx, env, lhs) || fracish(ctx, env, rhs),
        Expr::Var(name, _) => matches!(env.get(name), Some(Value::Frac(_))),
        Expr::Call { name, .. } => ctx
            .function(name)
            .map(|f| f.ret == Type::Frac)
            .unwrap_or(false),
        Expr::Ternary {
            then_expr,
            else_expr,
            ..
        } => fracish(ctx, env, then_expr) || fracish(ctx, env, else_expr),
        _ => false,
    }
}

struct FracRel {
    rel: Rel,
    flip: bool,
}

impl FracRel {
    fn order<'t>(&self, a: &'t FracTerm, b: &'t FracTerm) -> (&'t FracTerm, &'t FracTerm) {
        if self.flip {
            (b, a)
        } else {
            (a, b)
        }
    }
}

fn frac_rel(op: BinOp, span: Span) -> Result<FracRel, EvalErr> {
    // frac_con(x, y, rel) encodes `x - y REL 0`.
    Ok(match op {
        BinOp::Lt => FracRel { rel: Rel::Gt, flip: true },
        BinOp::Le => FracRel { rel: Rel::Ge, flip: true },
        BinOp::Gt => FracRel { rel: Rel::Gt, flip: false },
        BinOp::Ge => FracRel { rel: Rel::Ge, flip: false },
        BinOp::EqEq => FracRel { rel: Rel::Eq, flip: false },
        BinOp::NotEq => FracRel { rel: Rel::Ne, flip: false },
        _ => return fail(span, "not a comparison"),
    })
}

fn int_cmp(
    op: BinOp,
    a: &LinTerm,
    b: &LinTerm,
    syms: &SymTable,
    span: Span,
) -> Result<BoolF, EvalErr> {
    let diff = a.sub(b);
    let con = match op {
        BinOp::Lt => LinCon::new(diff.neg(), Rel::Gt, syms),
        BinOp::Le => LinCon::new(diff.neg(), Rel::Ge, syms),
        BinOp::Gt => LinCon::new(diff, Rel::Gt, syms),
        BinOp::Ge => LinCon::new(diff, Rel::Ge, syms),
        BinOp::EqEq => LinCon::new(diff, Rel::Eq, syms),
        BinOp::NotEq => LinCon::new(diff, Rel::Ne, syms),
        _ => return fail(span, "not a comparison"),
    };
    Ok(BoolF::Atom(con))
}

/// Binds function-call arguments to parameters by declared sorts.
fn bind_call(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    states: Vec<HeapState>,
    env: &Env,
    f: &FunctionDecl,
    args: &[Expr],
    span: Span,
) -> Result<Vec<(HeapState, Env)>, EvalErr> {
    if f.params.len() != args.len() {
        return fail(span, format!("`{}` arity mismatch", f.name));
    }
    let mut acc: Vec<(HeapState, Env)> = states
        .into_iter()
        .map(|s| (s, Env::new()))
        .collect();
    for (param, arg) in f.params.iter().zip(args) {
        let mut next = Vec::new();
        for (st, fenv) in acc {
            match &param.ty {
                Type::Role => {
                    let r = eval_role(ctx, env, arg)?;
                    let mut fenv = fenv.clone();
                    fenv.insert(param.name.clone(), Value::Role(r));
                    next.push((st, fenv));
                }
                Type::Int => {
                    for (s2, t) in eval_int(ctx, sink, vec![st.clone()], env, arg)? {
                        let mut fenv = fenv.clone();
                        fenv.insert(param.name.clone(), Value::Int(t));
                        next.push((s2, fenv));
                    }
                }
                Type::Frac => {
                    for (s2, t) in eval_frac(ctx, sink, vec![st.clone()], env, arg)? {
                        let mut fenv = fenv.clone();
                        fenv.insert(param.name.clone(), Value::Frac(t));
                        next.push((s2, fenv));
                    }
                }
                other => return fail(span, format!("unsupported parameter sort {other}")),
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// Evaluates a pure function body (straight-line local bindings, then the
/// return expression) under its own environment.
pub(crate) fn eval_fn_body<T>(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    st: HeapState,
    f: &FunctionDecl,
    mut fenv: Env,
    ret: impl Fn(
        &SpecCtx,
        &mut dyn SpecSink,
        HeapState,
        &Env,
        &Expr,
    ) -> Result<Vec<(HeapState, T)>, EvalErr>,
) -> Result<Vec<(HeapState, T)>, EvalErr> {
    let mut states = vec![(st, fenv.clone())];
    for s in &f.body {
        match s {
            Stmt::VarDecl {
                ty,
                name,
                init: Some(init),
                ..
            }
            | Stmt::GhostDecl { ty, name, init, .. } => {
                let mut next = Vec::new();
                for (heap, e2) in states {
                    match ty {
                        Type::Int => {
                            for (h, t) in eval_int(ctx, sink, vec![heap], &e2, init)? {
                                let mut e3 = e2.clone();
                                e3.insert(name.clone(), Value::Int(t));
                                next.push((h, e3));
                            }
                        }
                        Type::Frac => {
                            for (h, t) in eval_frac(ctx, sink, vec![heap], &e2, init)? {
                                let mut e3 = e2.clone();
                                e3.insert(name.clone(), Value::Frac(t));
                                next.push((h, e3));
                            }
                        }
                        _ => return fail(s.span(), "unsupported local sort in pure function"),
                    }
                }
                states = next;
            }
            other => return fail(other.span(), "impure statement in function body"),
        }
    }
    let mut out = Vec::new();
    for (heap, e2) in states {
        fenv = e2;
        out.extend(ret(ctx, sink, heap, &fenv, &f.ret_expr)?);
    }
    Ok(out)
}

// ----- predicate instances ------------------------------------------------------

/// Resolved shape of a predicate instance: receiver term, chunk name,
/// parameter sorts, and whether the final frac parameter acts as the scale.
pub struct PredShape<'a> {
    pub recv: LinTerm,
    pub name: String,
    pub params: Vec<Type>,
    pub group: bool,
    pub body: Option<(&'a PredicateDecl, Span)>,
}

pub fn pred_shape<'a>(
    ctx: &SpecCtx<'a>,
    pred: &PredRef,
    span: Span,
) -> Result<PredShape<'a>, EvalErr> {
    if let Some(cell) = &pred.cell {
        if pred.name == HANDLE {
            let Some(cell_term) = ctx.cells.get(cell) else {
                return fail(span, format!("cell `{cell}` has no identity here"));
            };
            return Ok(PredShape {
                recv: cell_term.clone(),
                name: HANDLE.into(),
                params: crate::frontend::wellformed::handle_param_types(),
                group: true,
                body: None,
            });
        }
    }
    if let Some(p) = ctx.predicate(&pred.name) {
        return Ok(PredShape {
            recv: ctx.this.clone(),
            name: p.name.clone(),
            params: p.params.iter().map(|q| q.ty.clone()).collect(),
            group: p.group,
            body: Some((p, p.span)),
        });
    }
    if let Some(GivenInfo::Family { params, ret, .. }) = ctx.info.givens.get(&pred.name) {
        if *ret == Type::Resource {
            return Ok(PredShape {
                recv: ctx.this.clone(),
                name: pred.name.clone(),
                params: params.clone(),
                group: true,
                body: None,
            });
        }
    }
    fail(span, format!("unknown predicate `{}`", pred.name))
}

/// Splits evaluated predicate arguments into chunk arguments and the scale.
pub struct PredInstance {
    pub recv: LinTerm,
    pub name: String,
    pub args: Vec<Option<ArgV>>,
    pub binds: Vec<(usize, String, Type)>,
    pub scale: FracTerm,
}

/// Evaluates predicate-instance arguments. `?x` binders become open
/// positions recorded in `binds`.
pub fn eval_pred_instance(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    states: Vec<HeapState>,
    env: &Env,
    pred: &PredRef,
    args: &[PredArg],
    span: Span,
) -> Result<Vec<(HeapState, PredInstance)>, EvalErr> {
    let shape = pred_shape(ctx, pred, span)?;
    if shape.params.len() != args.len() {
        return fail(span, format!("`{pred}` arity mismatch"));
    }
    let scale_pos = if shape.group {
        args.len().checked_sub(1)
    } else {
        None
    };
    let mut acc: Vec<(HeapState, PredInstance)> = states
        .into_iter()
        .map(|s| {
            (
                s,
                PredInstance {
                    recv: shape.recv.clone(),
                    name: shape.name.clone(),
                    args: Vec::new(),
                    binds: Vec::new(),
                    scale: FracTerm::one(),
                },
            )
        })
        .collect();
    for (i, (arg, ty)) in args.iter().zip(&shape.params).enumerate() {
        let is_scale = scale_pos == Some(i);
        let mut next = Vec::new();
        for (st, inst) in acc {
            match arg {
                PredArg::Bind(name, _) => {
                    if is_scale {
                        return fail(span, "scale position cannot be existential");
                    }
                    let mut inst2 = clone_inst(&inst);
                    inst2.args.push(None);
                    inst2.binds.push((i, name.clone(), ty.clone()));
                    next.push((st, inst2));
                }
                PredArg::Expr(e) => match ty {
                    Type::Role => {
                        let r = eval_role(ctx, env, e)?;
                        let mut inst2 = clone_inst(&inst);
                        inst2.args.push(Some(ArgV::Role(r)));
                        next.push((st, inst2));
                    }
                    Type::Int => {
                        for (s2, t) in eval_int(ctx, sink, vec![st.clone()], env, e)? {
                            let mut inst2 = clone_inst(&inst);
                            inst2.args.push(Some(ArgV::Int(t)));
                            next.push((s2, inst2));
                        }
                    }
                    Type::Frac => {
                        for (mut s2, t) in eval_frac(ctx, sink, vec![st.clone()], env, e)? {
                            range_check(sink, &mut s2, &t, e.span());
                            let mut inst2 = clone_inst(&inst);
                            if is_scale {
                                // The scale is carried separately from the
                                // positional arguments.
                                inst2.scale = t;
                            } else {
                                inst2.args.push(Some(ArgV::Frac(t)));
                            }
                            next.push((s2, inst2));
                        }
                    }
                    other => return fail(span, format!("unsupported parameter sort {other}")),
                },
            }
        }
        acc = next;
    }
    Ok(acc)
}

fn clone_inst(i: &PredInstance) -> PredInstance {
    PredInstance {
        recv: i.recv.clone(),
        name: i.name.clone(),
        args: i.args.clone(),
        binds: i.binds.clone(),
        scale: i.scale.clone(),
    }
}

/// Emits the `[0,1]` side condition for a fraction expression and assumes it
/// afterwards, so later reasoning can rely on the range.
pub fn range_check(sink: &mut dyn SpecSink, st: &mut HeapState, f: &FracTerm, span: Span) {
    let lo = st.pure.frac_con(&st.syms, f, &FracTerm::zero(), Rel::Ge);
    let hi = st.pure.frac_con(&st.syms, &FracTerm::one(), f, Rel::Ge);
    let ok = st.inconsistent
        || match (&lo, &hi) {
            (Some(l), Some(h)) => {
                st.pure.entails_con(&st.syms, l) && st.pure.entails_con(&st.syms, h)
            }
            _ => matches!(f, FracTerm::Lit(_) | FracTerm::Sym(_)),
        };
    sink.side_check(
        span,
        "fraction in [0,1]",
        ok,
        format!("0 <= {} <= 1", f.render(&st.syms)),
    );
    if let Some(l) = lo {
        st.pure.assume(l);
    }
    if let Some(h) = hi {
        st.pure.assume(h);
    }
}
